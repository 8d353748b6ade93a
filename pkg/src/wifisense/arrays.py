"""Pydantic field types for read-only :mod:`numpy` arrays.

Models in :mod:`wifisense` hold their numeric payload as arrays. Validation copies
the input into a fresh, non-writeable array so a model is immutable after
construction, and JSON serialization turns the array into nested lists.
"""

from __future__ import annotations

from typing import Annotated, Any

import numpy as np
import numpy.typing as npt
from pydantic import GetCoreSchemaHandler, GetJsonSchemaHandler
from pydantic.json_schema import JsonSchemaValue
from pydantic_core import core_schema

__all__ = [
    "ComplexArray",
    "FloatArray",
    "IntArray",
]


class _ArrayAnnotation:
    def __init__(self, dtype: type[np.generic]) -> None:
        self.dtype = dtype

    def validate(self, value: Any) -> npt.NDArray[Any]:
        if self.dtype is np.complex128 and _is_pair_list(value):
            pairs = np.asarray(value, dtype=np.float64)
            array = np.array(pairs[..., 0] + 1j * pairs[..., 1], dtype=np.complex128)
        else:
            array = np.array(value, dtype=self.dtype)
        array.setflags(write=False)
        return array

    def serialize(self, value: npt.NDArray[Any]) -> Any:
        if np.iscomplexobj(value):
            return np.stack([value.real, value.imag], axis=-1).tolist()
        return value.tolist()

    def __get_pydantic_core_schema__(
        self, source_type: Any, handler: GetCoreSchemaHandler
    ) -> core_schema.CoreSchema:
        return core_schema.no_info_plain_validator_function(
            self.validate,
            serialization=core_schema.plain_serializer_function_ser_schema(
                self.serialize, when_used="json"
            ),
        )

    def __get_pydantic_json_schema__(
        self, schema: core_schema.CoreSchema, handler: GetJsonSchemaHandler
    ) -> JsonSchemaValue:
        return {"type": "array", "items": {}}


def _is_pair_list(value: Any) -> bool:
    if isinstance(value, np.ndarray):
        return False
    try:
        array = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        return False
    return array.ndim >= 2 and array.shape[-1] == 2 and array.size > 0


#: A read-only float64 array, serialized to JSON as nested lists
FloatArray = Annotated[npt.NDArray[np.float64], _ArrayAnnotation(np.float64)]

#: A read-only int64 array, serialized to JSON as nested lists
IntArray = Annotated[npt.NDArray[np.int64], _ArrayAnnotation(np.int64)]

#: A read-only complex128 array, serialized to JSON as ``[real, imag]`` pairs
ComplexArray = Annotated[npt.NDArray[np.complex128], _ArrayAnnotation(np.complex128)]
