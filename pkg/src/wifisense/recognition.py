"""Gesture segmentation, PCA features, and sparse representation classification."""

from __future__ import annotations

import logging
import warnings
from collections import Counter
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt
import scipy.ndimage
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator
from sklearn.decomposition import PCA
from sklearn.linear_model import orthogonal_mp
from sklearn.metrics import confusion_matrix
from sklearn.neighbors import NearestNeighbors

from .arrays import FloatArray, IntArray
from .channel import GestureLabel
from .doppler import DopplerSpectrogram
from .exceptions import ParameterError, RangeError, ShapeError

__all__ = [
    "ConfusionReport",
    "Dictionary",
    "FeatureVector",
    "GestureModel",
    "GestureWindow",
    "PcaModel",
    "RecognitionConfig",
    "SrcResult",
    "build_dictionary",
    "confusion",
    "curve_features",
    "cut_window",
    "knn_classify",
    "pca_fit",
    "pca_project",
    "segment",
    "src_classify",
    "stack_windows",
]

logger = logging.getLogger(__name__)

#: The default resampled window size, as (batches, Doppler bins)
WINDOW_SHAPE = (32, 41)

WindowShape = tuple[int, int]


class RecognitionConfig(BaseModel):
    """Parameters of segmentation, features, and classifiers."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    threshold: float = Field(0.3, gt=0.0, lt=1.0, description="Fraction of the trace maximum")
    min_len_s: float = Field(0.5, ge=0.0)
    min_gap_s: float = Field(0.5, ge=0.0)
    exclude_hz: float = Field(1.0, ge=0.0)
    window_shape: WindowShape = WINDOW_SHAPE
    n_components: int = Field(20, ge=1)
    sparsity_k: int = Field(5, ge=1)
    tol: PositiveFloat = 1e-6
    knn_k: int = Field(5, ge=1)

    @model_validator(mode="after")
    def _check(self) -> RecognitionConfig:
        if min(self.window_shape) < 1:
            raise ValueError("window_shape must be positive")
        if self.knn_k % 2 == 0:
            raise ValueError("knn_k must be odd")
        return self


class GestureWindow(BaseModel):
    """One gesture cycle cut from a spectrogram and resampled to a fixed size."""

    model_config = ConfigDict(frozen=True)

    start_s: float
    end_s: float
    spec_slice: FloatArray
    label: GestureLabel | None = None

    @model_validator(mode="after")
    def _check(self) -> GestureWindow:
        if self.end_s <= self.start_s:
            raise ValueError("end_s must be after start_s")
        if self.spec_slice.ndim != 2:
            raise ValueError("spec_slice must be a batch x Doppler grid")
        return self

    @property
    def flat(self) -> npt.NDArray[np.float64]:
        """Get the slice as a vector."""
        return self.spec_slice.ravel()

    def with_label(self, label: GestureLabel | None) -> GestureWindow:
        """Get the same window with a label."""
        return GestureWindow(
            start_s=self.start_s, end_s=self.end_s, spec_slice=self.spec_slice, label=label
        )


class FeatureVector(BaseModel):
    """Features of one window."""

    model_config = ConfigDict(frozen=True)

    coefficients: FloatArray

    @model_validator(mode="after")
    def _check(self) -> FeatureVector:
        if self.coefficients.ndim != 1 or not np.all(np.isfinite(self.coefficients)):
            raise ValueError("coefficients must be a finite vector")
        return self


class PcaModel(BaseModel):
    """A PCA basis fit to flattened windows."""

    model_config = ConfigDict(frozen=True)

    mean: FloatArray
    components: FloatArray = Field(..., description="Orthonormal rows, strongest first")
    explained_variance: FloatArray
    window_shape: WindowShape

    @model_validator(mode="after")
    def _check(self) -> PcaModel:
        rows, size = self.components.shape
        if self.mean.shape != (size,) or self.explained_variance.shape != (rows,):
            raise ValueError("mean, components, and variances disagree in size")
        if size != self.window_shape[0] * self.window_shape[1]:
            raise ValueError("components do not match the window shape")
        return self

    @property
    def n_components(self) -> int:
        """Get the number of components."""
        return int(self.components.shape[0])


class Dictionary(BaseModel):
    """Unit-norm atoms, one column per training sample, with their labels."""

    model_config = ConfigDict(frozen=True)

    atoms: FloatArray = Field(..., description="n_features x n_atoms")
    labels: list[GestureLabel]

    @model_validator(mode="after")
    def _check(self) -> Dictionary:
        if self.atoms.ndim != 2 or self.atoms.shape[1] != len(self.labels):
            raise ValueError("atoms must have one column per label")
        if not self.labels:
            raise ValueError("a dictionary needs at least one atom")
        if not np.allclose(np.linalg.norm(self.atoms, axis=0), 1.0, rtol=0, atol=1e-9):
            raise ValueError("atoms must have unit norm")
        return self

    @property
    def n_atoms(self) -> int:
        """Get the number of atoms."""
        return len(self.labels)

    @property
    def classes(self) -> list[GestureLabel]:
        """Get the represented classes in label order."""
        present = set(self.labels)
        return [label for label in GestureLabel if label in present]


class SrcResult(BaseModel):
    """The outcome of sparse representation classification."""

    model_config = ConfigDict(frozen=True)

    label: GestureLabel
    residuals: dict[GestureLabel, float]
    coefficients: FloatArray
    residual_norms: FloatArray = Field(..., description="Residual norm after each OMP step")
    degenerate: bool = False


class GestureModel(BaseModel):
    """A trained recognizer: PCA basis, dictionary, and classifier settings."""

    model_config = ConfigDict(frozen=True)

    pca: PcaModel
    dictionary: Dictionary
    config: RecognitionConfig = Field(default_factory=RecognitionConfig)

    def classify(self, window: GestureWindow) -> SrcResult:
        """Classify one window with SRC on its PCA features."""
        return src_classify(
            pca_project(self.pca, window),
            self.dictionary,
            sparsity_k=min(self.config.sparsity_k, self.dictionary.n_atoms),
            tol=self.config.tol,
        )


def _resample(block: npt.NDArray[np.float64], shape: WindowShape) -> npt.NDArray[np.float64]:
    rows = np.linspace(0, block.shape[0] - 1, shape[0])
    columns = np.linspace(0, block.shape[1] - 1, shape[1])
    grid = np.meshgrid(rows, columns, indexing="ij")
    out = scipy.ndimage.map_coordinates(block, grid, order=1, mode="nearest")
    peak = out.max()
    return out / peak if peak > 0 else out


def _runs(active: npt.NDArray[np.bool_]) -> list[tuple[int, int]]:
    edges = np.diff(np.r_[0, active.astype(np.int8), 0])
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), stops.tolist(), strict=True))


def segment(
    spec: DopplerSpectrogram,
    threshold: float = 0.3,
    min_len_s: float = 0.5,
    min_gap_s: float = 0.5,
    *,
    exclude_hz: float = 1.0,
    shape: WindowShape = WINDOW_SHAPE,
) -> list[GestureWindow]:
    """Find gesture windows as runs of batches with strong off-zero Doppler energy.

    Runs of batches whose energy outside ``±exclude_hz`` reaches ``threshold`` times the
    trace maximum are merged when separated by less than ``min_gap_s``. Merged runs
    shorter than ``min_len_s`` are discarded. Each window covers its batches plus half
    a hop on either side.

    :param spec: The spectrogram to segment
    :param threshold: The activity threshold as a fraction of the maximum, in (0, 1)
    :param min_len_s: The shortest window kept
    :param min_gap_s: The shortest pause that separates two windows
    :param exclude_hz: The half-width of the zero-Doppler band ignored for energy
    :param shape: The resampled slice size
    :returns: Disjoint windows in time order
    :raises ShapeError: if the spectrogram has no batches
    :raises ParameterError: if the threshold is outside (0, 1)
    """
    if spec.n_batches == 0:
        raise ShapeError("cannot segment an empty spectrogram")
    if not 0 < threshold < 1:
        raise ParameterError("threshold must be in (0, 1)")
    energy = spec.off_zero_energy(exclude_hz)
    peak = float(energy.max())
    if peak <= 0:
        return []
    step = spec.batch_step_s
    merged: list[tuple[int, int]] = []
    for start, stop in _runs(energy >= threshold * peak):
        if merged and (start - merged[-1][1] - 1) * step < min_gap_s:
            merged[-1] = (merged[-1][0], stop)
        else:
            merged.append((start, stop))
    windows = [
        GestureWindow(
            start_s=float(spec.batch_times_s[start] - step / 2),
            end_s=float(spec.batch_times_s[stop] + step / 2),
            spec_slice=_resample(spec.magnitudes[start : stop + 1], shape),
        )
        for start, stop in merged
        if (stop - start + 1) * step >= min_len_s
    ]
    logger.debug("segmented %d windows from %d batches", len(windows), spec.n_batches)
    return windows


def cut_window(
    spec: DopplerSpectrogram, start_s: float, end_s: float, shape: WindowShape = WINDOW_SHAPE
) -> GestureWindow:
    """Cut the batches centered within ``[start_s, end_s]`` and resample them.

    :raises RangeError: if no batch is centered in the interval
    """
    selected = np.flatnonzero((spec.batch_times_s >= start_s) & (spec.batch_times_s <= end_s))
    if selected.size == 0:
        raise RangeError(f"no batch is centered in [{start_s}, {end_s}] s")
    block = spec.magnitudes[selected[0] : selected[-1] + 1]
    return GestureWindow(start_s=start_s, end_s=end_s, spec_slice=_resample(block, shape))


def stack_windows(windows: Sequence[GestureWindow]) -> GestureWindow:
    """Stack windows of the same gesture seen by several receivers side by side.

    :raises ShapeError: if there are no windows or their slices differ in shape
    """
    if not windows:
        raise ShapeError("no windows to stack")
    shapes = {window.spec_slice.shape for window in windows}
    if len(shapes) != 1:
        raise ShapeError(f"windows differ in shape: {sorted(shapes)}")
    first = windows[0]
    return GestureWindow(
        start_s=first.start_s,
        end_s=first.end_s,
        spec_slice=np.concatenate([window.spec_slice for window in windows], axis=1),
        label=first.label,
    )


def _design_matrix(windows: Sequence[GestureWindow]) -> npt.NDArray[np.float64]:
    shapes = {window.spec_slice.shape for window in windows}
    if len(shapes) != 1:
        raise ShapeError(f"windows differ in shape: {sorted(shapes)}")
    return np.stack([window.flat for window in windows])


def pca_fit(windows: Sequence[GestureWindow], n_components: int = 20) -> PcaModel:
    """Fit a PCA basis to flattened windows.

    :raises ParameterError: if there are not more windows than components
    :raises ShapeError: if the windows differ in shape
    """
    if len(windows) < n_components + 1:
        raise ParameterError(
            f"{n_components} components need at least {n_components + 1} windows, "
            f"got {len(windows)}"
        )
    X = _design_matrix(windows)
    if X.shape[1] < n_components:
        raise ParameterError(
            f"windows have only {X.shape[1]} values for {n_components} components"
        )
    pca = PCA(n_components=n_components, svd_solver="full").fit(X)
    logger.info(
        "fit %d PCA components explaining %.1f%% of variance",
        n_components,
        100 * float(pca.explained_variance_ratio_.sum()),
    )
    height, width = windows[0].spec_slice.shape
    return PcaModel(
        mean=pca.mean_,
        components=pca.components_,
        explained_variance=pca.explained_variance_,
        window_shape=(height, width),
    )


def pca_project(model: PcaModel, window: GestureWindow) -> FeatureVector:
    """Project a window onto the PCA basis.

    :raises ShapeError: if the window does not have the model's shape
    """
    if window.spec_slice.shape != model.window_shape:
        raise ShapeError(
            f"window shape {window.spec_slice.shape} does not match {model.window_shape}"
        )
    return FeatureVector(coefficients=model.components @ (window.flat - model.mean))


def build_dictionary(
    features: Sequence[FeatureVector], labels: Sequence[GestureLabel]
) -> Dictionary:
    """Build a dictionary with one unit-normalized atom per training sample.

    :raises ParameterError: if features and labels disagree in number or a feature is zero
    """
    if len(features) != len(labels) or not features:
        raise ParameterError("need one label per feature and at least one feature")
    atoms = np.stack([feature.coefficients for feature in features], axis=1)
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(norms == 0):
        raise ParameterError("a zero feature vector can not be an atom")
    return Dictionary(atoms=atoms / norms, labels=[GestureLabel(label) for label in labels])


def _class_residuals(
    y: npt.NDArray[np.float64], dictionary: Dictionary, code: npt.NDArray[np.float64]
) -> dict[GestureLabel, float]:
    labels = np.array([label.value for label in dictionary.labels])
    residuals = {}
    for label in dictionary.classes:
        mask = labels == label.value
        residuals[label] = float(np.linalg.norm(y - dictionary.atoms[:, mask] @ code[mask]))
    return residuals


def src_classify(
    y: FeatureVector | npt.ArrayLike,
    dictionary: Dictionary,
    sparsity_k: int = 5,
    tol: float = 1e-6,
) -> SrcResult:
    """Classify by the class whose atoms best reconstruct a sparse code of ``y``.

    The code is found by orthogonal matching pursuit, stopping after ``sparsity_k``
    atoms or once the residual norm falls below ``tol``. Each class residual keeps
    only that class's coefficients. Ties go to the lowest class.

    :param y: The features to classify
    :param dictionary: The labeled atoms
    :param sparsity_k: The most atoms in the code
    :param tol: The residual norm at which pursuit stops early
    :raises ShapeError: if ``y`` does not match the atoms
    :raises ParameterError: if ``sparsity_k`` is outside ``[1, n_atoms]``
    """
    vector = np.array(y.coefficients if isinstance(y, FeatureVector) else y, dtype=np.float64)
    if vector.shape != (dictionary.atoms.shape[0],):
        raise ShapeError(
            f"features of shape {vector.shape} do not match {dictionary.atoms.shape[0]}-d atoms"
        )
    if not 1 <= sparsity_k <= dictionary.n_atoms:
        raise ParameterError(f"sparsity_k must be in [1, {dictionary.n_atoms}]")

    if not np.any(vector):
        distances = np.linalg.norm(dictionary.atoms, axis=0)
        label = dictionary.labels[int(np.argmin(distances))]
        logger.debug("zero feature vector, falling back to the nearest atom")
        return SrcResult(
            label=label,
            residuals=dict.fromkeys(dictionary.classes, 0.0),
            coefficients=np.zeros(dictionary.n_atoms),
            residual_norms=np.zeros(0),
            degenerate=True,
        )

    with warnings.catch_warnings():
        # pursuit ends early when the residual is exhausted
        warnings.simplefilter("ignore", RuntimeWarning)
        path = orthogonal_mp(
            np.array(dictionary.atoms), vector, n_nonzero_coefs=sparsity_k, return_path=True
        )
    path = np.asarray(path).reshape(dictionary.n_atoms, -1)
    norms = np.linalg.norm(vector[:, np.newaxis] - dictionary.atoms @ path, axis=0)
    below = np.flatnonzero(norms < tol)
    step = int(below[0]) if below.size else path.shape[1] - 1
    code = path[:, step]

    residuals = _class_residuals(vector, dictionary, code)
    label = min(residuals, key=lambda key: (residuals[key], list(GestureLabel).index(key)))
    return SrcResult(
        label=label,
        residuals=residuals,
        coefficients=code,
        residual_norms=norms[: step + 1],
    )


def knn_classify(
    y: FeatureVector | npt.ArrayLike,
    features: npt.ArrayLike,
    labels: Sequence[GestureLabel],
    k: int = 5,
) -> GestureLabel:
    """Classify by majority vote among the ``k`` nearest training points.

    Ties between labels go to the tied label with the single nearest point.

    :raises ParameterError: if the training set is empty or ``k`` is even or too large
    """
    X = np.asarray(features, dtype=np.float64)
    if X.size == 0 or not labels:
        raise ParameterError("the training set is empty")
    if len(labels) != X.shape[0]:
        raise ParameterError("need one label per training point")
    if k % 2 == 0 or not 1 <= k <= len(labels):
        raise ParameterError(f"k must be odd and in [1, {len(labels)}]")
    vector = np.asarray(y.coefficients if isinstance(y, FeatureVector) else y, dtype=np.float64)
    _, indices = NearestNeighbors(n_neighbors=k).fit(X).kneighbors(vector[np.newaxis, :])
    neighbors = [GestureLabel(labels[index]) for index in indices[0]]
    counts = Counter(neighbors)
    best = max(counts.values())
    return next(label for label in neighbors if counts[label] == best)


def curve_features(
    window: GestureWindow, doppler_axis_hz: npt.ArrayLike | None = None
) -> FeatureVector:
    """Get empirical features of the mean Doppler curve of a gesture cycle.

    The curve is the power-weighted Doppler centroid per batch. The features are its
    peak value (largest magnitude, signed), span, steepest slope per batch, number of
    zero crossings, and number of inflection points.

    :param window: The gesture window
    :param doppler_axis_hz: The Doppler value of each slice column, defaulting to
        a normalized axis from -1 to 1
    """
    block = window.spec_slice
    axis = (
        np.linspace(-1.0, 1.0, block.shape[1])
        if doppler_axis_hz is None
        else np.asarray(doppler_axis_hz, dtype=np.float64)
    )
    if axis.shape != (block.shape[1],):
        raise ShapeError("the Doppler axis does not match the slice")
    weight = block.sum(axis=1)
    safe = np.where(weight > 0, weight, 1.0)
    curve = np.where(weight > 0, block @ axis / safe, 0.0)
    slope = np.diff(curve)
    signs = np.sign(curve[curve != 0])
    bends = np.sign(np.diff(slope))
    bends = bends[bends != 0]
    return FeatureVector(
        coefficients=[
            float(curve[np.argmax(np.abs(curve))]),
            float(np.ptp(curve)),
            float(np.abs(slope).max(initial=0.0)),
            float(np.count_nonzero(np.diff(signs))),
            float(np.count_nonzero(np.diff(bends))),
        ]
    )


def confusion(
    true: Sequence[GestureLabel], predicted: Sequence[GestureLabel]
) -> npt.NDArray[np.int64]:
    """Get the 6 x 6 count matrix with true labels as rows, in label order."""
    order = [label.value for label in GestureLabel]
    matrix = confusion_matrix(
        [GestureLabel(label).value for label in true],
        [GestureLabel(label).value for label in predicted],
        labels=order,
    )
    return np.asarray(matrix, dtype=np.int64)


class ConfusionReport(BaseModel):
    """A confusion matrix with its accuracy."""

    model_config = ConfigDict(frozen=True)

    labels: list[GestureLabel] = Field(default_factory=lambda: list(GestureLabel))
    counts: IntArray
    accuracy: float
