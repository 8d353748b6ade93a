"""Version information for :mod:`wifisense`.

Run with ``python -m wifisense.version``
"""

from __future__ import annotations

import subprocess
from pathlib import Path

__all__ = [
    "VERSION",
    "get_git_hash",
    "get_version",
]

VERSION = "0.0.1-dev"


def get_git_hash() -> str:
    """Get the short git hash of the checkout :mod:`wifisense` is installed from.

    :returns: The first eight characters of the hash, or ``UNHASHED`` outside a git
        checkout
    """
    try:
        output = subprocess.run(
            ["git", "rev-parse", "HEAD"],  # noqa: S607
            cwd=Path(__file__).parent,
            capture_output=True,
            check=True,
        ).stdout
    except (OSError, subprocess.CalledProcessError):
        return "UNHASHED"
    return output.strip().decode("utf-8")[:8]


def get_version(with_git_hash: bool = False) -> str:
    """Get the :mod:`wifisense` version string, optionally with the git hash."""
    return f"{VERSION}-{get_git_hash()}" if with_git_hash else VERSION


if __name__ == "__main__":
    print(get_version(with_git_hash=True))  # noqa:T201
