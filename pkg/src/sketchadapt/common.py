"""Shared vocabulary: abstraction levels, exception types, cache location."""

from __future__ import annotations

import os
from enum import Enum
from pathlib import Path


class AbstractionLevel(Enum):
    """Coarse sketch-fidelity level, keyed to the training source."""

    LOW = 0      # edge-map-like sources: dense, near-photographic contours
    MEDIUM = 1   # deliberate freehand sketches
    HIGH = 2     # quick doodles: sparse, heavily simplified

    @classmethod
    def from_name(cls, name: str) -> "AbstractionLevel":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown abstraction level {name!r}; "
                             f"expected one of {[m.name for m in cls]}") from None


class SketchAdaptError(Exception):
    """Base class for package errors."""


class SketchFormatError(SketchAdaptError):
    """A stroke record or vector sketch violates the format contract."""


class SplitError(SketchAdaptError):
    """A train/eval split cannot be built as requested."""


class ShapeMismatchError(SketchAdaptError):
    """A prompt or feature tensor has the wrong shape for its slot."""


class BackboneLoadError(SketchAdaptError):
    """A backbone adapter could not be loaded or failed validation."""


class CheckpointError(SketchAdaptError):
    """A checkpoint file is missing, malformed, or incompatible."""


class ConfigError(SketchAdaptError):
    """A run configuration is invalid or contains unknown keys."""


class DivergenceError(SketchAdaptError):
    """Training produced a non-finite loss; carries the offending term."""

    def __init__(self, term: str, value: float, epoch: int, step: int):
        self.term = term
        super().__init__(
            f"non-finite loss in term '{term}' (value={value}) "
            f"at epoch {epoch}, step {step}")


def cache_dir() -> Path:
    """Directory for downloaded backbone weights, overridable via env."""
    root = os.environ.get("SKETCHADAPT_CACHE")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "sketchadapt"
