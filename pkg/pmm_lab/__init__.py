"""Finite-volume laboratory for the porous medium model and related kinetically constrained exchange dynamics."""
from __future__ import annotations

from .const import VERSION
from .lattice_core import (
    Boundary,
    Configuration,
    ConstraintFamily,
    PmmLabError,
    Window,
    load_family,
    pmm_family,
    rate,
    swap,
    validate_family,
)

__version__ = VERSION

__all__ = [
    "Boundary",
    "Configuration",
    "ConstraintFamily",
    "PmmLabError",
    "Window",
    "load_family",
    "pmm_family",
    "rate",
    "swap",
    "validate_family",
]
