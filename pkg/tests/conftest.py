"""Fixtures for pmm-lab tests."""
from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from pmm_lab.exact_ctmc import MarkovModel, build_model  # noqa: E402
from pmm_lab.lattice_core import (  # noqa: E402
    Boundary,
    ConstraintFamily,
    Window,
    facilitated_family,
    pmm_family,
    pmm_r2_family,
)

# Test data
SMALL_RINGS = tuple(range(3, 11))
DENSITIES = (0.1, 0.3, 0.5, 0.7, 0.9)


@pytest.fixture
def pmm() -> ConstraintFamily:
    """The porous medium model rates."""
    return pmm_family()


@pytest.fixture(params=["pmm", "facilitated", "pmm_r2"])
def accepted_family(request) -> ConstraintFamily:
    """Every catalog family."""
    return {
        "pmm": pmm_family,
        "facilitated": facilitated_family,
        "pmm_r2": pmm_r2_family,
    }[request.param]()


@pytest.fixture
def ring5(pmm: ConstraintFamily) -> MarkovModel:
    """Full PMM model on a ring of 5 sites."""
    return build_model(pmm, Window.of_length(5), Boundary.PERIODIC)


@pytest.fixture
def interval6(pmm: ConstraintFamily) -> MarkovModel:
    """Full PMM model on an interval of 6 sites."""
    return build_model(pmm, Window.of_length(6), Boundary.EMPTY)
