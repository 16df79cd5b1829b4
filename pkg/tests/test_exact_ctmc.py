"""Tests for exact generators, stationary measures and their checks."""
from __future__ import annotations

import logging

import numpy as np
import pytest

from pmm_lab.connect import BudgetExceededError
from pmm_lab.exact_ctmc import (
    MarkovModel,
    Measure,
    StateSpace,
    bernoulli_measure,
    build_model,
    check_detailed_balance,
    check_exchangeability,
    check_mirror_symmetry,
    check_positivity,
    check_stationary,
    class_uniformity,
    decompose,
    mirror,
    stationary_measures,
)
from pmm_lab.lattice_core import Boundary, Configuration, ConstraintFamily, Window

from .conftest import DENSITIES, SMALL_RINGS


def _class_of(model: MarkovModel, bits: str) -> set[str]:
    index = model.space.index(
        Configuration.from_string(bits, boundary=model.space.boundary)
    )
    members = np.flatnonzero(model.labels == model.labels[index])
    return {str(model.space.configuration(i)) for i in members}


def _uniform_on_class(model: MarkovModel, bits: str) -> Measure:
    index = model.space.index(
        Configuration.from_string(bits, boundary=model.space.boundary)
    )
    return Measure.uniform_on(
        model.space, np.flatnonzero(model.labels == model.labels[index])
    )


# =============================================================================
# State Space Tests
# =============================================================================


def test_enumerate_full_and_fixed_count() -> None:
    """Test state enumeration with and without a count filter."""
    window = Window.of_length(5)
    assert StateSpace.enumerate(window).size == 32
    space = StateSpace.enumerate(window, count=2)
    assert space.size == 10
    assert set(space.particle_counts) == {2}
    assert np.all(np.diff(space.codes) > 0)


def test_enumerate_budget() -> None:
    """Test that over-long windows are refused unless filtered by count."""
    with pytest.raises(BudgetExceededError):
        StateSpace.enumerate(Window.of_length(30))
    assert StateSpace.enumerate(Window.of_length(30), count=2).size == 435
    with pytest.raises(ValueError):
        StateSpace.enumerate(Window.of_length(4), count=5)


def test_indices_mark_absent_states() -> None:
    """Test lookup of codes outside a count-filtered space."""
    space = StateSpace.enumerate(Window.of_length(4), count=2)
    found = space.indices(np.array([0b0011, 0b0111]))
    assert found[0] >= 0
    assert found[1] == -1


def test_frozen_mask_on_ring_and_interval() -> None:
    """Test that the ring seam counts for frozenness."""
    window = Window.of_length(5)
    ring = StateSpace.enumerate(window, Boundary.PERIODIC)
    interval = StateSpace.enumerate(window, Boundary.EMPTY)
    seam = 0b10001
    assert interval.frozen_mask()[interval.indices(np.array([seam]))[0]]
    assert not ring.frozen_mask()[ring.indices(np.array([seam]))[0]]


# =============================================================================
# Measure Tests
# =============================================================================


def test_measure_validation() -> None:
    """Test that weights must form a probability vector."""
    space = StateSpace.enumerate(Window.of_length(2))
    with pytest.raises(ValueError):
        Measure(space, np.array([0.5, 0.5, 0.5, 0.5]))
    with pytest.raises(ValueError):
        Measure(space, np.array([1.5, -0.5, 0.0, 0.0]))
    with pytest.raises(ValueError):
        Measure(space, np.array([1.0, 0.0]))


def test_mix_requires_one_space() -> None:
    """Test that mixtures combine measures of the same space."""
    a = StateSpace.enumerate(Window.of_length(2))
    b = StateSpace.enumerate(Window.of_length(2))
    with pytest.raises(ValueError):
        Measure.mix(
            [bernoulli_measure(a, 0.5), bernoulli_measure(b, 0.5)], [0.5, 0.5]
        )


def test_marginal_of_bernoulli() -> None:
    """Test that marginals of product measures are product measures."""
    space = StateSpace.enumerate(Window.of_length(6), Boundary.EMPTY)
    marginal = bernoulli_measure(space, 0.3).marginal(Window(2, 4))
    expected = bernoulli_measure(
        StateSpace.enumerate(Window(2, 4), Boundary.EMPTY), 0.3
    )
    np.testing.assert_allclose(marginal.weights, expected.weights, atol=1e-14)


# =============================================================================
# Generator Tests
# =============================================================================


def test_ring3_classes(pmm: ConstraintFamily) -> None:
    """Test the class structure of a ring of three sites."""
    model = build_model(pmm, Window.of_length(3))
    assert model.space.size == 8
    assert _class_of(model, "110") == {"110", "101", "011"}
    assert model.class_count == 6
    rates = model.generator.toarray()
    two = [
        model.space.index(Configuration.from_string(b, boundary=Boundary.PERIODIC))
        for b in ("110", "101", "011")
    ]
    off = {rates[i, j] for i in two for j in two if i != j}
    assert off == {2.0}


def test_interval4_frozen_singletons(pmm: ConstraintFamily) -> None:
    """Test that frozen states of an interval are singleton classes."""
    model = build_model(pmm, Window.of_length(4), Boundary.EMPTY)
    for bits in ("0000", "1000", "0100", "0010", "0001", "1001"):
        assert _class_of(model, bits) == {bits}
    assert _class_of(model, "1100") == {"1100", "1010", "0110", "0101", "0011"}
    assert model.class_count == 9
    assert model.closed.all()


def test_ring4_two_particles_form_one_class(pmm: ConstraintFamily) -> None:
    """Test the fixed-count ring of four sites."""
    model = build_model(pmm, Window.of_length(4), Boundary.PERIODIC, count=2)
    assert model.space.size == 6
    assert model.class_count == 1


@pytest.mark.parametrize("n", SMALL_RINGS)
def test_generator_is_symmetric_with_zero_rows(
    accepted_family: ConstraintFamily, n: int
) -> None:
    """Test Q = Q^T and zero row sums."""
    model = build_model(accepted_family, Window.of_length(n))
    assert model.symmetric
    assert abs(model.generator - model.generator.T).max() == 0
    assert model.row_sum_error() <= 1e-12
    off = model.generator.toarray()
    np.fill_diagonal(off, 0.0)
    assert np.all(off >= 0)


def test_asymmetric_family_warns(caplog: pytest.LogCaptureFixture) -> None:
    """Test that a swap-asymmetric table builds with a warning."""
    family = ConstraintFamily.from_function(
        1, lambda eta: (eta[-1] + eta[2]) * (1 + eta[0])
    )
    with caplog.at_level(logging.WARNING):
        model = build_model(family, Window.of_length(5))
    assert not model.symmetric
    assert "not symmetric" in caplog.text


# =============================================================================
# Stationary Measure Tests
# =============================================================================


def test_stationary_measures_ring3(pmm: ConstraintFamily) -> None:
    """Test the extremal measures of a ring of three sites."""
    model = build_model(pmm, Window.of_length(3))
    measures = stationary_measures(model)
    assert len(measures) == model.class_count
    two = _uniform_on_class(model, "110")
    assert any(np.allclose(nu.weights, two.weights, atol=1e-10) for nu in measures)
    for nu in measures:
        assert check_stationary(model, nu, 1e-10).passed


def test_stationary_measures_are_uniform_on_classes(ring5: MarkovModel) -> None:
    """Test that every extremal measure is a point mass or uniform."""
    measures = stationary_measures(ring5)
    result = class_uniformity(ring5, measures)
    assert result.passed
    assert result.detail["other"] == 0
    assert result.detail["frozen_point_mass"] == int(ring5.space.frozen_mask().sum())
    for nu in measures:
        assert check_detailed_balance(ring5, nu, 1e-10).passed


@pytest.mark.parametrize("boundary", [Boundary.PERIODIC, Boundary.EMPTY])
@pytest.mark.parametrize("n", range(3, 9))
def test_extremal_measures_on_small_windows(
    pmm: ConstraintFamily, n: int, boundary: Boundary
) -> None:
    """Test uniformity and exchangeability of every extremal measure."""
    model = build_model(pmm, Window.of_length(n), boundary)
    measures = stationary_measures(model)
    result = class_uniformity(model, measures)
    assert result.passed
    assert result.detail["other"] == 0
    for nu in measures:
        assert check_exchangeability(model, nu).passed


def test_class_uniformity_flags_skewed_measures(ring5: MarkovModel) -> None:
    """Test that a non-uniform measure on a class is reported."""
    skewed = Measure.from_unnormalized(
        ring5.space,
        np.where(_uniform_on_class(ring5, "11000").weights > 0, np.arange(32) + 1.0, 0.0),
    )
    result = class_uniformity(ring5, [skewed])
    assert not result.passed
    assert result.detail["other"] == 1


@pytest.mark.parametrize("n", SMALL_RINGS)
@pytest.mark.parametrize("rho", DENSITIES)
def test_bernoulli_is_reversible(pmm: ConstraintFamily, n: int, rho: float) -> None:
    """Test stationarity and detailed balance of product measures on rings."""
    model = build_model(pmm, Window.of_length(n))
    mu = bernoulli_measure(model.space, rho)
    assert check_stationary(model, mu).passed
    assert check_detailed_balance(model, mu).passed
    assert check_exchangeability(model, mu).value <= 1e-12


def test_point_masses(ring5: MarkovModel) -> None:
    """Test stationarity of frozen and mobile point masses."""
    space = ring5.space
    frozen = Measure.point_mass(
        space, Configuration.from_string("10000", boundary=Boundary.PERIODIC)
    )
    mobile = Measure.point_mass(
        space, Configuration.from_string("11000", boundary=Boundary.PERIODIC)
    )
    assert check_stationary(ring5, frozen).value == 0
    assert check_stationary(ring5, mobile).value > 0
    assert not check_detailed_balance(ring5, mobile).passed
    assert not check_exchangeability(ring5, mobile).passed


def test_detailed_balance_per_bond_detail(ring5: MarkovModel) -> None:
    """Test that detailed balance reports every bond."""
    result = check_detailed_balance(ring5, bernoulli_measure(ring5.space, 0.4))
    assert set(result.detail["per_bond"]) == {"1", "2", "3", "4", "5"}


# =============================================================================
# Positivity, Mirror and Decomposition Tests
# =============================================================================


def test_positivity_of_random_mixtures(ring5: MarkovModel) -> None:
    """Test that no stationary mixture vanishes on part of a class."""
    measures = stationary_measures(ring5)
    rng = np.random.default_rng(3)
    for _ in range(20):
        coefficients = rng.random(len(measures)) * (rng.random(len(measures)) < 0.5)
        if coefficients.sum() == 0:
            continue
        nu = Measure.mix(measures, coefficients)
        assert check_stationary(ring5, nu, 1e-10).passed
        assert check_positivity(ring5, nu)


def test_positivity_detects_partial_support(ring5: MarkovModel) -> None:
    """Test a measure charging only part of a class."""
    nu = Measure.point_mass(
        ring5.space, Configuration.from_string("11000", boundary=Boundary.PERIODIC)
    )
    assert not check_positivity(ring5, nu)


def test_mirror_examples() -> None:
    """Test reflection on a window."""
    assert str(mirror(Configuration.from_string("1100"))) == "0011"
    assert str(mirror(Configuration.from_string("0110"))) == "0110"
    assert str(mirror(Configuration.from_string("110100"), Window(1, 4))) == "1011"


def test_mirror_symmetry_of_stationary_measures(interval6: MarkovModel) -> None:
    """Test nu(sigma) = nu(Psi(sigma)) on connected mobile states."""
    measures = stationary_measures(interval6)
    nu = Measure.mix(measures, np.linspace(1.0, 2.0, len(measures)))
    result = check_mirror_symmetry(interval6, nu)
    assert result.passed
    assert result.detail["pairs"] > 0


def test_decompose_frozen_point_mass(ring5: MarkovModel) -> None:
    """Test that a frozen point mass is all frozen part."""
    nu = Measure.point_mass(
        ring5.space, Configuration.from_string("10000", boundary=Boundary.PERIODIC)
    )
    parts = decompose(ring5, nu)
    assert parts.alpha_f == 1.0
    assert parts.nu_e is None


def test_decompose_uniform_class(ring5: MarkovModel) -> None:
    """Test that a mobile class is all mobile part."""
    parts = decompose(ring5, _uniform_on_class(ring5, "11000"))
    assert parts.alpha_e == pytest.approx(1.0)
    assert parts.nu_f is None
    assert parts.mobile_check.passed


def test_decompose_half_and_half(ring5: MarkovModel) -> None:
    """Test the split of a half-frozen, half-mobile mixture."""
    frozen = Measure.point_mass(
        ring5.space, Configuration.from_string("10000", boundary=Boundary.PERIODIC)
    )
    mobile = _uniform_on_class(ring5, "11000")
    nu = Measure.mix([frozen, mobile], [0.5, 0.5])
    parts = decompose(ring5, nu)
    assert parts.alpha_f == pytest.approx(0.5)
    assert parts.alpha_e == pytest.approx(0.5)
    assert parts.frozen_check.passed
    assert parts.mobile_check.passed
    np.testing.assert_allclose(parts.reassemble(), nu.weights, atol=1e-14)
    assert parts.as_dict()["alpha_f"] == pytest.approx(0.5)
