"""Tests for configurations, exchanges and constraint families."""
from __future__ import annotations

import itertools
import json

import numpy as np
import pytest

from pmm_lab.lattice_core import (
    Boundary,
    Configuration,
    ConstraintFamily,
    InvalidFamilyError,
    UndefinedExchangeError,
    UnresolvableRateError,
    Window,
    bond_rates,
    load_family,
    pmm_family,
    rate,
    swap,
    swap_codes,
    validate_family,
    window_code,
    window_string,
)


# =============================================================================
# Configuration Tests
# =============================================================================


def test_string_round_trip() -> None:
    """Test that strings read left to right from the window start."""
    config = Configuration.from_string("1100", start=3)
    assert config.window == Window(3, 6)
    assert config.occupied_sites() == [3, 4]
    assert str(config) == "1100"


def test_from_string_rejects_garbage() -> None:
    """Test that non-binary strings are rejected."""
    with pytest.raises(ValueError):
        Configuration.from_string("10a1")


def test_from_array_and_to_array() -> None:
    """Test array construction."""
    config = Configuration.from_array(np.array([0, 1, 1, 0, 1]))
    assert str(config) == "01101"
    np.testing.assert_array_equal(config.to_array(), [0, 1, 1, 0, 1])


def test_occupation_outside_empty_window_reads_zero() -> None:
    """Test zero padding under empty boundary."""
    config = Configuration.from_string("11")
    assert config.occupation(0) == 0
    assert config.occupation(3) == 0


def test_periodic_occupation_wraps() -> None:
    """Test modular indexing on rings."""
    config = Configuration.from_string("1000", boundary=Boundary.PERIODIC)
    assert config.occupation(5) == 1
    assert config.occupation(0) == 0


def test_restrict_and_mirror() -> None:
    """Test restriction to a sub-window and reflection."""
    config = Configuration.from_string("011010")
    assert str(config.restrict(Window(2, 4))) == "110"
    assert str(Configuration.from_string("1100").mirror()) == "0011"
    assert str(Configuration.from_string("0110").mirror()) == "0110"


# =============================================================================
# Swap Tests
# =============================================================================


def test_swap_exchanges_values() -> None:
    """Test the exchange on an interval."""
    assert str(swap(Configuration.from_string("1100"), 2)) == "1010"


def test_swap_is_involution() -> None:
    """Test that swapping twice restores the configuration."""
    config = Configuration.from_string("1010")
    assert swap(swap(config, 2), 2) == config


def test_swap_wraps_on_ring() -> None:
    """Test the bond between the last and first site of a ring."""
    ring = Configuration.from_string("0110", boundary=Boundary.PERIODIC)
    assert str(swap(ring, 4)) == "0110"
    ring = Configuration.from_string("0111", boundary=Boundary.PERIODIC)
    assert str(swap(ring, 4)) == "1110"


def test_swap_outside_empty_window_raises() -> None:
    """Test that an exchange leaving the window is undefined."""
    with pytest.raises(UndefinedExchangeError):
        swap(Configuration.from_string("1100"), 4)


def test_swap_preserves_count_everywhere() -> None:
    """Test count conservation on every state and bond of a small window."""
    window = Window.of_length(6)
    for bits in range(1 << 6):
        config = Configuration(window, bits)
        for x in range(1, 6):
            assert swap(config, x).particle_count == config.particle_count


# =============================================================================
# Rate Tests
# =============================================================================


def test_pmm_rate_examples() -> None:
    """Test the PMM rate eta(x-1) + eta(x+2)."""
    family = pmm_family()
    assert rate(family, Configuration.from_string("1100"), 2) == 1
    assert rate(family, Configuration.from_string("0000"), 2) == 0
    assert rate(family, Configuration.from_string("1011"), 2) == 2


def test_pmm_rate_values_and_positivity() -> None:
    """Test rates in {0, 1, 2}, positive iff x-1 or x+2 is occupied."""
    family = pmm_family()
    window = Window.of_length(6)
    for bits in range(1 << 6):
        config = Configuration(window, bits)
        for x in range(1, 6):
            value = rate(family, config, x)
            assert value in (0, 1, 2)
            assert (value > 0) == bool(config.occupation(x - 1) or config.occupation(x + 2))


def test_rate_is_swap_invariant(accepted_family: ConstraintFamily) -> None:
    """Test c_x(eta) = c_x(eta^{x,x+1}) for every catalog family."""
    window = Window.of_length(7)
    for bits in range(1 << 7):
        config = Configuration(window, bits)
        for x in range(1, 7):
            assert rate(accepted_family, config, x) == rate(
                accepted_family, swap(config, x), x
            )


def test_rate_without_zero_padding_raises() -> None:
    """Test that an unresolvable neighbourhood raises when padding is refused."""
    with pytest.raises(UnresolvableRateError):
        rate(pmm_family(), Configuration.from_string("1100"), 1, zero_pad=False)


def test_vectorized_rates_match_scalar(accepted_family: ConstraintFamily) -> None:
    """Test bond_rates and swap_codes against the scalar functions."""
    window = Window.of_length(6)
    codes = np.arange(1 << 6)
    for boundary, x in itertools.product(Boundary, range(1, 6)):
        rates = bond_rates(accepted_family, codes, window, boundary, x)
        targets = swap_codes(codes, window, boundary, x)
        for code in range(1 << 6):
            config = Configuration(window, code, boundary)
            assert rates[code] == rate(accepted_family, config, x)
            assert targets[code] == swap(config, x).bits


# =============================================================================
# Family Tests
# =============================================================================


def test_window_code_round_trip() -> None:
    """Test that local windows index the rate table left to right."""
    assert window_code("1000") == 1
    assert window_string(window_code("0101"), 4) == "0101"


def test_catalog_families_pass(accepted_family: ConstraintFamily) -> None:
    """Test that every catalog family passes all four checks."""
    report = validate_family(accepted_family)
    assert report.passed
    assert {c.name for c in report.checks} == {
        "translation_invariance",
        "locality",
        "swap_symmetry",
        "positivity",
    }


def test_constant_family_fails_positivity() -> None:
    """Test that c_0 = 1 is positive without a facilitating particle."""
    report = validate_family(ConstraintFamily.from_function(1, lambda eta: 1.0))
    assert not report.passed
    assert not report.check("positivity").passed
    assert report.check("swap_symmetry").passed


def test_left_only_family_fails_positivity() -> None:
    """Test that c_0 = eta(-1) vanishes when only eta(2) is occupied."""
    report = validate_family(ConstraintFamily.from_function(1, lambda eta: eta[-1]))
    assert not report.check("positivity").passed
    assert "0001" in report.check("positivity").failures


def test_asymmetric_family_fails_swap_symmetry() -> None:
    """Test that a rate reading eta(0) breaks swap symmetry."""
    family = ConstraintFamily.from_function(
        1, lambda eta: (eta[-1] + eta[2]) * (1 + eta[0])
    )
    report = validate_family(family)
    assert not report.check("swap_symmetry").passed
    assert report.check("positivity").passed


def test_radius_zero_fails_positivity() -> None:
    """Test that a support without offsets -1 and 2 cannot satisfy positivity."""
    report = validate_family(ConstraintFamily.from_function(0, lambda eta: 1.0))
    assert not report.check("positivity").passed


def test_family_json_round_trip(tmp_path) -> None:
    """Test saving and loading a family document."""
    family = pmm_family()
    path = tmp_path / "pmm.json"
    path.write_text(json.dumps(family.to_dict()))
    loaded = load_family(str(path))
    assert loaded.rate_table == family.rate_table
    assert loaded.fingerprint() == family.fingerprint()


def test_family_json_missing_windows_are_zero() -> None:
    """Test that windows absent from the document have rate 0."""
    family = ConstraintFamily.from_json(
        '{"radius": 1, "rates": [{"window": "1000", "value": 1.0}]}'
    )
    assert family.local_rate(window_code("1000")) == 1.0
    assert family.local_rate(window_code("0001")) == 0.0


@pytest.mark.parametrize(
    "document",
    [
        '{"radius": 1, "rates": [{"window": "100", "value": 1.0}]}',
        '{"radius": 1, "rates": [{"window": "1000", "value": -1.0}]}',
        '{"radius": 1, "rates": [{"window": "1000", "value": 1}, {"window": "1000", "value": 2}]}',
        '{"radius": 1, "rates": [{"window": "10x0", "value": 1.0}]}',
        '{"rates": []}',
        "[1, 2]",
    ],
)
def test_family_json_invalid(document: str) -> None:
    """Test malformed family documents."""
    with pytest.raises(InvalidFamilyError):
        ConstraintFamily.from_json(document)


def test_fingerprint_distinguishes_tables() -> None:
    """Test that different rate tables hash differently."""
    assert pmm_family().fingerprint() != load_family("facilitated").fingerprint()
    assert pmm_family().fingerprint() == pmm_family().fingerprint()


def test_c_max() -> None:
    """Test the largest rate of the catalog families."""
    assert pmm_family().c_max == 2.0
    assert load_family("facilitated").c_max == 1.0
    assert load_family("pmm_r2").c_max == 4.0
