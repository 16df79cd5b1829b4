"""Relative entropy, dissipation and discrepancy functionals on exact measures."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import rel_entr

from .const import DEFAULT_SOLVE_TOL, DEFAULT_ZERO_ATOL
from .exact_ctmc import Measure, StateSpace
from .lattice_core import (
    Boundary,
    ConstraintFamily,
    Configuration,
    PmmLabError,
    UnresolvableRateError,
    Window,
    bond_rates,
    resolvable,
    swap_codes,
)

_LOGGER = logging.getLogger(__name__)


class EntropyDomainError(PmmLabError):
    """Error to indicate an argument outside the domain of an entropy functional."""


# =============================================================================
# Phi and relative entropy
# =============================================================================


def phi(u: float, v: float) -> float:
    """(u - v) log(u / v), with phi(0, 0) = 0 and +inf when exactly one is 0."""
    if u < 0 or v < 0:
        raise EntropyDomainError(f"phi needs non-negative arguments, got ({u}, {v})")
    if u == 0 and v == 0:
        return 0.0
    if u == 0 or v == 0:
        return math.inf
    return (u - v) * math.log(u / v)


def phi_array(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Elementwise phi over non-negative arrays."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u < 0) or np.any(v < 0):
        raise EntropyDomainError("phi needs non-negative arguments")
    out = np.zeros(np.broadcast(u, v).shape)
    both = (u > 0) & (v > 0)
    one = (u > 0) ^ (v > 0)
    out[one] = math.inf
    out[both] = (u[both] - v[both]) * np.log(u[both] / v[both])
    return out


def _check_density(rho: float) -> None:
    if not 0.0 < rho < 1.0:
        raise EntropyDomainError(f"Reference density {rho} outside (0, 1)")


def _log_bernoulli(space: StateSpace, rho: float) -> np.ndarray:
    k = space.particle_counts
    n = space.window.length
    return k * math.log(rho) + (n - k) * math.log1p(-rho)


def _on_window(nu: Measure, window: Window | None) -> Measure:
    if window is None or (
        window == nu.space.window and nu.space.boundary is Boundary.EMPTY
    ):
        return nu
    return nu.marginal(window)


def relative_entropy(nu: Measure, rho: float, window: Window | None = None) -> float:
    """Sum over sigma of nu(sigma) log(nu(sigma) / mu_rho(sigma)) on the window."""
    _check_density(rho)
    nu = _on_window(nu, window)
    reference = np.exp(_log_bernoulli(nu.space, rho))
    return float(rel_entr(nu.weights, reference).sum())


def modified_entropy(
    nu: Measure, rho: float, window: Window | None, k: int
) -> float:
    """relative_entropy restricted to configurations with at most k particles."""
    _check_density(rho)
    nu = _on_window(nu, window)
    keep = nu.space.particle_counts <= k
    if np.any(nu.weights[~keep] > DEFAULT_ZERO_ATOL):
        _LOGGER.warning("Measure charges configurations with more than %d particles", k)
    reference = np.exp(_log_bernoulli(nu.space, rho))
    return float(rel_entr(nu.weights[keep], reference[keep]).sum())


# =============================================================================
# Bond functionals
# =============================================================================


def _bond_data(
    family: ConstraintFamily, nu: Measure, x: int, zero_pad: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Rates at bond x and the weight of the exchanged state, for every state of nu."""
    space = nu.space
    if (
        space.boundary is Boundary.EMPTY
        and not zero_pad
        and not resolvable(family, space.window, x)
    ):
        raise UnresolvableRateError(
            f"Rate at bond {x} is not determined by window {space.window}"
        )
    rates = bond_rates(family, space.codes, space.window, space.boundary, x)
    targets = space.indices(swap_codes(space.codes, space.window, space.boundary, x))
    return rates, nu.weights[targets]


def gamma(
    family: ConstraintFamily,
    nu: Measure,
    x: int,
    sigma: Configuration,
) -> float:
    """nu(c_x 1_sigma): rate-weighted mass of the cylinder of sigma."""
    space = nu.space
    if not space.window.includes(sigma.window):
        raise ValueError(f"{sigma.window} is not inside {space.window}")
    if space.boundary is Boundary.EMPTY and not resolvable(family, space.window, x):
        raise UnresolvableRateError(
            f"Rate at bond {x} is not determined by window {space.window}"
        )
    rates = bond_rates(family, space.codes, space.window, space.boundary, x)
    shift = sigma.window.start - space.window.start
    local = (space.codes >> shift) & ((1 << sigma.length) - 1)
    mask = local == sigma.bits
    return float((rates[mask] * nu.weights[mask]).sum())


def alpha(
    family: ConstraintFamily, nu: Measure, x: int, zero_pad: bool = False
) -> float:
    """Sum over sigma of c_x(sigma) phi(nu(sigma^{x,x+1}), nu(sigma))."""
    rates, swapped = _bond_data(family, nu, x, zero_pad)
    live = rates > 0
    return float((rates[live] * phi_array(swapped[live], nu.weights[live])).sum())


def beta_parts(
    family: ConstraintFamily, nu: Measure, x: int, zero_pad: bool = False
) -> tuple[float, float]:
    """(M, m): rate-weighted sums of the larger and smaller of nu(zeta), nu(zeta^x)."""
    rates, swapped = _bond_data(family, nu, x, zero_pad)
    high = float((rates * np.maximum(swapped, nu.weights)).sum())
    low = float((rates * np.minimum(swapped, nu.weights)).sum())
    return high, low


def beta(
    family: ConstraintFamily, nu: Measure, x: int, zero_pad: bool = False
) -> float:
    """Sum over zeta of c_x(zeta) |nu(zeta) - nu(zeta^{x,x+1})|."""
    rates, swapped = _bond_data(family, nu, x, zero_pad)
    return float((rates * np.abs(nu.weights - swapped)).sum())


def balance_residual(
    family: ConstraintFamily, nu: Measure, x: int, zero_pad: bool = False
) -> float:
    """max over sigma of |c_x(sigma) (nu(sigma^{x,x+1}) - nu(sigma))|."""
    rates, swapped = _bond_data(family, nu, x, zero_pad)
    return float(np.abs(rates * (swapped - nu.weights)).max())


def measure_bonds(family: ConstraintFamily, nu: Measure) -> list[int]:
    """Bonds whose rate the measure's window determines."""
    window = nu.space.window
    if nu.space.boundary is Boundary.PERIODIC:
        return list(window.sites())
    return [x for x in range(window.start, window.stop) if resolvable(family, window, x)]


# =============================================================================
# The stationarity identity, split into bulk and boundary bonds
# =============================================================================


@dataclass(frozen=True)
class EntropyBalance:
    """Bulk and boundary parts of sum_sigma log(nu/mu_rho)(sigma) nu(L 1_sigma)."""

    window: str
    bulk: float
    boundary: float
    alpha_bulk: float
    per_bond: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.bulk + self.boundary

    def passed(self, tol: float = DEFAULT_SOLVE_TOL) -> bool:
        return abs(self.total) <= tol and abs(self.bulk - self.alpha_bulk) <= tol

    def as_dict(self) -> dict[str, Any]:
        return {
            "window": self.window,
            "bulk": self.bulk,
            "boundary": self.boundary,
            "total": self.total,
            "minus_half_alpha_bulk": self.alpha_bulk,
            "per_bond": self.per_bond,
        }


def entropy_balance(
    family: ConstraintFamily,
    nu: Measure,
    rho: float,
    window: Window,
) -> EntropyBalance:
    """Evaluate the identity on the cylinders of `window` under the enclosing nu.

    A bond is bulk when its whole rate neighbourhood lies in the window;
    every other bond of nu's space is boundary. Cylinders of zero mass
    contribute nothing.
    """
    _check_density(rho)
    space = nu.space
    if not space.window.includes(window):
        raise ValueError(f"{window} is not inside {space.window}")
    marginal = nu.marginal(window)
    with np.errstate(divide="ignore"):
        log_ratio = np.log(marginal.weights) - _log_bernoulli(marginal.space, rho)
    log_ratio[marginal.weights <= 0] = 0.0

    shift = window.start - space.window.start
    mask = (1 << window.length) - 1
    local = (space.codes >> shift) & mask
    bonds = (
        space.window.sites()
        if space.boundary is Boundary.PERIODIC
        else range(space.window.start, space.window.stop)
    )

    bulk = boundary = alpha_bulk = 0.0
    per_bond = {}
    for x in bonds:
        rates = bond_rates(family, space.codes, space.window, space.boundary, x)
        moved = (swap_codes(space.codes, space.window, space.boundary, x) >> shift) & mask
        flow = nu.weights * rates
        term = float((flow * (log_ratio[moved] - log_ratio[local])).sum())
        if term == 0.0 and np.array_equal(moved, local):
            continue
        per_bond[str(x)] = term
        if resolvable(family, window, x):
            bulk += term
            alpha_bulk -= 0.5 * alpha(family, marginal, x)
        else:
            boundary += term
    result = EntropyBalance(str(window), bulk, boundary, alpha_bulk, per_bond)
    _LOGGER.debug(
        "Entropy balance on %s: bulk %g, boundary %g", window, bulk, boundary
    )
    return result


# =============================================================================
# Report
# =============================================================================


@dataclass(frozen=True)
class EntropyReport:
    """H, alpha and beta per bond, and the worst balance residual."""

    H: float
    alpha: dict[int, float]
    beta: dict[int, float]
    balance_residual: float
    c_max: float
    balance: EntropyBalance | None = None

    @property
    def beta_bound_holds(self) -> bool:
        return all(
            self.beta[x] <= math.sqrt(self.c_max * self.alpha[x]) + 1e-12
            for x in self.alpha
        )

    def as_dict(self) -> dict[str, Any]:
        return {
            "H": self.H,
            "alpha": {str(x): v for x, v in self.alpha.items()},
            "beta": {str(x): v for x, v in self.beta.items()},
            "balance_residual": self.balance_residual,
            "c_max": self.c_max,
            "beta_bound_holds": self.beta_bound_holds,
            "balance": self.balance.as_dict() if self.balance else None,
        }


def entropy_report(
    family: ConstraintFamily,
    nu: Measure,
    rho: float,
    window: Window | None = None,
) -> EntropyReport:
    """Every functional of nu at once; the balance needs an inner window."""
    bonds = measure_bonds(family, nu)
    balance = entropy_balance(family, nu, rho, window) if window is not None else None
    return EntropyReport(
        H=relative_entropy(nu, rho, window),
        alpha={x: alpha(family, nu, x) for x in bonds},
        beta={x: beta(family, nu, x) for x in bonds},
        balance_residual=max(
            (balance_residual(family, nu, x) for x in bonds), default=0.0
        ),
        c_max=family.c_max,
        balance=balance,
    )
