"""Exact generators on enumerated windows, stationary measures and their checks."""
from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import lsqr

from .connect import BudgetExceededError
from .const import (
    DEFAULT_DENSE_SOLVE_LIMIT,
    DEFAULT_MODEL_BUDGET,
    DEFAULT_SOLVE_TOL,
    DEFAULT_TOL,
    DEFAULT_ZERO_ATOL,
)
from .lattice_core import (
    Boundary,
    ConstraintFamily,
    Configuration,
    PmmLabError,
    Window,
    bond_rates,
    swap_codes,
)

_LOGGER = logging.getLogger(__name__)


class StationarySolveError(PmmLabError):
    """Error to indicate a failed stationary solve on a communicating class."""


# =============================================================================
# State spaces and measures
# =============================================================================


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Sorted packed codes of the configurations of a window."""

    window: Window
    boundary: Boundary
    codes: np.ndarray
    count: int | None = None

    @classmethod
    def enumerate(
        cls,
        window: Window,
        boundary: Boundary = Boundary.PERIODIC,
        count: int | None = None,
        budget: int = DEFAULT_MODEL_BUDGET,
    ) -> StateSpace:
        """All configurations of the window, or those with `count` particles."""
        n = window.length
        if count is None:
            if n > budget:
                raise BudgetExceededError(
                    f"Window of length {n} exceeds the model budget {budget}"
                )
            codes = np.arange(1 << n, dtype=np.int64)
        else:
            if not 0 <= count <= n:
                raise ValueError(f"Particle count {count} outside [0, {n}]")
            if math.comb(n, count) > 1 << budget:
                raise BudgetExceededError(
                    f"{math.comb(n, count)} states at length {n}, count {count} "
                    f"exceed the model budget 2^{budget}"
                )
            codes = np.array(
                sorted(
                    sum(1 << i for i in sites)
                    for sites in itertools.combinations(range(n), count)
                ),
                dtype=np.int64,
            )
        codes.setflags(write=False)
        return cls(window, Boundary(boundary), codes, count)

    @property
    def size(self) -> int:
        return len(self.codes)

    def indices(self, codes: np.ndarray) -> np.ndarray:
        """Positions of packed codes in the space, -1 where absent."""
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.searchsorted(self.codes, codes)
        pos = np.minimum(pos, self.size - 1)
        return np.where(self.codes[pos] == codes, pos, -1)

    def index(self, config: Configuration) -> int:
        if config.window != self.window:
            raise ValueError(f"{config} is not on window {self.window}")
        pos = int(self.indices(np.array([config.bits]))[0])
        if pos < 0:
            raise KeyError(str(config))
        return pos

    def configuration(self, i: int) -> Configuration:
        return Configuration(self.window, int(self.codes[i]), self.boundary)

    def configurations(self) -> list[Configuration]:
        return [self.configuration(i) for i in range(self.size)]

    @property
    def particle_counts(self) -> np.ndarray:
        return np.array([int(c).bit_count() for c in self.codes], dtype=np.int64)

    def frozen_mask(self) -> np.ndarray:
        """States without two particles at distance 1 or 2 (ring metric if periodic)."""
        codes = self.codes
        n = self.window.length
        mask = (1 << n) - 1
        frozen = np.ones(self.size, dtype=bool)
        for d in (1, 2):
            if self.boundary is Boundary.PERIODIC:
                if d >= n:
                    continue
                rotated = ((codes >> d) | (codes << (n - d))) & mask
            else:
                rotated = codes >> d
            frozen &= (codes & rotated) == 0
        return frozen


@dataclass(frozen=True, eq=False)
class Measure:
    """Probability vector over the states of a space."""

    space: StateSpace
    weights: np.ndarray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (self.space.size,):
            raise ValueError(
                f"Weights of shape {weights.shape} for {self.space.size} states"
            )
        if np.any(weights < -DEFAULT_ZERO_ATOL):
            raise ValueError("Measure has negative weights")
        total = weights.sum()
        if abs(total - 1.0) > DEFAULT_TOL * max(1, self.space.size):
            raise ValueError(f"Weights sum to {total}, not 1")
        weights = np.clip(weights, 0.0, None)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_unnormalized(cls, space: StateSpace, weights: np.ndarray) -> Measure:
        weights = np.asarray(weights, dtype=float)
        return cls(space, weights / weights.sum())

    @classmethod
    def point_mass(cls, space: StateSpace, config: Configuration) -> Measure:
        weights = np.zeros(space.size)
        weights[space.index(config)] = 1.0
        return cls(space, weights)

    @classmethod
    def uniform_on(cls, space: StateSpace, indices: Iterable[int]) -> Measure:
        indices = np.fromiter(indices, dtype=np.int64)
        if len(indices) == 0:
            raise ValueError("Cannot build a uniform measure on no states")
        weights = np.zeros(space.size)
        weights[indices] = 1.0 / len(indices)
        return cls(space, weights)

    @classmethod
    def mix(cls, measures: Sequence[Measure], coefficients: Sequence[float]) -> Measure:
        """Convex combination of measures on one space."""
        if len(measures) != len(coefficients) or not measures:
            raise ValueError("Need one coefficient per measure")
        space = measures[0].space
        if any(m.space is not space for m in measures):
            raise ValueError("Measures live on different spaces")
        coefficients = np.asarray(coefficients, dtype=float)
        if np.any(coefficients < 0):
            raise ValueError("Mixture coefficients must be non-negative")
        coefficients = coefficients / coefficients.sum()
        weights = sum(c * m.weights for c, m in zip(coefficients, measures))
        return cls(space, weights)

    def weight(self, config: Configuration) -> float:
        return float(self.weights[self.space.index(config)])

    def support(self, atol: float = DEFAULT_ZERO_ATOL) -> np.ndarray:
        return np.flatnonzero(self.weights > atol)

    def marginal(self, subwindow: Window) -> Measure:
        """Marginal on an interval sub-window, over its full state space."""
        window = self.space.window
        if not window.includes(subwindow):
            raise ValueError(f"{subwindow} is not inside {window}")
        target = StateSpace.enumerate(subwindow, Boundary.EMPTY, budget=subwindow.length)
        shift = subwindow.start - window.start
        local = (self.space.codes >> shift) & ((1 << subwindow.length) - 1)
        weights = np.bincount(local, weights=self.weights, minlength=target.size)
        return Measure(target, weights)


def bernoulli_measure(space: StateSpace, rho: float) -> Measure:
    """Product Bernoulli(rho) restricted to the space and renormalised."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"Density {rho} outside [0, 1]")
    k = space.particle_counts
    n = space.window.length
    with np.errstate(divide="ignore"):
        log_w = k * np.log(rho) + (n - k) * np.log1p(-rho)
    weights = np.exp(log_w - log_w.max())
    return Measure.from_unnormalized(space, weights)


# =============================================================================
# Generator
# =============================================================================


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """Sparse generator of the dynamics on a state space, with its classes."""

    family: ConstraintFamily
    space: StateSpace
    generator: sp.csr_matrix
    labels: np.ndarray
    closed: np.ndarray
    symmetric: bool

    @property
    def classes(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.flatnonzero(np.diff(self.labels[order])) + 1
        return np.split(order, bounds)

    @property
    def class_count(self) -> int:
        return len(self.closed)

    def bonds(self) -> range:
        window = self.space.window
        if self.space.boundary is Boundary.PERIODIC:
            return window.sites()
        return range(window.start, window.stop)

    def transitions(self, x: int) -> tuple[np.ndarray, np.ndarray]:
        """Rate at bond x and index of the exchanged state, for every state."""
        space = self.space
        rates = bond_rates(self.family, space.codes, space.window, space.boundary, x)
        targets = space.indices(
            swap_codes(space.codes, space.window, space.boundary, x)
        )
        return rates, targets

    def row_sum_error(self) -> float:
        return float(np.abs(np.asarray(self.generator.sum(axis=1))).max())


def build_model(
    family: ConstraintFamily,
    window: Window,
    boundary: Boundary = Boundary.PERIODIC,
    count: int | None = None,
    budget: int = DEFAULT_MODEL_BUDGET,
) -> MarkovModel:
    """Assemble Q[s, s'] = rate of the allowed jump s -> s', diagonal minus row sums."""
    space = StateSpace.enumerate(window, boundary, count, budget)
    bonds = window.sites() if space.boundary is Boundary.PERIODIC else range(
        window.start, window.stop
    )
    n = space.size
    rows, cols, vals = [], [], []
    source = np.arange(n, dtype=np.int64)
    for x in bonds:
        rates = bond_rates(family, space.codes, window, space.boundary, x)
        targets = space.indices(swap_codes(space.codes, window, space.boundary, x))
        live = (rates > 0) & (targets != source)
        rows.append(source[live])
        cols.append(targets[live])
        vals.append(rates[live])

    row = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    col = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    val = np.concatenate(vals) if vals else np.empty(0)
    off = sp.coo_matrix((val, (row, col)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    generator = (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()

    asymmetry = abs(off - off.T).max() if off.nnz else 0.0
    symmetric = asymmetry == 0
    if not symmetric:
        _LOGGER.warning(
            "Generator of family %s is not symmetric (max |Q - Q^T| = %g)",
            family.name, asymmetry,
        )

    n_classes, labels = connected_components(off, directed=True, connection="strong")
    # A class is closed when no transition leaves it
    leaving = labels[row] != labels[col]
    closed = np.ones(n_classes, dtype=bool)
    closed[np.unique(labels[row[leaving]])] = False

    _LOGGER.debug(
        "Model on %s (%s, count=%s): %d states, %d transitions, %d classes",
        window, space.boundary.value, count, n, off.nnz, n_classes,
    )
    return MarkovModel(family, space, generator, labels, closed, symmetric)


# =============================================================================
# Stationary measures
# =============================================================================


def _solve_class(sub: sp.csr_matrix, tol: float) -> np.ndarray:
    """Solve nu Q = 0, sum(nu) = 1 on one class by least squares."""
    size = sub.shape[0]
    rhs = np.zeros(size + 1)
    rhs[-1] = 1.0
    if size <= DEFAULT_DENSE_SOLVE_LIMIT:
        system = np.vstack([sub.T.toarray(), np.ones((1, size))])
        nu, *_ = scipy.linalg.lstsq(system, rhs)
    else:
        system = sp.vstack([sub.T, sp.csr_matrix(np.ones((1, size)))]).tocsr()
        nu = lsqr(system, rhs, atol=tol * 1e-2, btol=tol * 1e-2)[0]
    residual = float(np.abs(sub.T @ nu).max())
    if residual > tol or abs(nu.sum() - 1.0) > tol:
        raise StationarySolveError(
            f"Stationary solve on a class of {size} states left residual {residual:g}"
        )
    return nu


def stationary_measures(
    model: MarkovModel, tol: float = DEFAULT_SOLVE_TOL
) -> list[Measure]:
    """The extremal stationary measure of every closed class."""
    measures = []
    for label, members in enumerate(model.classes):
        if not model.closed[label]:
            continue
        weights = np.zeros(model.space.size)
        if len(members) == 1:
            weights[members[0]] = 1.0
        else:
            sub = model.generator[members][:, members]
            nu = _solve_class(sub, tol)
            if np.any(nu < -tol):
                raise StationarySolveError("Stationary solve returned negative weights")
            nu = np.clip(nu, 0.0, None)
            nu /= nu.sum()
            spread = float(nu.max() - nu.min())
            if spread > tol:
                _LOGGER.warning(
                    "Stationary measure on class %d is not uniform (spread %g)",
                    label, spread,
                )
            weights[members] = nu
        measures.append(Measure(model.space, weights))
    _LOGGER.info("Solved %d extremal stationary measures", len(measures))
    return measures


# =============================================================================
# Checks
# =============================================================================


@dataclass(frozen=True)
class CheckResult:
    """A measured value against a tolerance."""

    name: str
    value: float
    tol: float
    detail: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.value <= self.tol

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "value": self.value,
            "tol": self.tol,
            "passed": self.passed,
            **({"detail": self.detail} if self.detail else {}),
        }


def _require_space(model: MarkovModel, nu: Measure) -> None:
    if nu.space is not model.space and not np.array_equal(
        nu.space.codes, model.space.codes
    ):
        raise ValueError("Measure and model live on different state spaces")


def check_stationary(
    model: MarkovModel, nu: Measure, tol: float = DEFAULT_TOL
) -> CheckResult:
    """max over sigma of |nu(L 1_sigma)|, that is max |(nu Q)_sigma|."""
    _require_space(model, nu)
    flux = model.generator.T @ nu.weights
    return CheckResult("stationary", float(np.abs(flux).max()), tol)


def check_detailed_balance(
    model: MarkovModel, nu: Measure, tol: float = DEFAULT_TOL
) -> CheckResult:
    """max over sigma and x of |c_x(sigma) (nu(sigma^{x,x+1}) - nu(sigma))|."""
    _require_space(model, nu)
    worst = 0.0
    per_bond = {}
    for x in model.bonds():
        rates, targets = model.transitions(x)
        violation = np.abs(rates * (nu.weights[targets] - nu.weights))
        per_bond[str(x)] = float(violation.max())
        worst = max(worst, per_bond[str(x)])
    return CheckResult("detailed_balance", worst, tol, {"per_bond": per_bond})


def check_exchangeability(
    model: MarkovModel, nu: Measure, tol: float = DEFAULT_SOLVE_TOL
) -> CheckResult:
    """Spread of nu over the non-frozen states of each count forming one class."""
    _require_space(model, nu)
    frozen = model.space.frozen_mask()
    counts = model.space.particle_counts
    spreads = {}
    for k in np.unique(counts):
        members = np.flatnonzero(~frozen & (counts == k))
        if len(members) == 0 or len(np.unique(model.labels[members])) != 1:
            continue
        values = nu.weights[members]
        spreads[str(int(k))] = float(values.max() - values.min())
    worst = max(spreads.values(), default=0.0)
    return CheckResult("exchangeability", worst, tol, {"per_count": spreads})


def class_uniformity(
    model: MarkovModel,
    measures: Sequence[Measure],
    tol: float = DEFAULT_SOLVE_TOL,
) -> CheckResult:
    """Every extremal measure is a frozen point mass or uniform on its class."""
    frozen = model.space.frozen_mask()
    worst = 0.0
    kinds = {"frozen_point_mass": 0, "uniform_on_class": 0, "other": 0}
    for nu in measures:
        support = nu.support()
        values = nu.weights[support]
        spread = float(values.max() - values.min())
        if len(support) == 1 and frozen[support[0]]:
            kinds["frozen_point_mass"] += 1
        elif spread <= tol and len(np.unique(model.labels[support])) == 1:
            kinds["uniform_on_class"] += 1
        else:
            kinds["other"] += 1
        worst = max(worst, spread)
    if kinds["other"]:
        worst = math.inf
    return CheckResult("class_uniformity", worst, tol, kinds)


def check_positivity(
    model: MarkovModel, nu: Measure, atol: float = DEFAULT_ZERO_ATOL
) -> bool:
    """True iff on each class nu vanishes identically or is positive everywhere."""
    _require_space(model, nu)
    for members in model.classes:
        positive = nu.weights[members] > atol
        if positive.any() and not positive.all():
            return False
    return True


def mirror(sigma: Configuration, window: Window | None = None) -> Configuration:
    """Psi(sigma)(a + x) = sigma(b - x) on the window [a, b]."""
    if window is not None and window != sigma.window:
        sigma = sigma.restrict(window)
    return sigma.mirror()


def check_mirror_symmetry(
    model: MarkovModel, nu: Measure, tol: float = DEFAULT_SOLVE_TOL
) -> CheckResult:
    """max |nu(sigma) - nu(Psi(sigma))| over non-frozen sigma connected to Psi(sigma)."""
    _require_space(model, nu)
    space = model.space
    mirrored = np.array(
        [mirror(space.configuration(i)).bits for i in range(space.size)], dtype=np.int64
    )
    targets = space.indices(mirrored)
    eligible = ~space.frozen_mask() & (model.labels == model.labels[targets])
    gaps = np.abs(nu.weights - nu.weights[targets])[eligible]
    return CheckResult(
        "mirror_symmetry", float(gaps.max(initial=0.0)), tol,
        {"pairs": int(eligible.sum())},
    )


# =============================================================================
# Decomposition into frozen and mobile parts
# =============================================================================


@dataclass(frozen=True, eq=False)
class Decomposition:
    """nu = alpha_f nu_f + alpha_e nu_e with nu_f on frozen states."""

    alpha_f: float
    nu_f: Measure | None
    alpha_e: float
    nu_e: Measure | None
    frozen_check: CheckResult | None
    mobile_check: CheckResult | None

    def reassemble(self) -> np.ndarray:
        parts = [
            alpha * nu.weights
            for alpha, nu in ((self.alpha_f, self.nu_f), (self.alpha_e, self.nu_e))
            if nu is not None
        ]
        return np.sum(parts, axis=0)

    def as_dict(self) -> dict[str, Any]:
        return {
            "alpha_f": self.alpha_f,
            "alpha_e": self.alpha_e,
            "frozen_stationary": self.frozen_check.as_dict() if self.frozen_check else None,
            "mobile_stationary": self.mobile_check.as_dict() if self.mobile_check else None,
        }


def decompose(
    model: MarkovModel, nu: Measure, tol: float = DEFAULT_TOL
) -> Decomposition:
    """Split nu by conditioning on the frozen states and on their complement."""
    _require_space(model, nu)
    frozen = model.space.frozen_mask()
    alpha_f = float(nu.weights[frozen].sum())
    alpha_e = 1.0 - alpha_f

    def conditional(mask: np.ndarray, alpha: float) -> Measure | None:
        if alpha <= DEFAULT_ZERO_ATOL:
            return None
        return Measure(model.space, np.where(mask, nu.weights, 0.0) / alpha)

    nu_f = conditional(frozen, alpha_f)
    nu_e = conditional(~frozen, alpha_e)
    frozen_check = check_stationary(model, nu_f, tol) if nu_f is not None else None
    mobile_check = check_stationary(model, nu_e, tol) if nu_e is not None else None
    for check in (frozen_check, mobile_check):
        if check is not None and not check.passed:
            _LOGGER.warning("Conditional part is not stationary: residual %g", check.value)
    return Decomposition(alpha_f, nu_f, alpha_e, nu_e, frozen_check, mobile_check)
