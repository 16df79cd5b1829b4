"""Reachability under allowed jumps inside a window, and transport plans."""
from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .classify import (
    EventuallyPeriodicConfig,
    LabelKind,
    classify_infinite,
    has_mobile_cluster,
    is_frozen,
)
from .const import DEFAULT_BFS_BUDGET
from .lattice_core import (
    Boundary,
    ConstraintFamily,
    Configuration,
    PmmLabError,
    UndefinedExchangeError,
    Window,
    bond_rates,
    rate,
    swap_codes,
)

_LOGGER = logging.getLogger(__name__)

MAX_REPORTED_COUNTEREXAMPLES = 10


class BudgetExceededError(PmmLabError):
    """Error to indicate a window too long to enumerate."""


class PlanningError(PmmLabError):
    """Error to indicate a transport request outside the planner's preconditions."""


# =============================================================================
# Paths
# =============================================================================


@dataclass(frozen=True)
class JumpPath:
    """A start configuration and the bonds x of the exchanges (x, x+1) applied to it."""

    start: Configuration
    moves: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.moves)

    def __str__(self) -> str:
        return " ".join(str(x) for x in self.moves)

    def end(self) -> Configuration:
        return apply_path(self)

    def reversed(self) -> JumpPath:
        """The same exchanges undone, from the end configuration back to start."""
        return JumpPath(self.end(), tuple(reversed(self.moves)))


def apply_path(path: JumpPath) -> Configuration:
    """Apply every move of the path and return the end configuration."""
    config = path.start
    for x in path.moves:
        config = config.swap(x)
    return config


def reverse_path(path: JumpPath) -> JumpPath:
    """The same jumps undone in reverse order."""
    return path.reversed()


def validate_path(family: ConstraintFamily, path: JumpPath) -> bool:
    """Replay the path; True if every move is an allowed jump inside the window."""
    config = path.start.with_boundary(Boundary.EMPTY)
    for step, x in enumerate(path.moves):
        try:
            if rate(family, config, x) <= 0:
                _LOGGER.debug("Move %d at bond %d has zero rate in %s", step, x, config)
                return False
            config = config.swap(x)
        except UndefinedExchangeError:
            _LOGGER.debug("Move %d at bond %d leaves window %s", step, x, config.window)
            return False
    return True


# =============================================================================
# Reachability
# =============================================================================


def _as_interval(config: Configuration, window: Window | None) -> Configuration:
    """The configuration restricted to `window`, read with empty boundary."""
    if window is None or window == config.window:
        return config.with_boundary(Boundary.EMPTY)
    return config.restrict(window)


def _check_budget(length: int, budget: int) -> None:
    if length > budget:
        raise BudgetExceededError(
            f"Window of length {length} exceeds the enumeration budget {budget}"
        )


def _neighbour_bits(family: ConstraintFamily, bits: int, n: int) -> list[int]:
    """States reachable from `bits` by one non-trivial allowed jump (zero-padded)."""
    r = family.radius
    mask = (1 << family.window_length) - 1
    padded = bits << r
    table = family.table
    out = []
    for i in range(n - 1):
        if not ((bits >> i) ^ (bits >> (i + 1))) & 1:
            continue
        if table[(padded >> i) & mask] > 0:
            out.append(bits ^ (3 << i))
    return out


def _reachable_bits(
    family: ConstraintFamily, bits: int, n: int, target: int | None = None
) -> set[int]:
    seen = {bits}
    queue = deque([bits])
    while queue:
        current = queue.popleft()
        if current == target:
            break
        for nxt in _neighbour_bits(family, current, n):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def reachable_set(
    family: ConstraintFamily,
    config: Configuration,
    window: Window | None = None,
    budget: int = DEFAULT_BFS_BUDGET,
) -> set[Configuration]:
    """Breadth-first closure of config under allowed jumps inside the window."""
    sigma = _as_interval(config, window)
    _check_budget(sigma.length, budget)
    states = _reachable_bits(family, sigma.bits, sigma.length)
    _LOGGER.debug("Reached %d states from %s", len(states), sigma)
    return {sigma.with_bits(bits) for bits in states}


def connected(
    family: ConstraintFamily,
    sigma: Configuration,
    sigma_prime: Configuration,
    window: Window | None = None,
    budget: int = DEFAULT_BFS_BUDGET,
) -> bool:
    """True if sigma_prime can be reached from sigma inside the window."""
    a = _as_interval(sigma, window)
    b = _as_interval(sigma_prime, window)
    if a.window != b.window:
        raise ValueError(f"Windows differ: {a.window} and {b.window}")
    if a.particle_count != b.particle_count:
        return False
    _check_budget(a.length, budget)
    return b.bits in _reachable_bits(family, a.bits, a.length, target=b.bits)


def component_labels(
    family: ConstraintFamily,
    length: int,
    budget: int = DEFAULT_BFS_BUDGET,
) -> np.ndarray:
    """Communicating-class label of every state of an interval window.

    Index c of the result is the class of the state whose packed bits are c.
    """
    _check_budget(length, budget)
    window = Window.of_length(length)
    codes = np.arange(1 << length, dtype=np.int64)
    rows, cols = [], []
    for x in range(window.start, window.stop):
        targets = swap_codes(codes, window, Boundary.EMPTY, x)
        live = (bond_rates(family, codes, window, Boundary.EMPTY, x) > 0) & (
            targets != codes
        )
        rows.append(codes[live])
        cols.append(targets[live])
    row = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    col = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    graph = coo_matrix(
        (np.ones(len(row), dtype=np.int8), (row, col)), shape=(len(codes), len(codes))
    )
    _, labels = connected_components(graph, directed=False)
    return labels


# =============================================================================
# Certification of the connection statements
# =============================================================================


@dataclass(frozen=True)
class Certificate:
    """Outcome of an exhaustive check; passed iff no counterexample was found."""

    statement: str
    window_length: int
    configurations: int
    groups: int
    counterexamples: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.counterexamples

    def as_dict(self) -> dict[str, Any]:
        return {
            "statement": self.statement,
            "window_length": self.window_length,
            "configurations": self.configurations,
            "groups": self.groups,
            "counterexamples": list(self.counterexamples),
            "passed": self.passed,
        }


def _particle_keys(length: int, member: np.ndarray) -> np.ndarray:
    """Group selected states by particle count; -1 marks states left out."""
    counts = np.array([c.bit_count() for c in range(1 << length)], dtype=np.int64)
    return np.where(member, counts, -1)


def _certify_groups(
    family: ConstraintFamily,
    length: int,
    statement: str,
    keys: np.ndarray,
    budget: int,
    closed: bool = False,
) -> Certificate:
    """Check that the states sharing a key share one class.

    With `closed`, every class met must also stay inside its key: a state
    reachable from a member carries the member's key.
    """
    labels = component_labels(family, length, budget)
    codes = np.arange(1 << length, dtype=np.int64)
    window = Window.of_length(length)
    failures: list[str] = []

    def report(message: str) -> None:
        if len(failures) < MAX_REPORTED_COUNTEREXAMPLES:
            failures.append(message)

    groups = 0
    for key in np.unique(keys[keys >= 0]):
        selected = codes[keys == key]
        groups += 1
        first = labels[selected[0]]
        classes = np.unique(labels[selected])
        if len(classes) > 1:
            for bits in selected[labels[selected] != first]:
                report(
                    f"k={key}: {Configuration(window, int(selected[0]))} "
                    f"not connected to {Configuration(window, int(bits))}"
                )
            _LOGGER.warning(
                "%s fails at length %d, k=%d: %d classes", statement, length, key, len(classes)
            )
        if closed:
            for label in classes:
                strays = codes[(labels == label) & (keys != key)]
                for bits in strays:
                    report(f"k={key}: class reaches {Configuration(window, int(bits))}")
    member = keys >= 0
    return Certificate(statement, length, int(member.sum()), groups, tuple(failures))


def _frozen_mask(length: int) -> np.ndarray:
    codes = np.arange(1 << length, dtype=np.int64)
    return ((codes & (codes >> 1)) == 0) & ((codes & (codes >> 2)) == 0)


def certify_connectivity(
    family: ConstraintFamily, length: int, budget: int = DEFAULT_BFS_BUDGET
) -> Certificate:
    """Configurations with a mobile cluster and equal counts are connected."""
    keys = _particle_keys(length, ~_frozen_mask(length))
    return _certify_groups(
        family, length, "mobile-cluster configurations connect", keys, budget
    )


def finite_particle_keys(length: int) -> np.ndarray:
    """Particle count k of every window state labelled F'(k) on Z, else -1.

    The window is read as the core of (0)* core (0)*.
    """
    _check_budget(length, DEFAULT_BFS_BUDGET)
    window = Window.of_length(length)
    keys = np.full(1 << length, -1, dtype=np.int64)
    for bits in range(1 << length):
        core = str(Configuration(window, bits))
        label = classify_infinite(EventuallyPeriodicConfig("0", core, "0").canonical())
        if label.kind is LabelKind.FPRIME:
            keys[bits] = label.k
    return keys


def certify_finite_particles(
    family: ConstraintFamily, length: int, budget: int = DEFAULT_BFS_BUDGET
) -> Certificate:
    """States labelled F'(k) connect inside the window and their classes keep the label."""
    return _certify_groups(
        family, length, "finitely many particles: F'(k) is one closed class",
        finite_particle_keys(length), budget, closed=True,
    )


def certify_finite_holes(
    family: ConstraintFamily, length: int, budget: int = DEFAULT_BFS_BUDGET
) -> Certificate:
    """Configurations with all holes two sites away from both edges connect."""
    if length < 4:
        return Certificate("finitely many holes", length, 0, 0)
    codes = np.arange(1 << length, dtype=np.int64)
    edges = 0b11 | (0b11 << (length - 2))
    member = (codes & edges) == edges
    return _certify_groups(
        family, length, "finitely many holes: configurations connect",
        _particle_keys(length, member), budget,
    )


def certify_planner(
    family: ConstraintFamily, length: int, all_pairs: bool = False
) -> Certificate:
    """Replay-validate the planner on every configuration with a mobile cluster.

    Transport between two configurations is the normalisation of the first
    followed by the undone normalisation of the second, so validating every
    normalisation covers every pair; all_pairs replays the pairs as well.
    """
    window = Window.of_length(length)
    good = [
        Configuration(window, bits)
        for bits in range(1 << length)
        if not is_frozen(Configuration(window, bits))
    ]
    failures: list[str] = []

    def record(message: str) -> None:
        if len(failures) < MAX_REPORTED_COUNTEREXAMPLES:
            failures.append(message)

    for sigma in good:
        path = normalization_path(sigma)
        if not validate_path(family, path) or path.end() != right_massed(
            window, sigma.particle_count
        ):
            record(f"normalisation of {sigma} is invalid")

    pairs = 0
    if all_pairs:
        by_count: dict[int, list[Configuration]] = {}
        for sigma in good:
            by_count.setdefault(sigma.particle_count, []).append(sigma)
        for group in by_count.values():
            for sigma, sigma_prime in itertools.product(group, repeat=2):
                pairs += 1
                path = plan_transport(sigma, sigma_prime)
                if not validate_path(family, path) or path.end() != sigma_prime:
                    record(f"plan {sigma} -> {sigma_prime} is invalid")

    _LOGGER.info(
        "Planner checked on %d configurations and %d pairs at length %d",
        len(good), pairs, length,
    )
    return Certificate(
        "planner paths replay-validate", length, len(good), pairs, tuple(failures)
    )


# =============================================================================
# Constructive transport
# =============================================================================


def right_massed(window: Window, count: int) -> Configuration:
    """All `count` particles on the right-most sites of the window."""
    return Configuration.from_sites(window, range(window.stop - count + 1, window.stop + 1))


class _Planner:
    """Mutable occupation list that records the bonds it exchanges."""

    def __init__(self, config: Configuration) -> None:
        self.start = config.window.start
        self.occ = [int(v) for v in config.to_array()]
        self.moves: list[int] = []

    def exchange(self, i: int) -> None:
        self.occ[i], self.occ[i + 1] = self.occ[i + 1], self.occ[i]
        self.moves.append(self.start + i)

    def run_around(self, i: int) -> tuple[int, int]:
        """Maximal run of occupied sites containing index i."""
        s = e = i
        while s > 0 and self.occ[s - 1]:
            s -= 1
        while e < len(self.occ) - 1 and self.occ[e + 1]:
            e += 1
        return s, e

    def leftmost_cluster(self) -> int:
        """Compact the left-most mobile cluster into two adjacent particles.

        Returns the index of its left particle.
        """
        occ = self.occ
        n = len(occ)
        for i in range(n):
            if not occ[i]:
                continue
            if i + 1 < n and occ[i + 1]:
                return i
            if i + 2 < n and occ[i + 2]:
                # 101 -> 011, facilitated by the particle at i+2
                self.exchange(i)
                return i + 1
        raise PlanningError("Configuration has no mobile cluster")

    def block_step_left(self, s: int, e: int) -> None:
        """Shift the block [s, e] (length >= 2) one site left into an empty site."""
        self.exchange(s - 1)
        for j in range(s, e):
            self.exchange(j)

    def block_step_right(self, s: int, e: int) -> None:
        """Shift the block [s, e] (length >= 2) one site right into an empty site."""
        self.exchange(e)
        for j in range(e - 1, s - 1, -1):
            self.exchange(j)

    def normalize(self) -> list[int]:
        s, e = self.run_around(self.leftmost_cluster())
        while s > 0:
            if not self.occ[s - 1]:
                self.block_step_left(s, e)
            s, e = self.run_around(s - 1)
        last = len(self.occ) - 1
        while e < last:
            if not self.occ[e + 1]:
                self.block_step_right(s, e)
            s, e = self.run_around(e + 1)
        return self.moves


def normalization_path(sigma: Configuration) -> JumpPath:
    """Path from sigma to its right-massed form, for sigma with a mobile cluster.

    The left-most cluster is compacted to a block, walked to the left edge
    collecting every particle it meets, then walked to the right edge.
    """
    sigma = sigma.with_boundary(Boundary.EMPTY)
    if not has_mobile_cluster(sigma):
        raise PlanningError(f"{sigma} has no mobile cluster")
    return JumpPath(sigma, tuple(_Planner(sigma).normalize()))


def _cancel_common_tail(first: list[int], second: list[int]) -> None:
    """Drop matching final moves: both paths then meet one step earlier."""
    while first and second and first[-1] == second[-1]:
        first.pop()
        second.pop()


def plan_transport(
    sigma: Configuration,
    sigma_prime: Configuration,
    window: Window | None = None,
) -> JumpPath:
    """Explicit path of allowed jumps from sigma to sigma_prime inside the window."""
    a = _as_interval(sigma, window)
    b = _as_interval(sigma_prime, window)
    if a.window != b.window:
        raise PlanningError(f"Windows differ: {a.window} and {b.window}")
    if a.particle_count != b.particle_count:
        raise PlanningError(
            f"Particle counts differ: {a.particle_count} and {b.particle_count}"
        )
    if not (has_mobile_cluster(a) and has_mobile_cluster(b)):
        raise PlanningError("Both configurations need a mobile cluster")
    if a == b:
        return JumpPath(a)

    first = list(normalization_path(a).moves)
    second = list(normalization_path(b).moves)
    _cancel_common_tail(first, second)
    moves = first + second[::-1]
    _LOGGER.debug("Planned %d moves from %s to %s", len(moves), a, b)
    return JumpPath(a, tuple(moves))
