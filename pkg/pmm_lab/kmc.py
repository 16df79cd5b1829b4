"""Event-driven simulation of the exchange dynamics on rings."""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .batch import run_batch
from .const import (
    DEFAULT_BATCHES,
    DEFAULT_FREQUENCY_AGREEMENT,
    DEFAULT_JOBS,
    DEFAULT_REBUILD_EVERY,
    DEFAULT_SAMPLES,
    DEFAULT_SE_FACTOR,
    DEFAULT_UNIFORM_CHUNK,
)
from .exact_ctmc import build_model, stationary_measures
from .lattice_core import Boundary, ConstraintFamily, Configuration, Window
from .ratetree import RateTree

_LOGGER = logging.getLogger(__name__)


def replica_rng(seed: int, replica: int = 0, stream: int = 0) -> np.random.Generator:
    """Counter-based stream for one replica, split deterministically by index.

    Stream 0 drives the dynamics and stream 1 draws initial data.
    """
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, replica, stream]))
    )


def sample_bernoulli_ring(
    length: int, rho: float, rng: np.random.Generator, start: int = 1
) -> Configuration:
    """Product Bernoulli(rho) configuration on a ring."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"Density {rho} outside [0, 1]")
    values = (rng.random(length) < rho).astype(np.uint8)
    return Configuration.from_array(values, start, Boundary.PERIODIC)


def sample_profile(
    profile: np.ndarray, length: int, rng: np.random.Generator, start: int = 1
) -> Configuration:
    """Independent sites with densities read from a macroscopic profile.

    Site start+i sits at u = (i + 1/2) / length on the unit torus and takes
    the density of the cell containing u.
    """
    profile = np.asarray(profile, dtype=float)
    u = (np.arange(length) + 0.5) / length
    densities = profile[np.minimum((u * len(profile)).astype(int), len(profile) - 1)]
    values = (rng.random(length) < densities).astype(np.uint8)
    return Configuration.from_array(values, start, Boundary.PERIODIC)


# =============================================================================
# Simulation state
# =============================================================================


class SimState:
    """Ring configuration, clock and per-bond effective rates.

    Bond index i is the exchange of positions i and i+1 (mod L). Its
    effective rate is c_x times the indicator that the two occupations differ,
    so the total vanishes exactly on frozen configurations.

    Each bond keeps the code of its local window (bit j is position
    i - R + j). An exchange flips two bits in the 2R + 3 codes that read the
    bond, so an event costs a few integer XORs and table lookups.
    """

    def __init__(
        self,
        family: ConstraintFamily,
        config: Configuration,
        seed: int,
        replica: int = 0,
        rebuild_every: int = DEFAULT_REBUILD_EVERY,
    ) -> None:
        if config.boundary is not Boundary.PERIODIC:
            raise ValueError("Simulation runs on rings; use a periodic configuration")
        self.family = family
        self.window = config.window
        self.occ = bytearray(config.to_array().tobytes())
        self.length = len(self.occ)
        self.clock = 0.0
        self.seed = seed
        self.replica = replica
        self.rng = replica_rng(seed, replica)
        self.event_count = 0
        self.absorbed = False
        self.rebuild_every = rebuild_every
        self._since_rebuild = 0
        self._uniforms: list[float] = []
        self._cursor = 0

        r = family.radius
        width = family.window_length
        self._effective = [
            rate if (code >> r ^ code >> (r + 1)) & 1 else 0.0
            for code, rate in enumerate(family.rate_table)
        ]
        # Bond b - d reads site b at bit d + R and site b + 1 at bit d + R + 1
        self._flips = [
            (d, sum(1 << bit for bit in (d + r, d + r + 1) if 0 <= bit < width))
            for d in range(-r - 1, r + 2)
        ]
        self._touched = sorted({d % self.length for d in range(-r - 1, r + 2)})
        self.codes: list[int] = []
        self.tree = RateTree(self.length)
        self.rebuild()

    @property
    def config(self) -> Configuration:
        """Current configuration."""
        return Configuration.from_array(self.occupations, self.window.start, Boundary.PERIODIC)

    @property
    def occupations(self) -> np.ndarray:
        """Read-only 0/1 view of the ring."""
        return np.frombuffer(bytes(self.occ), dtype=np.uint8)

    @property
    def code(self) -> int:
        """Packed configuration, bit i for position i."""
        return sum(1 << i for i, value in enumerate(self.occ) if value)

    @property
    def particle_count(self) -> int:
        """Number of occupied positions."""
        return sum(self.occ)

    def _window_codes(self) -> np.ndarray:
        occ = np.frombuffer(bytes(self.occ), dtype=np.uint8).astype(np.int64)
        positions = (np.arange(self.length)[:, None] + np.array(self.family.offsets)) % self.length
        return (occ[positions] << np.arange(self.family.window_length)).sum(axis=1)

    def bond_rate(self, i: int) -> float:
        """Effective rate of bond i from its maintained window code."""
        return self._effective[self.codes[i]]

    def all_rates(self) -> np.ndarray:
        """Effective rates recomputed from the occupations alone."""
        return np.asarray(self._effective)[self._window_codes()]

    def rebuild(self) -> None:
        """Recompute every window code, bond rate and the tree from scratch."""
        codes = self._window_codes()
        self.codes = codes.tolist()
        self.tree.rebuild(np.asarray(self._effective)[codes])
        self._since_rebuild = 0

    @property
    def total_rate(self) -> float:
        """Sum of the effective rates."""
        return self.tree.total

    def uniform(self) -> float:
        """Next uniform in [0, 1) from the buffered replica stream."""
        if self._cursor == len(self._uniforms):
            self._uniforms = self.rng.random(DEFAULT_UNIFORM_CHUNK).tolist()
            self._cursor = 0
        u = self._uniforms[self._cursor]
        self._cursor += 1
        return u

    def draw(self) -> tuple[float, int]:
        """Holding time and bond of the next event; the total rate must be positive."""
        total = self.tree.total
        tau = -math.log1p(-self.uniform()) / total
        bond = self.tree.search(self.uniform() * total)
        return tau, bond

    def apply(self, bond: int) -> None:
        """Exchange the bond and refresh the rates that read it."""
        length = self.length
        occ = self.occ
        j = (bond + 1) % length
        if occ[bond] == occ[j]:
            return
        occ[bond], occ[j] = occ[j], occ[bond]
        self.event_count += 1
        self._since_rebuild += 1
        if self._since_rebuild >= self.rebuild_every:
            self.rebuild()
            return
        codes = self.codes
        for d, mask in self._flips:
            codes[(bond - d) % length] ^= mask
        effective = self._effective
        for shift in self._touched:
            k = (bond - shift) % length
            self.tree.set(k, effective[codes[k]])


def step(state: SimState, horizon: float = math.inf) -> SimState:
    """Advance by one event; an absorbed state jumps its clock to the horizon."""
    if state.tree.total <= 0:
        state.absorbed = True
        state.clock = max(state.clock, horizon)
        return state
    tau, bond = state.draw()
    state.clock += tau
    state.apply(bond)
    return state


# =============================================================================
# Observables
# =============================================================================


@dataclass(frozen=True, eq=False)
class DensityProfile:
    """Time-averaged occupation per site over [t_start, t_end]."""

    bins: np.ndarray
    t_start: float
    t_end: float

    def block(self, blocks: int) -> np.ndarray:
        """Average over `blocks` equal groups of consecutive sites."""
        if len(self.bins) % blocks:
            raise ValueError(f"{len(self.bins)} sites do not split into {blocks} blocks")
        return self.bins.reshape(blocks, -1).mean(axis=1)


class _StateClock:
    """Time spent in each packed state, overall and per batch of the horizon."""

    def __init__(self, horizon: float, batches: int) -> None:
        self.horizon = horizon
        self.batches = batches
        self.batch_len = horizon / batches if horizon > 0 else math.inf
        self.time: dict[int, list[float]] = {}

    def add(self, code: int, t0: float, t1: float) -> None:
        if t1 <= t0:
            return
        per_batch = self.time.get(code)
        if per_batch is None:
            per_batch = self.time[code] = [0.0] * self.batches
        b = min(int(t0 / self.batch_len), self.batches - 1)
        while t0 < t1:
            edge = self.horizon if b == self.batches - 1 else (b + 1) * self.batch_len
            hi = min(t1, edge)
            per_batch[b] += hi - t0
            t0 = hi
            b += 1
            if b == self.batches:
                break

    def arrays(self) -> dict[int, np.ndarray]:
        return {code: np.array(values) for code, values in self.time.items()}


@dataclass(frozen=True, eq=False)
class RunSummary:
    """What one trajectory leaves behind."""

    seed: int
    replica: int
    horizon: float
    events: int
    absorbed: bool
    initial: str
    final: str
    sample_times: np.ndarray
    snapshots: np.ndarray
    profile: DensityProfile
    state_time: dict[int, np.ndarray] | None = None

    def as_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "replica": self.replica,
            "horizon": self.horizon,
            "events": self.events,
            "absorbed": self.absorbed,
            "initial": self.initial,
            "final": self.final,
        }


def sample_schedule(horizon: float, samples: int) -> np.ndarray:
    """Equally spaced sample times ending at the horizon."""
    if samples < 1:
        raise ValueError("Need at least one sample time")
    return np.linspace(horizon / samples, horizon, samples)


def run(
    family: ConstraintFamily,
    initial: Configuration,
    horizon: float,
    seed: int,
    replica: int = 0,
    samples: int = DEFAULT_SAMPLES,
    track_states: bool = False,
    batches: int = DEFAULT_BATCHES,
    rebuild_every: int = DEFAULT_REBUILD_EVERY,
) -> RunSummary:
    """Simulate up to the horizon, sampling occupations at deterministic times."""
    state = SimState(family, initial, seed, replica, rebuild_every)
    length = state.length
    times = sample_schedule(horizon, samples)
    sample_list = times.tolist()
    snapshots = np.zeros((samples, length), dtype=np.uint8)
    next_sample = 0
    occ = state.occ
    integral = [0.0] * length
    last_change = [0.0] * length
    tracker = _StateClock(horizon, batches) if track_states else None
    code = state.code if track_states else 0
    count = state.particle_count

    while True:
        if state.tree.total <= 0:
            state.absorbed = True
            t_next, bond = math.inf, -1
        else:
            tau, bond = state.draw()
            t_next = state.clock + tau
        stop = min(t_next, horizon)
        while next_sample < samples and sample_list[next_sample] <= stop:
            snapshots[next_sample] = state.occupations
            next_sample += 1
        if tracker is not None:
            tracker.add(code, state.clock, stop)
        if t_next > horizon:
            state.clock = horizon
            break

        j = (bond + 1) % length
        for site in (bond, j):
            integral[site] += (t_next - last_change[site]) * occ[site]
            last_change[site] = t_next
        state.clock = t_next
        state.apply(bond)
        if track_states:
            code ^= (1 << bond) | (1 << j)

    final = state.occupations
    if state.particle_count != count:
        raise RuntimeError("Particle count changed along the trajectory")
    _LOGGER.debug(
        "Replica %d (seed %d): %d events up to t=%g%s",
        replica, seed, state.event_count, horizon, ", absorbed" if state.absorbed else "",
    )
    if horizon > 0:
        bins = (np.array(integral) + (horizon - np.array(last_change)) * final) / horizon
    else:
        bins = final.astype(float)
    profile = DensityProfile(bins, 0.0, horizon)
    return RunSummary(
        seed=seed,
        replica=replica,
        horizon=horizon,
        events=state.event_count,
        absorbed=state.absorbed,
        initial=str(initial),
        final=str(state.config),
        sample_times=times,
        snapshots=snapshots,
        profile=profile,
        state_time=tracker.arrays() if tracker is not None else None,
    )


# =============================================================================
# Replicas and frequency estimates
# =============================================================================


@dataclass(frozen=True)
class ReplicaTask:
    """Picklable description of one replica run."""

    family: ConstraintFamily
    length: int
    horizon: float
    seed: int
    replica: int = 0
    rho: float | None = None
    profile: tuple[float, ...] | None = None
    initial: str | None = None
    samples: int = DEFAULT_SAMPLES
    track_states: bool = False
    batches: int = DEFAULT_BATCHES

    def initial_configuration(self, rng: np.random.Generator) -> Configuration:
        """Initial ring from the given string, profile or Bernoulli density."""
        if self.initial is not None:
            return Configuration.from_string(self.initial, boundary=Boundary.PERIODIC)
        if self.profile is not None:
            return sample_profile(np.array(self.profile), self.length, rng)
        if self.rho is not None:
            return sample_bernoulli_ring(self.length, self.rho, rng)
        raise ValueError("Replica task needs an initial string, a profile or a density")


def run_replica(task: ReplicaTask) -> RunSummary:
    """Draw the initial ring of one replica and run it to the horizon."""
    init_rng = replica_rng(task.seed, task.replica, stream=1)
    initial = task.initial_configuration(init_rng)
    return run(
        task.family,
        initial,
        task.horizon,
        task.seed,
        task.replica,
        task.samples,
        task.track_states,
        task.batches,
    )


def run_replicas(
    task: ReplicaTask, replicas: int, jobs: int = DEFAULT_JOBS
) -> list[RunSummary]:
    """Independent replicas 0 .. replicas-1 of the task, in replica order."""
    tasks = [replace(task, replica=r) for r in range(replicas)]
    summaries = run_batch(jobs, run_replica, tasks)
    _LOGGER.info(
        "Ran %d replicas, %d events in total",
        replicas, sum(s.events for s in summaries),
    )
    return summaries


def mean_snapshot(summaries: Sequence[RunSummary], sample: int = -1) -> np.ndarray:
    """Replica average of the occupations at one sample time."""
    return np.mean([s.snapshots[sample] for s in summaries], axis=0)


@dataclass(frozen=True)
class FrequencyEstimate:
    """Time-weighted frequency of a state with its batch-means standard error."""

    config: str
    mean: float
    stderr: float


def state_frequencies(summary: RunSummary, window: Window | None = None) -> list[FrequencyEstimate]:
    """Fraction of time spent in each visited state, with batch-means errors."""
    if summary.state_time is None:
        raise ValueError("Run was made without state tracking")
    batches = len(next(iter(summary.state_time.values())))
    length = len(summary.final)
    window = window or Window.of_length(length)
    batch_len = summary.horizon / batches
    out = []
    for code, per_batch in sorted(summary.state_time.items()):
        fractions = per_batch / batch_len
        stderr = float(fractions.std(ddof=1) / math.sqrt(batches)) if batches > 1 else 0.0
        out.append(
            FrequencyEstimate(
                str(Configuration(window, code)), float(per_batch.sum() / summary.horizon), stderr
            )
        )
    return out


def _agreement_hits(
    estimates: Sequence[FrequencyEstimate], expected: dict[str, float], factor: float
) -> int:
    by_config = {e.config: e for e in estimates}
    hits = 0
    for config, target in expected.items():
        estimate = by_config.get(config, FrequencyEstimate(config, 0.0, 0.0))
        gap = abs(estimate.mean - target)
        if gap <= max(factor * estimate.stderr, 1e-12):
            hits += 1
    return hits


def frequency_agreement(
    estimates: Sequence[FrequencyEstimate],
    expected: dict[str, float],
    factor: float = DEFAULT_SE_FACTOR,
) -> float:
    """Share of expected states whose estimate lies within factor standard errors."""
    if not expected:
        return 1.0
    return _agreement_hits(estimates, expected, factor) / len(expected)


def exact_class_law(family: ConstraintFamily, initial: Configuration) -> dict[str, float]:
    """Exact stationary law on the communicating class of a ring configuration."""
    if initial.boundary is not Boundary.PERIODIC:
        raise ValueError("The exact law is computed on rings")
    model = build_model(family, initial.window, Boundary.PERIODIC, initial.particle_count)
    index = model.space.index(initial)
    measure = next(m for m in stationary_measures(model) if m.weights[index] > 0)
    return {
        str(model.space.configuration(int(i))): float(measure.weights[i])
        for i in measure.support()
    }


@dataclass(frozen=True)
class ExactComparison:
    """Pooled agreement of tracked runs with the exact law of their class."""

    states: int
    hits: int
    threshold: float

    @property
    def share(self) -> float:
        return self.hits / self.states if self.states else 1.0

    @property
    def passed(self) -> bool:
        return self.share >= self.threshold

    def as_dict(self) -> dict[str, Any]:
        return {
            "states": self.states,
            "hits": self.hits,
            "share": self.share,
            "threshold": self.threshold,
            "passed": self.passed,
        }


def compare_exact(
    family: ConstraintFamily,
    summaries: Sequence[RunSummary],
    factor: float = DEFAULT_SE_FACTOR,
    threshold: float = DEFAULT_FREQUENCY_AGREEMENT,
) -> ExactComparison:
    """Check state frequencies of every run against the exact class law.

    Each run is compared with the law of the class of its own initial
    configuration; hits and states are pooled over runs.
    """
    laws: dict[str, dict[str, float]] = {}
    states = hits = 0
    for summary in summaries:
        if summary.initial not in laws:
            initial = Configuration.from_string(summary.initial, boundary=Boundary.PERIODIC)
            laws[summary.initial] = exact_class_law(family, initial)
        expected = laws[summary.initial]
        states += len(expected)
        hits += _agreement_hits(state_frequencies(summary), expected, factor)
    comparison = ExactComparison(states, hits, threshold)
    _LOGGER.info(
        "Exact comparison: %d of %d state frequencies within %g SE",
        hits, states, factor,
    )
    return comparison
