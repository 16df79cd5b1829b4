"""Porous medium equation solver and the particle/PDE profile comparison."""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from .const import (
    DEFAULT_BLOCKS,
    DEFAULT_HYDRO_REPLICAS,
    DEFAULT_JOBS,
    DEFAULT_PDE_CELLS,
    DEFAULT_PROFILE,
    DEFAULT_PROFILE_HIGH,
    DEFAULT_PROFILE_LOW,
    DEFAULT_PROFILE_WIDTH,
    DEFAULT_SEED,
    DEFAULT_STABILITY_SAFETY,
    DEFAULT_TMACRO,
    PROFILES,
)
from .kmc import ReplicaTask, mean_snapshot, run_replicas
from .lattice_core import ConstraintFamily, PmmLabError, pmm_family

_LOGGER = logging.getLogger(__name__)

RANGE_ATOL = 1e-12


class StabilityError(PmmLabError):
    """Error to indicate an explicit step outside the stability bound."""


class GridMismatchError(PmmLabError):
    """Error to indicate profiles that cannot be put on common blocks."""


@dataclass(frozen=True, eq=False)
class PdeGrid:
    """Cell densities on the periodic unit interval at a macroscopic time."""

    cells: np.ndarray
    time: float = 0.0

    @property
    def size(self) -> int:
        """Number of cells."""
        return len(self.cells)

    @property
    def dx(self) -> float:
        """Cell width."""
        return 1.0 / len(self.cells)

    @property
    def mass(self) -> float:
        """Integral of the density over the unit interval."""
        return float(self.cells.sum() * self.dx)


def initial_profile(
    name: str = DEFAULT_PROFILE,
    cells: int = DEFAULT_PDE_CELLS,
    low: float = DEFAULT_PROFILE_LOW,
    high: float = DEFAULT_PROFILE_HIGH,
    width: float = DEFAULT_PROFILE_WIDTH,
) -> np.ndarray:
    """Cell-centre values of a named initial density on the unit torus.

    step rises from low to high around u = 1/4 and falls back around 3/4,
    bump is a Gaussian bump centred at 1/2 and flat is the midpoint density.
    """
    u = (np.arange(cells) + 0.5) / cells
    mid = 0.5 * (low + high)
    if name == "step":
        window = 0.5 * (np.tanh((u - 0.25) / width) - np.tanh((u - 0.75) / width))
        return low + (high - low) * window
    if name == "bump":
        base = mid - 0.25 * (high - low)
        return base + 0.5 * (high - low) * np.exp(-(((u - 0.5) / 0.1) ** 2))
    if name == "flat":
        return np.full(cells, mid)
    raise ValueError(f"Unknown profile {name!r}; expected one of {', '.join(PROFILES)}")


def stable_dt(grid: PdeGrid) -> float:
    """Largest dt with dt <= dx^2 / (4 max(2 rho))."""
    peak = float(grid.cells.max())
    if peak <= 0:
        return math.inf
    return grid.dx**2 / (8.0 * peak)


def pme_step(grid: PdeGrid, dt: float) -> PdeGrid:
    """One forward-Euler step of rho_t = (rho^2)_xx with centred differences."""
    if dt > stable_dt(grid):
        raise StabilityError(f"dt={dt:g} exceeds the stability bound {stable_dt(grid):g}")
    rho = grid.cells
    pressure = rho * rho
    laplacian = (np.roll(pressure, -1) - 2.0 * pressure + np.roll(pressure, 1)) / grid.dx**2
    new = rho + dt * laplacian
    lo, hi = rho.min(), rho.max()
    if new.min() < lo - RANGE_ATOL or new.max() > hi + RANGE_ATOL:
        raise StabilityError("Step left the range of the previous profile")
    return PdeGrid(new, grid.time + dt)


def solve_pme(
    rho0: np.ndarray,
    t: float,
    safety: float = DEFAULT_STABILITY_SAFETY,
) -> PdeGrid:
    """Integrate from rho0 to time t with equal steps landing exactly on t."""
    grid = PdeGrid(np.asarray(rho0, dtype=float).copy())
    if t <= 0:
        return grid
    if np.any(grid.cells < 0) or np.any(grid.cells > 1):
        raise ValueError("Initial densities must lie in [0, 1]")
    limit = safety * stable_dt(grid)
    steps = 1 if math.isinf(limit) else max(1, math.ceil(t / limit))
    dt = t / steps
    mass = grid.mass
    for _ in range(steps):
        grid = pme_step(grid, dt)
    _LOGGER.debug(
        "PME on %d cells to t=%g in %d steps, mass drift %g",
        grid.size, t, steps, abs(grid.mass - mass),
    )
    return PdeGrid(grid.cells, t)


def refinement_error(
    name: str = DEFAULT_PROFILE,
    t: float = DEFAULT_TMACRO,
    cells: int = DEFAULT_PDE_CELLS,
) -> float:
    """Sup distance between a solve and the one on cells of half the width."""
    coarse = solve_pme(initial_profile(name, cells), t)
    fine = solve_pme(initial_profile(name, 2 * cells), t)
    return float(np.abs(coarse.cells - fine.cells.reshape(cells, 2).mean(axis=1)).max())


def block_average(profile: np.ndarray, blocks: int = DEFAULT_BLOCKS) -> np.ndarray:
    """Mean of each of `blocks` equal consecutive blocks of a profile."""
    profile = np.asarray(profile, dtype=float)
    if blocks <= 0 or len(profile) % blocks:
        raise GridMismatchError(f"{len(profile)} values do not split into {blocks} blocks")
    return profile.reshape(blocks, -1).mean(axis=1)


@dataclass(frozen=True)
class Discrepancy:
    """Distances between two block-averaged profiles on the unit torus."""

    l2: float
    sup: float
    blocks: int

    def as_dict(self) -> dict[str, Any]:
        return {"l2": self.l2, "sup": self.sup, "blocks": self.blocks}


def compare(
    kmc_profile: np.ndarray, pde: PdeGrid | np.ndarray, blocks: int = DEFAULT_BLOCKS
) -> Discrepancy:
    """Block-average site densities and PDE cells, site x sitting at x/L."""
    cells = pde.cells if isinstance(pde, PdeGrid) else np.asarray(pde, dtype=float)
    a = block_average(kmc_profile, blocks)
    b = block_average(cells, blocks)
    diff = a - b
    return Discrepancy(
        l2=float(np.sqrt(np.mean(diff**2))),
        sup=float(np.abs(diff).max()),
        blocks=blocks,
    )


@dataclass(frozen=True, eq=False)
class HydroResult:
    """Paired particle and PDE profiles with their discrepancy."""

    length: int
    replicas: int
    t_macro: float
    profile: str
    kmc_blocks: np.ndarray
    pde_blocks: np.ndarray
    discrepancy: Discrepancy
    events: int

    def as_dict(self) -> dict[str, Any]:
        return {
            "L": self.length,
            "replicas": self.replicas,
            "tmacro": self.t_macro,
            "profile": self.profile,
            "events": self.events,
            "discrepancy": self.discrepancy.as_dict(),
        }


def run_experiment(
    length: int,
    replicas: int = DEFAULT_HYDRO_REPLICAS,
    t_macro: float = DEFAULT_TMACRO,
    profile: str = DEFAULT_PROFILE,
    seed: int = DEFAULT_SEED,
    jobs: int = DEFAULT_JOBS,
    family: ConstraintFamily | None = None,
    cells: int = DEFAULT_PDE_CELLS,
    blocks: int = DEFAULT_BLOCKS,
) -> HydroResult:
    """Simulate to microscopic time L^2 t_macro and compare with the PME at t_macro."""
    family = family or pmm_family()
    if length % blocks or cells % blocks:
        raise GridMismatchError(
            f"L={length} and M={cells} must both be multiples of {blocks} blocks"
        )
    rho0 = initial_profile(profile, cells)
    task = ReplicaTask(
        family=family,
        length=length,
        horizon=length**2 * t_macro,
        seed=seed,
        profile=tuple(float(v) for v in rho0),
    )
    summaries = run_replicas(task, replicas, jobs)
    density = mean_snapshot(summaries)
    pde = solve_pme(rho0, t_macro)
    discrepancy = compare(density, pde, blocks)
    _LOGGER.info(
        "L=%d, %d replicas, t=%g: L2 discrepancy %.4g, sup %.4g",
        length, replicas, t_macro, discrepancy.l2, discrepancy.sup,
    )
    return HydroResult(
        length=length,
        replicas=replicas,
        t_macro=t_macro,
        profile=profile,
        kmc_blocks=block_average(density, blocks),
        pde_blocks=block_average(pde.cells, blocks),
        discrepancy=discrepancy,
        events=sum(s.events for s in summaries),
    )


def discrepancy_trend(
    lengths: Sequence[int], **kwargs: Any
) -> list[HydroResult]:
    """Run the experiment at each L with the same macroscopic data."""
    return [run_experiment(length, **kwargs) for length in lengths]
