"""Configurations, the exchange operation and constraint families."""
from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
import voluptuous as vol

from .const import (
    BOUNDARY_EMPTY,
    BOUNDARY_PERIODIC,
    CONF_NAME,
    CONF_RADIUS,
    CONF_RATES,
    CONF_VALUE,
    CONF_WINDOW,
    FAMILY_FACILITATED,
    FAMILY_PMM,
    FAMILY_PMM_R2,
)

_LOGGER = logging.getLogger(__name__)

MAX_RADIUS = 6  # 2^14 local windows


class PmmLabError(Exception):
    """Base error for the PMM laboratory."""


class UndefinedExchangeError(PmmLabError):
    """Error to indicate an exchange across a bond that leaves the window."""


class UnresolvableRateError(PmmLabError):
    """Error to indicate a rate whose neighbourhood is not inside the window."""


class InvalidFamilyError(PmmLabError):
    """Error to indicate a malformed constraint family."""


class Boundary(str, Enum):
    """How sites outside the window are read."""

    EMPTY = BOUNDARY_EMPTY
    PERIODIC = BOUNDARY_PERIODIC


# =============================================================================
# Windows and configurations
# =============================================================================


@dataclass(frozen=True, order=True)
class Window:
    """Integer interval [start, stop] of the lattice (both ends included)."""

    start: int
    stop: int

    def __post_init__(self) -> None:
        if self.stop < self.start:
            raise ValueError(f"Empty window [{self.start}, {self.stop}]")

    @classmethod
    def of_length(cls, length: int, start: int = 1) -> Window:
        """Return the window of `length` sites beginning at `start`."""
        return cls(start, start + length - 1)

    @property
    def length(self) -> int:
        """Number of sites in the window."""
        return self.stop - self.start + 1

    def contains(self, site: int) -> bool:
        """Return True if `site` lies in the window."""
        return self.start <= site <= self.stop

    def includes(self, other: Window) -> bool:
        """Return True if `other` is a sub-window of this window."""
        return self.start <= other.start and other.stop <= self.stop

    def sites(self) -> range:
        """Sites of the window, left to right."""
        return range(self.start, self.stop + 1)

    def __str__(self) -> str:
        return f"[{self.start},{self.stop}]"


@dataclass(frozen=True)
class Configuration:
    """Occupations of a window, packed into an int (bit i is site start+i)."""

    window: Window
    bits: int
    boundary: Boundary = Boundary.EMPTY

    def __post_init__(self) -> None:
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.bits < 0 or self.bits >> self.window.length:
            raise ValueError(
                f"Bits {self.bits:#x} do not fit a window of length {self.window.length}"
            )

    @classmethod
    def from_string(
        cls, text: str, start: int = 1, boundary: Boundary = Boundary.EMPTY
    ) -> Configuration:
        """Build a configuration from a left-to-right binary string.

        Input: "1100", start=1
        Output: sites 1 and 2 occupied on [1, 4]
        """
        text = "".join(text.split())
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"Not a binary configuration string: {text!r}")
        bits = 0
        for i, char in enumerate(text):
            if char == "1":
                bits |= 1 << i
        return cls(Window.of_length(len(text), start), bits, Boundary(boundary))

    @classmethod
    def from_sites(
        cls,
        window: Window,
        occupied: Iterator[int] | list[int] | set[int],
        boundary: Boundary = Boundary.EMPTY,
    ) -> Configuration:
        """Build a configuration from its occupied sites."""
        bits = 0
        for site in occupied:
            if not window.contains(site):
                raise ValueError(f"Site {site} outside window {window}")
            bits |= 1 << (site - window.start)
        return cls(window, bits, Boundary(boundary))

    @classmethod
    def from_array(
        cls, values: np.ndarray, start: int = 1, boundary: Boundary = Boundary.EMPTY
    ) -> Configuration:
        """Build a configuration from a 0/1 array."""
        values = np.asarray(values, dtype=np.uint8)
        bits = sum(1 << int(i) for i in np.flatnonzero(values))
        return cls(Window.of_length(len(values), start), bits, Boundary(boundary))

    def __str__(self) -> str:
        return "".join(
            "1" if self.bits >> i & 1 else "0" for i in range(self.window.length)
        )

    @property
    def length(self) -> int:
        return self.window.length

    @property
    def particle_count(self) -> int:
        return self.bits.bit_count()

    @property
    def hole_count(self) -> int:
        return self.window.length - self.particle_count

    def resolve(self, site: int) -> int | None:
        """Return the bit position of `site`, or None if it reads 0 from outside."""
        if self.boundary is Boundary.PERIODIC:
            return (site - self.window.start) % self.window.length
        if self.window.contains(site):
            return site - self.window.start
        return None

    def occupation(self, site: int) -> int:
        """Occupation of `site`, with the boundary condition applied outside the window."""
        pos = self.resolve(site)
        if pos is None:
            return 0
        return self.bits >> pos & 1

    def occupied_sites(self) -> list[int]:
        return [
            self.window.start + i
            for i in range(self.window.length)
            if self.bits >> i & 1
        ]

    def to_array(self) -> np.ndarray:
        """Occupations as a 0/1 array, left to right."""
        return np.array(
            [self.bits >> i & 1 for i in range(self.window.length)], dtype=np.uint8
        )

    def with_bits(self, bits: int) -> Configuration:
        return Configuration(self.window, bits, self.boundary)

    def with_boundary(self, boundary: Boundary) -> Configuration:
        return Configuration(self.window, self.bits, Boundary(boundary))

    def restrict(self, window: Window) -> Configuration:
        """Return the restriction to a sub-window (Empty boundary)."""
        if not self.window.includes(window):
            raise ValueError(f"{window} is not inside {self.window}")
        shift = window.start - self.window.start
        mask = (1 << window.length) - 1
        return Configuration(window, self.bits >> shift & mask, Boundary.EMPTY)

    def swap(self, x: int) -> Configuration:
        """Exchange the occupations of x and x+1."""
        p, q = self.resolve(x), self.resolve(x + 1)
        if p is None or q is None:
            raise UndefinedExchangeError(
                f"Bond ({x},{x + 1}) leaves window {self.window} under empty boundary"
            )
        if (self.bits >> p & 1) == (self.bits >> q & 1):
            return self
        return self.with_bits(self.bits ^ (1 << p) ^ (1 << q))

    def mirror(self) -> Configuration:
        """Reflect the window: site a+i takes the value of site b-i."""
        n = self.window.length
        bits = 0
        for i in range(n):
            if self.bits >> i & 1:
                bits |= 1 << (n - 1 - i)
        return self.with_bits(bits)

    def bonds(self) -> range:
        """Bond positions x such that the exchange (x, x+1) is defined."""
        if self.boundary is Boundary.PERIODIC:
            return self.window.sites()
        return range(self.window.start, self.window.stop)


def swap(config: Configuration, x: int) -> Configuration:
    """Return config with the values at x and x+1 exchanged."""
    return config.swap(x)


# =============================================================================
# Constraint families
# =============================================================================


def validate_window_string(value: Any) -> str:
    """Validate a local window written as a binary string."""
    if not isinstance(value, str) or not value or set(value) - {"0", "1"}:
        raise vol.Invalid("Window must be a binary string, e.g. '0101'")
    return value


FAMILY_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_RADIUS): vol.All(int, vol.Range(min=0, max=MAX_RADIUS)),
        vol.Required(CONF_RATES): [
            vol.Schema(
                {
                    vol.Required(CONF_WINDOW): validate_window_string,
                    vol.Required(CONF_VALUE): vol.All(
                        vol.Coerce(float), vol.Range(min=0.0)
                    ),
                }
            )
        ],
        vol.Optional(CONF_NAME): str,
    }
)


@dataclass(frozen=True)
class ConstraintFamily:
    """Translation-invariant rate c_0 tabulated over local windows.

    Local window code bit j holds the occupation at offset -R + j, so the
    support of c_0 is [-R, R+1] and c_x(eta) = c_0(eta(x + .)).
    """

    radius: int
    rate_table: tuple[float, ...]
    name: str = "custom"
    _table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.radius <= MAX_RADIUS:
            raise InvalidFamilyError(f"Radius {self.radius} outside [0, {MAX_RADIUS}]")
        expected = 1 << (2 * self.radius + 2)
        if len(self.rate_table) != expected:
            raise InvalidFamilyError(
                f"Rate table has {len(self.rate_table)} entries, expected {expected}"
            )
        table = np.asarray(self.rate_table, dtype=float)
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise InvalidFamilyError("Rates must be finite and non-negative")
        table.setflags(write=False)
        object.__setattr__(self, "_table", table)

    @classmethod
    def from_function(
        cls,
        radius: int,
        func: Callable[[Mapping[int, int]], float],
        name: str = "custom",
    ) -> ConstraintFamily:
        """Tabulate `func`, which reads occupations by offset in [-R, R+1]."""
        width = 2 * radius + 2
        rates = []
        for code in range(1 << width):
            eta = {-radius + j: code >> j & 1 for j in range(width)}
            rates.append(float(func(eta)))
        return cls(radius, tuple(rates), name)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ConstraintFamily:
        """Build a family from a JSON-style document.

        Windows missing from the document have rate 0.
        """
        try:
            data = FAMILY_SCHEMA(dict(data))
        except vol.Invalid as err:
            raise InvalidFamilyError(f"Invalid family document: {err}") from err

        radius = data[CONF_RADIUS]
        width = 2 * radius + 2
        rates = [0.0] * (1 << width)
        seen: set[str] = set()
        for entry in data[CONF_RATES]:
            window = entry[CONF_WINDOW]
            if len(window) != width:
                raise InvalidFamilyError(
                    f"Window {window!r} has length {len(window)}, expected {width}"
                )
            if window in seen:
                raise InvalidFamilyError(f"Window {window!r} listed twice")
            seen.add(window)
            rates[window_code(window)] = entry[CONF_VALUE]
        return cls(radius, tuple(rates), data.get(CONF_NAME, "custom"))

    @classmethod
    def from_json(cls, source: str | Path) -> ConstraintFamily:
        """Load a family from a JSON file path or a JSON string."""
        try:
            if isinstance(source, str) and source.lstrip().startswith("{"):
                text = source
            else:
                text = Path(source).read_text()
        except OSError as err:
            raise InvalidFamilyError(f"Cannot read family file {source}: {err}") from err
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise InvalidFamilyError(f"Family document is not JSON: {err}") from err
        if not isinstance(data, dict):
            raise InvalidFamilyError("Family document must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        """Return the JSON-style document, listing every window."""
        return {
            CONF_NAME: self.name,
            CONF_RADIUS: self.radius,
            CONF_RATES: [
                {CONF_WINDOW: window_string(code, self.window_length), CONF_VALUE: value}
                for code, value in enumerate(self.rate_table)
            ],
        }

    def fingerprint(self) -> str:
        """SHA-256 of the canonical rate table."""
        payload = json.dumps(
            {CONF_RADIUS: self.radius, CONF_RATES: [repr(v) for v in self.rate_table]},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    @property
    def window_length(self) -> int:
        return 2 * self.radius + 2

    @property
    def offsets(self) -> range:
        return range(-self.radius, self.radius + 2)

    @property
    def table(self) -> np.ndarray:
        return self._table

    @cached_property
    def c_max(self) -> float:
        return float(self._table.max())

    def local_rate(self, code: int) -> float:
        return float(self._table[code])


def window_code(window: str) -> int:
    """Local window string (offset -R first) to its table index."""
    return sum(1 << j for j, char in enumerate(window) if char == "1")


def window_string(code: int, width: int) -> str:
    """Table index back to its local window string, offset -R first."""
    return "".join("1" if code >> j & 1 else "0" for j in range(width))


def pmm_family() -> ConstraintFamily:
    """The Porous Medium Model: c_0 = eta(-1) + eta(2)."""
    return ConstraintFamily.from_function(1, lambda eta: eta[-1] + eta[2], FAMILY_PMM)


def facilitated_family() -> ConstraintFamily:
    """Rate 1 whenever a facilitating particle sits at -1 or 2."""
    return ConstraintFamily.from_function(
        1, lambda eta: 1.0 if eta[-1] + eta[2] > 0 else 0.0, FAMILY_FACILITATED
    )


def pmm_r2_family() -> ConstraintFamily:
    """PMM rate boosted by an outer pair: (eta(-1)+eta(2)) * (1 + eta(-2)*eta(3))."""
    return ConstraintFamily.from_function(
        2,
        lambda eta: (eta[-1] + eta[2]) * (1 + eta[-2] * eta[3]),
        FAMILY_PMM_R2,
    )


FAMILY_CATALOG: dict[str, Callable[[], ConstraintFamily]] = {
    FAMILY_PMM: pmm_family,
    FAMILY_FACILITATED: facilitated_family,
    FAMILY_PMM_R2: pmm_r2_family,
}


def load_family(source: str | Path | None = None) -> ConstraintFamily:
    """Return a catalog family by name, or load one from a JSON file."""
    if source is None:
        return pmm_family()
    if str(source) in FAMILY_CATALOG:
        return FAMILY_CATALOG[str(source)]()
    family = ConstraintFamily.from_json(source)
    _LOGGER.debug("Loaded family %s (R=%d) from %s", family.name, family.radius, source)
    return family


# =============================================================================
# Rates
# =============================================================================


def rate(
    family: ConstraintFamily, config: Configuration, x: int, zero_pad: bool = True
) -> float:
    """Return c_x(config), reading the window [x-R, x+R+1] under the boundary mode.

    Under Empty boundary, sites outside the window read 0 unless zero_pad is
    False, in which case an unresolvable neighbourhood raises.
    """
    code = 0
    for j, offset in enumerate(family.offsets):
        site = x + offset
        pos = config.resolve(site)
        if pos is None:
            if not zero_pad:
                raise UnresolvableRateError(
                    f"Rate at bond {x} reads site {site} outside {config.window}"
                )
            continue
        code |= (config.bits >> pos & 1) << j
    return family.local_rate(code)


def resolvable(family: ConstraintFamily, window: Window, x: int) -> bool:
    """Return True if the neighbourhood of bond x lies inside the window."""
    return window.start <= x - family.radius and x + family.radius + 1 <= window.stop


def site_bits(
    codes: np.ndarray, window: Window, boundary: Boundary, site: int
) -> np.ndarray:
    """Occupation of `site` across an array of packed states."""
    if boundary is Boundary.PERIODIC:
        pos = (site - window.start) % window.length
    elif window.contains(site):
        pos = site - window.start
    else:
        return np.zeros(len(codes), dtype=np.int64)
    return (codes >> pos) & 1


def bond_rates(
    family: ConstraintFamily,
    codes: np.ndarray,
    window: Window,
    boundary: Boundary,
    x: int,
) -> np.ndarray:
    """Vectorized c_x over packed states (zero-padded under Empty boundary)."""
    codes = np.asarray(codes, dtype=np.int64)
    local = np.zeros(len(codes), dtype=np.int64)
    for j, offset in enumerate(family.offsets):
        local |= site_bits(codes, window, boundary, x + offset) << j
    return family.table[local]


def swap_codes(
    codes: np.ndarray, window: Window, boundary: Boundary, x: int
) -> np.ndarray:
    """Vectorized exchange of sites x and x+1 over packed states."""
    codes = np.asarray(codes, dtype=np.int64)
    if boundary is Boundary.PERIODIC:
        p = (x - window.start) % window.length
        q = (x + 1 - window.start) % window.length
    else:
        if not (window.contains(x) and window.contains(x + 1)):
            raise UndefinedExchangeError(f"Bond ({x},{x + 1}) leaves window {window}")
        p, q = x - window.start, x + 1 - window.start
    differ = ((codes >> p) ^ (codes >> q)) & 1
    return codes ^ (differ << p) ^ (differ << q)


# =============================================================================
# Family checks
# =============================================================================


@dataclass(frozen=True)
class CheckOutcome:
    """Result of one family check; failures lists offending local windows."""

    name: str
    passed: bool
    failures: tuple[str, ...] = ()
    detail: str = ""


@dataclass(frozen=True)
class FamilyReport:
    """Per-condition verdicts for a constraint family."""

    family: str
    fingerprint: str
    checks: tuple[CheckOutcome, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str) -> CheckOutcome:
        for outcome in self.checks:
            if outcome.name == name:
                return outcome
        raise KeyError(name)

    def as_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "fingerprint": self.fingerprint,
            "passed": self.passed,
            "checks": {
                c.name: {
                    "passed": c.passed,
                    "failures": list(c.failures),
                    "detail": c.detail,
                }
                for c in self.checks
            },
        }


def validate_family(family: ConstraintFamily) -> FamilyReport:
    """Check the four conditions a family must satisfy, window by window."""
    width = family.window_length
    r = family.radius
    checks = [
        CheckOutcome(
            "translation_invariance",
            True,
            detail="rates are read from a single table c_0 at every bond",
        ),
        CheckOutcome(
            "locality",
            True,
            detail=f"support within [-{r}, {r + 1}]",
        ),
    ]

    # Swap symmetry: offsets 0 and 1 are bits r and r+1
    asymmetric = []
    for code in range(1 << width):
        swapped = code
        if (code >> r & 1) != (code >> (r + 1) & 1):
            swapped = code ^ (1 << r) ^ (1 << (r + 1))
        if family.local_rate(code) != family.local_rate(swapped):
            asymmetric.append(window_string(code, width))
    checks.append(CheckOutcome("swap_symmetry", not asymmetric, tuple(asymmetric)))

    if r < 1:
        checks.append(
            CheckOutcome(
                "positivity",
                False,
                detail="support does not contain offsets -1 and 2",
            )
        )
    else:
        wrong = []
        for code in range(1 << width):
            facilitated = (code >> (r - 1) & 1) or (code >> (r + 2) & 1)
            if (family.local_rate(code) > 0) != bool(facilitated):
                wrong.append(window_string(code, width))
        checks.append(CheckOutcome("positivity", not wrong, tuple(wrong)))

    report = FamilyReport(family.name, family.fingerprint(), tuple(checks))
    if not report.passed:
        _LOGGER.warning(
            "Family %s fails: %s",
            family.name,
            ", ".join(c.name for c in report.checks if not c.passed),
        )
    return report
