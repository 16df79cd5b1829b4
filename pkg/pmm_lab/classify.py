"""Frozen/active structure and the invariant sets F, F'_k, F''_k, E', E."""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from enum import Enum

from .lattice_core import Boundary, Configuration, PmmLabError, Window

_LOGGER = logging.getLogger(__name__)

# "(100)* 11 (100)*": tail words in parentheses with a star, optional core
_EP_PATTERN = re.compile(r"^\s*\(([01]+)\)\*\s*([01]*)\s*\(([01]+)\)\*\s*$")


class NonCanonicalError(PmmLabError):
    """Error to indicate an eventually-periodic configuration not in canonical form."""


class ParseError(PmmLabError):
    """Error to indicate an unparsable eventually-periodic configuration."""


class UnoccupiedSiteError(PmmLabError):
    """Error to indicate a particle query at an empty site."""


# =============================================================================
# Finite windows
# =============================================================================


def _neighbours(config: Configuration, x: int) -> list[int]:
    """Distinct sites within distance 2 of x that resolve under the boundary mode."""
    own = config.resolve(x)
    seen: set[int] = set()
    sites = []
    for d in (1, 2):
        for site in (x - d, x + d):
            pos = config.resolve(site)
            if pos is None or pos == own or pos in seen:
                continue
            seen.add(pos)
            sites.append(site)
    return sites


def is_active(config: Configuration, x: int) -> bool:
    """Return True if another particle lies within distance 2 of the particle at x."""
    if config.resolve(x) is None or not config.occupation(x):
        raise UnoccupiedSiteError(f"Site {x} of {config} holds no particle")
    return any(config.occupation(site) for site in _neighbours(config, x))


def is_frozen(config: Configuration) -> bool:
    """Return True if no particle has another particle within distance 2."""
    if config.boundary is Boundary.EMPTY:
        bits = config.bits
        return not (bits & bits >> 1) and not (bits & bits >> 2)
    return not any(is_active(config, x) for x in config.occupied_sites())


def has_mobile_cluster(config: Configuration, subwindow: Window | None = None) -> bool:
    """G_Lambda membership: two particles of the subwindow at distance 1 or 2.

    Without a subwindow the whole window is used, with the ring metric under
    periodic boundary.
    """
    if subwindow is None:
        return not is_frozen(config)
    if not config.window.includes(subwindow):
        raise ValueError(f"{subwindow} is not inside {config.window}")
    return not is_frozen(config.restrict(subwindow))


def pair_count(config: Configuration) -> int:
    """Number of particle pairs at distance 1 or 2 (sum of eta(x)eta(x+1) + eta(x)eta(x+2))."""
    if config.boundary is Boundary.EMPTY:
        bits = config.bits
        return (bits & bits >> 1).bit_count() + (bits & bits >> 2).bit_count()
    return sum(
        config.occupation(x + 1) + config.occupation(x + 2)
        for x in config.occupied_sites()
    )


# =============================================================================
# Eventually-periodic configurations on Z
# =============================================================================


def _primitive(word: str) -> str:
    """Shortest word whose repetition gives `word`."""
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            return word[:p]
    return word


def _has_pair(text: str) -> bool:
    return "11" in text or re.search("1[01]1", text) is not None


def _periodic_frozen(word: str) -> bool:
    """Frozenness of word repeated in both directions."""
    reps = math.ceil((len(word) + 3) / len(word)) + 1
    return not _has_pair(word * reps)


class LabelKind(str, Enum):
    """The invariant sets, in order of definition."""

    F = "F"
    FPRIME = "F'"
    FDOUBLEPRIME = "F''"
    EPRIME = "E'"
    E = "E"


@dataclass(frozen=True)
class ClassLabel:
    """Invariant-set membership; k is the particle or hole count for F'_k and F''_k."""

    kind: LabelKind
    k: int | None = None

    def __str__(self) -> str:
        if self.k is None:
            return self.kind.value
        return f"{self.kind.value}({self.k})"


@dataclass(frozen=True)
class EventuallyPeriodicConfig:
    """Configuration on Z: left_word repeated to -inf, core, right_word to +inf.

    The core occupies sites origin .. origin+len(core)-1; site origin-1 holds
    the last letter of left_word and site origin+len(core) the first letter of
    right_word.
    """

    left_word: str
    core: str
    right_word: str
    origin: int = 0

    def __post_init__(self) -> None:
        for name, word in (("left_word", self.left_word), ("right_word", self.right_word)):
            if not word or set(word) - {"0", "1"}:
                raise ValueError(f"{name} must be a non-empty binary word, got {word!r}")
        if set(self.core) - {"0", "1"}:
            raise ValueError(f"core must be a binary word, got {self.core!r}")

    @classmethod
    def parse(cls, text: str) -> EventuallyPeriodicConfig:
        """Parse "(100)* 11 (100)*" and return the canonical form."""
        match = _EP_PATTERN.match(text)
        if match is None:
            raise ParseError(f"Expected '(word)* core (word)*', got {text!r}")
        left, core, right = match.groups()
        return cls(left, core, right).canonical()

    def __str__(self) -> str:
        core = f" {self.core} " if self.core else " "
        return f"({self.left_word})*{core}({self.right_word})*"

    def value_at(self, site: int) -> int:
        i = site - self.origin
        if i < 0:
            return int(self.left_word[i % len(self.left_word)])
        if i < len(self.core):
            return int(self.core[i])
        return int(self.right_word[(i - len(self.core)) % len(self.right_word)])

    def canonical(self) -> EventuallyPeriodicConfig:
        """Primitive tail words and a core that no tail can absorb."""
        left = _primitive(self.left_word)
        right = _primitive(self.right_word)
        core = self.core
        origin = self.origin
        while core and core[0] == left[0]:
            left = left[1:] + left[0]
            core = core[1:]
            origin += 1
        while core and core[-1] == right[-1]:
            right = right[-1] + right[:-1]
            core = core[:-1]
        return EventuallyPeriodicConfig(left, core, right, origin)

    def is_canonical(self) -> bool:
        return self == self.canonical()

    def unroll(self, periods: int = 1) -> EventuallyPeriodicConfig:
        """Copy `periods` tail periods into the core on each side (not canonical)."""
        core = self.left_word * periods + self.core + self.right_word * periods
        origin = self.origin - periods * len(self.left_word)
        return EventuallyPeriodicConfig(self.left_word, core, self.right_word, origin)

    def core_window(self) -> Window | None:
        if not self.core:
            return None
        return Window(self.origin, self.origin + len(self.core) - 1)

    def core_configuration(self) -> Configuration:
        """The core as a finite configuration on its window."""
        window = self.core_window()
        if window is None:
            raise ValueError("Configuration has an empty core")
        return Configuration.from_string(self.core, start=self.origin)

    def apply_jump(self, x: int) -> EventuallyPeriodicConfig:
        """Exchange sites x and x+1, both of which must lie in the core."""
        i = x - self.origin
        if not 0 <= i < len(self.core) - 1:
            raise ValueError(f"Bond ({x},{x + 1}) is not inside the core; unroll first")
        chars = list(self.core)
        chars[i], chars[i + 1] = chars[i + 1], chars[i]
        return EventuallyPeriodicConfig(
            self.left_word, "".join(chars), self.right_word, self.origin
        )

    def local_view(self) -> str:
        """Core surrounded by enough tail periods to expose every pair at the junctions."""
        left_reps = math.ceil((len(self.left_word) + 3) / len(self.left_word)) + 1
        right_reps = math.ceil((len(self.right_word) + 3) / len(self.right_word)) + 1
        return self.left_word * left_reps + self.core + self.right_word * right_reps


def classify_infinite(config: EventuallyPeriodicConfig) -> ClassLabel:
    """Label an eventually-periodic configuration with its invariant set."""
    if not config.is_canonical():
        raise NonCanonicalError(f"{config} is not canonical; use .canonical()")

    view = config.local_view()
    left, right = config.left_word, config.right_word
    tails_frozen = _periodic_frozen(left) and _periodic_frozen(right)
    frozen = tails_frozen and not _has_pair(view)
    if frozen:
        return ClassLabel(LabelKind.F)

    if left == "0" and right == "0":
        k = config.core.count("1")
        return ClassLabel(LabelKind.FPRIME, k)

    if left == "1" and right == "1":
        k = config.core.count("0")
        return ClassLabel(LabelKind.FDOUBLEPRIME, k)

    # Frozen tails carry no pairs, so the view holds all of them
    if tails_frozen:
        pairs = pair_count(Configuration.from_string(view))
        if pairs > 0:
            _LOGGER.debug("%s has %d close pairs near the core", config, pairs)
            return ClassLabel(LabelKind.EPRIME)
    return ClassLabel(LabelKind.E)
