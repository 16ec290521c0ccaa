"""Candidate-optimal word catalog, symmetry action, subword enumeration.

Each regime of (kappa, cos alpha) has a short list of symbolic patterns;
the minimum-cost decomposition of any rotation is a subword of one of
them, after acting with the pattern's symmetry orbit.  A subword keeps a
contiguous window of slots and lets the two end durations shrink below
their pattern values.

Symmetries form the dihedral group of order 8 generated by

    sigma1:  X -> X,  Y -> -Y,  W+ <-> W-
    sigma2:  X <-> Y, W+ -> -W+, W- -> W-
    nu:      negate every control

with sigma(-u) = -sigma(u) throughout.  An element is encoded as the
composite nu^a o sigma1^b o sigma2^c, index = 4a + 2b + c.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

from .config import AxisConfig, Regime, Tag


class Orbit(enum.Enum):
    """Symmetry subgroup attached to a pattern (names follow group size)."""

    FULL_D4 = "full_d4"          # all 8 elements
    HALF_MIRROR = "half_mirror"  # <sigma1, nu>, 4 elements
    HALF_SWAP = "half_swap"      # <sigma2, nu>, 4 elements
    NEG_ONLY = "neg_only"        # <nu>, 2 elements

    @property
    def indices(self) -> tuple:
        return {
            Orbit.FULL_D4: (0, 1, 2, 3, 4, 5, 6, 7),
            Orbit.HALF_MIRROR: (0, 2, 4, 6),
            Orbit.HALF_SWAP: (0, 1, 4, 5),
            Orbit.NEG_ONLY: (0, 4),
        }[self]


# Base maps on positive letters: letter -> (letter, sign factor).
_SIGMA1 = {"X": ("X", 1), "Y": ("Y", -1), "W+": ("W-", 1), "W-": ("W+", 1)}
_SIGMA2 = {"X": ("Y", 1), "Y": ("X", 1), "W+": ("W+", -1), "W-": ("W-", 1)}

_TAG_BY_LETTER_SIGN = {(t.letter, t.sign): t for t in Tag if t is not Tag.GENERAL}


@dataclass(frozen=True)
class SymmetryElement:
    index: int  # 0..7

    @property
    def nu(self) -> bool:
        return bool(self.index & 4)

    @property
    def sigma1(self) -> bool:
        return bool(self.index & 2)

    @property
    def sigma2(self) -> bool:
        return bool(self.index & 1)

    def apply_role(self, tag: Tag) -> Tag:
        letter, sign = tag.letter, tag.sign
        if self.sigma2:
            letter, s = _SIGMA2[letter]
            sign *= s
        if self.sigma1:
            letter, s = _SIGMA1[letter]
            sign *= s
        if self.nu:
            sign = -sign
        return _TAG_BY_LETTER_SIGN[(letter, sign)]

    def apply_axis(self, axis: str) -> str:
        """Duration symbols follow their axis letter; sigma2 swaps them."""
        if self.sigma2 and axis in ("X", "Y"):
            return "Y" if axis == "X" else "X"
        return axis

    def compose(self, other: "SymmetryElement") -> "SymmetryElement":
        """Element acting as self after other (self o other)."""
        table = {}
        for t in Tag:
            if t is Tag.GENERAL:
                continue
            table[t] = self.apply_role(other.apply_role(t))
        for g in ALL_SYMMETRIES:
            if all(g.apply_role(t) == table[t] for t in table):
                return g
        raise AssertionError("symmetry composition left the group")


ALL_SYMMETRIES = tuple(SymmetryElement(i) for i in range(8))
IDENTITY = ALL_SYMMETRIES[0]


# Duration kinds.  Pattern slots use the first five; subword demotion adds
# the end-slot variants.
#   pi          fixed value pi
#   that        fixed value t_hat_<axis>
#   w           free W-segment, [0, angle-pi cap]
#   x_2that     free X-segment of pattern VIII, [0, 2 t_hat_x]
#   pair        duration bound to the tan-relation pair symbol t_<axis>
#   cap_pi      demoted end, free in [0, pi]
#   cap_that    demoted end, free in [0, t_hat_<axis>]
#   pair_frac   demoted end of a pair slot while the pair is active:
#               a fraction in [0, 1] of the current pair value
@dataclass(frozen=True)
class Dur:
    kind: str
    axis: str | None = None


@dataclass(frozen=True)
class Slot:
    role: Tag
    duration: Dur


@dataclass(frozen=True)
class Pattern:
    id: str                      # "I" .. "X"
    slots: tuple
    constraint: str | None       # "tan" for pattern I, else None
    orbit: Orbit


@dataclass(frozen=True)
class SubwordShape:
    """A window of a symmetry image of a pattern, ends demoted."""

    pattern_id: str
    symmetry_index: int
    window: tuple       # (k, m), 1-based, inclusive
    slots: tuple        # demoted Slot list of length m - k + 1
    constraint: str | None


PATTERN_ORDER = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X")


def _p(id, slots, constraint, orbit):
    return Pattern(id, tuple(Slot(r, d) for r, d in slots), constraint, orbit)


_PI = Dur("pi")
_W = Dur("w")

_PATTERNS = {
    "I": _p("I", [(Tag.PLUS_X, Dur("pair", "X")), (Tag.PLUS_Y, Dur("pair", "Y")),
                  (Tag.MINUS_X, Dur("pair", "X")), (Tag.MINUS_Y, Dur("pair", "Y"))],
            "tan", Orbit.FULL_D4),
    "II": _p("II", [(Tag.PLUS_X, _PI), (Tag.PLUS_WP, _W), (Tag.PLUS_X, _PI)],
             None, Orbit.FULL_D4),
    "III": _p("III", [(Tag.PLUS_X, _PI), (Tag.PLUS_WP, _W), (Tag.MINUS_Y, _PI)],
              None, Orbit.FULL_D4),
    "IV": _p("IV", [(Tag.PLUS_Y, Dur("that", "Y")), (Tag.PLUS_X, Dur("that", "X")),
                    (Tag.PLUS_WP, _W), (Tag.PLUS_X, Dur("that", "X")),
                    (Tag.PLUS_Y, Dur("that", "Y"))],
            None, Orbit.HALF_SWAP),
    "V": _p("V", [(Tag.PLUS_Y, Dur("that", "Y")), (Tag.PLUS_X, Dur("that", "X")),
                  (Tag.PLUS_WP, _W), (Tag.MINUS_Y, Dur("that", "Y")),
                  (Tag.MINUS_X, Dur("that", "X"))],
           None, Orbit.HALF_SWAP),
    "VI": _p("VI", [(Tag.PLUS_Y, _PI), (Tag.PLUS_WM, _W), (Tag.PLUS_Y, _PI)],
             None, Orbit.HALF_SWAP),
    "VII": _p("VII", [(Tag.PLUS_X, _PI), (Tag.PLUS_WM, _W), (Tag.PLUS_Y, _PI)],
              None, Orbit.HALF_SWAP),
    "VIII": _p("VIII", [(Tag.PLUS_Y, _PI), (Tag.PLUS_X, Dur("x_2that")), (Tag.PLUS_Y, _PI)],
               None, Orbit.NEG_ONLY),
    "IX": _p("IX", [(Tag.PLUS_Y, _PI), (Tag.PLUS_WP, _W), (Tag.PLUS_Y, _PI)],
             None, Orbit.HALF_MIRROR),
    "X": _p("X", [(Tag.PLUS_Y, _PI), (Tag.PLUS_WP, _W), (Tag.MINUS_Y, _PI)],
            None, Orbit.HALF_MIRROR),
}

_CATALOGS = {
    Regime.KAPPA_ZERO: ("IX", "X"),
    Regime.C_ZERO: ("I", "II", "III"),
    Regime.C_LESS_KAPPA: ("I", "IV", "V", "VI", "VII"),
    Regime.KAPPA_LESS_C: ("I", "IV", "V", "VIII"),
    Regime.BIFURCATION: ("I", "IV", "V", "VI", "VII", "VIII"),
}


def pattern(id: str) -> Pattern:
    return _PATTERNS[id]


def catalog(cfg: AxisConfig) -> list:
    """Patterns whose subwords exhaust the optima in cfg's regime."""
    return [_PATTERNS[i] for i in _CATALOGS[cfg.regime]]


def apply_symmetry(p: Pattern, g: SymmetryElement) -> Pattern:
    """Relabel control roles by g; duration symbols follow their axes."""
    if g.index not in p.orbit.indices:
        raise ValueError("symmetry not applicable to pattern")
    slots = []
    for s in p.slots:
        d = s.duration
        if d.axis is not None:
            d = Dur(d.kind, g.apply_axis(d.axis))
        slots.append(Slot(g.apply_role(s.role), d))
    return Pattern(p.id, tuple(slots), p.constraint, p.orbit)


def enumerate_subwords(p: Pattern, g: SymmetryElement) -> list:
    """All contiguous windows of the g-image of p, end durations demoted.

    End slots become free with upper bound equal to the slot's resolved
    value; interior slots keep their binding.  A pair slot at a window end
    is a fraction of the live pair value when the window interior still
    references the pair, and an independent duration in [0, pi] (the pair
    symbol's supremum) otherwise.
    """
    image = apply_symmetry(p, g)
    n = len(image.slots)
    shapes = []
    for k, m in itertools.combinations_with_replacement(range(1, n + 1), 2):
        window = image.slots[k - 1:m]
        pair_active = any(s.duration.kind == "pair" for s in window[1:-1]) if len(window) > 2 else False
        demoted = []
        for i, s in enumerate(window):
            if 0 < i < len(window) - 1:
                demoted.append(s)
                continue
            demoted.append(Slot(s.role, _demote(s.duration, pair_active)))
        constraint = p.constraint if any(
            s.duration.kind in ("pair", "pair_frac") for s in demoted) else None
        shapes.append(SubwordShape(p.id, g.index, (k, m), tuple(demoted), constraint))
    return shapes


def _demote(d: Dur, pair_active: bool) -> Dur:
    if d.kind == "pi":
        return Dur("cap_pi")
    if d.kind == "that":
        return Dur("cap_that", d.axis)
    if d.kind == "pair":
        return Dur("pair_frac", d.axis) if pair_active else Dur("cap_pi")
    # w and x_2that are already free; demotion keeps their bound
    return d
