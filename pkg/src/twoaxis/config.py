"""Problem instance construction.

A problem is fixed by the angle alpha between the two rotation axes and the
cost ratio kappa (rotation about Y costs kappa per radian, rotation about X
costs 1).  Everything else is derived: the canonical embedding of the axes,
the dual basis S, Q used by the costate analysis, the critical controls
W+ / W-, the critical arc times, and the regime tag that selects the
pattern catalog.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .rotations import Quat, quat_exp

# Width of the kappa = cos(alpha) band inside which both catalogs are merged.
BIFURCATION_TOL = 1e-9


class Regime(enum.Enum):
    KAPPA_ZERO = "kappa_zero"
    C_ZERO = "c_zero"
    C_LESS_KAPPA = "c_less_kappa"      # 0 < c < kappa
    KAPPA_LESS_C = "kappa_less_c"      # 0 < kappa < c
    BIFURCATION = "bifurcation"        # |kappa - c| below tolerance


class Tag(enum.Enum):
    """Canonical controls plus a catch-all for general mixtures."""

    PLUS_X = "+X"
    MINUS_X = "-X"
    PLUS_Y = "+Y"
    MINUS_Y = "-Y"
    PLUS_WP = "+W+"
    MINUS_WP = "-W+"
    PLUS_WM = "+W-"
    MINUS_WM = "-W-"
    GENERAL = "general"

    @property
    def letter(self) -> str:
        return {"+X": "X", "-X": "X", "+Y": "Y", "-Y": "Y",
                "+W+": "W+", "-W+": "W+", "+W-": "W-", "-W-": "W-",
                "general": "general"}[self.value]

    @property
    def sign(self) -> int:
        return -1 if self.value.startswith("-") else 1


@dataclass(frozen=True)
class Control:
    """Control u = a X + b Y, stored with |a| + |b| = 1."""

    a: float
    b: float
    tag: Tag = Tag.GENERAL

    def __post_init__(self):
        if abs(abs(self.a) + abs(self.b) - 1.0) > 1e-12:
            raise ValueError("control coefficients must satisfy |a| + |b| = 1")


@dataclass(frozen=True, eq=False)
class AxisConfig:
    """Derived data of a problem instance (immutable after construction)."""

    alpha: float
    kappa: float
    c: float
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    S: np.ndarray
    Q: np.ndarray
    Wplus: np.ndarray   # (1 + kc) X - (k + c) Y, unnormalized
    Wminus: np.ndarray  # (1 - kc) X + (k - c) Y, unnormalized
    t_hat_x: float | None
    t_hat_y: float
    regime: Regime

    def control(self, tag: Tag) -> Control:
        """The l1-normalized control for a canonical tag."""
        return _canonical_controls(self)[tag]

    def control_vector(self, u: Control) -> np.ndarray:
        return u.a * self.X + u.b * self.Y

    def key(self):
        return (self.alpha, self.kappa)


def make_config(alpha: float, kappa: float) -> AxisConfig:
    """Build a problem instance.  alpha in (0, pi/2], kappa in [0, 1]."""
    if not (0.0 < alpha <= math.pi / 2.0 + 1e-15):
        raise ValueError("axis angle out of range")
    if not (0.0 <= kappa <= 1.0):
        raise ValueError("cost ratio out of range")
    alpha = min(alpha, math.pi / 2.0)
    c = math.cos(alpha)
    if abs(c) < 1e-15:
        c = 0.0
    sa = math.sin(alpha)
    X = np.array([1.0, 0.0, 0.0])
    Y = np.array([c, sa, 0.0])
    Z = np.cross(X, Y)
    S = X - c * Y
    Q = Y - c * X
    Wplus = (1.0 + kappa * c) * X - (kappa + c) * Y
    Wminus = (1.0 - kappa * c) * X + (kappa - c) * Y
    t_hat_x = math.acos(_clip1((c - kappa) / (c + kappa))) if kappa + c > 0.0 else None
    t_hat_y = math.acos(_clip1(-(1.0 - kappa * c) / (1.0 + kappa * c)))

    if kappa == 0.0:
        regime = Regime.KAPPA_ZERO
    elif c == 0.0:
        regime = Regime.C_ZERO
    elif abs(kappa - c) <= BIFURCATION_TOL:
        regime = Regime.BIFURCATION
    elif c < kappa:
        regime = Regime.C_LESS_KAPPA
    else:
        regime = Regime.KAPPA_LESS_C

    return AxisConfig(alpha, kappa, c, X, Y, Z, S, Q, Wplus, Wminus,
                      t_hat_x, t_hat_y, regime)


def control_cost(cfg: AxisConfig, u: Control) -> float:
    """Cost per unit parameter time: |a| cost(X) + |b| cost(Y)."""
    return abs(u.a) + cfg.kappa * abs(u.b)


def segment_rotation(cfg: AxisConfig, u: Control, t: float) -> Quat:
    """SU(2) lift of running control u for parameter time t.

    The SO(3) image is the rotation by angle t*|aX + bY| about the control
    axis; the factor 1/2 is the double cover.
    """
    return quat_exp((t / 2.0) * cfg.control_vector(u))


def _clip1(x: float) -> float:
    return max(-1.0, min(1.0, x))


_CONTROL_CACHE: dict = {}


def _canonical_controls(cfg: AxisConfig) -> dict:
    cached = _CONTROL_CACHE.get(cfg.key())
    if cached is not None:
        return cached
    k, c = cfg.kappa, cfg.c
    wp = _l1(1.0 + k * c, -(k + c))
    wm = _l1(1.0 - k * c, k - c)
    table = {
        Tag.PLUS_X: Control(1.0, 0.0, Tag.PLUS_X),
        Tag.MINUS_X: Control(-1.0, 0.0, Tag.MINUS_X),
        Tag.PLUS_Y: Control(0.0, 1.0, Tag.PLUS_Y),
        Tag.MINUS_Y: Control(0.0, -1.0, Tag.MINUS_Y),
        Tag.PLUS_WP: Control(wp[0], wp[1], Tag.PLUS_WP),
        Tag.MINUS_WP: Control(-wp[0], -wp[1], Tag.MINUS_WP),
        Tag.PLUS_WM: Control(wm[0], wm[1], Tag.PLUS_WM),
        Tag.MINUS_WM: Control(-wm[0], -wm[1], Tag.MINUS_WM),
    }
    _CONTROL_CACHE[cfg.key()] = table
    return table


def _l1(a: float, b: float):
    n = abs(a) + abs(b)
    return a / n, b / n
