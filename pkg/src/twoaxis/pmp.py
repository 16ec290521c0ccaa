"""Costate-structure certification of plans.

The costate p = s S + q Q + z Z of a cost-minimizing trajectory moves on
the boundary of the box |s| <= 1, |q| <= kappa (with the normalization
p0 = -sin^2 alpha), each face admitting exactly one of the controls
+-X / +-Y, and the four corners admitting in addition a critical mixed
control along which the costate freezes.  On a face the flow
dp/dt = p x u is a unit-speed rigid rotation of the two moving
coordinates about a fixed center.

check_plan reconstructs an initial costate certifying a given plan: the
one-dimensional family of candidates (the z coordinate at the first
control switch, or the arc midpoint for single-segment plans) is scanned
densely and the best bracket refined.  A plan passes when every segment
stays inside its face band, every switch lands on the required corner,
and |p| is conserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import AxisConfig, Control, Tag

CORNER_TOL = 1e-6      # switch-landing tolerance (solver-produced times)
STATE_TOL = 1e-9       # admissibility / conservation tolerance
SCAN_POINTS = 2001
_TWO_PI = 2.0 * math.pi

_TAG_ORDER = (Tag.PLUS_X, Tag.MINUS_X, Tag.PLUS_Y, Tag.MINUS_Y,
              Tag.PLUS_WP, Tag.MINUS_WP, Tag.PLUS_WM, Tag.MINUS_WM)


@dataclass(frozen=True)
class AdjointState:
    """Costate coordinates in the S, Q, Z basis."""

    s: float
    q: float
    z: float


@dataclass(frozen=True)
class SwitchEvent:
    time: float
    from_control: Tag
    to_control: Tag
    costate: AdjointState


@dataclass
class CheckReport:
    passed: bool
    reason: str | None = None
    segment: int | None = None
    initial_costate: AdjointState | None = None
    switches: tuple = ()
    violation: float = math.inf

    def __bool__(self) -> bool:
        return self.passed


def admissible(st: AdjointState, kappa: float, tol: float = STATE_TOL) -> bool:
    """max(|s| - 1, |q| - kappa) = 0 within tol."""
    m = max(abs(st.s) - 1.0, abs(st.q) - kappa)
    return abs(m) <= tol


def region_control(cfg: AxisConfig, st: AdjointState,
                   tol: float = STATE_TOL) -> frozenset:
    """Control tags allowed at an admissible costate.

    Face interiors carry their single bang control; corners add the
    critical mixed control when z = 0 (the W- corners only for
    kappa >= cos alpha).  At kappa = 0 the whole q = 0 band allows both
    Y-signs.  Map a tag to coefficients with cfg.control(tag).
    """
    k, c = cfg.kappa, cfg.c
    if not admissible(st, k, tol):
        raise ValueError("costate violates M(p) = 0")
    out = set()
    on_sp = abs(st.s - 1.0) <= tol
    on_sm = abs(st.s + 1.0) <= tol
    zc = abs(st.z) <= tol
    if k == 0.0:
        out.update((Tag.PLUS_Y, Tag.MINUS_Y))
        if on_sp:
            out.add(Tag.PLUS_X)
            if zc:
                out.add(Tag.PLUS_WP)
        if on_sm:
            out.add(Tag.MINUS_X)
            if zc:
                out.add(Tag.MINUS_WP)
        return frozenset(out)
    on_qp = abs(st.q - k) <= tol
    on_qm = abs(st.q + k) <= tol
    if on_sp:
        out.add(Tag.PLUS_X)
    if on_sm:
        out.add(Tag.MINUS_X)
    if on_qp:
        out.add(Tag.PLUS_Y)
    if on_qm:
        out.add(Tag.MINUS_Y)
    if zc:
        wm_ok = k >= c - 1e-12
        if on_sp and on_qm:
            out.add(Tag.PLUS_WP)
        if on_sm and on_qp:
            out.add(Tag.MINUS_WP)
        if on_sp and on_qp and wm_ok:
            out.add(Tag.PLUS_WM)
        if on_sm and on_qm and wm_ok:
            out.add(Tag.MINUS_WM)
    return frozenset(out)


# ---------------------------------------------------------------------------
# Closed-form face flows (vectorized over state arrays)
# ---------------------------------------------------------------------------

def _flow_arrays(s, q, z, tag: Tag, t: float, c: float):
    """Evolve (s, q, z) under a face control for time t.

    Under +-X the pair (q - c s, z) rotates by -(sign) t; under +-Y the
    pair (s - c q, z) rotates by +(sign) t; W controls freeze the state.
    """
    letter, sign = tag.letter, tag.sign
    if letter == "X":
        w = q - c * s
        ang = sign * t
        cos, sin = math.cos(ang), math.sin(ang)
        return s, c * s + w * cos + z * sin, z * cos - w * sin
    if letter == "Y":
        v = s - c * q
        ang = sign * t
        cos, sin = math.cos(ang), math.sin(ang)
        return c * q + v * cos - z * sin, q, z * cos + v * sin
    return s, q, z


def adjoint_flow(st: AdjointState, u: Control, t: float,
                 cfg: AxisConfig) -> AdjointState:
    """Closed-form costate evolution under a constant canonical control."""
    tag = match_control(cfg, u)
    if tag is None:
        raise ValueError("control/region mismatch")
    if tag not in region_control(cfg, st):
        raise ValueError("control/region mismatch")
    s, q, z = _flow_arrays(st.s, st.q, st.z, tag, t, cfg.c)
    return AdjointState(float(s), float(q), float(z))


def conserved_norm2(cfg: AxisConfig, st: AdjointState) -> float:
    """|p|^2 / sin^2(alpha) = s^2 + q^2 + z^2 - 2 c s q."""
    return st.s ** 2 + st.q ** 2 + st.z ** 2 - 2.0 * cfg.c * st.s * st.q


def match_control(cfg: AxisConfig, u: Control) -> Tag | None:
    """Nearest canonical tag of a control, or None if it is none of them."""
    for tag in _TAG_ORDER:
        v = cfg.control(tag)
        if abs(u.a - v.a) <= 1e-9 and abs(u.b - v.b) <= 1e-9:
            return tag
    return None


# ---------------------------------------------------------------------------
# Critical-time geometry
# ---------------------------------------------------------------------------

def switch_time_relation(cfg: AxisConfig, z1, z2: float):
    """Arc times between band contacts at z-coordinates z1 (at q = +kappa)
    and z2 (at q = -kappa) of one X-face trajectory.

    The contacts lie on a common circle about (q, z) = (c, 0), which forces
    z1^2 + (kappa - c)^2 = z2^2 + (kappa + c)^2; pass z1 = None to compute
    it.  Returns (t_X, t_Y) from the chord geometry; the pair satisfies
    tan(t_X / 2) = kappa tan(t_Y / 2).  The corner-to-corner arc
    (z2 = 0, z1 = 2 sqrt(kappa c)) gives the critical times of the
    configuration.
    """
    k, c = cfg.kappa, cfg.c
    want = z2 * z2 + 4.0 * k * c
    if z1 is None:
        z1 = math.sqrt(want)
    else:
        scale = max(1.0, abs(want), z1 * z1)
        if abs(z1 * z1 - want) > 1e-9 * scale:
            raise ValueError("not on a common trajectory")
    t_x = 2.0 * math.atan2(math.hypot(z2 - z1, 2.0 * k), math.hypot(z2 + z1, 2.0 * c))
    t_y = 2.0 * math.atan2(math.hypot(z2 - z1, 2.0), math.hypot(z2 + z1, 2.0 * k * c))
    return t_x, t_y


# ---------------------------------------------------------------------------
# Plan certification
# ---------------------------------------------------------------------------

def _face_of(tag: Tag, kappa: float):
    """('s'|'q', frozen coordinate value) of a bang control's face."""
    if tag.letter == "X":
        return ("s", float(tag.sign))
    return ("q", tag.sign * kappa)


def _corner_of_w(tag: Tag, kappa: float):
    s = float(tag.sign)
    q = -tag.sign * kappa if tag.letter == "W+" else tag.sign * kappa
    return s, q


def _cos_extremes(theta0, sweep: float):
    """(min, max) of cos over angles theta0 + [0, sweep] (sweep signed)."""
    lo_a = theta0 + min(0.0, sweep)
    hi_a = theta0 + max(0.0, sweep)
    has_top = np.floor(hi_a / _TWO_PI) >= np.ceil(lo_a / _TWO_PI)
    has_bot = np.floor((hi_a - math.pi) / _TWO_PI) >= np.ceil((lo_a - math.pi) / _TWO_PI)
    ca, cb = np.cos(lo_a), np.cos(hi_a)
    return (np.where(has_bot, -1.0, np.minimum(ca, cb)),
            np.where(has_top, 1.0, np.maximum(ca, cb)))


def _band_violation(s, q, z, tag: Tag, t: float, kappa: float, c: float):
    """Worst excursion of the moving face coordinate outside its band."""
    if tag.letter == "X":
        w = q - c * s
        r = np.hypot(w, z)
        theta0 = np.arctan2(z, w)
        cmin, cmax = _cos_extremes(theta0, -tag.sign * t)
        hi = c * s + r * cmax
        lo = c * s + r * cmin
        return np.maximum(np.maximum(hi - kappa, -kappa - lo), 0.0)
    if tag.letter == "Y":
        v = s - c * q
        r = np.hypot(v, z)
        theta0 = np.arctan2(z, v)
        cmin, cmax = _cos_extremes(theta0, tag.sign * t)
        hi = c * q + r * cmax
        lo = c * q + r * cmin
        return np.maximum(np.maximum(hi - 1.0, -1.0 - lo), 0.0)
    # W segment: the costate must sit at the corner with z = 0
    s_c, q_c = _corner_of_w(tag, kappa)
    return np.maximum(np.maximum(np.abs(s - s_c), np.abs(q - q_c)), np.abs(z))


@dataclass(frozen=True)
class _Seg:
    tag: Tag
    duration: float


def _canonical_segments(cfg: AxisConfig, plan):
    """Tagged segments with zero durations dropped and repeats merged."""
    segs = []
    for i, seg in enumerate(plan.segments):
        if seg.duration <= 1e-12:
            continue
        tag = match_control(cfg, seg.control)
        if tag is None:
            return None, i
        if segs and segs[-1].tag == tag:
            segs[-1] = _Seg(tag, segs[-1].duration + seg.duration)
        else:
            segs.append(_Seg(tag, seg.duration))
    return segs, None


def _boundary_kind(a: Tag, b: Tag, kappa: float):
    """How consecutive controls may hand over: a corner, free, or never."""
    if a.letter.startswith("W") or b.letter.startswith("W"):
        w, o = (a, b) if a.letter.startswith("W") else (b, a)
        s_c, q_c = _corner_of_w(w, kappa)
        if o.letter.startswith("W"):
            s2, q2 = _corner_of_w(o, kappa)
            return ("corner", s_c, q_c) if (s_c, q_c) == (s2, q2) else None
        coord, val = _face_of(o, kappa)
        ok = (abs(s_c - val) <= 1e-12) if coord == "s" else (abs(q_c - val) <= 1e-12)
        return ("corner", s_c, q_c) if ok else None
    if a.letter == b.letter:
        if a.letter == "Y" and kappa == 0.0:
            return ("free",)
        return None
    if a.letter == "X":
        return ("corner", float(a.sign), b.sign * kappa)
    return ("corner", float(b.sign), a.sign * kappa)


def _scores(cfg: AxisConfig, segs, anchor: int, s0, q0, z0):
    """Max constraint violation given the state at the START of segs[anchor].

    Vectorized over candidate states; returns (score, start-state arrays).
    """
    k, c = cfg.kappa, cfg.c
    n = len(segs)
    starts = [None] * n
    s0, q0, z0 = (np.asarray(v, dtype=float) for v in (s0, q0, z0))
    starts[anchor] = (s0, q0, z0)
    for i in range(anchor - 1, -1, -1):
        s, q, z = starts[i + 1]
        starts[i] = _flow_arrays(s, q, z, segs[i].tag, -segs[i].duration, c)
    for i in range(anchor, n - 1):
        s, q, z = starts[i]
        starts[i + 1] = _flow_arrays(s, q, z, segs[i].tag, segs[i].duration, c)
    score = np.zeros(np.broadcast(s0, q0, z0).shape)
    for i, seg in enumerate(segs):
        s, q, z = starts[i]
        score = np.maximum(score, _band_violation(s, q, z, seg.tag, seg.duration, k, c))
    for i in range(n - 1):
        kind = _boundary_kind(segs[i].tag, segs[i + 1].tag, k)
        if kind[0] == "free":
            continue
        _, s_c, q_c = kind
        s, q, z = starts[i + 1]
        score = np.maximum(score, np.maximum(np.abs(s - s_c), np.abs(q - q_c)))
    return score, starts


def _golden_refine(fn, lo: float, hi: float, iters: int = 110):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - inv * (b - a)
    x2 = a + inv * (b - a)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv * (b - a)
            f2 = fn(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def check_plan(cfg: AxisConfig, plan) -> CheckReport:
    """Certify that a plan is consistent with the costate structure.

    Searches the one-dimensional family of admissible initial costates for
    one under which every segment's control is allowed along the region it
    traverses, every switch lands on the required critical corner within
    1e-6, and |p| is conserved.
    """
    segs, bad = _canonical_segments(cfg, plan)
    if segs is None:
        return CheckReport(False, "control not among PMP-admissible controls", bad)
    if not segs:
        return CheckReport(True, initial_costate=AdjointState(1.0, 0.0, 0.0),
                           violation=0.0)
    k, c = cfg.kappa, cfg.c
    for i, seg in enumerate(segs):
        if seg.tag.letter == "W-" and k < c - 1e-12:
            return CheckReport(False, "W- dwell requires kappa >= cos(alpha)", i)
    for i in range(len(segs) - 1):
        if _boundary_kind(segs[i].tag, segs[i + 1].tag, k) is None:
            return CheckReport(False,
                               "control cannot persist through a non-corner boundary contact",
                               i)

    w_idx = next((i for i, s in enumerate(segs) if s.tag.letter.startswith("W")), None)
    if w_idx is not None:
        s_c, q_c = _corner_of_w(segs[w_idx].tag, k)
        score, starts = _scores(cfg, segs, w_idx, s_c, q_c, 0.0)
        return _conclude(cfg, segs, float(score), starts)

    corner_idx = next((i for i in range(len(segs) - 1)
                       if _boundary_kind(segs[i].tag, segs[i + 1].tag, k)[0] == "corner"),
                      None)
    if corner_idx is not None:
        _, s_c, q_c = _boundary_kind(segs[corner_idx].tag, segs[corner_idx + 1].tag, k)

        def eval_z(zv):
            sc, _ = _scores(cfg, segs, corner_idx + 1, s_c, q_c, zv)
            return sc

        phi = np.linspace(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6, SCAN_POINTS)
        score = eval_z(np.tan(phi))
        phi_best, v_best = _refine_minima(lambda f: float(eval_z(math.tan(f))), phi, score)
        _, starts = _scores(cfg, segs, corner_idx + 1, s_c, q_c, math.tan(phi_best))
        return _conclude(cfg, segs, v_best, starts)

    if len(segs) == 1:
        tag = segs[0].tag
        coord, val = _face_of(tag, k)
        lo, hi = (-k, k) if coord == "s" else (-1.0, 1.0)

        def eval_mid(m):
            if coord == "s":
                s0, q0, z0 = np.full_like(m, val), m, np.zeros_like(m)
            else:
                s0, q0, z0 = m, np.full_like(m, val), np.zeros_like(m)
            s, q, z = _flow_arrays(s0, q0, z0, tag, -segs[0].duration / 2.0, c)
            sc, _ = _scores(cfg, segs, 0, s, q, z)
            return sc

        mids = np.linspace(lo, hi, SCAN_POINTS)
        score = eval_mid(mids)
        m_best, v_best = _refine_minima(lambda f: float(eval_mid(np.asarray(f))), mids, score)
        if coord == "s":
            s0, q0, z0 = val, float(m_best), 0.0
        else:
            s0, q0, z0 = float(m_best), val, 0.0
        s, q, z = _flow_arrays(np.asarray(s0), np.asarray(q0), np.asarray(z0),
                               tag, -segs[0].duration / 2.0, c)
        _, starts = _scores(cfg, segs, 0, s, q, z)
        return _conclude(cfg, segs, v_best, starts)

    # kappa = 0, every segment a free Y-rotation: the zero costate certifies
    return _conclude(cfg, segs, 0.0, _scores(cfg, segs, 0, 0.0, 0.0, 0.0)[1])


def _refine_minima(fn_scalar, grid: np.ndarray, score: np.ndarray,
                   slack: float = 0.1, max_refines: int = 20):
    """Golden-refine every promising local minimum of a scanned score.

    Returns (grid coordinate, value) of the best refined minimum.
    """
    best_x, best_v = float(grid[int(np.argmin(score))]), float(np.min(score))
    interior = (score[1:-1] <= score[:-2]) & (score[1:-1] <= score[2:])
    cand = np.flatnonzero(interior) + 1
    cand = cand[np.argsort(score[cand], kind="stable")][:max_refines]
    for i in cand:
        if score[i] > max(best_v, slack):
            break
        x, v = _golden_refine(fn_scalar, float(grid[i - 1]), float(grid[i + 1]))
        if v < best_v:
            best_x, best_v = x, v
    return best_x, best_v


def _conclude(cfg: AxisConfig, segs, violation: float, starts) -> CheckReport:
    if violation > CORNER_TOL:
        return CheckReport(False, "no admissible costate certifies the plan",
                           None, None, (), violation)
    init = AdjointState(float(starts[0][0]), float(starts[0][1]), float(starts[0][2]))
    norms = [conserved_norm2(cfg, AdjointState(float(s), float(q), float(z)))
             for s, q, z in starts]
    if max(norms) - min(norms) > STATE_TOL * max(1.0, max(norms)):
        return CheckReport(False, "|p| not conserved along the trajectory",
                           None, init, (), violation)
    switches = []
    t = 0.0
    for i in range(len(segs) - 1):
        t += segs[i].duration
        s, q, z = starts[i + 1]
        switches.append(SwitchEvent(t, segs[i].tag, segs[i + 1].tag,
                                    AdjointState(float(s), float(q), float(z))))
    return CheckReport(True, None, None, init, tuple(switches), violation)
