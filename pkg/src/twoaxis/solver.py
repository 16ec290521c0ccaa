"""Numeric inversion of catalog words and minimum-cost plan selection.

For a target rotation the planner instantiates every (pattern x orbit
element x window) shape of the regime catalog, inverts each one for its
free durations with a damped Gauss-Newton iteration (multistarted on a
uniform grid), and keeps the cheapest feasible word.  Targets live in
SO(3); computation happens on the SU(2) lifts, with the double-cover-aware
residual min(|w - q|, |w + q|).

Shapes with identical resolved slot structure (the same word family can
arise from several pattern/symmetry/window triples) are solved once.
Free end durations whose upper bound depends on the live tan-relation pair
value are parameterized as fractions of that bound so every shape
optimizes over a rectangular box.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import AxisConfig, Control, Tag, control_cost
from .patterns import (PATTERN_ORDER, SubwordShape, SymmetryElement, catalog,
                       enumerate_subwords)
from .rotations import (ONE, Quat, batch_axis_exp, batch_quat_mul,
                        quat_distance)

RESIDUAL_TOL = 1e-9     # acceptance threshold for a converged word
TIE_TOL = 1e-10         # plans this close in cost are ties
BOUND_CLAMP = 1e-12     # snap parameters this close to a bound onto it
FD_STEP = 1e-6          # central-difference step for the Jacobian
ZERO_SEGMENT = 1e-12    # drop plan segments shorter than this


class PlannerError(RuntimeError):
    """No catalog shape reached the target within tolerance."""


@dataclass(frozen=True)
class PlanSegment:
    control: Control
    duration: float


@dataclass(frozen=True)
class Plan:
    """A concrete maneuver: run each segment's control for its duration."""

    segments: tuple
    total_cost: float
    residual: float
    pattern_id: str          # "I".."X" or "empty"
    symmetry_index: int
    window: tuple
    parameters: dict = field(default_factory=dict)
    ties: tuple = ()         # (pattern_id, symmetry_index, window) of equal-cost plans


EMPTY_WINDOW = (0, 0)


@dataclass
class ShapeOutcome:
    status: str              # "solved" | "infeasible" | "degenerate"
    plan: Plan | None = None
    reason: str | None = None
    iterations: int = 0
    starts: int = 0
    solutions: int = 0


@dataclass
class SolveReport:
    """Per-shape outcomes for one planning call; every shape appears once."""

    entries: list            # [((pattern_id, symmetry_index, window), ShapeOutcome)]

    def counts(self) -> dict:
        out: dict = {}
        for _, o in self.entries:
            out[o.status] = out.get(o.status, 0) + 1
        return out


# ---------------------------------------------------------------------------
# Shape resolution: symbolic slots -> numeric box + duration map
# ---------------------------------------------------------------------------

def _build_mul_tensor() -> np.ndarray:
    """Quaternion product as a tensor: (p * q)_i = t[i, j, k] p_j q_k."""
    t = np.zeros((4, 4, 4))
    # out_a = pd qa + pa qd + pb qc - pc qb
    t[0, 3, 0] = t[0, 0, 3] = t[0, 1, 2] = 1.0
    t[0, 2, 1] = -1.0
    # out_b = pd qb - pa qc + pb qd + pc qa
    t[1, 3, 1] = t[1, 1, 3] = t[1, 2, 0] = 1.0
    t[1, 0, 2] = -1.0
    # out_c = pd qc + pa qb - pb qa + pc qd
    t[2, 3, 2] = t[2, 0, 1] = t[2, 2, 3] = 1.0
    t[2, 1, 0] = -1.0
    # out_d = pd qd - pa qa - pb qb - pc qc
    t[3, 3, 3] = 1.0
    t[3, 0, 0] = t[3, 1, 1] = t[3, 2, 2] = -1.0
    return t


_MUL = _build_mul_tensor()


def _step_tensor(axis: np.ndarray) -> np.ndarray:
    """Contract _MUL with the slot's step quat [sin*axis, cos].

    Returns a (4, 8) matrix b with (q * step) = reshape(q @ b, (4, 2)) dotted
    against (sin, cos), so one word factor is a single matmul plus an axpy
    over the whole batch.
    """
    a = np.zeros((4, 2))
    a[:3, 0] = axis
    a[3, 1] = 1.0
    b = np.einsum("ijk,kl->jil", _MUL, a)   # index order (j, i, l)
    return np.ascontiguousarray(b.reshape(4, 8))


@dataclass(frozen=True)
class _Resolved:
    shape: SubwordShape
    controls: tuple
    axes: tuple           # unit rotation axis per slot
    speeds: tuple         # |aX + bY| per slot
    costs: tuple          # cost per unit duration per slot
    dur_specs: tuple      # per slot, see _durations
    lo: np.ndarray
    hi: np.ndarray
    pair_param: int | None
    cost_floor: float     # cost of interior fixed slots: a valid lower bound
    key: tuple            # dedup key over resolved structure
    steps: tuple = ()     # per-slot (B tensor, half speed)


def _tan_pair_x(kappa: float, t_y) -> np.ndarray:
    """t_X = 2 atan(kappa tan(t_Y / 2)), continuous branch with t_X(pi) = pi."""
    t_y = np.asarray(t_y, dtype=float)
    out = 2.0 * np.arctan(kappa * np.tan(np.minimum(t_y, math.pi - 1e-12) / 2.0))
    return np.where(t_y >= math.pi - 1e-12, math.pi, out)


def _resolve(cfg: AxisConfig, shape: SubwordShape):
    controls, axes, speeds, costs, dur_specs = [], [], [], [], []
    lo, hi = [], []
    pair_param = None
    needs_pair = any(s.duration.kind in ("pair", "pair_frac") for s in shape.slots)
    if needs_pair:
        pair_param = 0
        lo.append(0.0)
        hi.append(math.pi)
    cost_floor = 0.0
    key_parts = []
    for i, s in enumerate(shape.slots):
        u = cfg.control(s.role)
        w = cfg.control_vector(u)
        speed = float(np.linalg.norm(w))
        controls.append(u)
        axes.append(w / speed)
        speeds.append(speed)
        costs.append(control_cost(cfg, u))
        d = s.duration
        interior = 0 < i < len(shape.slots) - 1
        if d.kind == "pi":
            dur_specs.append(("fixed", math.pi))
            cost_floor += math.pi * costs[-1]
            key_parts.append((s.role.value, "fixed", math.pi))
        elif d.kind == "that":
            v = cfg.t_hat_x if d.axis == "X" else cfg.t_hat_y
            if v is None:
                return None, "critical time undefined for this configuration"
            dur_specs.append(("fixed", v))
            cost_floor += v * costs[-1]
            key_parts.append((s.role.value, "fixed", v))
        elif d.kind == "pair":
            dur_specs.append(("pair", d.axis))
            key_parts.append((s.role.value, "pair", d.axis))
        elif d.kind == "pair_frac":
            dur_specs.append(("pair_frac", d.axis, len(lo)))
            lo.append(0.0)
            hi.append(1.0)
            key_parts.append((s.role.value, "pair_frac", d.axis))
        else:
            if d.kind == "w":
                cap = math.pi / speed
            elif d.kind == "x_2that":
                if cfg.t_hat_x is None:
                    return None, "critical time undefined for this configuration"
                cap = 2.0 * cfg.t_hat_x
            elif d.kind == "cap_pi":
                cap = math.pi
            elif d.kind == "cap_that":
                cap = cfg.t_hat_x if d.axis == "X" else cfg.t_hat_y
                if cap is None:
                    return None, "critical time undefined for this configuration"
            else:  # pragma: no cover
                raise AssertionError(f"unknown duration kind {d.kind}")
            if cap <= 1e-12:
                return None, "zero-length slot bound"
            dur_specs.append(("param", len(lo)))
            lo.append(0.0)
            hi.append(cap)
            key_parts.append((s.role.value, "free", round(cap, 14)))
        # interior free slots (w / x_2that) contribute 0 to the floor
        _ = interior
    steps = tuple((_step_tensor(ax), 0.5 * sp) for ax, sp in zip(axes, speeds))
    res = _Resolved(shape, tuple(controls), tuple(axes), tuple(speeds),
                    tuple(costs), tuple(dur_specs), np.array(lo), np.array(hi),
                    pair_param, cost_floor, tuple(key_parts), steps)
    return res, None


def _durations(cfg: AxisConfig, res: _Resolved, params: np.ndarray) -> np.ndarray:
    """Map parameter rows (N, P) to per-slot durations (N, L)."""
    n = params.shape[0]
    if res.pair_param is not None:
        t_y = params[:, res.pair_param]
        t_x = _tan_pair_x(cfg.kappa, t_y)
    durs = np.empty((n, len(res.dur_specs)))
    for i, spec in enumerate(res.dur_specs):
        if spec[0] == "fixed":
            durs[:, i] = spec[1]
        elif spec[0] == "param":
            durs[:, i] = params[:, spec[1]]
        elif spec[0] == "pair":
            durs[:, i] = t_x if spec[1] == "X" else t_y
        else:  # pair_frac
            base = t_x if spec[1] == "X" else t_y
            durs[:, i] = params[:, spec[2]] * base
    return durs


def _words(res: _Resolved, durs: np.ndarray) -> np.ndarray:
    n = durs.shape[0]
    q = np.zeros((n, 4))
    q[:, 3] = 1.0
    for i, (b, half_speed) in enumerate(res.steps):
        theta = half_speed * durs[:, i]
        t = (q @ b).reshape(n, 4, 2)
        q = t[:, :, 0] * np.sin(theta)[:, None] + t[:, :, 1] * np.cos(theta)[:, None]
    return q


def word_quat(cfg: AxisConfig, shape: SubwordShape, params) -> Quat:
    """Ordered product of the shape's slots at the given parameters.

    Parameter layout: the tan-relation pair value t_Y first when the shape
    references the pair, then one entry per free slot in slot order
    (fractions in [0, 1] for demoted pair ends).
    """
    res, reason = _resolve(cfg, shape)
    if res is None:
        raise ValueError(reason)
    p = np.atleast_2d(np.asarray(params, dtype=float))
    if p.shape[1] != res.lo.size:
        raise ValueError(f"expected {res.lo.size} parameters, got {p.shape[1]}")
    if np.any(p < res.lo - 1e-9) or np.any(p > res.hi + 1e-9):
        raise ValueError("parameter out of range")
    if p.shape[1] == 0:
        p = np.zeros((1, 0))
    return Quat.from_array(_words(res, _durations(cfg, res, p))[0])


# ---------------------------------------------------------------------------
# Batched damped Gauss-Newton over all multistart points
# ---------------------------------------------------------------------------

def _grid(lo: np.ndarray, hi: np.ndarray, per_dim: int) -> np.ndarray:
    axes = [np.linspace(lo[j], hi[j], per_dim) for j in range(lo.size)]
    mesh = np.meshgrid(*axes, indexing="ij") if axes else []
    if not mesh:
        return np.zeros((1, 0))
    return np.stack([m.ravel() for m in mesh], axis=1)


def _gauss_newton(word_fn, target: np.ndarray, x0: np.ndarray,
                  lo: np.ndarray, hi: np.ndarray, max_iter: int = 200,
                  cull_after: int = 4, cull_keep: int = 150):
    """Levenberg-damped Gauss-Newton on |word(x) - sign * target|, boxed.

    Returns (x, resid, iterations).  The lift sign is re-chosen per row
    each iteration; finite differences are clipped into the box so the
    tan-relation branch point at t_Y = pi is never crossed.  Rows retire
    when converged, when the damping explodes, or after a stretch of
    iterations without meaningful progress.  After ``cull_after``
    iterations only the ``cull_keep`` most promising starts (plus every
    start already close to a solution) are pursued further.
    """
    n, p = x0.shape
    x = x0.copy()
    w = word_fn(x)
    sign = np.where(w @ target >= 0.0, 1.0, -1.0)
    r = w - sign[:, None] * target
    s2 = np.einsum("ij,ij->i", r, r)
    if p == 0:
        return x, np.sqrt(s2), 0
    lam = np.full(n, 1e-3)
    active = np.ones(n, dtype=bool)
    flat = np.zeros(n, dtype=np.int32)
    iters = 0
    eye = np.eye(p)
    for _ in range(max_iter):
        if iters == cull_after and np.count_nonzero(active) > cull_keep:
            live = np.flatnonzero(active)
            ranked = live[np.argsort(s2[live], kind="stable")]
            drop = ranked[cull_keep:]
            active[drop[s2[drop] >= 1e-8]] = False
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        iters += 1
        m = idx.size
        xa = x[idx]
        # one stacked evaluation for all 2p finite-difference points
        stack = np.repeat(xa[None, :, :], 2 * p, axis=0)
        for j in range(p):
            stack[2 * j, :, j] = np.minimum(xa[:, j] + FD_STEP, hi[j])
            stack[2 * j + 1, :, j] = np.maximum(xa[:, j] - FD_STEP, lo[j])
        wfd = word_fn(stack.reshape(2 * p * m, p)).reshape(2 * p, m, 4)
        jac = np.empty((m, 4, p))
        for j in range(p):
            spread = stack[2 * j, :, j] - stack[2 * j + 1, :, j]
            spread[spread == 0.0] = FD_STEP
            jac[:, :, j] = (wfd[2 * j] - wfd[2 * j + 1]) / spread[:, None]
        ra = r[idx]
        g = np.einsum("nij,ni->nj", jac, ra)
        jtj = np.einsum("nij,nik->njk", jac, jac)
        a = jtj + lam[idx][:, None, None] * eye
        try:
            delta = -np.linalg.solve(a, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            a = a + 1e-9 * eye
            delta = -np.linalg.solve(a, g[..., None])[..., 0]
        x_new = np.clip(xa + delta, lo, hi)
        w_new = word_fn(x_new)
        sign_new = np.where(w_new @ target >= 0.0, 1.0, -1.0)
        r_new = w_new - sign_new[:, None] * target
        s2_new = np.einsum("ij,ij->i", r_new, r_new)
        s2_old = s2[idx].copy()
        improved = s2_new < s2_old
        gi = idx[improved]
        x[gi] = x_new[improved]
        r[gi] = r_new[improved]
        s2[gi] = s2_new[improved]
        lam[gi] = np.maximum(lam[gi] * 0.1, 1e-12)
        bi = idx[~improved]
        lam[bi] = lam[bi] * 10.0
        # progress bookkeeping: shrinking s2 by less than 1% counts as flat
        good = improved & (s2_new <= 0.99 * s2_old.clip(min=1e-300))
        flat[idx] = np.where(good, 0, flat[idx] + 1)
        step2 = np.einsum("ij,ij->i", x_new - xa, x_new - xa)
        done = (s2[idx] <= 1e-24) | (lam[idx] > 1e10) | (flat[idx] >= 10) \
            | (improved & (step2 <= 1e-28))
        active[idx[done]] = False
    return x, np.sqrt(s2), iters


def solve_shape(cfg: AxisConfig, shape: SubwordShape, target: Quat,
                starts_per_dim: int = 9) -> ShapeOutcome:
    """Invert one subword shape for the target; keep the best solution."""
    res, reason = _resolve(cfg, shape)
    if res is None:
        return ShapeOutcome("degenerate", reason=reason)
    return _solve_resolved(cfg, res, target.as_array(), starts_per_dim)


def _solve_resolved(cfg: AxisConfig, res: _Resolved, target: np.ndarray,
                    starts_per_dim: int) -> ShapeOutcome:
    x0 = _grid(res.lo, res.hi, starts_per_dim)

    def word_fn(x):
        return _words(res, _durations(cfg, res, x))

    x, resid, iters = _gauss_newton(word_fn, target, x0, res.lo, res.hi)
    feasible = resid <= RESIDUAL_TOL
    if not np.any(feasible):
        return ShapeOutcome("infeasible", iterations=iters, starts=x0.shape[0])
    xf = x[feasible]
    xf = np.where(np.abs(xf - res.lo) <= BOUND_CLAMP, res.lo, xf)
    xf = np.where(np.abs(xf - res.hi) <= BOUND_CLAMP, res.hi, xf)
    durs = _durations(cfg, res, xf)
    costs = durs @ np.asarray(res.costs)
    rounded = np.round(xf / 1e-8) * 1e-8
    distinct = np.unique(rounded, axis=0).shape[0] if xf.size else 1
    order = np.lexsort(tuple(xf[:, j] for j in range(xf.shape[1] - 1, -1, -1)) + (costs,))
    best = order[0]
    w = _words(res, durs[best:best + 1])[0]
    residual = float(np.minimum(np.linalg.norm(w - target), np.linalg.norm(w + target)))
    if residual > RESIDUAL_TOL:
        return ShapeOutcome("infeasible", iterations=iters, starts=x0.shape[0])
    plan = _build_plan(cfg, res, xf[best], durs[best], residual)
    return ShapeOutcome("solved", plan=plan, iterations=iters,
                        starts=x0.shape[0], solutions=int(distinct))


def _build_plan(cfg: AxisConfig, res: _Resolved, params: np.ndarray,
                durs: np.ndarray, residual: float) -> Plan:
    segments = []
    total = 0.0
    for u, d, c in zip(res.controls, durs, res.costs):
        if d < ZERO_SEGMENT:
            continue
        segments.append(PlanSegment(u, float(d)))
        total += float(d) * c
    names: dict = {}
    if res.pair_param is not None:
        t_y = float(params[res.pair_param])
        names["t_Y"] = t_y
        names["t_X"] = float(_tan_pair_x(cfg.kappa, t_y))
    k = res.shape.window[0]
    for i, spec in enumerate(res.dur_specs):
        if spec[0] in ("param", "pair_frac"):
            names[f"t'_{k + i}"] = float(durs[i])
    return Plan(tuple(segments), total, residual, res.shape.pattern_id,
                res.shape.symmetry_index, res.shape.window, names)


# ---------------------------------------------------------------------------
# Planner: global minimum over the catalog
# ---------------------------------------------------------------------------

def _all_shapes(cfg: AxisConfig):
    """Deduplicated resolved shapes plus the alias map for reporting."""
    reps: dict = {}       # key -> _Resolved
    aliases: dict = {}    # key -> [identity triples]
    degenerate = []
    for pat in catalog(cfg):
        for gi in pat.orbit.indices:
            for shape in enumerate_subwords(pat, SymmetryElement(gi)):
                ident = (shape.pattern_id, shape.symmetry_index, shape.window)
                res, reason = _resolve(cfg, shape)
                if res is None:
                    degenerate.append((ident, reason))
                    continue
                if res.key not in reps:
                    reps[res.key] = res
                    aliases[res.key] = []
                aliases[res.key].append(ident)
    ordered = sorted(reps.values(), key=lambda r: (r.cost_floor, _plan_rank_key(r)))
    return ordered, aliases, degenerate


def _plan_rank_key(res: _Resolved):
    return (PATTERN_ORDER.index(res.shape.pattern_id), res.shape.symmetry_index,
            res.shape.window)


_SHAPE_CACHE: dict = {}


def _shapes_for(cfg: AxisConfig):
    out = _SHAPE_CACHE.get(cfg.key())
    if out is None:
        out = _all_shapes(cfg)
        _SHAPE_CACHE[cfg.key()] = out
    return out


def _rotation_angle(target: Quat) -> float:
    return 2.0 * math.acos(min(1.0, abs(target.d) / max(target.norm(), 1e-300)))


def _plan_sort_key(plan: Plan):
    order = ("empty",) + PATTERN_ORDER
    return (len(plan.segments), order.index(plan.pattern_id),
            plan.symmetry_index, plan.window)


def _select(cands: list) -> Plan:
    best = None
    for p in cands:
        if best is None or p.total_cost < best.total_cost - TIE_TOL:
            best = p
        elif p.total_cost <= best.total_cost + TIE_TOL and _plan_sort_key(p) < _plan_sort_key(best):
            best = p
    ties = tuple(sorted((p.pattern_id, p.symmetry_index, p.window) for p in cands
                        if p is not best and abs(p.total_cost - best.total_cost) <= TIE_TOL
                        and (p.pattern_id, p.symmetry_index, p.window)
                        != (best.pattern_id, best.symmetry_index, best.window)))
    if ties:
        return Plan(best.segments, best.total_cost, best.residual, best.pattern_id,
                    best.symmetry_index, best.window, best.parameters, ties)
    return best


def plan(cfg: AxisConfig, target: Quat, starts_per_dim: int = 9,
         threads: int | None = None) -> Plan:
    """Minimum-cost decomposition of the target rotation.

    Runs solve_shape over the whole regime catalog and returns the cheapest
    feasible plan; ties within 1e-10 go to fewer segments, then the smaller
    pattern id.  Shapes whose interior fixed cost already exceeds the
    incumbent are skipped; this cannot change the minimum.
    """
    nt = target.norm()
    if abs(nt - 1.0) > 1e-9:
        raise ValueError("target quaternion not normalized")
    target = target.normalized()
    if quat_distance(target, ONE) <= RESIDUAL_TOL:
        return Plan((), 0.0, quat_distance(target, ONE), "empty", 0, EMPTY_WINDOW)
    if threads is None:
        threads = max(1, int(os.environ.get("TWOAXIS_THREADS", "1")))
    shapes, _, _ = _shapes_for(cfg)
    tarr = target.as_array()
    # cost >= kappa * rotation angle for any word: allows early exit
    floor = cfg.kappa * _rotation_angle(target)
    cands: list = []
    best = math.inf

    def run(res):
        return _solve_resolved(cfg, res, tarr, starts_per_dim)

    i = 0
    while i < len(shapes):
        if best <= floor + TIE_TOL:
            break
        block = []
        while i < len(shapes) and len(block) < max(1, threads):
            res = shapes[i]
            i += 1
            if res.cost_floor > best + TIE_TOL:
                continue
            block.append(res)
        if not block:
            continue
        if threads > 1 and len(block) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                outs = list(ex.map(run, block))
        else:
            outs = [run(b) for b in block]
        for out in outs:
            if out.status == "solved":
                cands.append(out.plan)
                best = min(best, out.plan.total_cost)
    if not cands:
        raise PlannerError("planner incomplete for target")
    return _select(cands)


def solve_all(cfg: AxisConfig, target: Quat, starts_per_dim: int = 9) -> SolveReport:
    """Exhaustive per-shape report (no pruning); aliases share one solve."""
    target = target.normalized()
    shapes, aliases, degenerate = _shapes_for(cfg)
    tarr = target.as_array()
    entries = []
    for res in shapes:
        out = _solve_resolved(cfg, res, tarr, starts_per_dim)
        for ident in aliases[res.key]:
            entries.append((ident, out))
    for ident, reason in degenerate:
        entries.append((ident, ShapeOutcome("degenerate", reason=reason)))
    entries.sort(key=lambda e: (PATTERN_ORDER.index(e[0][0]), e[0][1], e[0][2]))
    return SolveReport(entries)


def plan_cost_curve(cfg: AxisConfig, axis, t_grid, starts_per_dim: int = 9):
    """Plan R(t * axis) for each t; returns [(t, cost, pattern_id)]."""
    axis = np.asarray(axis, dtype=float)
    if float(np.linalg.norm(axis)) == 0.0:
        raise ValueError("undefined rotation axis")
    out = []
    for t in t_grid:
        from .rotations import quat_exp
        p = plan(cfg, quat_exp((t / 2.0) * axis), starts_per_dim=starts_per_dim)
        out.append((float(t), p.total_cost, p.pattern_id))
    return out
