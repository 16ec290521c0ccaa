"""Brute-force upper bounds on the decomposition cost.

Two deliberately catalog-independent certifiers:

* graph_search: uniform-cost search over quantized unit quaternions with
  the bang controls +-X, +-Y only (mixing is approximated by chattering,
  which changes the infimum by nothing), each edge one time step.  The
  discovered path is polished into an exact decomposition, so the reported
  cost is a true upper bound of the infimum up to O(delta + quant).

* word_descent: direct minimization of cost over every short control-sign
  sequence (W controls included), penalized toward zero residual.  This is
  the anti-circularity check: it never sees the pattern catalog.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .config import AxisConfig, Tag, control_cost
from .rotations import Quat, quat_distance
from .solver import PlanSegment, _gauss_newton, _step_tensor

_SIGN_EPS = 1e-12
_MASK_BYTES_LIMIT = 1 << 26   # 64 MiB of visited bits


class OracleBudgetError(RuntimeError):
    """Search ran out of its expansion budget before reaching the goal."""

    def __init__(self, message: str, best_bound: float):
        super().__init__(message)
        self.best_bound = best_bound


@dataclass
class OracleResult:
    cost_upper: float
    segments: list            # PlanSegment list replaying to the target
    residual: float
    settings: dict = field(default_factory=dict)

    def replay(self, cfg: AxisConfig) -> Quat:
        from .config import segment_rotation
        from .rotations import quat_chain
        return quat_chain(segment_rotation(cfg, s.control, s.duration)
                          for s in self.segments)


# ---------------------------------------------------------------------------
# Quantized uniform-cost search
# ---------------------------------------------------------------------------

def _cell_keys(q: np.ndarray, quant: float, half: int) -> np.ndarray:
    """Key of the quantization cell, identifying q with -q.

    Rounds first and then canonicalizes the sign of the integer cell (first
    nonzero component positive), so antipodal cells always collapse to one
    key even right at a sign-flip boundary.
    """
    span = 2 * half + 1
    cells = np.rint(q / quant).astype(np.int64)
    first = np.argmax(cells != 0, axis=1)
    s = np.sign(cells[np.arange(cells.shape[0]), first])
    s[s == 0] = 1
    cells = cells * s[:, None] + half
    return ((cells[:, 0] * span + cells[:, 1]) * span + cells[:, 2]) * span + cells[:, 3]


_BITS = (2 ** np.arange(8)).astype(np.uint8)


def graph_search(cfg: AxisConfig, target: Quat, delta: float = 0.01,
                 quant: float = 0.02, max_cells: int = 4_000_000) -> OracleResult:
    """Best-first search over quantized SU(2) with controls {+-X, +-Y}.

    States are canonical-sign quaternion cells of size ``quant``; an edge
    runs one control in time steps of ``delta`` (cost delta per unit of
    control cost) until the source cell is first exited, since one step can
    be shorter than a cell.  Cells are settled in order of
    g + kappa * (remaining rotation angle), an admissible and consistent
    bound (one unit of cost rotates by at most 1/kappa radians), so the
    settled goal cost equals the uniform-cost value up to the bucket
    rounding of delta/4.  The discovered word's durations are then
    polished: cost is minimized under an escalating residual penalty, and
    segments that shrink away are dropped.
    """
    if not (0.0 < delta <= 0.1):
        raise ValueError("delta out of range (0, 0.1]")
    half = int(math.ceil((1.0 + quant) / quant)) + 2
    span = 2 * half + 1
    if span ** 4 // 8 + 1 > _MASK_BYTES_LIMIT:
        raise ValueError("quant too fine for the desk-scale oracle")
    settings = {"delta": delta, "quant": quant, "max_cells": max_cells}
    tarr = target.normalized().as_array()
    goal = int(_cell_keys(tarr[None, :], quant, half)[0])

    start = np.array([[0.0, 0.0, 0.0, 1.0]])
    skey = int(_cell_keys(start, quant, half)[0])
    if skey == goal:
        return OracleResult(0.0, [], quat_distance(target, Quat(0, 0, 0, 1)), settings)

    tags = (Tag.PLUS_X, Tag.MINUS_X, Tag.PLUS_Y, Tag.MINUS_Y)
    controls = [cfg.control(t) for t in tags]
    step_quats = np.stack([_exp_arr(cfg.control_vector(u) * (delta / 2.0)) for u in controls])
    step_cost = np.array([delta * control_cost(cfg, u) for u in controls])
    bucket_width = delta / 4.0

    def heuristic(q):
        # remaining rotation angle costs at least kappa per radian
        dot = np.abs(q @ tarr).clip(max=1.0)
        return cfg.kappa * 2.0 * np.arccos(dot)

    visited = np.zeros(span ** 4 // 8 + 1, dtype=np.uint8)
    heap: list = []
    pending: dict = {}
    rec_keys, rec_parents, rec_ctrls, rec_counts = [], [], [], []
    max_sub = int(math.ceil(4.0 * quant / delta)) + 8

    def push(keys, quats, parents, ctrls, counts, g):
        f = g + heuristic(quats.astype(np.float64))
        qf = np.rint(f / bucket_width).astype(np.int64)
        for b in np.unique(qf):
            m = qf == b
            key = int(b)
            if key not in pending:
                pending[key] = []
                heapq.heappush(heap, key)
            pending[key].append((keys[m], quats[m].astype(np.float32),
                                 parents[m], ctrls[m], counts[m], g[m]))

    push(np.array([skey]), start, np.array([-1]),
         np.array([-1], dtype=np.int8), np.array([0], dtype=np.int32),
         np.zeros(1))
    settled = 0
    best_bound = 0.0
    goal_cost = None
    while heap:
        bucket = heapq.heappop(heap)
        chunks = pending.pop(bucket)
        keys = np.concatenate([c[0] for c in chunks])
        quats = np.concatenate([c[1] for c in chunks])
        parents = np.concatenate([c[2] for c in chunks])
        ctrls = np.concatenate([c[3] for c in chunks])
        counts = np.concatenate([c[4] for c in chunks])
        g = np.concatenate([c[5] for c in chunks])
        seen = (visited[keys >> 3] & _BITS[keys & 7]) != 0
        if np.all(seen):
            continue
        keep = ~seen
        keys, quats, parents, ctrls, counts, g = (
            a[keep] for a in (keys, quats, parents, ctrls, counts, g))
        # settle the cheapest arrival per cell, deterministic order
        order = np.lexsort((g, keys))
        keys, quats, parents, ctrls, counts, g = (
            a[order] for a in (keys, quats, parents, ctrls, counts, g))
        _, first = np.unique(keys, return_index=True)
        keys, quats, parents, ctrls, counts, g = (
            a[first] for a in (keys, quats, parents, ctrls, counts, g))
        np.bitwise_or.at(visited, keys >> 3, _BITS[keys & 7])
        rec_keys.append(keys)
        rec_parents.append(parents)
        rec_ctrls.append(ctrls)
        rec_counts.append(counts)
        settled += keys.size
        best_bound = bucket * bucket_width
        hit = np.flatnonzero(keys == goal)
        if hit.size:
            goal_cost = float(g[hit[0]])
            break
        if settled > max_cells:
            raise OracleBudgetError("oracle budget exhausted", best_bound)
        q64 = quats.astype(np.float64)
        for ci in range(4):
            cur = q64
            alive = np.arange(keys.size)
            for sub in range(1, max_sub + 1):
                cur = _mul_arr(cur, step_quats[ci])
                cur /= np.linalg.norm(cur, axis=1, keepdims=True)
                nkeys = _cell_keys(cur, quant, half)
                exited = nkeys != keys[alive]
                if np.any(exited):
                    ek = nkeys[exited]
                    fresh = (visited[ek >> 3] & _BITS[ek & 7]) == 0
                    if np.any(fresh):
                        rows = np.flatnonzero(exited)[fresh]
                        push(ek[fresh], cur[rows], keys[alive[rows]],
                             np.full(rows.size, ci, dtype=np.int8),
                             np.full(rows.size, sub, dtype=np.int32),
                             g[alive[rows]] + sub * step_cost[ci])
                    alive = alive[~exited]
                    cur = cur[~exited]
                if alive.size == 0:
                    break
    if goal_cost is None:
        raise OracleBudgetError("oracle budget exhausted", best_bound)

    ctrl_seq = _walk_back(goal, rec_keys, rec_parents, rec_ctrls, rec_counts)
    segments = _merge_steps(controls, ctrl_seq, delta)
    return _polish(cfg, segments, target, settings, slack=4.0 * delta + 4.0 * quant)


def _exp_arr(v: np.ndarray) -> np.ndarray:
    t = float(np.linalg.norm(v))
    if t == 0.0:
        return np.array([0.0, 0.0, 0.0, 1.0])
    return np.concatenate([v / t * math.sin(t), [math.cos(t)]])


def _mul_arr(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    pa, pb, pc, pd = p[:, 0], p[:, 1], p[:, 2], p[:, 3]
    qa, qb, qc, qd = q
    return np.stack([
        pd * qa + pa * qd + pb * qc - pc * qb,
        pd * qb - pa * qc + pb * qd + pc * qa,
        pd * qc + pa * qb - pb * qa + pc * qd,
        pd * qd - pa * qa - pb * qb - pc * qc,
    ], axis=1)


def _walk_back(goal: int, rec_keys, rec_parents, rec_ctrls, rec_counts):
    keys = np.concatenate(rec_keys)
    parents = np.concatenate(rec_parents)
    ctrls = np.concatenate(rec_ctrls)
    counts = np.concatenate(rec_counts)
    order = np.argsort(keys, kind="stable")
    keys, parents, ctrls, counts = keys[order], parents[order], ctrls[order], counts[order]
    seq = []
    node = goal
    while node != -1:
        i = int(np.searchsorted(keys, node))
        if i >= keys.size or keys[i] != node:
            raise AssertionError("broken parent chain in oracle search")
        if ctrls[i] >= 0:
            seq.extend([int(ctrls[i])] * int(counts[i]))
        node = int(parents[i])
    seq.reverse()
    return seq


def _merge_steps(controls, ctrl_seq, delta: float):
    segments = []
    for ci, group in itertools.groupby(ctrl_seq):
        n = sum(1 for _ in group)
        segments.append(PlanSegment(controls[ci], n * delta))
    return segments


def _word_fn_for(cfg: AxisConfig, controls):
    steps = []
    for u in controls:
        w = cfg.control_vector(u)
        speed = float(np.linalg.norm(w))
        steps.append((_step_tensor(w / speed), 0.5 * speed))

    def word_fn(x):
        q = np.zeros((x.shape[0], 4))
        q[:, 3] = 1.0
        for i, (b, hs) in enumerate(steps):
            theta = hs * x[:, i]
            t = (q @ b).reshape(-1, 4, 2)
            q = t[:, :, 0] * np.sin(theta)[:, None] + t[:, :, 1] * np.cos(theta)[:, None]
        return q

    return word_fn


def _project_feasible(cfg, controls, x, tarr, hi):
    word_fn = _word_fn_for(cfg, controls)
    xs, resid, _ = _gauss_newton(word_fn, tarr, x[None, :].copy(),
                                 np.zeros(x.size), hi, max_iter=120)
    return xs[0], float(resid[0])


def _merge_adjacent(controls, x):
    out_c, out_x = [], []
    for u, d in zip(controls, x):
        if d <= 1e-10:
            continue
        if out_c and out_c[-1].tag == u.tag and abs(out_c[-1].a - u.a) < 1e-12:
            out_x[-1] += d
        else:
            out_c.append(u)
            out_x.append(d)
    return out_c, np.array(out_x)


def _polish(cfg: AxisConfig, segments, target: Quat, settings: dict,
            slack: float) -> OracleResult:
    """Shrink the found word's cost while holding the target exactly.

    Projects onto the residual-zero manifold with Gauss-Newton, then takes
    cost-descent steps in the Jacobian null space; segments whose duration
    reaches zero are dropped, which lets the chattering structure of the
    discrete path collapse onto clean arcs.
    """
    tarr = target.normalized().as_array()
    raw_cost = sum(s.duration * control_cost(cfg, s.control) for s in segments)
    raw = OracleResult(raw_cost, list(segments), _replay_residual(cfg, segments, tarr),
                       dict(settings))
    if not segments:
        return raw
    controls = [s.control for s in segments]
    x = np.array([s.duration for s in segments])
    hi_slack = slack + 0.5
    best = raw
    x, resid = _project_feasible(cfg, controls, x, tarr, x + hi_slack)
    if resid <= 1e-9:
        controls, x = _merge_adjacent(controls, x)
        best = _result_from(cfg, controls, x, tarr, settings)
    else:
        return raw

    for _ in range(60):
        word_fn = _word_fn_for(cfg, controls)
        n = x.size
        if n == 0:
            break
        costs = np.array([control_cost(cfg, u) for u in controls])
        h = 1e-6
        jac = np.empty((4, n))
        for j in range(n):
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] = max(xm[j] - h, 0.0)
            jac[:, j] = (word_fn(xp[None, :])[0] - word_fn(xm[None, :])[0]) / (xp[j] - xm[j])
        jjt = jac @ jac.T + 1e-12 * np.eye(4)
        lam = np.linalg.solve(jjt, jac @ costs)
        d = -(costs - jac.T @ lam)
        d[(x <= 1e-9) & (d < 0.0)] = 0.0
        if np.linalg.norm(d) < 1e-10:
            break
        step = 0.2 / max(np.linalg.norm(d), 1e-12)
        improved = False
        for _ in range(12):
            xt = np.clip(x + step * d, 0.0, None)
            xt, resid = _project_feasible(cfg, controls, xt, tarr, x + hi_slack)
            if resid <= 1e-9 and (xt * costs).sum() < (x * costs).sum() - 1e-12:
                x = xt
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        controls, x = _merge_adjacent(controls, x)
        if x.size == 0:
            break
        cand = _result_from(cfg, controls, x, tarr, settings)
        if cand.residual <= 1e-9 and cand.cost_upper < best.cost_upper:
            best = cand
    return best


def _result_from(cfg, controls, x, tarr, settings) -> OracleResult:
    segs = [PlanSegment(u, float(d)) for u, d in zip(controls, x) if d > 1e-12]
    cost = sum(s.duration * control_cost(cfg, s.control) for s in segs)
    return OracleResult(cost, segs, _replay_residual(cfg, segs, tarr), dict(settings))


def _replay_residual(cfg: AxisConfig, segments, tarr: np.ndarray) -> float:
    from .config import segment_rotation
    from .rotations import quat_chain
    q = quat_chain(segment_rotation(cfg, s.control, s.duration) for s in segments)
    return float(min(np.linalg.norm(q.as_array() - tarr),
                     np.linalg.norm(q.as_array() + tarr)))


# ---------------------------------------------------------------------------
# Penalized descent over explicit control words
# ---------------------------------------------------------------------------

_ALL_TAGS = (Tag.PLUS_X, Tag.MINUS_X, Tag.PLUS_Y, Tag.MINUS_Y,
             Tag.PLUS_WP, Tag.MINUS_WP, Tag.PLUS_WM, Tag.MINUS_WM)


def word_descent(cfg: AxisConfig, target: Quat, max_segments: int = 5,
                 restarts: int = 3, seed: int = 0) -> OracleResult:
    """Best decomposition found by direct descent over explicit words.

    Enumerates every control-sign sequence up to ``max_segments`` with no
    two consecutive controls equal, and for each minimizes
    cost + mu * residual^2 by coordinate descent with an escalating penalty
    from ``restarts`` random duration initializations, then polishes the
    near-feasible candidates.  Returns the cheapest word whose residual is
    below 1e-8 (cost_upper = inf when none converged).
    """
    if max_segments > 8:
        raise ValueError("max_segments above 8 is not desk-scale")
    tarr = target.normalized().as_array()
    rng = np.random.default_rng(seed)
    if quat_distance(target, Quat(0, 0, 0, 1)) <= 1e-12:
        return OracleResult(0.0, [], 0.0, {"max_segments": max_segments,
                                           "restarts": restarts})
    vecs = {t: cfg.control_vector(cfg.control(t)) for t in _ALL_TAGS}
    speeds = {t: float(np.linalg.norm(vecs[t])) for t in _ALL_TAGS}
    costs_by = {t: control_cost(cfg, cfg.control(t)) for t in _ALL_TAGS}
    best = OracleResult(math.inf, [], math.inf,
                        {"max_segments": max_segments, "restarts": restarts})
    for length in range(1, max_segments + 1):
        seqs = [s for s in itertools.product(range(8), repeat=length)
                if all(s[i] != s[i + 1] for i in range(length - 1))]
        n = len(seqs) * restarts
        seq_arr = np.repeat(np.array(seqs, dtype=np.int8), restarts, axis=0)
        axes = np.empty((n, length, 3))
        spd = np.empty((n, length))
        cst = np.empty((n, length))
        for ti, tag in enumerate(_ALL_TAGS):
            m = seq_arr == ti
            axes[m] = vecs[tag] / speeds[tag]
            spd[m] = speeds[tag]
            cst[m] = costs_by[tag]
        caps = math.pi / spd
        x = rng.uniform(0.0, 1.0, size=(n, length)) * caps * 0.9

        def words(xx, rows=slice(None)):
            q = np.zeros((xx.shape[0], 4))
            q[:, 3] = 1.0
            a = axes[rows]
            sp = spd[rows]
            for i in range(xx.shape[1]):
                th = 0.5 * sp[:, i] * xx[:, i]
                s, cc = np.sin(th), np.cos(th)
                step = np.empty((xx.shape[0], 4))
                step[:, :3] = a[:, i, :] * s[:, None]
                step[:, 3] = cc
                q = _mul_rows(q, step)
            return q

        def objective(xx, mu, rows=slice(None)):
            q = words(xx, rows)
            r2 = np.minimum(np.einsum("ij,ij->i", q - tarr, q - tarr),
                            np.einsum("ij,ij->i", q + tarr, q + tarr))
            return (xx * cst[rows]).sum(axis=1) + mu * r2

        for mu in (1e2, 1e4, 1e6, 1e8):
            x = _coordinate_descent(lambda xx: objective(xx, mu), x, caps)
        # polish the promising rows to exact feasibility
        q = words(x)
        r = np.sqrt(np.minimum(np.einsum("ij,ij->i", q - tarr, q - tarr),
                               np.einsum("ij,ij->i", q + tarr, q + tarr)))
        cost = (x * cst).sum(axis=1)
        cand = np.flatnonzero(r < 1e-3)
        cand = cand[np.argsort(cost[cand], kind="stable")][:256]
        if cand.size == 0:
            continue
        xx, rr, _ = _gauss_newton(lambda v: words(v, cand), tarr, x[cand],
                                  np.zeros(length), caps[cand].max(axis=0))
        ok = rr <= 1e-8
        if not np.any(ok):
            continue
        cost_ok = (xx[ok] * cst[cand[ok]]).sum(axis=1)
        ibest = int(np.argmin(cost_ok))
        row = cand[ok][ibest]
        durs = xx[ok][ibest]
        if float(cost_ok[ibest]) < best.cost_upper - 1e-12:
            segments = [PlanSegment(cfg.control(_ALL_TAGS[seq_arr[row, i]]), float(d))
                        for i, d in enumerate(durs) if d > 1e-12]
            best = OracleResult(float(cost_ok[ibest]), segments,
                                _replay_residual(cfg, segments, tarr),
                                {"max_segments": max_segments, "restarts": restarts})
    return best


def _mul_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    pa, pb, pc, pd = p[:, 0], p[:, 1], p[:, 2], p[:, 3]
    qa, qb, qc, qd = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack([
        pd * qa + pa * qd + pb * qc - pc * qb,
        pd * qb - pa * qc + pb * qd + pc * qa,
        pd * qc + pa * qb - pb * qa + pc * qd,
        pd * qd - pa * qa - pb * qb - pc * qc,
    ], axis=1)


def _coordinate_descent(fn, x: np.ndarray, caps: np.ndarray,
                        rounds: int = 24) -> np.ndarray:
    n, p = x.shape
    h = 0.25 * np.ones_like(x)
    f = fn(x)
    for _ in range(rounds):
        for j in range(p):
            for sgn in (1.0, -1.0):
                xt = x.copy()
                xt[:, j] = np.clip(x[:, j] + sgn * h[:, j], 0.0, caps[:, j])
                ft = fn(xt)
                better = ft < f
                x[better] = xt[better]
                f[better] = ft[better]
            h[:, j] = np.where(h[:, j] > 0, h[:, j] * 0.62, h[:, j])
        if float(h.max()) < 1e-9:
            break
    return x
