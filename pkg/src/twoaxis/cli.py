"""Command-line surface: plan, verify, sweep, patterns, oracle.

Angles are radians unless --degrees is given (input conversion only).
Targets live in the canonical frame (first axis = e1, second axis in the
e1-e2 plane); --frame supplies a unit quaternion f whose rotation maps the
canonical frame to the caller's, and targets are conjugated back by f.

Exit codes: 0 success, 1 malformed input, 2 planner incomplete.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import oracle as oracle_mod
from . import pmp
from .config import AxisConfig, Control, control_cost, make_config, segment_rotation
from .patterns import catalog, pattern
from .rotations import Quat, quat_chain, quat_distance, quat_exp, quat_mul, su2_to_so3
from .solver import Plan, PlanSegment, PlannerError, plan as solve_plan


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _f17(x: float) -> str:
    return f"{float(x):.17g}"


def _farr(xs) -> str:
    return "[" + ", ".join(_f17(x) for x in xs) + "]"


def plan_to_json(cfg: AxisConfig, target: Quat, p: Plan) -> str:
    """Serialize a plan with 17-significant-digit numbers."""
    segs = []
    for s in p.segments:
        vec = cfg.control_vector(s.control)
        speed = float(np.linalg.norm(vec))
        segs.append(
            "{"
            f"\"a\": {_f17(s.control.a)}, \"b\": {_f17(s.control.b)}, "
            f"\"duration\": {_f17(s.duration)}, "
            f"\"axis_unit\": {_farr(vec / speed)}, "
            f"\"rotation_angle\": {_f17(s.duration * speed)}, "
            f"\"cost\": {_f17(s.duration * control_cost(cfg, s.control))}"
            "}")
    parts = [
        f"\"alpha\": {_f17(cfg.alpha)}",
        f"\"kappa\": {_f17(cfg.kappa)}",
        f"\"target\": {{\"quat\": {_farr([target.a, target.b, target.c, target.d])}}}",
        "\"segments\": [" + ", ".join(segs) + "]",
        f"\"total_cost\": {_f17(p.total_cost)}",
        f"\"residual\": {_f17(p.residual)}",
        f"\"pattern_id\": {json.dumps(p.pattern_id)}",
        f"\"symmetry_index\": {p.symmetry_index}",
        f"\"window\": [{p.window[0]}, {p.window[1]}]",
    ]
    return "{" + ", ".join(parts) + "}"


def plan_from_json(text: str):
    """Parse a plan JSON back into (cfg, target, Plan)."""
    doc = json.loads(text)
    cfg = make_config(float(doc["alpha"]), float(doc["kappa"]))
    target = Quat.from_array(doc["target"]["quat"])
    segments = []
    for s in doc["segments"]:
        u = Control(float(s["a"]), float(s["b"]))
        tag = pmp.match_control(cfg, u)
        if tag is not None:
            u = cfg.control(tag)
        segments.append(PlanSegment(u, float(s["duration"])))
    p = Plan(tuple(segments), float(doc["total_cost"]), float(doc["residual"]),
             str(doc["pattern_id"]), int(doc["symmetry_index"]),
             tuple(doc["window"]))
    return cfg, target, p


# ---------------------------------------------------------------------------
# Target parsing
# ---------------------------------------------------------------------------

def _floats(text: str):
    try:
        return [float(x) for x in text.split(",") if x != ""]
    except ValueError as e:
        raise CliError(f"bad number in {text!r}") from e


def parse_target(spec: str, degrees: bool = False) -> Quat:
    """quat:a,b,c,d | axis-angle:x,y,z:angle | matrix:9 reals | euler:pairs."""
    scale = math.pi / 180.0 if degrees else 1.0
    kind, _, rest = spec.partition(":")
    if kind == "quat":
        v = _floats(rest)
        if len(v) != 4:
            raise CliError("quat target needs 4 components")
        q = Quat(*v)
        n = q.norm()
        if abs(n - 1.0) > 1e-8:
            raise CliError("quaternion target not normalizable within 1e-8")
        return q.normalized()
    if kind == "axis-angle":
        axis_s, _, ang_s = rest.rpartition(":")
        axis = np.array(_floats(axis_s))
        if axis.shape != (3,) or float(np.linalg.norm(axis)) == 0.0:
            raise CliError("axis-angle target needs a nonzero 3-vector axis")
        angle = float(ang_s) * scale
        return quat_exp((angle / 2.0) * axis / np.linalg.norm(axis))
    if kind == "matrix":
        v = _floats(rest)
        if len(v) != 9:
            raise CliError("matrix target needs 9 row-major entries")
        m = np.array(v).reshape(3, 3)
        if np.linalg.norm(m.T @ m - np.eye(3)) > 1e-8 or np.linalg.det(m) < 0.0:
            raise CliError("matrix target not orthonormal within 1e-8")
        return _matrix_to_quat(m)
    if kind == "euler":
        parts = rest.split(",")
        if len(parts) % 2 != 0 or not parts:
            raise CliError("euler target needs letter,angle pairs")
        axes = {"x": np.array([1.0, 0.0, 0.0]), "y": np.array([0.0, 1.0, 0.0]),
                "z": np.array([0.0, 0.0, 1.0])}
        q = Quat(0.0, 0.0, 0.0, 1.0)
        for letter, ang in zip(parts[0::2], parts[1::2]):
            if letter.lower() not in axes:
                raise CliError(f"unknown euler axis {letter!r}")
            q = quat_mul(q, quat_exp(float(ang) * scale / 2.0 * axes[letter.lower()]))
        return q
    raise CliError(f"unknown target kind {kind!r}")


def _matrix_to_quat(m: np.ndarray) -> Quat:
    t = float(np.trace(m))
    if t > 0.0:
        d = 0.5 * math.sqrt(1.0 + t)
        a = (m[2, 1] - m[1, 2]) / (4.0 * d)
        b = (m[0, 2] - m[2, 0]) / (4.0 * d)
        c = (m[1, 0] - m[0, 1]) / (4.0 * d)
        return Quat(a, b, c, d).normalized()
    i = int(np.argmax(np.diag(m)))
    j, k = (i + 1) % 3, (i + 2) % 3
    r = math.sqrt(max(1.0 + m[i, i] - m[j, j] - m[k, k], 0.0))
    v = [0.0, 0.0, 0.0]
    v[i] = 0.5 * r
    v[j] = (m[j, i] + m[i, j]) / (2.0 * r)
    v[k] = (m[k, i] + m[i, k]) / (2.0 * r)
    d = (m[k, j] - m[j, k]) / (2.0 * r)
    return Quat(v[0], v[1], v[2], d).normalized()


def _parse_frame(text: str) -> Quat:
    v = _floats(text)
    if len(v) != 4:
        raise CliError("--frame needs 4 quaternion components")
    q = Quat(*v)
    if abs(q.norm() - 1.0) > 1e-8:
        raise CliError("--frame quaternion not normalizable within 1e-8")
    return q.normalized()


def _reduce_alpha(alpha: float, target: Quat):
    """Fold alpha in (pi/2, pi) onto pi - alpha by the second-axis flip.

    The flipped problem's canonical frame differs by a half-turn about the
    first axis, so the target is conjugated by it.
    """
    if alpha <= math.pi / 2.0 + 1e-15:
        return alpha, target, False
    if alpha >= math.pi:
        raise CliError("axis angle out of range")
    b = Quat(1.0, 0.0, 0.0, 0.0)
    return math.pi - alpha, quat_mul(quat_mul(b, target), b.conj()).normalized(), True


def _get_config(args, target: Quat):
    scale = math.pi / 180.0 if args.degrees else 1.0
    alpha = args.alpha * scale
    alpha, target, reduced = _reduce_alpha(alpha, target)
    if reduced:
        print("notice: alpha > pi/2 reduced by the substitution Y -> -Y; "
              "plan coefficients refer to the flipped second axis",
              file=sys.stderr)
    return make_config(alpha, args.kappa), target


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_plan(args) -> int:
    target = parse_target(args.target, args.degrees)
    if args.frame:
        f = _parse_frame(args.frame)
        target = quat_mul(quat_mul(f.conj(), target), f).normalized()
    cfg, target = _get_config(args, target)
    try:
        p = solve_plan(cfg, target)
    except PlannerError as e:
        print(str(e), file=sys.stderr)
        return 2
    text = plan_to_json(cfg, target, p)
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_verify(args) -> int:
    try:
        with open(args.plan, "r", encoding="utf-8") as fh:
            cfg, target, p = plan_from_json(fh.read())
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"invalid plan file: {e}", file=sys.stderr)
        return 1
    realized = quat_chain(segment_rotation(cfg, s.control, s.duration)
                          for s in p.segments)
    residual = quat_distance(realized, target)
    ok_real = residual <= 1e-8
    report = pmp.check_plan(cfg, p)
    print(f"realization residual: {_f17(residual)} "
          f"({'pass' if ok_real else 'FAIL'})")
    if report.passed:
        st = report.initial_costate
        print(f"pmp certificate: pass  initial costate s={_f17(st.s)} "
              f"q={_f17(st.q)} z={_f17(st.z)}")
        for ev in report.switches:
            print(f"  switch t={_f17(ev.time)}: {ev.from_control.value} -> "
                  f"{ev.to_control.value} at (s={_f17(ev.costate.s)}, "
                  f"q={_f17(ev.costate.q)}, z={_f17(ev.costate.z)})")
    else:
        where = "" if report.segment is None else f" (segment {report.segment})"
        print(f"pmp certificate: FAIL: {report.reason}{where}")
    return 0 if (ok_real and report.passed) else 1


def cmd_sweep(args) -> int:
    scale = math.pi / 180.0 if args.degrees else 1.0
    axis = np.array(_floats(args.axis))
    if axis.shape != (3,) or float(np.linalg.norm(axis)) == 0.0:
        raise CliError("--axis needs a nonzero 3-vector")
    axis = axis / np.linalg.norm(axis)
    cfg = make_config(args.alpha * scale, args.kappa)
    ts = np.linspace(args.t_min * scale, args.t_max * scale, args.steps)
    closed = (abs(cfg.alpha - math.pi / 2.0) <= 1e-12 and cfg.kappa == 1.0
              and abs(axis[2] - 1.0) <= 1e-9 and abs(axis[0]) <= 1e-9
              and abs(axis[1]) <= 1e-9)
    print("t,planner_cost,pattern_id,closed_form_cost")
    for t in ts:
        p = solve_plan(cfg, quat_exp((t / 2.0) * axis))
        cf = ""
        if closed and 0.0 <= t <= math.pi:
            cf = _f17(example_cost_closed_form(t))
        print(f"{_f17(t)},{_f17(p.total_cost)},{p.pattern_id},{cf}")
    return 0


def example_cost_closed_form(t: float) -> float:
    """min-cost of R(tZ) at alpha = pi/2, kappa = 1 for t in [0, pi]."""
    t1 = math.acos(min(1.0, 1.0 / (math.cos(t / 2.0) + math.sin(t / 2.0))))
    t2 = math.acos(max(-1.0, min(1.0, math.cos(t / 2.0) - math.sin(t / 2.0))))
    return min(2.0 * (t1 + t2), math.pi + t)


_DUR_TEXT = {"pi": "pi", "that": "t_hat_{ax}", "w": "t", "x_2that": "t",
             "pair": "t_{ax}"}


def _word_text(p) -> str:
    out = []
    for s in p.slots:
        d = s.duration
        sym = _DUR_TEXT[d.kind].format(ax=d.axis) if d.axis else _DUR_TEXT[d.kind]
        sign = "-" if s.role.sign < 0 else ""
        out.append(f"R({sign}{sym} {s.role.letter})")
    return " ".join(out)


def cmd_patterns(args) -> int:
    scale = math.pi / 180.0 if args.degrees else 1.0
    cfg = make_config(args.alpha * scale, args.kappa)
    print(f"regime: {cfg.regime.value}")
    print(f"{'id':4} {'word':55} {'constraint':28} orbit")
    for p in catalog(cfg):
        constraint = "tan(t_X/2) = kappa tan(t_Y/2)" if p.constraint else ""
        print(f"{p.id:4} {_word_text(p):55} {constraint:28} {p.orbit.value}")
    return 0


def _oracle_json(res: oracle_mod.OracleResult, cfg: AxisConfig) -> str:
    segs = []
    for s in res.segments:
        segs.append("{" + f"\"a\": {_f17(s.control.a)}, \"b\": {_f17(s.control.b)}, "
                    f"\"duration\": {_f17(s.duration)}" + "}")
    settings = ", ".join(f"{json.dumps(k)}: {_f17(v) if isinstance(v, float) else v}"
                         for k, v in res.settings.items())
    return ("{" + f"\"cost_upper\": {_f17(res.cost_upper)}, "
            f"\"residual\": {_f17(res.residual)}, "
            f"\"segments\": [{', '.join(segs)}], "
            f"\"settings\": {{{settings}}}" + "}")


def cmd_oracle(args) -> int:
    target = parse_target(args.target, args.degrees)
    cfg, target = _get_config(args, target)
    out = {}
    if args.method in ("graph", "both"):
        out["graph_search"] = oracle_mod.graph_search(cfg, target, args.delta,
                                                      args.quant)
    if args.method in ("descent", "both"):
        out["word_descent"] = oracle_mod.word_descent(cfg, target,
                                                      args.max_segments,
                                                      args.restarts)
    if len(out) == 1:
        print(_oracle_json(next(iter(out.values())), cfg))
    else:
        body = ", ".join(f"{json.dumps(k)}: {_oracle_json(v, cfg)}"
                         for k, v in out.items())
        best = min(v.cost_upper for v in out.values())
        print("{" + f"\"cost_upper\": {_f17(best)}, {body}" + "}")
    return 0


def _add_common(sp, alpha=True):
    if alpha:
        sp.add_argument("--alpha", type=float, required=True,
                        help="angle between the axes (radians unless --degrees)")
        sp.add_argument("--kappa", type=float, required=True,
                        help="cost of the second axis per radian, in [0, 1]")
    sp.add_argument("--degrees", action="store_true",
                    help="interpret input angles as degrees")


def build_parser() -> _Parser:
    ap = _Parser(prog="twoaxis",
                 description="minimum-cost rotation decomposition about two fixed axes")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a single target rotation")
    _add_common(p)
    p.add_argument("--target", required=True,
                   help="quat:a,b,c,d | axis-angle:x,y,z:angle | matrix:9 | euler:pairs")
    p.add_argument("--frame", help="unit quaternion mapping canonical frame to caller frame")
    p.add_argument("--json-out", help="also write the plan JSON to this path")
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("verify", help="certify a plan JSON file")
    p.add_argument("--plan", required=True, help="path to a plan JSON")
    p.set_defaults(fn=cmd_verify, degrees=False)

    p = sub.add_parser("sweep", help="cost curve over rotation angles about one axis")
    _add_common(p)
    p.add_argument("--axis", required=True, help="rotation axis x,y,z")
    p.add_argument("--t-min", type=float, required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("patterns", help="print the regime's pattern catalog")
    _add_common(p)
    p.set_defaults(fn=cmd_patterns)

    p = sub.add_parser("oracle", help="brute-force cost upper bounds")
    _add_common(p)
    p.add_argument("--target", required=True)
    p.add_argument("--method", choices=("graph", "descent", "both"), default="both")
    p.add_argument("--delta", type=float, default=0.01, help="time step of graph search")
    p.add_argument("--quant", type=float, default=0.02, help="quaternion cell size")
    p.add_argument("--max-segments", type=int, default=5)
    p.add_argument("--restarts", type=int, default=3)
    p.set_defaults(fn=cmd_oracle)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
