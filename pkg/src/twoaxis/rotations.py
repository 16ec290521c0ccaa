"""Quaternion and SO(3) algebra.

Unit quaternions are the computational carrier for rotations: the
conjugation action of a unit quaternion on pure quaternions is a rotation,
and the covering map identifies q and -q.  Vectors and 3x3 matrices are
plain numpy arrays throughout.

Conventions:
  * Quat stores (a, b, c, d) = coefficients of (i, j, k, 1), scalar last.
  * The Lie algebra is identified with R^3 via i->e1, j->e2, k->e3, so
    quat_exp(v) = cos|v| + (v/|v|) sin|v| and su2_to_so3(quat_exp(v))
    equals rot_axis_angle(2|v|, v).

The ``batch_*`` helpers operate on (N, 4) float arrays with the same
component order; they exist so the solver and the brute-force oracle can
evaluate many candidate words at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Renormalize long chained products this often; a handful of factors never
# needs it, graph searches do.
RENORM_EVERY = 64


@dataclass(frozen=True)
class Quat:
    """Quaternion a*i + b*j + c*k + d."""

    a: float
    b: float
    c: float
    d: float

    def conj(self) -> "Quat":
        return Quat(-self.a, -self.b, -self.c, self.d)

    def norm(self) -> float:
        return math.sqrt(self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d)

    def normalized(self) -> "Quat":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero quaternion")
        return Quat(self.a / n, self.b / n, self.c / n, self.d / n)

    def vector(self) -> np.ndarray:
        """Imaginary part as a 3-vector."""
        return np.array([self.a, self.b, self.c])

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d])

    @staticmethod
    def from_array(q) -> "Quat":
        a, b, c, d = (float(x) for x in q)
        return Quat(a, b, c, d)

    def __mul__(self, other: "Quat") -> "Quat":
        return quat_mul(self, other)

    def __neg__(self) -> "Quat":
        return Quat(-self.a, -self.b, -self.c, -self.d)


ONE = Quat(0.0, 0.0, 0.0, 1.0)


def quat_mul(p: Quat, q: Quat) -> Quat:
    """Hamilton product under i^2 = j^2 = k^2 = -1, ij = k."""
    return Quat(
        p.d * q.a + p.a * q.d + p.b * q.c - p.c * q.b,
        p.d * q.b - p.a * q.c + p.b * q.d + p.c * q.a,
        p.d * q.c + p.a * q.b - p.b * q.a + p.c * q.d,
        p.d * q.d - p.a * q.a - p.b * q.b - p.c * q.c,
    )


def quat_exp(v) -> Quat:
    """Exponential of the pure quaternion with vector part v."""
    v = np.asarray(v, dtype=float)
    t = float(np.linalg.norm(v))
    if t == 0.0:
        return ONE
    s = math.sin(t) / t
    return Quat(v[0] * s, v[1] * s, v[2] * s, math.cos(t))


def quat_chain(quats) -> Quat:
    """Left-to-right product, renormalized every RENORM_EVERY factors."""
    out = ONE
    for k, q in enumerate(quats, 1):
        out = quat_mul(out, q)
        if k % RENORM_EVERY == 0:
            out = out.normalized()
    return out


def quat_distance(p: Quat, q: Quat) -> float:
    """min(|p - q|, |p + q|): zero iff p, q map to the same rotation."""
    dm = (p.a - q.a) ** 2 + (p.b - q.b) ** 2 + (p.c - q.c) ** 2 + (p.d - q.d) ** 2
    dp = (p.a + q.a) ** 2 + (p.b + q.b) ** 2 + (p.c + q.c) ** 2 + (p.d + q.d) ** 2
    return math.sqrt(min(dm, dp))


def ad_matrix(v) -> np.ndarray:
    """Skew matrix of the cross product: ad(v) w = v x w."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rot_axis_angle(t: float, axis) -> np.ndarray:
    """Rotation by angle t about ``axis`` (Rodrigues form).

    A non-unit axis is rescaled: the angle becomes t*|axis| about
    axis/|axis|.  Counterclockwise when viewed from the axis endpoint.
    """
    axis = np.asarray(axis, dtype=float)
    n = float(np.linalg.norm(axis))
    if n == 0.0:
        if t == 0.0:
            return np.eye(3)
        raise ValueError("undefined rotation axis")
    t = t * n
    u = axis / n
    return math.cos(t) * np.eye(3) + math.sin(t) * ad_matrix(u) + (1.0 - math.cos(t)) * np.outer(u, u)


def su2_to_so3(q: Quat) -> np.ndarray:
    """Covering homomorphism: the rotation v -> q v q^-1 on pure quaternions.

    Two-to-one: q and -q give the same matrix.
    """
    if abs(q.norm() - 1.0) > 1e-9:
        raise ValueError("quaternion not normalized")
    u = q.vector()
    d = q.d
    return (d * d - float(u @ u)) * np.eye(3) + 2.0 * np.outer(u, u) + 2.0 * d * ad_matrix(u)


def is_pi_rotation(q: Quat, tol: float = 1e-9) -> bool:
    """True iff q maps to a rotation in angle pi (scalar part vanishes)."""
    return abs(q.d) <= tol


def flip_word(s1: float, s2: float, s3: float, X, Y):
    """Rewrite exp(s1 X) exp(s2 Y) exp(s3 X) with the middle sign flipped.

    Returns (s1', s3', psi) such that, as quaternions,

        exp(s1 X) exp(s2 Y) exp(s3 X) = exp(s1' X) exp(-s2 Y) exp(s3' X)

    with s1' = s1 + psi - pi/2, s3' = s3 + psi + pi/2 and
    tan(psi) = cos(alpha) tan(s2), psi in (-pi/2, pi/2], alpha the angle
    between the unit vectors X and Y.  psi = pi/2 at s2 = pi/2 mod pi,
    which is the continuous limit.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    ca = float(X @ Y)
    if abs(math.cos(s2)) < 1e-15:
        psi = math.pi / 2.0
    else:
        psi = math.atan(ca * math.tan(s2))
    return s1 + psi - math.pi / 2.0, s3 + psi + math.pi / 2.0, psi


# ---------------------------------------------------------------------------
# Batched kernels on (N, 4) arrays, component order (a, b, c, d).
# ---------------------------------------------------------------------------

def batch_quat_mul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    pa, pb, pc, pd = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    qa, qb, qc, qd = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(np.broadcast(pa, qa).shape + (4,))
    out[..., 0] = pd * qa + pa * qd + pb * qc - pc * qb
    out[..., 1] = pd * qb - pa * qc + pb * qd + pc * qa
    out[..., 2] = pd * qc + pa * qb - pb * qa + pc * qd
    out[..., 3] = pd * qd - pa * qa - pb * qb - pc * qc
    return out


def batch_axis_exp(axis: np.ndarray, half_angles: np.ndarray) -> np.ndarray:
    """exp(half_angles * axis) for one unit axis and a vector of angles."""
    s = np.sin(half_angles)
    out = np.empty(half_angles.shape + (4,))
    out[..., 0] = s * axis[0]
    out[..., 1] = s * axis[1]
    out[..., 2] = s * axis[2]
    out[..., 3] = np.cos(half_angles)
    return out


def batch_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def batch_distance(q: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Double-cover-aware distance of each row of q to a single target."""
    dm = np.linalg.norm(q - target, axis=-1)
    dp = np.linalg.norm(q + target, axis=-1)
    return np.minimum(dm, dp)
