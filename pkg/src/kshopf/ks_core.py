"""
Algebra of the Kustaanheimo-Stiefel transformation seen as a Hopf map.

Vectors in the parametric space U^4 are plain ``numpy`` arrays of shape
``(4,)``; Cartesian vectors have shape ``(3,)``. Every 4x4 product is
written out explicitly so that results are bitwise reproducible and do
not depend on BLAS.

The fiber over a Cartesian point x is the circle ``R(a) u`` for any
preimage u; ``a`` is the gauge angle. Preimages are generated from the
closed-form inverse map parameterized by a reference angle ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from kshopf.csvio import write_csv
from kshopf.errors import CollisionError, DegenerateBasisError, ProjectionSingularityError

__all__ = [
    "FiberBasis",
    "bilinear",
    "branch_sign",
    "fiber_basis",
    "fiber_rotate",
    "fiber_sample",
    "fiber_tangent",
    "kepler_lyapunov",
    "ks_inverse",
    "ks_map",
    "ks_map4",
    "ks_matrix",
    "lift_set",
    "propagate_kepler_ks",
    "rotation_matrix",
    "rotation_matrix_derivative",
    "stereographic_project",
    "stiefel_cross",
    "tangent",
    "triple_cross",
    "velocity_inverse",
    "velocity_map",
    "write_fiber_csv",
]


def _vec4(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (4,):
        raise ValueError(f"expected a 4-vector, got shape {u.shape}")
    return u


def _vec3(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {x.shape}")
    return x


def ks_matrix(u) -> np.ndarray:
    """KS matrix L(u); its columns form the fiber basis at u."""
    u1, u2, u3, u4 = _vec4(u)
    return np.array([
        [u1, -u2, -u3, u4],
        [u2, u1, -u4, -u3],
        [u3, u4, u1, u2],
        [u4, -u3, u2, -u1],
    ])


def _lmul(u, w):
    """L(u) w as a 4-tuple, expanded by rows."""
    u1, u2, u3, u4 = u
    w1, w2, w3, w4 = w
    return (
        u1 * w1 - u2 * w2 - u3 * w3 + u4 * w4,
        u2 * w1 + u1 * w2 - u4 * w3 - u3 * w4,
        u3 * w1 + u4 * w2 + u1 * w3 + u2 * w4,
        u4 * w1 - u3 * w2 + u2 * w3 - u1 * w4,
    )


def _ltmul(u, x):
    """L(u)^T x for x = (x1, x2, x3, x4)."""
    u1, u2, u3, u4 = u
    x1, x2, x3, x4 = x
    return (
        u1 * x1 + u2 * x2 + u3 * x3 + u4 * x4,
        -u2 * x1 + u1 * x2 + u4 * x3 - u3 * x4,
        -u3 * x1 - u4 * x2 + u1 * x3 + u2 * x4,
        u4 * x1 - u3 * x2 + u2 * x3 - u1 * x4,
    )


def ks_map4(u) -> np.ndarray:
    """Full product L(u) u; the fourth component is identically zero."""
    u = _vec4(u)
    return np.array(_lmul(u, u))


def ks_map(u) -> np.ndarray:
    """Map a KS vector to its Cartesian image ``x = L(u) u`` (first three rows)."""
    u1, u2, u3, u4 = _vec4(u)
    return np.array([
        u1 * u1 - u2 * u2 - u3 * u3 + u4 * u4,
        2.0 * (u1 * u2 - u3 * u4),
        2.0 * (u1 * u3 + u2 * u4),
    ])


def rotation_matrix(angle: float) -> np.ndarray:
    """Gauge rotation R(angle); moves a point along its fiber."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([
        [c, 0.0, 0.0, -s],
        [0.0, c, s, 0.0],
        [0.0, -s, c, 0.0],
        [s, 0.0, 0.0, c],
    ])


def rotation_matrix_derivative(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([
        [-s, 0.0, 0.0, -c],
        [0.0, -s, c, 0.0],
        [0.0, -c, -s, 0.0],
        [c, 0.0, 0.0, -s],
    ])


def fiber_rotate(u, angle: float) -> np.ndarray:
    """Apply the gauge rotation ``R(angle) u``. ``fiber_rotate(., -angle)`` inverts it."""
    u1, u2, u3, u4 = _vec4(u)
    c, s = math.cos(angle), math.sin(angle)
    return np.array([
        c * u1 - s * u4,
        c * u2 + s * u3,
        -s * u2 + c * u3,
        s * u1 + c * u4,
    ])


def bilinear(u, w) -> float:
    """Bilinear relation ``u1 w4 - u2 w3 + u3 w2 - u4 w1``."""
    u1, u2, u3, u4 = _vec4(u)
    w1, w2, w3, w4 = _vec4(w)
    return float(u1 * w4 - u2 * w3 + u3 * w2 - u4 * w1)


def tangent(u) -> np.ndarray:
    """Tangent to the fiber through u at zero gauge angle."""
    u1, u2, u3, u4 = _vec4(u)
    return np.array([-u4, u3, -u2, u1])


def fiber_tangent(u, angle: float) -> np.ndarray:
    """Tangent ``dR/da (angle) u`` to the fiber at the rotated point ``R(angle) u``."""
    u1, u2, u3, u4 = _vec4(u)
    c, s = math.cos(angle), math.sin(angle)
    return np.array([
        -s * u1 - c * u4,
        -s * u2 + c * u3,
        -c * u2 - s * u3,
        c * u1 - s * u4,
    ])


def velocity_map(u, uprime) -> np.ndarray:
    """Cartesian velocity ``(2/r) L(u) u'`` (first three components).

    Raises
    ------
    CollisionError
        If ``u`` is the zero vector.
    """
    u = _vec4(u)
    r = float(u @ u)
    if r == 0.0:
        raise CollisionError("velocity_map: zero radius (collision state)")
    p = _lmul(u, _vec4(uprime))
    f = 2.0 / r
    return np.array([f * p[0], f * p[1], f * p[2]])


def velocity_inverse(u, xdot) -> np.ndarray:
    """KS velocity ``u' = 1/2 L(u)^T xdot`` with xdot extended by a zero."""
    u = _vec4(u)
    x1, x2, x3 = _vec3(xdot)
    return 0.5 * np.array(_ltmul(u, (x1, x2, x3, 0.0)))


def branch_sign(x) -> int:
    """+1 for the ``x >= 0`` branch of the inverse map, -1 otherwise."""
    return 1 if float(np.asarray(x, dtype=float)[0]) >= 0.0 else -1


def ks_inverse(x, theta: float = 0.0) -> np.ndarray:
    """One preimage of the Cartesian point ``x`` on its fiber.

    Parameters
    ----------
    x : array_like, shape (3,)
        Nonzero Cartesian point.
    theta : float
        Reference angle [rad]. ``theta2 - theta1`` equals the gauge angle
        separating the two preimages.

    Returns
    -------
    u : ndarray, shape (4,)
        ``(v1, v2, v3, v4)`` if ``x[0] >= 0`` else ``(v2, v1, v4, v3)``.
    """
    x = _vec3(x)
    r = math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    if r == 0.0:
        raise CollisionError("ks_inverse: x = 0 has no fiber (collision point)")
    big_r = math.sqrt(0.5 * (r + abs(x[0])))
    s, c = math.sin(theta), math.cos(theta)
    y, z = x[1], x[2]
    v1 = big_r * s
    v2 = (y * s - z * c) / (2.0 * big_r)
    v3 = (y * c + z * s) / (2.0 * big_r)
    v4 = -big_r * c
    if x[0] >= 0.0:
        return np.array([v1, v2, v3, v4])
    return np.array([v2, v1, v4, v3])


def fiber_sample(x, n: int, theta_ref: float = 0.0) -> list[np.ndarray]:
    """``n`` points of the fiber over ``x`` at uniform gauge spacing ``2 pi / n``."""
    if n < 1:
        raise ValueError("fiber_sample: n must be >= 1")
    u0 = ks_inverse(x, theta_ref)
    sign = branch_sign(x)
    step = 2.0 * math.pi / n
    return [u0 if k == 0 else fiber_rotate(u0, sign * k * step) for k in range(n)]


def lift_set(points: Iterable, n_per_fiber: int, theta_ref: float = 0.0) -> list[np.ndarray]:
    """Lift a set of Cartesian points to U^4, one sampled fiber per point."""
    out: list[np.ndarray] = []
    for i, p in enumerate(points):
        try:
            out.extend(fiber_sample(p, n_per_fiber, theta_ref))
        except CollisionError as exc:
            raise CollisionError(f"lift_set: point {i}: {exc}") from exc
    return out


@dataclass(frozen=True)
class FiberBasis:
    """Orthogonal basis attached to the fiber at ``u``: the columns of L(u)."""

    columns: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    r: float

    def __getitem__(self, i: int) -> np.ndarray:
        return self.columns[i]

    def plane(self) -> tuple[np.ndarray, np.ndarray]:
        """Basis vectors ``(u1, u4)`` of the plane holding the fiber through u.

        ``R(a) u = cos(a) u1 - sin(a) u4`` on either branch of the inverse map.
        """
        return self.columns[0], self.columns[3]


def fiber_basis(u) -> FiberBasis:
    u = _vec4(u)
    r = float(u @ u)
    if r == 0.0:
        raise DegenerateBasisError("fiber_basis: zero vector has no attached basis")
    m = ks_matrix(u)
    return FiberBasis(columns=tuple(m[:, j].copy() for j in range(4)), r=r)


def stiefel_cross(u, v) -> np.ndarray:
    """Stiefel's product ``p = L(u) v4`` with ``v4 = (v4, -v3, v2, -v1)``.

    The first three components generalize the 3D cross product and
    ``p[3] == u . v``.
    """
    u = _vec4(u)
    v1, v2, v3, v4 = _vec4(v)
    return np.array(_lmul(u, (v4, -v3, v2, -v1)))


def triple_cross(a, b, c) -> np.ndarray:
    """Cross product of three vectors in R^4 (Hodge dual of ``a ^ b ^ c``).

    Oriented so that the fiber basis at ``u`` satisfies
    ``triple_cross(u1, u2, u3) == r * u4``.
    """
    a1, a2, a3, a4 = _vec4(a)
    b1, b2, b3, b4 = _vec4(b)
    c1, c2, c3, c4 = _vec4(c)

    def det3(p, q, r_):
        return (p[0] * (q[1] * r_[2] - q[2] * r_[1])
                - p[1] * (q[0] * r_[2] - q[2] * r_[0])
                + p[2] * (q[0] * r_[1] - q[1] * r_[0]))

    return np.array([
        det3((a2, a3, a4), (b2, b3, b4), (c2, c3, c4)),
        -det3((a1, a3, a4), (b1, b3, b4), (c1, c3, c4)),
        det3((a1, a2, a4), (b1, b2, b4), (c1, c2, c4)),
        -det3((a1, a2, a3), (b1, b2, b3), (c1, c2, c3)),
    ])


def stereographic_project(u, pole_axis: int = 4) -> np.ndarray:
    """Stereographic image in R^3 of ``u / |u|`` from the pole ``+e_k``.

    ``pole_axis`` is 1-based. The remaining three coordinates, in index
    order, are divided by ``1 - u_k / |u|``.
    """
    u = _vec4(u)
    if pole_axis not in (1, 2, 3, 4):
        raise ValueError("pole_axis must be one of 1, 2, 3, 4")
    norm = math.sqrt(float(u @ u))
    if norm == 0.0:
        raise ProjectionSingularityError("cannot project the zero vector")
    k = pole_axis - 1
    denom = 1.0 - u[k] / norm
    if denom <= 1e-15:
        raise ProjectionSingularityError(f"point lies on the pole (axis {pole_axis})")
    rest = [u[i] / norm for i in range(4) if i != k]
    return np.array(rest) / denom


def kepler_lyapunov(u, uprime, h: float) -> float:
    """Oscillator energy ``h (u.u)/4 + (u'.u')/2``."""
    u = _vec4(u)
    up = _vec4(uprime)
    return float(h * (u @ u) / 4.0 + (up @ up) / 2.0)


def propagate_kepler_ks(u0, u0prime, h: float, s: float):
    """Closed-form KS Kepler oscillator ``u'' = -(h/2) u`` with ``dt = r ds``.

    Parameters
    ----------
    u0, u0prime : array_like, shape (4,)
        Initial KS position and velocity (derivative w.r.t. fictitious time).
    h : float
        Minus the Keplerian energy; must be positive.
    s : float
        Fictitious time.

    Returns
    -------
    u, uprime : ndarray
    t : float
        Physical time, the exact integral of ``|u(s)|^2``.
    """
    if not h > 0.0:
        raise ValueError("propagate_kepler_ks: only the elliptic case h > 0 is supported")
    a = _vec4(u0)
    ap = _vec4(u0prime)
    omega = math.sqrt(0.5 * h)
    b = ap / omega
    c, sn = math.cos(omega * s), math.sin(omega * s)
    u = a * c + b * sn
    up = (b * c - a * sn) * omega
    aa, bb, ab = float(a @ a), float(b @ b), float(a @ b)
    # r(s) = (aa+bb)/2 + (aa-bb)/2 cos(2ws) + ab sin(2ws)
    s2, c2 = math.sin(2.0 * omega * s), math.cos(2.0 * omega * s)
    t = 0.5 * (aa + bb) * s + (aa - bb) * s2 / (4.0 * omega) + ab * (1.0 - c2) / (2.0 * omega)
    return u, up, t


def fiber_rows(x, n: int, theta_ref: float = 0.0, pole_axis: int = 4) -> list[tuple]:
    """Rows ``(vartheta, u1..u4, px, py, pz)`` for ``n`` samples of one fiber.

    Samples sitting exactly on the pole get NaN projections.
    """
    sign = branch_sign(x)
    step = 2.0 * math.pi / n
    rows = []
    for k, u in enumerate(fiber_sample(x, n, theta_ref)):
        try:
            p = stereographic_project(u, pole_axis)
        except ProjectionSingularityError:
            p = np.full(3, np.nan)
        rows.append((sign * k * step, *u.tolist(), *p.tolist()))
    return rows


FIBER_CSV_HEADER = ("vartheta", "u1", "u2", "u3", "u4", "px", "py", "pz")


def write_fiber_csv(path, rows: Sequence[Sequence[float]]) -> None:
    write_csv(path, FIBER_CSV_HEADER, ([float(v) for v in row] for row in rows))
