"""
Regularized N-body problem in pairwise KS variables.

Every unordered pair ``k = (i, j)``, ``i < j``, carries the relative
vector ``X_k = q_i - q_j`` through a KS position ``u_k``. Each pair also
carries a pair velocity ``V_k`` stored as the KS velocity
``w_k = 1/2 L(u_k)^T V_k``. Body velocities are recovered as

    dq_i/dt = sum_j c_ij V_ij,   c_ij = +m_j/(m_i+m_j) (i<j), -m_j/(m_i+m_j) (i>j)

so that a pair velocity is the relative velocity of the pair only in the
isolated two-body limit. The pair potential ``m_i m_j / r_k`` acts on
``w_k`` alone and the pairs are coupled through the kinetic energy, as in
Heggie's global regularization. With this choice every component of the
right-hand side stays bounded when any single pair radius goes to zero.

A global fictitious time s is introduced through ``dt/ds = 1/Lambda``
with ``Lambda = T + U``, so the flat state vector holds
``8 * npairs + 1 = 4N(N-1) + 1`` reals::

    [u_0 (4), w_0 (4), u_1 (4), w_1 (4), ..., t]

Units have G = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from kshopf import ks_core
from kshopf.errors import CollisionError

__all__ = [
    "BodySet",
    "CartesianState",
    "CartesianSystem",
    "RegState",
    "RegularizedSystem",
    "cartesian_rhs",
    "consistency_defect",
    "energy",
    "init_state",
    "lagrangian",
    "pair_coefficients",
    "pair_list",
    "pair_velocities",
    "reconstruct",
    "rhs",
]


def pair_list(n: int) -> list[tuple[int, int]]:
    """Pairs ``(i, j)``, ``i < j``, in lexicographic order."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


@dataclass
class BodySet:
    """Masses, positions and velocities of N point masses (G = 1)."""

    masses: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float).reshape(-1)
        n = self.masses.size
        self.positions = np.asarray(self.positions, dtype=float).reshape(n, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(n, 3)
        if n < 2:
            raise ValueError("BodySet needs at least two bodies")
        if not np.all(self.masses > 0.0):
            raise ValueError("all masses must be positive")

    @property
    def n(self) -> int:
        return self.masses.size

    def com_frame(self) -> "BodySet":
        """Copy shifted so that center of mass and total momentum vanish."""
        m = self.masses
        mt = m.sum()
        rc = (m[:, None] * self.positions).sum(axis=0) / mt
        vc = (m[:, None] * self.velocities).sum(axis=0) / mt
        return BodySet(m.copy(), self.positions - rc, self.velocities - vc)


@dataclass
class CartesianState:
    positions: np.ndarray
    velocities: np.ndarray
    t: float


@dataclass
class RegState:
    """Pairwise KS coordinates ``u`` and velocities ``w`` (shape (npairs, 4)) plus time."""

    u: np.ndarray
    w: np.ndarray
    t: float = 0.0
    signs: np.ndarray = field(default=None, repr=False)

    @property
    def npairs(self) -> int:
        return self.u.shape[0]

    def to_array(self) -> np.ndarray:
        y = np.empty(8 * self.npairs + 1)
        blocks = y[:-1].reshape(self.npairs, 8)
        blocks[:, :4] = self.u
        blocks[:, 4:] = self.w
        y[-1] = self.t
        return y

    @classmethod
    def from_array(cls, y, signs=None) -> "RegState":
        y = np.asarray(y, dtype=float)
        npairs = (y.size - 1) // 8
        if 8 * npairs + 1 != y.size:
            raise ValueError(f"state length {y.size} is not 8*npairs + 1")
        blocks = y[:-1].reshape(npairs, 8)
        return cls(blocks[:, :4].copy(), blocks[:, 4:].copy(), float(y[-1]), signs)


def _as_state(state) -> RegState:
    if isinstance(state, RegState):
        return state
    return RegState.from_array(state)


@numba.njit(cache=True)
def _pair_geometry(y, npairs):
    xs = np.empty((npairs, 3))
    vs = np.empty((npairs, 3))
    rs = np.empty(npairs)
    for k in range(npairs):
        o = 8 * k
        u1, u2, u3, u4 = y[o], y[o + 1], y[o + 2], y[o + 3]
        w1, w2, w3, w4 = y[o + 4], y[o + 5], y[o + 6], y[o + 7]
        r = u1 * u1 + u2 * u2 + u3 * u3 + u4 * u4
        rs[k] = r
        xs[k, 0] = u1 * u1 - u2 * u2 - u3 * u3 + u4 * u4
        xs[k, 1] = 2.0 * (u1 * u2 - u3 * u4)
        xs[k, 2] = 2.0 * (u1 * u3 + u2 * u4)
        f = 2.0 / r if r > 0.0 else 0.0
        vs[k, 0] = f * (u1 * w1 - u2 * w2 - u3 * w3 + u4 * w4)
        vs[k, 1] = f * (u2 * w1 + u1 * w2 - u4 * w3 - u3 * w4)
        vs[k, 2] = f * (u3 * w1 + u4 * w2 + u1 * w3 + u2 * w4)
    return xs, vs, rs


@numba.njit(cache=True)
def _reconstruct(xs, vs, m, pi, pj):
    # positions: q_i = (1/M) sum_j m_j X_ij; velocities: q_i' = sum_j c_ij V_ij
    n = m.size
    mt = 0.0
    for i in range(n):
        mt += m[i]
    q = np.zeros((n, 3))
    qd = np.zeros((n, 3))
    for k in range(pi.size):
        i, j = pi[k], pj[k]
        ci = m[j] / (m[i] + m[j])
        cj = m[i] / (m[i] + m[j])
        for c in range(3):
            q[i, c] += m[j] * xs[k, c]
            q[j, c] -= m[i] * xs[k, c]
            qd[i, c] += ci * vs[k, c]
            qd[j, c] -= cj * vs[k, c]
    for i in range(n):
        for c in range(3):
            q[i, c] /= mt
    return q, qd


@numba.njit(cache=True)
def _kinetic_potential(qd, rs, m, pi, pj):
    t_kin = 0.0
    for i in range(m.size):
        t_kin += 0.5 * m[i] * (qd[i, 0] * qd[i, 0] + qd[i, 1] * qd[i, 1] + qd[i, 2] * qd[i, 2])
    pot = 0.0
    for k in range(pi.size):
        pot += m[pi[k]] * m[pj[k]] / rs[k]
    return t_kin, pot


@numba.njit(cache=True)
def _rhs_kernel(y, m, pi, pj, dy):
    npairs = pi.size
    xs, vs, rs = _pair_geometry(y, npairs)
    for k in range(npairs):
        if not rs[k] > 0.0:
            return False
    q, qd = _reconstruct(xs, vs, m, pi, pj)
    t_kin, pot = _kinetic_potential(qd, rs, m, pi, pj)
    inv_lam = 1.0 / (t_kin + pot)
    for k in range(npairs):
        i, j = pi[k], pj[k]
        o = 8 * k
        u1, u2, u3, u4 = y[o], y[o + 1], y[o + 2], y[o + 3]
        w1, w2, w3, w4 = y[o + 4], y[o + 5], y[o + 6], y[o + 7]
        r = rs[k]
        lk = u1 * w4 - u2 * w3 + u3 * w2 - u4 * w1
        v0, v1, v2 = vs[k, 0], vs[k, 1], vs[k, 2]
        v3 = -2.0 * lk / r
        # true relative velocity minus the pair velocity, extended to R^4
        e0 = qd[i, 0] - qd[j, 0] - v0
        e1 = qd[i, 1] - qd[j, 1] - v1
        e2 = qd[i, 2] - qd[j, 2] - v2
        e3 = -v3
        # d = 1/2 L(u)^T e
        d1 = 0.5 * (u1 * e0 + u2 * e1 + u3 * e2 + u4 * e3)
        d2 = 0.5 * (-u2 * e0 + u1 * e1 + u4 * e2 - u3 * e3)
        d3 = 0.5 * (-u3 * e0 - u4 * e1 + u1 * e2 + u2 * e3)
        d4 = 0.5 * (u4 * e0 - u3 * e1 + u2 * e2 - u1 * e3)
        fu = inv_lam / r
        dy[o] = (w1 + d1) * fu
        dy[o + 1] = (w2 + d2) * fu
        dy[o + 2] = (w3 + d3) * fu
        dy[o + 3] = (w4 + d4) * fu
        r2 = r * r
        a = (w1 * w1 + w2 * w2 + w3 * w3 + w4 * w4 - 0.5 * (m[i] + m[j])) / r2
        b = -2.0 * lk / r2
        # g = 1/(2r) L(d)^T (v, v3)
        h = 0.5 / r
        g1 = h * (d1 * v0 + d2 * v1 + d3 * v2 + d4 * v3)
        g2 = h * (-d2 * v0 + d1 * v1 + d4 * v2 - d3 * v3)
        g3 = h * (-d3 * v0 - d4 * v1 + d1 * v2 + d2 * v3)
        g4 = h * (d4 * v0 - d3 * v1 + d2 * v2 - d1 * v3)
        dy[o + 4] = (a * u1 + b * w4 + g1) * inv_lam
        dy[o + 5] = (a * u2 - b * w3 + g2) * inv_lam
        dy[o + 6] = (a * u3 + b * w2 + g3) * inv_lam
        dy[o + 7] = (a * u4 - b * w1 + g4) * inv_lam
    dy[8 * npairs] = inv_lam
    return True


@numba.njit(cache=True)
def _cartesian_kernel(y, m, dy):
    n = m.size
    for i in range(n):
        for c in range(3):
            dy[3 * i + c] = y[3 * n + 3 * i + c]
            dy[3 * n + 3 * i + c] = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = y[3 * j] - y[3 * i]
            dyy = y[3 * j + 1] - y[3 * i + 1]
            dz = y[3 * j + 2] - y[3 * i + 2]
            r2 = dx * dx + dyy * dyy + dz * dz
            inv3 = 1.0 / (r2 * math.sqrt(r2))
            dy[3 * n + 3 * i] += m[j] * dx * inv3
            dy[3 * n + 3 * i + 1] += m[j] * dyy * inv3
            dy[3 * n + 3 * i + 2] += m[j] * dz * inv3
            dy[3 * n + 3 * j] -= m[i] * dx * inv3
            dy[3 * n + 3 * j + 1] -= m[i] * dyy * inv3
            dy[3 * n + 3 * j + 2] -= m[i] * dz * inv3


class RegularizedSystem:
    """Right-hand side of the regularized equations for fixed masses.

    Instances are callable as ``system(s, y) -> dy/ds`` and are the
    object handed to the integrator.
    """

    def __init__(self, masses):
        self.masses = np.ascontiguousarray(masses, dtype=float)
        n = self.masses.size
        if n < 2:
            raise ValueError("need at least two bodies")
        self.pairs = pair_list(n)
        self.pi = np.array([p[0] for p in self.pairs], dtype=np.int64)
        self.pj = np.array([p[1] for p in self.pairs], dtype=np.int64)
        self.pidx = np.full((n, n), -1, dtype=np.int64)
        for k, (i, j) in enumerate(self.pairs):
            self.pidx[i, j] = k
            self.pidx[j, i] = k

    @property
    def n(self) -> int:
        return self.masses.size

    @property
    def dim(self) -> int:
        return 8 * len(self.pairs) + 1

    def __call__(self, s, y):
        dy = np.empty_like(y)
        if not _rhs_kernel(y, self.masses, self.pi, self.pj, dy):
            raise CollisionError("rhs: a pair radius vanished (collision singularity)")
        return dy

    def geometry(self, y):
        """Pair vectors, pair velocities and KS radii of a flat state."""
        return _pair_geometry(np.ascontiguousarray(y, dtype=float), len(self.pairs))

    def cartesian(self, y):
        xs, vs, _ = self.geometry(y)
        return _reconstruct(xs, vs, self.masses, self.pi, self.pj)

    def lagrangian(self, y) -> float:
        xs, vs, rs = self.geometry(y)
        if np.any(rs <= 0.0):
            raise CollisionError("lagrangian: zero pair radius")
        _, qd = _reconstruct(xs, vs, self.masses, self.pi, self.pj)
        t_kin, pot = _kinetic_potential(qd, rs, self.masses, self.pi, self.pj)
        return t_kin + pot

    def energy(self, y) -> float:
        xs, vs, rs = self.geometry(y)
        _, qd = _reconstruct(xs, vs, self.masses, self.pi, self.pj)
        t_kin, pot = _kinetic_potential(qd, rs, self.masses, self.pi, self.pj)
        return t_kin - pot

    def consistency_defect(self, y) -> float:
        xs, vs, _ = self.geometry(y)
        q, _ = _reconstruct(xs, vs, self.masses, self.pi, self.pj)
        worst = 0.0
        for k, (i, j) in enumerate(self.pairs):
            d = xs[k] - (q[i] - q[j])
            worst = max(worst, math.sqrt(float(d @ d)))
        return worst

    def bilinear_max(self, y) -> float:
        blocks = np.asarray(y)[:-1].reshape(-1, 8)
        return max(abs(ks_core.bilinear(b[:4], b[4:])) for b in blocks)

    def momentum(self, y) -> np.ndarray:
        _, qd = self.cartesian(y)
        return (self.masses[:, None] * qd).sum(axis=0)


def pair_coefficients(masses) -> np.ndarray:
    """Matrix C with ``dq/dt = C V`` (shape ``(3N, 3 npairs)``)."""
    m = np.asarray(masses, dtype=float)
    pairs = pair_list(m.size)
    c = np.zeros((3 * m.size, 3 * len(pairs)))
    eye = np.eye(3)
    for k, (i, j) in enumerate(pairs):
        c[3 * i:3 * i + 3, 3 * k:3 * k + 3] = m[j] / (m[i] + m[j]) * eye
        c[3 * j:3 * j + 3, 3 * k:3 * k + 3] = -m[i] / (m[i] + m[j]) * eye
    return c


def pair_velocities(bodies: BodySet) -> np.ndarray:
    """Pair velocities ``V_k`` reproducing the body velocities, shape (npairs, 3).

    ``C V = dq/dt`` is underdetermined for N > 2; the solution closest to
    the relative velocities ``dX_k/dt`` (minimum-norm correction) is used.
    For N = 2 this is exactly ``dX/dt``.
    """
    pairs = pair_list(bodies.n)
    c = pair_coefficients(bodies.masses)
    xdot = np.concatenate([bodies.velocities[i] - bodies.velocities[j] for i, j in pairs])
    corr = np.linalg.lstsq(c, bodies.velocities.ravel() - c @ xdot, rcond=None)[0]
    return (xdot + corr).reshape(len(pairs), 3)


def init_state(bodies: BodySet, vartheta=0.0, theta_ref: float = 0.0) -> RegState:
    """Regularized initial state on the chosen points of the initial fibers.

    Parameters
    ----------
    bodies : BodySet
        Shifted internally to the center-of-mass frame.
    vartheta : float or array_like
        Gauge angle per pair [rad]; a scalar applies to every pair.
        Pairs with ``x < 0`` are rotated by the opposite angle.
    theta_ref : float
        Reference angle of the inverse KS map [rad].

    Returns
    -------
    RegState
        ``signs`` holds the branch sign of every pair.
    """
    b = bodies.com_frame()
    pairs = pair_list(b.n)
    offsets = np.broadcast_to(np.asarray(vartheta, dtype=float), (len(pairs),))
    for k, (i, j) in enumerate(pairs):
        if not np.any(b.positions[i] != b.positions[j]):
            raise CollisionError(f"bodies {i} and {j} coincide at start")
    vel = pair_velocities(b)
    u = np.empty((len(pairs), 4))
    w = np.empty((len(pairs), 4))
    signs = np.empty(len(pairs), dtype=int)
    for k, (i, j) in enumerate(pairs):
        x = b.positions[i] - b.positions[j]
        signs[k] = ks_core.branch_sign(x)
        u[k] = ks_core.fiber_rotate(ks_core.ks_inverse(x, theta_ref), signs[k] * offsets[k])
        w[k] = ks_core.velocity_inverse(u[k], vel[k])
    return RegState(u, w, 0.0, signs)


def reconstruct(state, masses) -> CartesianState:
    """Cartesian positions and velocities from the redundant pair coordinates."""
    st = _as_state(state)
    sysm = RegularizedSystem(masses)
    q, qd = sysm.cartesian(st.to_array())
    return CartesianState(q, qd, st.t)


def lagrangian(state, masses) -> float:
    return RegularizedSystem(masses).lagrangian(_as_state(state).to_array())


def energy(state, masses) -> float:
    """Total energy ``T - U``."""
    return RegularizedSystem(masses).energy(_as_state(state).to_array())


def rhs(state, masses) -> RegState:
    """Derivative of a state with respect to fictitious time, as a RegState."""
    st = _as_state(state)
    dy = RegularizedSystem(masses)(0.0, st.to_array())
    return RegState.from_array(dy)


def consistency_defect(state, masses) -> float:
    return RegularizedSystem(masses).consistency_defect(_as_state(state).to_array())


class CartesianSystem:
    """Plain Newtonian N-body equations in physical time, ``y = [q, v]``."""

    def __init__(self, masses):
        self.masses = np.ascontiguousarray(masses, dtype=float)

    def __call__(self, t, y):
        dy = np.empty_like(y)
        _cartesian_kernel(y, self.masses, dy)
        return dy


def cartesian_rhs(masses) -> CartesianSystem:
    return CartesianSystem(masses)
