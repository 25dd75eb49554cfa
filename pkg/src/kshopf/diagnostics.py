"""
Topological-stability diagnostics for regularized trajectories.

The central quantity is the K-separation: a trajectory started from a
point rotated by ``vartheta`` along the initial fibers is compared with
the same rotation applied to a reference trajectory. In exact arithmetic
the two coincide for all time; numerically the difference grows roughly
like ``eps * exp(gamma * t)`` until it saturates at order one.

All functions operate on stored trajectories and never modify them.
State vectors use the regularized layout ``[u_k (4), w_k (4)]*npairs + [t]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kshopf import ks_core
from kshopf.csvio import write_csv
from kshopf.errors import DiagnosticError
from kshopf.gbs import Plane, Trajectory, locate_plane_crossing, locate_t

__all__ = [
    "EscapeInfo",
    "FiberCrossing",
    "GammaFit",
    "KsepSeries",
    "branch_signs",
    "detect_escape",
    "detect_transition",
    "energy_drift",
    "estimate_tcr",
    "estimate_tolerance",
    "fiber_distance",
    "fit_gamma",
    "k_separation",
    "manifold_distance",
    "pair_positions",
    "poincare",
    "write_crossings_csv",
    "write_series_csv",
]

DEFAULT_WINDOW = (1e-10, 1e-2)


def pair_positions(y) -> np.ndarray:
    """KS positions ``u_k`` of a flat regularized state, shape (npairs, 4)."""
    y = np.asarray(y, dtype=float)
    return y[:-1].reshape(-1, 8)[:, :4]


def branch_signs(y0) -> np.ndarray:
    """Branch sign of every pair from an initial state.

    The x-component is compared against a round-off threshold so that
    pairs starting exactly on ``x = 0`` keep the ``x >= 0`` branch used
    by the inverse map.
    """
    out = []
    for u in pair_positions(y0):
        x = ks_core.ks_map(u)
        r = float(u @ u)
        out.append(1 if x[0] >= -1e-12 * r else -1)
    return np.array(out, dtype=int)


@dataclass
class KsepSeries:
    """K-separation samples with fit results.

    ``d`` is the total separation (root sum of squares over pairs) and
    ``d_pairs`` holds the per-pair values, shape (nsamples, npairs).
    """

    s: np.ndarray
    t: np.ndarray
    d: np.ndarray
    d_pairs: np.ndarray = field(repr=False)
    vartheta: float = 0.0
    theta_ref: float = 0.0
    tol: float | None = None
    gamma_t: float | None = None
    gamma_s: float | None = None
    fit_residual: float | None = None
    t_cr: float | None = None
    t_esc: float | None = None

    def __len__(self) -> int:
        return self.s.size


def k_separation(ref: Trajectory, test: Trajectory, vartheta: float, checkpoints=None,
                 signs=None, theta_ref: float = 0.0, tol: float | None = None) -> KsepSeries:
    """K-separation between a reference run and a run rotated by ``vartheta``.

    Parameters
    ----------
    ref, test : Trajectory
        Regularized runs on the same checkpoint grid in s. Runs that were
        stopped at different checkpoints are compared on the common prefix.
    vartheta : float
        Gauge angle used to initialize ``test`` [rad].
    checkpoints : array_like of int, optional
        Indices into the common grid; all by default.
    signs : array_like of int, optional
        Branch sign per pair; derived from the reference start otherwise.

    Returns
    -------
    KsepSeries
        Physical time is taken from the reference run.
    """
    n = min(len(ref), len(test))
    if n == 0:
        raise DiagnosticError("empty trajectory")
    if ref.y.shape[1] != test.y.shape[1]:
        raise DiagnosticError("trajectories have different state dimensions")
    if not np.array_equal(ref.s[:n], test.s[:n]):
        raise DiagnosticError("checkpoint grids in s do not match")
    sg = branch_signs(ref.y[0]) if signs is None else np.asarray(signs, dtype=int)
    idx = np.arange(n) if checkpoints is None else np.asarray(checkpoints, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise DiagnosticError("checkpoint index outside the common grid")
    dp = np.empty((idx.size, sg.size))
    for row, i in enumerate(idx):
        ua = pair_positions(ref.y[i])
        ub = pair_positions(test.y[i])
        for k in range(sg.size):
            diff = ub[k] - ks_core.fiber_rotate(ua[k], sg[k] * vartheta)
            dp[row, k] = math.sqrt(float(diff @ diff))
    d = np.sqrt(np.sum(dp * dp, axis=1))
    return KsepSeries(ref.s[idx].copy(), ref.t[idx].copy(), d, dp, float(vartheta),
                      float(theta_ref), tol)


@dataclass
class GammaFit:
    gamma_t: float
    gamma_s: float
    residual: float
    n_samples: int


def fit_gamma(series: KsepSeries, window=DEFAULT_WINDOW, t_max: float | None = None) -> GammaFit:
    """Exponential growth rates of the separation from a log-linear fit.

    Only the growth phase is used: samples before the first one that
    exceeds the upper window bound (and before ``t_max`` if given) whose
    value lies inside ``window``.

    Returns
    -------
    GammaFit
        Slopes of ``ln d`` against t and against s, and the RMS residual
        of the fit against t.
    """
    lo, hi = window
    if not (0.0 < lo < hi):
        raise ValueError("window must satisfy 0 < low < high")
    d = np.asarray(series.d, dtype=float)
    t = np.asarray(series.t, dtype=float)
    s = np.asarray(series.s, dtype=float)
    end = d.size
    above = np.nonzero(d > hi)[0]
    if above.size:
        end = int(above[0])
    if t_max is not None:
        end = min(end, int(np.searchsorted(t, t_max, side="right")))
    mask = np.zeros(d.size, dtype=bool)
    mask[:end] = (d[:end] >= lo) & (d[:end] <= hi)
    if mask.sum() < 10:
        raise DiagnosticError(f"only {int(mask.sum())} samples inside window {window}, need 10")
    ld = np.log(d[mask])
    slope_t, icpt = np.polyfit(t[mask], ld, 1)
    slope_s = np.polyfit(s[mask], ld, 1)[0]
    resid = float(np.sqrt(np.mean((ld - (slope_t * t[mask] + icpt)) ** 2)))
    # the fitted growth across the window must exceed round-off of a flat series
    if not slope_t * np.ptp(t[mask]) > 1e-6:
        raise DiagnosticError(f"no exponential growth in the window (slope {slope_t:.3g})")
    series.gamma_t, series.gamma_s, series.fit_residual = float(slope_t), float(slope_s), resid
    return GammaFit(float(slope_t), float(slope_s), resid, int(mask.sum()))


def estimate_tcr(gamma_t: float, eps: float) -> float:
    """Critical time ``-ln(eps) / gamma_t`` at which the separation reaches one."""
    if not gamma_t > 0.0:
        raise ValueError("gamma_t must be positive")
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    return -math.log(eps) / gamma_t


def estimate_tolerance(gamma_t: float, t_final: float) -> float:
    """Tolerance ``exp(-gamma_t * t_final)`` keeping the run stable up to ``t_final``."""
    if not gamma_t > 0.0:
        raise ValueError("gamma_t must be positive")
    if not t_final >= 0.0:
        raise ValueError("t_final must be non-negative")
    return math.exp(-gamma_t * t_final)


def detect_transition(series: KsepSeries, threshold: float = 1.0) -> float | None:
    """First time the separation reaches ``threshold``, or None.

    The crossing is located by linear interpolation of ``ln d`` in t
    between the bracketing samples.
    """
    d = np.asarray(series.d, dtype=float)
    if d.size == 0:
        raise DiagnosticError("empty series")
    hit = np.nonzero(d >= threshold)[0]
    if hit.size == 0:
        series.t_cr = None
        return None
    i = int(hit[0])
    t = series.t
    if i == 0:
        tc = float(t[0])
    elif d[i - 1] <= 0.0:
        tc = float(t[i])
    else:
        la, lb = math.log(d[i - 1]), math.log(d[i])
        frac = (math.log(threshold) - la) / (lb - la)
        tc = float(t[i - 1] + frac * (t[i] - t[i - 1]))
    series.t_cr = tc
    return tc


def _generator(x, theta_ref):
    return ks_core.ks_inverse(x, theta_ref), ks_core.branch_sign(x)


def fiber_distance(x1, x2, n_nodes: int = 64, theta_ref: float = 0.0) -> float:
    """Mean distance between two fibers over their common parameterization.

    Each fiber is generated from the inverse map at ``theta_ref`` and
    swept by ``R(+-a)`` according to its branch; the integral over ``a``
    in [0, 2 pi) uses the trapezoid rule on ``n_nodes`` points, which is
    spectrally accurate for the periodic integrand.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be positive")
    g1, s1 = _generator(x1, theta_ref)
    g2, s2 = _generator(x2, theta_ref)
    if s1 == s2:
        # both fibers turn the same way; the integrand is constant
        diff = g1 - g2
        return math.sqrt(float(diff @ diff))
    total = 0.0
    for j in range(n_nodes):
        a = 2.0 * math.pi * j / n_nodes
        diff = ks_core.fiber_rotate(g1, s1 * a) - ks_core.fiber_rotate(g2, s2 * a)
        total += math.sqrt(float(diff @ diff))
    return total / n_nodes


def manifold_distance(traj1: Trajectory, traj2: Trajectory, t: float, n_nodes: int = 64,
                      theta_ref: float = 0.0) -> float:
    """Distance between the fundamental manifolds of two runs at physical time ``t``.

    Both runs are evaluated at ``t`` (located independently in their own
    fictitious time); the per-pair fiber distances are combined as a root
    sum of squares.
    """
    for tr in (traj1, traj2):
        if not (tr.t[0] <= t <= tr.t[-1]):
            raise DiagnosticError(f"t={t!r} outside trajectory range [{tr.t[0]!r}, {tr.t[-1]!r}]")
    _, y1 = locate_t(traj1, t, return_state=True)
    _, y2 = locate_t(traj2, t, return_state=True)
    u1, u2 = pair_positions(y1), pair_positions(y2)
    if u1.shape != u2.shape:
        raise DiagnosticError("trajectories have different numbers of pairs")
    acc = 0.0
    for a, b in zip(u1, u2):
        dk = fiber_distance(ks_core.ks_map(a), ks_core.ks_map(b), n_nodes, theta_ref)
        acc += dk * dk
    return math.sqrt(acc)


@dataclass
class FiberCrossing:
    """One passage of the section; the fiber is represented by its generator."""

    n: int
    s: float
    t: float
    generator: np.ndarray
    point: np.ndarray
    dist_prev: float = math.nan
    dist_first: float = math.nan


def poincare(traj: Trajectory, plane, selector=("pair", 0), system=None, direction: int = 1,
             theta_ref: float = 0.0, n_nodes: int = 64, tol: float = 1e-10) -> list[FiberCrossing]:
    """Fiberized Poincare map of one pair vector or one body.

    Parameters
    ----------
    traj : Trajectory
    plane : Plane or (normal, point)
    selector : ("pair", k) or ("body", i)
        Point that pierces the plane: the pair vector ``X_k = ks_map(u_k)``
        or the reconstructed body position (needs ``system``).
    direction : {1, -1, 0}
        Keep crossings with increasing (1) or decreasing (-1) plane value;
        0 keeps both.

    Returns
    -------
    list of FiberCrossing
        ``dist_prev`` is the fiber distance to the previous crossing and
        ``dist_first`` the distance to the first one.
    """
    kind, idx = selector
    if kind == "pair":
        def point_of(y):
            return ks_core.ks_map(pair_positions(y)[idx])
    elif kind == "body":
        if system is None:
            raise ValueError("a body selector needs the system for reconstruction")

        def point_of(y):
            return system.cartesian(y)[0][idx]
    else:
        raise ValueError(f"unknown selector kind {kind!r}")
    if not isinstance(plane, Plane):
        plane = Plane(*plane)
    found = locate_plane_crossing(traj, plane, point_of, tol=tol)
    out: list[FiberCrossing] = []
    for c in found:
        if direction and c.direction != direction:
            continue
        p = point_of(c.state)
        if kind == "pair":
            gen = pair_positions(c.state)[idx].copy()
        else:
            gen = ks_core.ks_inverse(p, theta_ref)
        fc = FiberCrossing(len(out), c.s, float(c.state[traj.time_index]), gen, p)
        if out:
            fc.dist_prev = fiber_distance(out[-1].point, p, n_nodes, theta_ref)
            fc.dist_first = fiber_distance(out[0].point, p, n_nodes, theta_ref)
        out.append(fc)
    return out


def energy_drift(traj: Trajectory, system) -> tuple[np.ndarray, np.ndarray]:
    """Relative energy change ``(E - E0) / E0`` at every checkpoint."""
    e = np.array([system.energy(y) for y in traj.y])
    if e[0] == 0.0:
        raise DiagnosticError("initial energy is zero; relative drift undefined")
    return traj.t.copy(), (e - e[0]) / e[0]


@dataclass
class EscapeInfo:
    """An escaper (tuple of body indices), the time it became unbound and the detection time."""

    bodies: tuple
    t_esc: float
    t_detect: float
    index: int


def _groups(n):
    groups = [(i,) for i in range(n)]
    if n >= 4:
        groups += [(i, j) for i in range(n) for j in range(i + 1, n)]
    return groups


def _escape_flags(q, qd, m, group, dist_limit):
    rest = [i for i in range(m.size) if i not in group]
    g = list(group)
    ma, mb = m[g].sum(), m[rest].sum()
    ra = (m[g, None] * q[g]).sum(axis=0) / ma
    va = (m[g, None] * qd[g]).sum(axis=0) / ma
    rb = (m[rest, None] * q[rest]).sum(axis=0) / mb
    vb = (m[rest, None] * qd[rest]).sum(axis=0) / mb
    mu = ma * mb / (ma + mb)
    rel = ra - rb
    vrel = va - vb
    e = 0.5 * mu * float(vrel @ vrel) - ma * mb / math.sqrt(float(rel @ rel))
    far = math.sqrt(float(ra @ ra)) > dist_limit
    return far, e > 0.0


def detect_escape(traj: Trajectory, system, factor: float = 10.0,
                  consecutive: int = 5) -> EscapeInfo | None:
    """First escape of a body (or, for N >= 4, a pair treated as a binary).

    A candidate is flagged when its center of mass is farther from the
    system center of mass than ``factor`` times the initial system
    diameter and its two-body energy relative to the rest is positive,
    both for ``consecutive`` checkpoints in a row. The reported escape
    time is the start of the uninterrupted positive-energy stretch that
    leads to the detection; the detection time is kept as well.
    """
    m = system.masses
    q0, _ = system.cartesian(traj.y[0])
    diam = max(np.linalg.norm(q0[i] - q0[j]) for i in range(m.size) for j in range(i + 1, m.size))
    limit = factor * diam
    groups = _groups(m.size)
    run = np.zeros(len(groups), dtype=int)
    unbound = np.zeros((len(traj), len(groups)), dtype=bool)
    for n, y in enumerate(traj.y):
        q, qd = system.cartesian(y)
        for gi, grp in enumerate(groups):
            far, pos = _escape_flags(q, qd, m, grp, limit)
            unbound[n, gi] = pos
            run[gi] = run[gi] + 1 if (far and pos) else 0
        hit = np.nonzero(run >= consecutive)[0]
        if hit.size:
            gi = int(hit[0])
            start = n
            while start > 0 and unbound[start - 1, gi]:
                start -= 1
            return EscapeInfo(groups[gi], float(traj.t[start]), float(traj.t[n]), start)
    return None


def write_series_csv(path, series: KsepSeries) -> None:
    write_csv(path, ("s", "t", "dK"), zip(series.s, series.t, series.d))


def write_crossings_csv(path, crossings) -> None:
    write_csv(path, ("n", "s", "t", "u1", "u2", "u3", "u4", "dist_prev"),
              ((c.n, c.s, c.t, *c.generator, c.dist_prev) for c in crossings))
