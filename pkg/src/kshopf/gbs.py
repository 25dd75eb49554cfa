"""
Gragg-Bulirsch-Stoer extrapolation with adaptive step and order.

The base method is Gragg's modified midpoint rule with the step-number
sequence 2, 4, 6, ...; the midpoint results are extrapolated to zero
step size with the Aitken-Neville scheme in ``H**2``. Order and step
are chosen by the usual work-per-unit-step controller (Hairer, Norsett
& Wanner, II.9).

There is no dense output. Trajectories store checkpoints together with
the controller state at each of them, and intermediate values are
obtained by re-integrating from the nearest earlier checkpoint.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from kshopf.errors import CollisionError, IntegrationError

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "integrate",
    "locate_plane_crossing",
    "locate_t",
    "sample_at_s",
]

ABS_FLOOR = 1e-14


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration settings.

    Attributes
    ----------
    tol : float
        Relative tolerance per component, in ``[1e-15, 1e-3]``.
    max_order : int
        Highest extrapolation order, even, ``4 <= max_order <= 16``.
    h0 : float
        Initial step in the independent variable.
    max_steps : int
        Step budget over the whole integration.
    checkpoint_spacing : float or None
        Distance between stored samples; ``None`` stores only the ends.
    safety, grow_max, shrink_min : float
        Step controller: safety factor and bounds on the step ratio.
    norm : {"max", "rms"}
        Norm of the scaled error estimate. The scale of component i is
        ``1e-14 + tol * max(|y_i|, |y_new_i|)``.
    """

    tol: float = 1e-13
    max_order: int = 16
    h0: float = 1e-3
    max_steps: int = 2_000_000
    checkpoint_spacing: float | None = None
    safety: float = 0.9
    grow_max: float = 4.0
    shrink_min: float = 0.1
    norm: str = "max"

    def __post_init__(self):
        if not (1e-15 <= self.tol <= 1e-3):
            raise ValueError(f"tol must lie in [1e-15, 1e-3], got {self.tol}")
        if self.max_order % 2 or not (4 <= self.max_order <= 16):
            raise ValueError(f"max_order must be even and in [4, 16], got {self.max_order}")
        if not self.h0 > 0.0:
            raise ValueError("h0 must be positive")
        if self.norm not in ("rms", "max"):
            raise ValueError("norm must be 'rms' or 'max'")
        if self.checkpoint_spacing is not None and not self.checkpoint_spacing > 0.0:
            raise ValueError("checkpoint_spacing must be positive")


@dataclass
class Trajectory:
    """Checkpointed solution of ``dy/ds = f(s, y)``.

    ``y[:, time_index]`` is the physical time when the state carries it
    (the regularized N-body state stores it last).
    """

    s: np.ndarray
    y: np.ndarray
    rhs: Callable = field(repr=False)
    config: IntegratorConfig = field(repr=False)
    anchors: list = field(repr=False)
    time_index: int = -1
    n_steps: int = 0
    n_rejected: int = 0

    def __len__(self) -> int:
        return self.s.size

    @property
    def t(self) -> np.ndarray:
        return self.y[:, self.time_index]

    @property
    def final(self) -> np.ndarray:
        return self.y[-1]


class _Extrapolator:
    """One integration with persistent controller state (step and order)."""

    def __init__(self, f, config: IntegratorConfig):
        self.f = f
        self.cfg = config
        self.kmax = config.max_order // 2
        self.nseq = [2 * (j + 1) for j in range(self.kmax)]
        work = [self.nseq[0] + 1.0]
        for n in self.nseq[1:]:
            work.append(work[-1] + n)
        self.work = work
        self.kmin = 1 if self.kmax >= 3 else 0
        self.n_steps = 0
        self.n_rejected = 0

    def _midpoint(self, s, y, f0, big_h, n):
        h = big_h / n
        z0 = y
        z1 = y + h * f0
        for m in range(1, n):
            z0, z1 = z1, z0 + (2.0 * h) * self.f(s + m * h, z1)
        return z1

    def _factor(self, err, j):
        expo = 1.0 / (2 * j + 1)
        if not math.isfinite(err):
            return self.cfg.shrink_min
        if err == 0.0:
            return self.cfg.grow_max
        fac = self.cfg.safety * err ** (-expo)
        return min(self.cfg.grow_max, max(self.cfg.shrink_min, fac))

    def step(self, s, y, big_h, k):
        """Attempt steps from ``s`` until one is accepted.

        ``k`` is the target column index (0-based, order ``2k + 2``).
        Returns ``(h_used, y_new, h_next, k_next)``.
        """
        cfg = self.cfg
        kmax = self.kmax
        rejected_before = False
        while True:
            if big_h < 1e-14 * max(1.0, abs(s)):
                raise IntegrationError(f"step size underflow at s={s!r} (h={big_h!r})")
            f0 = self.f(s, y)
            table = []
            errs = {}
            hopt = {}
            wk = {}
            accepted_col = None
            reject = False
            try:
                for j in range(k + 2):
                    row = [self._midpoint(s, y, f0, big_h, self.nseq[j])]
                    for lvl in range(1, j + 1):
                        ratio = (self.nseq[j] / self.nseq[j - lvl]) ** 2 - 1.0
                        row.append(row[lvl - 1] + (row[lvl - 1] - table[j - 1][lvl - 1]) / ratio)
                    table.append(row)
                    if j == 0:
                        continue
                    ynew = row[j]
                    scale = ABS_FLOOR + cfg.tol * np.maximum(np.abs(y), np.abs(ynew))
                    diff = (ynew - row[j - 1]) / scale
                    if cfg.norm == "max":
                        err = float(np.max(np.abs(diff)))
                    else:
                        err = math.sqrt(float(diff @ diff) / diff.size)
                    if not math.isfinite(err):
                        err = math.inf
                    errs[j] = err
                    hopt[j] = big_h * self._factor(err, j)
                    wk[j] = self.work[j] / hopt[j]
                    if j == k - 1 and k - 1 >= 1:
                        if err <= 1.0:
                            accepted_col = j
                            break
                        n1 = self.nseq[0]
                        if err > ((self.nseq[k + 1] * self.nseq[k]) / (n1 * n1)) ** 2:
                            reject = True
                            break
                    elif j == k:
                        if err <= 1.0:
                            accepted_col = j
                            break
                        if err > (self.nseq[k + 1] / self.nseq[0]) ** 2:
                            reject = True
                            break
                    elif j == k + 1:
                        if err <= 1.0:
                            accepted_col = j
                        else:
                            reject = True
                        break
            except (CollisionError, FloatingPointError, ZeroDivisionError, OverflowError):
                accepted_col = None
                reject = True
                hopt = {}

            if accepted_col is None:
                reject = True

            if reject:
                self.n_rejected += 1
                rejected_before = True
                if not hopt:
                    big_h *= cfg.shrink_min
                    continue
                last = max(hopt)
                kn = min(k, last)
                if kn >= 2 and wk.get(kn - 1, math.inf) < 0.8 * wk[kn]:
                    kn -= 1
                k = min(max(self.kmin, kn), kmax - 2)
                big_h = min(hopt.get(k, hopt[last]), big_h * 0.9)
                continue

            kc = accepted_col
            y_new = table[kc][kc]
            self.n_steps += 1
            # order selection for the next step
            if kc == 1:
                k_next = min(2, kmax - 2)
            elif kc <= k:
                k_next = kc
                if wk[kc - 1] < 0.8 * wk[kc]:
                    k_next = kc - 1
                elif wk[kc] < 0.9 * wk[kc - 1]:
                    k_next = min(kc + 1, kmax - 2)
            else:
                k_next = kc - 1
                if kc >= 3 and wk[kc - 2] < 0.8 * wk[kc - 1]:
                    k_next = kc - 2
                if wk[kc] < 0.9 * wk[k_next]:
                    k_next = min(kc, kmax - 2)
            k_next = min(max(self.kmin, k_next), kmax - 2)
            if k_next > kc:
                h_next = hopt[kc] * self.work[k_next] / self.work[kc]
            else:
                h_next = hopt[k_next]
            if rejected_before:
                k_next = min(k_next, k)
                h_next = min(h_next, big_h)
            return big_h, y_new, h_next, k_next


def _side_path(ex, s, y, target, h, k):
    """Integrate from ``(s, y)`` exactly to ``target`` without touching the main path."""
    while s < target:
        remaining = target - s
        use_h = min(h, remaining)
        h_used, y, h, k = ex.step(s, y, use_h, k)
        s = target if h_used == remaining else s + h_used
    return y


class _Anchor:
    """Main-path state (s, y, proposed step, order) from which a checkpoint was reached."""

    __slots__ = ("s", "y", "h", "k")

    def __init__(self, s, y, h, k):
        self.s, self.y, self.h, self.k = s, y, h, k


def _run(f, anchor, config, targets, stop=None):
    """Advance the main path and record the state at each of the increasing ``targets``.

    The main step sequence never depends on the targets: whenever the
    next main step would reach a target, a separate side integration
    from the current main state produces the target value and the main
    path continues unchanged. Replaying from a recorded anchor therefore
    reproduces the original run bit for bit.
    """
    ex = _Extrapolator(f, config)
    s, y, big_h, k = anchor.s, np.array(anchor.y, dtype=float), anchor.h, anchor.k
    out_s, out_y, out_a = [], [], []

    def fail(exc):
        exc.last = (s, y.copy())
        exc.partial = (out_s, out_y, out_a, ex)
        return exc

    for target in targets:
        try:
            while s + 1.001 * big_h < target:
                h_used, y, big_h, k = ex.step(s, y, big_h, k)
                s = s + h_used
                if ex.n_steps > config.max_steps:
                    raise IntegrationError(
                        f"maximum number of steps ({config.max_steps}) exceeded at s={s!r}")
            y_target = y.copy() if s == target else _side_path(ex, s, y, target, big_h, k)
        except IntegrationError as exc:
            raise fail(exc)
        out_s.append(target)
        out_y.append(y_target)
        out_a.append(_Anchor(s, y.copy(), big_h, k))
        if stop is not None and stop(target, y_target):
            break
    return out_s, out_y, out_a, ex


def _checkpoint_grid(s_end, spacing):
    if spacing is None:
        return [s_end]
    m = int(math.floor(s_end / spacing + 1e-9))
    grid = [i * spacing for i in range(1, m + 1)]
    if not grid or grid[-1] < s_end * (1.0 - 1e-12):
        grid.append(s_end)
    return grid


def _trajectory(s_list, y_list, anchors, rhs, config, time_index, ex):
    return Trajectory(np.array(s_list), np.array(y_list), rhs, config, anchors, time_index,
                      ex.n_steps if ex else 0, ex.n_rejected if ex else 0)


def integrate(rhs, y0, s_end: float, config: IntegratorConfig | None = None,
              stop: Callable | None = None, time_index: int = -1) -> Trajectory:
    """Integrate ``dy/ds = rhs(s, y)`` from 0 to ``s_end``.

    Parameters
    ----------
    rhs : callable
        ``rhs(s, y) -> ndarray``.
    y0 : array_like
        Initial state.
    s_end : float
        Final value of the independent variable; ``0`` returns ``y0`` only.
    config : IntegratorConfig
    stop : callable, optional
        ``stop(s, y) -> bool`` evaluated at every checkpoint; a true value
        ends the integration after storing that checkpoint.

    Raises
    ------
    IntegrationError
        On step underflow or exhausted step budget. ``exc.trajectory``
        holds the checkpoints reached so far.
    """
    config = config or IntegratorConfig()
    y0 = np.array(y0, dtype=float)
    if s_end < 0.0:
        raise ValueError("s_end must be non-negative")
    start = _Anchor(0.0, y0.copy(), config.h0, min(3, config.max_order // 2 - 2))
    s_list, y_list, anchors = [0.0], [y0.copy()], [start]
    ex = None
    if s_end > 0.0:
        grid = _checkpoint_grid(s_end, config.checkpoint_spacing)
        try:
            out_s, out_y, out_a, ex = _run(rhs, start, config, grid, stop)
        except IntegrationError as exc:
            out_s, out_y, out_a, ex = exc.partial
            exc.trajectory = _trajectory(s_list + out_s, y_list + out_y, anchors + out_a,
                                         rhs, config, time_index, ex)
            raise
        s_list += out_s
        y_list += out_y
        anchors += out_a
    return _trajectory(s_list, y_list, anchors, rhs, config, time_index, ex)


def sample_at_s(traj: Trajectory, s_star: float) -> np.ndarray:
    """State at ``s_star``: a stored checkpoint or a replay from the previous one.

    The replay repeats the main step sequence of the original run from
    the anchor of the preceding checkpoint, then integrates exactly to
    ``s_star``; no interpolation is involved.
    """
    s = traj.s
    if not (s[0] <= s_star <= s[-1]):
        raise ValueError(f"s*={s_star!r} outside trajectory range [{s[0]!r}, {s[-1]!r}]")
    i = int(np.searchsorted(s, s_star, side="right")) - 1
    if s[i] == s_star:
        return traj.y[i].copy()
    out_s, out_y, _, _ = _run(traj.rhs, traj.anchors[i], traj.config, [float(s_star)])
    return out_y[-1]


def _time_and_rate(traj, s_star):
    y = sample_at_s(traj, s_star)
    return y[traj.time_index], traj.rhs(s_star, y)[traj.time_index], y


def locate_t(traj: Trajectory, t_star: float, return_state: bool = False):
    """Fictitious time at which the physical time equals ``t_star``.

    Safeguarded Newton iteration on ``t(s) - t_star`` using ``dt/ds`` from
    the right-hand side, inside the bracketing checkpoint interval.
    """
    t = traj.t
    if not (t[0] <= t_star <= t[-1]):
        raise ValueError(f"t*={t_star!r} outside trajectory range [{t[0]!r}, {t[-1]!r}]")
    tol = 1e-12 * max(1.0, abs(t_star))
    i = int(np.searchsorted(t, t_star, side="left"))
    if t[i] == t_star or abs(t[i] - t_star) <= 0.1 * tol:
        return (float(traj.s[i]), traj.y[i].copy()) if return_state else float(traj.s[i])
    lo, hi = float(traj.s[i - 1]), float(traj.s[i])
    y_lo = traj.y[i - 1]
    rate_lo = traj.rhs(lo, y_lo)[traj.time_index]
    x = lo + (t_star - t[i - 1]) / rate_lo if rate_lo > 0 else 0.5 * (lo + hi)
    y = None
    for _ in range(100):
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        tx, rate, y = _time_and_rate(traj, x)
        g = tx - t_star
        if abs(g) <= tol:
            break
        if g < 0:
            lo = x
        else:
            hi = x
        x = x - g / rate if rate > 0 else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(hi)):
            break
    return (x, y) if return_state else x


@dataclass(frozen=True)
class Plane:
    """Plane ``normal . (p - point) = 0``."""

    normal: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.shape != (3,) or not np.any(n != 0.0):
            raise ValueError("plane normal must be a nonzero 3-vector")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).reshape(3))

    def value(self, p) -> float:
        return float(self.normal @ (np.asarray(p, dtype=float) - self.point))


@dataclass
class Crossing:
    s: float
    state: np.ndarray
    direction: int


def locate_plane_crossing(traj: Trajectory, plane: Plane, point_of: Callable,
                          tol: float = 1e-10) -> list[Crossing]:
    """All sign changes of ``plane.value(point_of(y))`` between checkpoints.

    Each crossing is refined by the Illinois variant of regula falsi on
    re-integrated states until ``|plane value| <= tol``. Tangential
    touches (zero value without a sign change, or a vanishing normal
    rate at the root) raise a ``RuntimeWarning`` and are not reported.
    """
    if not isinstance(plane, Plane):
        plane = Plane(*plane)
    g = np.array([plane.value(point_of(y)) for y in traj.y])
    out: list[Crossing] = []
    for i in range(1, g.size):
        ga, gb = g[i - 1], g[i]
        if ga == 0.0:
            # a start on the plane is not a crossing; interior zeros were handled as gb
            continue
        if gb == 0.0:
            nxt = g[i + 1] if i + 1 < g.size else None
            if nxt is not None and np.sign(nxt) == np.sign(ga):
                warnings.warn(f"grazing contact with the plane at s={traj.s[i]!r}", RuntimeWarning,
                              stacklevel=2)
                continue
            out.append(Crossing(float(traj.s[i]), traj.y[i].copy(), int(np.sign(gb - ga))))
            continue
        if ga * gb > 0.0:
            continue
        a, b = float(traj.s[i - 1]), float(traj.s[i])
        fa, fb = ga, gb
        side = 0
        y = None
        x = b
        fx = fb
        for _ in range(200):
            x = b - fb * (b - a) / (fb - fa)
            y = sample_at_s(traj, x)
            fx = plane.value(point_of(y))
            if abs(fx) <= tol:
                break
            if fx * fb > 0:
                b, fb = x, fx
                if side == -1:
                    fa *= 0.5
                side = -1
            else:
                a, fa = x, fx
                if side == 1:
                    fb *= 0.5
                side = 1
            if abs(b - a) <= 4 * np.finfo(float).eps * max(1.0, abs(b)):
                break
        # transversality: rate of the plane value along the flow at the root
        ds = 1e-6 * max(1.0, b - a)
        lo_s = max(float(traj.s[i - 1]), x - ds)
        hi_s = min(float(traj.s[i]), x + ds)
        rate = (plane.value(point_of(sample_at_s(traj, hi_s)))
                - plane.value(point_of(sample_at_s(traj, lo_s)))) / (hi_s - lo_s)
        scale = abs(gb - ga) / (float(traj.s[i]) - float(traj.s[i - 1]))
        if abs(rate) <= 1e-9 * max(scale, 1e-300):
            warnings.warn(f"non-transversal crossing near s={x!r}", RuntimeWarning, stacklevel=2)
            continue
        out.append(Crossing(x, y, 1 if gb > ga else -1))
    return out
