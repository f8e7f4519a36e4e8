"""Schedules and time evolution under H(t) = A(t) H_drive + B(t) H_prob (hbar = 1).

Constant segments are propagated exactly with a Krylov expansion of the
matrix exponential action; time-varying segments use adaptive DOP853 steps.
The state is never renormalized, so ``norm_drift`` is an accuracy witness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import krylov
from .errors import QuenchError
from .io import write_csv
from .ising import Driver, IsingProblem, check_normalized, driver_ground_state, flip_sum

DEFAULT_TOL = 1e-9
MONOTONE_GRID = 10_000

ControlFn = Callable[[float], float]


@dataclass(frozen=True)
class Segment:
    """One piece of a schedule; ``a_fn``/``b_fn`` take time local to the segment."""

    duration: float
    a_fn: ControlFn
    b_fn: ControlFn
    kind: str
    constant: bool = False
    params: dict = field(default_factory=dict, compare=False)

    def controls(self, tau: float) -> tuple[float, float]:
        return float(self.a_fn(tau)), float(self.b_fn(tau))


def constant_segment(duration: float, a: float, b: float) -> Segment:
    return Segment(duration, lambda _t: a, lambda _t: b, "constant", constant=True, params={"a": a, "b": b})


def linear_segment(duration: float, a0: float, a1: float, b0: float, b1: float, kind: str = "linear-ramp") -> Segment:
    if a0 == a1 and b0 == b1:
        return constant_segment(duration, a0, b0)

    # convex combination keeps the endpoints exact and the sign of the controls
    def a_fn(t):
        u = t / duration
        return (1.0 - u) * a0 + u * a1

    def b_fn(t):
        u = t / duration
        return (1.0 - u) * b0 + u * b1

    return Segment(
        duration, a_fn, b_fn, kind,
        params={"a0": a0, "a1": a1, "b0": b0, "b1": b1},
    )


def _gamma(a: float, b: float) -> float:
    if b > 0:
        return a / b
    return math.inf if a > 0 else 0.0


@dataclass(frozen=True)
class Schedule:
    """Ordered segments.  Controls are right-continuous at segment boundaries.

    With ``monotone=True`` the construction asserts that Gamma = A/B never
    increases on a dense grid (including both sides of every boundary).
    """

    segments: tuple[Segment, ...]
    monotone: bool = False

    def __post_init__(self):
        if not self.segments:
            raise QuenchError("empty-schedule", "a schedule needs at least one segment")
        for seg in self.segments:
            if not seg.duration > 0:
                raise QuenchError("nonpositive-duration", f"segment duration {seg.duration} must be positive")
        a, b = self.grid_controls()
        if np.any(a < 0) or np.any(b < 0):
            raise QuenchError("negative-control", "A(t) and B(t) must be non-negative")
        if self.monotone and not self.is_monotone():
            raise QuenchError("non-monotone", "Gamma(t) increases somewhere on the check grid")

    @property
    def t_final(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def boundaries(self) -> np.ndarray:
        """Start time of every segment followed by t_final."""
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def locate(self, t: float) -> tuple[int, float]:
        bounds = self.boundaries
        k = int(np.searchsorted(bounds, t, side="right")) - 1
        k = min(max(k, 0), len(self.segments) - 1)
        return k, t - bounds[k]

    def controls(self, t: float) -> tuple[float, float]:
        k, tau = self.locate(t)
        return self.segments[k].controls(tau)

    def gamma(self, t: float) -> float:
        return _gamma(*self.controls(t))

    def grid_controls(self, points: int = MONOTONE_GRID) -> tuple[np.ndarray, np.ndarray]:
        """A and B on a time-ordered grid holding both ends of every segment."""
        total = self.t_final
        a_vals, b_vals = [], []
        for seg in self.segments:
            k = max(2, int(round(points * seg.duration / total)) + 1)
            for tau in np.linspace(0.0, seg.duration, k):
                a, b = seg.controls(tau)
                a_vals.append(a)
                b_vals.append(b)
        return np.array(a_vals), np.array(b_vals)

    def is_monotone(self, points: int = MONOTONE_GRID) -> bool:
        a, b = self.grid_controls(points)
        g = np.array([_gamma(x, y) for x, y in zip(a, b)])
        prev, cur = g[:-1], g[1:]
        ok = (cur <= prev) | np.isclose(cur, prev, rtol=1e-12, atol=1e-12)
        return bool(np.all(ok))

    def reversed(self) -> "Schedule":
        """Time-reversed schedule, A'(t) = A(t_f - t)."""
        segs = []
        for seg in reversed(self.segments):
            d, fa, fb = seg.duration, seg.a_fn, seg.b_fn
            segs.append(Segment(d, lambda t, f=fa, d=d: f(d - t), lambda t, f=fb, d=d: f(d - t),
                                seg.kind, constant=seg.constant, params=dict(seg.params, reversed=True)))
        return Schedule(tuple(segs))


def make_walk_schedule(gamma: float, t: float) -> Schedule:
    """Plain quantum walk: A = gamma, B = 1 for duration t."""
    return Schedule((constant_segment(t, gamma, 1.0),), monotone=gamma >= 0)


def make_two_stage_schedule(gamma1: float, gamma2: float, t1: float, t2: float) -> Schedule:
    """Gamma = gamma1 on [0, t1), gamma2 on [t1, t1 + t2]; A = Gamma, B = 1."""
    for t in (t1, t2):
        if not t > 0:
            raise QuenchError("nonpositive-duration", f"stage durations must be positive, got {t}")
    if gamma1 < 0 or gamma2 < 0:
        raise QuenchError("negative-control", "hopping rates must be non-negative")
    segs = (constant_segment(t1, gamma1, 1.0), constant_segment(t2, gamma2, 1.0))
    return Schedule(segs, monotone=gamma1 >= gamma2)


def make_preanneal_schedule(gamma: float, t1: float, t2: float) -> Schedule:
    """Quadratic pre-anneal of length t1 followed by a walk at rate gamma for t2.

    For 0 <= t <= t1 with u = t/t1 - 1: A = gamma (1 + u^2), B = 1 - u^2.
    t1 = 0 gives a pure quantum walk.
    """
    if not t2 > 0:
        raise QuenchError("nonpositive-t2", f"walk duration t2 must be positive, got {t2}")
    if t1 < 0:
        raise QuenchError("nonpositive-duration", f"pre-anneal time t1 must be >= 0, got {t1}")
    if gamma <= 0:
        raise QuenchError("negative-control", "gamma must be positive")
    walk = constant_segment(t2, gamma, 1.0)
    if t1 == 0:
        return Schedule((walk,), monotone=True)
    pre = Segment(
        t1,
        lambda t: gamma * (1.0 + (t / t1 - 1.0) ** 2),
        lambda t: 1.0 - (t / t1 - 1.0) ** 2,
        "quadratic-preanneal",
        params={"gamma": gamma, "t1": t1},
    )
    return Schedule((pre, walk), monotone=True)


def piecewise_linear_schedule(t_knots: Sequence[float], s_knots: Sequence[float]) -> Schedule:
    """A = 1 - s(t), B = s(t) with s linearly interpolated between knots."""
    t = np.asarray(t_knots, dtype=float)
    s = np.asarray(s_knots, dtype=float)
    if t.shape != s.shape or len(t) < 2:
        raise QuenchError("invalid-knots", "need matching t and s knot lists of length >= 2")
    if t[0] != 0.0:
        raise QuenchError("invalid-knots", "first time knot must be 0")
    if np.any(s < 0) or np.any(s > 1):
        raise QuenchError("invalid-knots", "s knots must lie in [0, 1]")
    segs = tuple(
        linear_segment(t[i + 1] - t[i], 1 - s[i], 1 - s[i + 1], s[i], s[i + 1], kind="piecewise-linear-in-s")
        for i in range(len(t) - 1)
    )
    return Schedule(segs, monotone=bool(np.all(np.diff(s) >= 0)))


def make_linear_schedule(t_f: float) -> Schedule:
    return piecewise_linear_schedule([0.0, t_f], [0.0, 1.0])


def tabulated_schedule(times: Sequence[float], a_vals: Sequence[float], b_vals: Sequence[float],
                       monotone: bool = False) -> Schedule:
    """Controls linearly interpolated from a table."""
    t = np.asarray(times, dtype=float)
    if t[0] != 0.0:
        raise QuenchError("invalid-knots", "first time must be 0")
    segs = tuple(
        linear_segment(t[i + 1] - t[i], a_vals[i], a_vals[i + 1], b_vals[i], b_vals[i + 1], kind="custom-tabulated")
        for i in range(len(t) - 1)
    )
    return Schedule(segs, monotone=monotone)


def hamiltonian_apply(driver: Driver, energies: np.ndarray, a: float, b: float):
    """Closure v -> (a H_drive + b H_prob) v."""
    diag = a * driver.diagonal + b * energies
    hop = a * driver.hop
    n = driver.n
    if hop == 0.0:
        return lambda v: diag * v
    return lambda v: diag * v - hop * flip_sum(v, n)


def _drive_expectation(driver: Driver, psi: np.ndarray) -> float:
    hd = driver.diagonal * psi - driver.hop * flip_sum(psi, driver.n)
    return float(np.vdot(psi, hd).real)


def observables(state: np.ndarray, problem: IsingProblem, driver: Driver, gamma: float) -> tuple[float, float, float]:
    """(<H_drive>, <H_prob>, Gamma <H_drive> + <H_prob>)."""
    ed = _drive_expectation(driver, state)
    ep = float(np.dot(np.abs(state) ** 2, problem.energies))
    return ed, ep, gamma * ed + ep


def success_probability(state: np.ndarray, problem: IsingProblem) -> float:
    """Probability mass on the (possibly degenerate) ground manifold of H_prob."""
    return float(np.sum(np.abs(state[problem.ground_indices]) ** 2))


@dataclass
class Trajectory:
    """Observables sampled on ``times``.

    ``e_gamma`` is Gamma <H_drive> + <H_prob> and is NaN where B = 0;
    ``e_ab`` is the unscaled A <H_drive> + B <H_prob>.
    """

    times: np.ndarray
    a: np.ndarray
    b: np.ndarray
    exp_drive: np.ndarray
    exp_prob: np.ndarray
    e_gamma: np.ndarray
    e_ab: np.ndarray
    p_success: np.ndarray
    norm_drift: np.ndarray
    final_state: np.ndarray
    states: list[np.ndarray] | None = None

    @property
    def e_total(self) -> np.ndarray:
        return np.where(np.isfinite(self.e_gamma), self.e_gamma, self.e_ab)

    def to_csv(self, path) -> None:
        rows = zip(self.times, self.exp_drive, self.exp_prob, self.e_total, self.p_success, self.norm_drift)
        write_csv(path, ["t", "exp_drive", "exp_prob", "e_total", "p_success", "norm_drift"], rows)


def _sample_grid(schedule: Schedule, grid) -> np.ndarray:
    t_f = schedule.t_final
    if grid is None:
        return schedule.boundaries
    g = np.unique(np.asarray(grid, dtype=float))
    slack = 1e-12 * max(1.0, t_f)
    if len(g) == 0 or g[0] < -slack or g[-1] > t_f + slack:
        raise QuenchError("grid-out-of-range", f"sample times must lie in [0, {t_f}]")
    return np.clip(g, 0.0, t_f)


def evolve(
    problem: IsingProblem,
    driver: Driver,
    schedule: Schedule,
    initial: np.ndarray | None = None,
    grid: Sequence[float] | None = None,
    tol: float = DEFAULT_TOL,
    keep_states: bool = False,
) -> Trajectory:
    """Integrate i d psi/dt = [A(t) H_drive + B(t) H_prob] psi from t = 0.

    ``initial`` defaults to the driver ground state.  ``grid`` lists the sample
    times (default: segment boundaries).  ``tol`` bounds the local error per
    step.
    """
    if problem.n != driver.n:
        raise QuenchError("dimension-mismatch", f"problem has n={problem.n}, driver n={driver.n}")
    psi = driver_ground_state(driver) if initial is None else np.array(initial, dtype=complex)
    if psi.shape != (problem.dim,):
        raise QuenchError("dimension-mismatch", f"initial state has shape {psi.shape}")
    check_normalized(psi)
    energies = problem.energies
    samples = _sample_grid(schedule, grid)
    bounds = schedule.boundaries
    dim = problem.dim
    krylov_tol = max(tol * 1e-3, 1e-14)

    states: dict[int, np.ndarray] = {}
    si = 0
    if samples[0] == 0.0:
        states[0] = psi.copy()
        si = 1
    t_now = 0.0
    max_step = np.inf
    for k, seg in enumerate(schedule.segments):
        t_start, t_end = bounds[k], bounds[k + 1]
        last = k == len(schedule.segments) - 1
        idx = []
        while si < len(samples) and (samples[si] <= t_end or last):
            idx.append(si)
            si += 1
        targets = [samples[i] for i in idx]
        if not targets or targets[-1] < t_end:
            targets.append(t_end)
        if seg.constant:
            a, b = seg.controls(0.0)
            op = hamiltonian_apply(driver, energies, a, b)
            outs = krylov.propagate(op, psi, [t - t_start for t in targets], tol=krylov_tol)
        else:
            outs = []
            for t in targets:
                if t > t_now:
                    psi, max_step = _integrate(seg, t_start, driver, energies, psi, t_now, t, tol, dim, max_step)
                    t_now = t
                outs.append(psi)
        for i, st in zip(idx, outs):
            states[i] = st
        psi = outs[-1]
        t_now = t_end

    times = samples
    n_s = len(times)
    cols = {name: np.empty(n_s) for name in ("a", "b", "ed", "ep", "eg", "eab", "p", "drift")}
    for i, t in enumerate(times):
        st = states[i]
        a, b = schedule.controls(t)
        ed, ep, _ = observables(st, problem, driver, 0.0)
        cols["a"][i], cols["b"][i] = a, b
        cols["ed"][i], cols["ep"][i] = ed, ep
        cols["eg"][i] = a / b * ed + ep if b > 0 else np.nan
        cols["eab"][i] = a * ed + b * ep
        cols["p"][i] = success_probability(st, problem)
        cols["drift"][i] = abs(np.linalg.norm(st) - 1.0)
    return Trajectory(
        times=times, a=cols["a"], b=cols["b"], exp_drive=cols["ed"], exp_prob=cols["ep"],
        e_gamma=cols["eg"], e_ab=cols["eab"], p_success=cols["p"], norm_drift=cols["drift"],
        final_state=psi, states=[states[i] for i in range(n_s)] if keep_states else None,
    )


def _integrate(seg, t_start, driver, energies, psi, t0, t1, tol, dim, max_step):
    n, hop0, dd = driver.n, driver.hop, driver.diagonal

    def rhs(t, y):
        a, b = seg.controls(t - t_start)
        hy = (a * dd + b * energies) * y
        if a != 0.0:
            hy -= (a * hop0) * flip_sum(y, n)
        return -1j * hy

    first = None if not np.isfinite(max_step) else min(max_step, t1 - t0)
    # error norm is RMS over components, hence the 1/sqrt(dim) on atol; 10x margin on tol
    sol = solve_ivp(rhs, (t0, t1), psi, method="DOP853", rtol=0.1 * tol, atol=0.1 * tol / math.sqrt(dim),
                    first_step=first)
    if sol.status != 0:
        raise QuenchError("tolerance-not-met", f"integrator failed on [{t0}, {t1}]: {sol.message}")
    steps = np.diff(sol.t)
    return sol.y[:, -1], float(steps[-1]) if len(steps) else max_step


def default_window(n: int, lo: float = 12.5, hi: float = 17.5) -> tuple[float, float]:
    """Short-time averaging window (lo/sqrt(n), hi/sqrt(n))."""
    return lo / math.sqrt(n), hi / math.sqrt(n)


def window_grid(t_lo: float, t_hi: float, points: int = 201) -> np.ndarray:
    return np.linspace(t_lo, t_hi, points)


def time_averaged_success(traj, window: tuple[float, float], min_points: int = 200) -> float:
    """(1/(t_hi - t_lo)) * integral of P(t) over the window, trapezoid rule.

    ``traj`` is anything with ``times`` and ``p_success`` arrays; at least
    ``min_points`` samples must fall inside the window.
    """
    t_lo, t_hi = window
    times = np.asarray(traj.times, dtype=float)
    p = np.asarray(traj.p_success, dtype=float)
    slack = 1e-12 * max(1.0, abs(t_hi))
    if not t_hi > t_lo:
        raise QuenchError("window-out-of-range", "need t_hi > t_lo")
    if t_lo < times[0] - slack or t_hi > times[-1] + slack:
        raise QuenchError("window-out-of-range", f"window {window} outside [{times[0]}, {times[-1]}]")
    inside = (times > t_lo + slack) & (times < t_hi - slack)
    # window ends not on the grid are filled in by linear interpolation
    t_in = np.concatenate(([t_lo], times[inside], [t_hi]))
    p_in = np.concatenate(([np.interp(t_lo, times, p)], p[inside], [np.interp(t_hi, times, p)]))
    if len(t_in) < min_points:
        raise QuenchError("insufficient-samples", f"only {len(t_in)} samples inside the window")
    return float(np.trapezoid(p_in, t_in) / (t_hi - t_lo))


def walk_p_short(problem: IsingProblem, driver: Driver, gamma: float,
                 window: tuple[float, float] | None = None, points: int = 201,
                 tol: float = DEFAULT_TOL) -> float:
    """Time-averaged success probability of a constant-rate walk over ``window``."""
    window = default_window(problem.n) if window is None else window
    sched = make_walk_schedule(gamma, window[1])
    traj = evolve(problem, driver, sched, grid=window_grid(*window, points), tol=tol)
    return time_averaged_success(traj, window)


def walk_random_time_average(problem: IsingProblem, driver: Driver, gamma: float, t_max: float,
                             samples: int = 10_000, seed: int = 0, tol: float = DEFAULT_TOL,
                             t_min: float = 0.0) -> float:
    """Mean success probability of a walk at uniformly random times in [t_min, t_max]."""
    rng = np.random.Generator(np.random.PCG64(seed))
    times = np.sort(rng.uniform(t_min, t_max, samples))
    psi0 = driver_ground_state(driver)
    op = hamiltonian_apply(driver, problem.energies, gamma, 1.0)
    outs = krylov.propagate(op, psi0, times, tol=max(tol * 1e-3, 1e-14))
    gs = problem.ground_indices
    return float(np.mean([np.sum(np.abs(s[gs]) ** 2) for s in outs]))



def check_energy_redistribution(traj: Trajectory, margin: float) -> None:
    """Assert the monotone-quench invariants on a trajectory started in the driver ground state.

    E_Gamma never increases between samples, E_Gamma >= <H_prob> at every
    sample, and the final <H_prob> does not exceed the initial one, each up
    to ``margin``.  Samples with B = 0 carry no E_Gamma and are skipped.
    """
    e = traj.e_gamma
    ok = np.isfinite(e)
    if np.any(np.diff(e[ok]) > margin):
        worst = float(np.max(np.diff(e[ok])))
        raise QuenchError("invariant-violation", f"E_Gamma increased by {worst:.3e}")
    if np.any(e[ok] < traj.exp_prob[ok] - margin):
        raise QuenchError("invariant-violation", "E_Gamma fell below <H_prob>")
    if traj.exp_prob[-1] > traj.exp_prob[0] + margin:
        rise = float(traj.exp_prob[-1] - traj.exp_prob[0])
        raise QuenchError("invariant-violation", f"final <H_prob> exceeds initial by {rise:.3e}")
