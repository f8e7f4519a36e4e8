"""Control-setting heuristics built on the average dynamic coefficient.

* ``gamma_dyn``: the hopping rate maximising Dyn_bar(gamma).
* ``heuristic_schedule``: an annealing schedule s(t) with ds/dt proportional
  to 1/Dyn_bar, A = 1 - s, B = s.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dyncoeff import DynLandscape
from .errors import QuenchError
from .evolve import Schedule, piecewise_linear_schedule
from .ising import Driver, IsingProblem

FLAT_DERIVATIVE = 1e-14
MAX_DOUBLINGS = 10
DEFAULT_DYN_FLOOR = 1e-3


@dataclass(frozen=True)
class GammaDynResult:
    gamma_dyn: float
    dyn_bar_at_peak: float
    curvature: float
    delta_gamma_estimate: float | None
    bracket: tuple[float, float]
    iterations: int


def _derivative(f: Callable[[float], float], g: float) -> float:
    h = max(1e-6, 1e-6 * g)
    return (f(g + h) - f(g - h)) / (2.0 * h)


def _curvature(f: Callable[[float], float], g: float) -> float:
    # wider step than the first derivative: roundoff enters as eps/h^2
    h = 1e-4 * max(1.0, g)
    h = min(h, 0.5 * g)
    return (f(g + h) - 2.0 * f(g) + f(g - h)) / h**2


def default_bracket(landscape: DynLandscape) -> tuple[float, float]:
    """(1e-3 mu1, 1e3 mu1) from the scaled-gap moments; mu1 at Gamma = 1 for biased drivers."""
    mu1 = landscape.gap_stats(1.0).mu1
    if mu1 == 0.0:
        raise QuenchError("flat-landscape", "all scaled gaps are zero")
    return 1e-3 * mu1, 1e3 * mu1


def maximize_dyn(f: Callable[[float], float], bracket: tuple[float, float], tol: float = 1e-9) -> tuple[float, int, tuple[float, float]]:
    """Bisection on the central-difference derivative of f inside ``bracket``.

    Returns (argmax, iterations, bracket actually used).  The upper end is
    doubled up to 2**10 times until the derivative there is negative.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0.0 < lo < hi:
        raise QuenchError("bracket-invalid", f"need 0 < gamma_lo < gamma_hi, got {bracket}")
    d_lo, d_hi = _derivative(f, lo), _derivative(f, hi)
    hi_max = hi * 2.0**MAX_DOUBLINGS
    while d_hi >= 0.0 and hi < hi_max:
        if abs(d_lo) < FLAT_DERIVATIVE and abs(d_hi) < FLAT_DERIVATIVE:
            break
        hi *= 2.0
        d_hi = _derivative(f, hi)
    if abs(d_lo) < FLAT_DERIVATIVE and abs(d_hi) < FLAT_DERIVATIVE:
        raise QuenchError("flat-landscape", "Dyn_bar derivative vanishes across the bracket")
    if not (d_lo > 0.0 > d_hi):
        raise QuenchError("bracket-invalid", f"derivative does not change sign on ({lo}, {hi})")
    used = (lo, hi)
    it = 0
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if _derivative(f, mid) > 0.0:
            lo = mid
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), it, used


def gamma_dyn(problem: IsingProblem, driver: Driver, bracket: tuple[float, float] | None = None,
              samples: int | None = None, seed: int = 0, tol: float = 1e-9,
              landscape: DynLandscape | None = None) -> GammaDynResult:
    """Hopping rate at the maximum of Dyn_bar.

    ``samples=None`` evaluates Dyn_bar exactly; otherwise on a fixed sample of
    pairs, and the result carries a sampling-error estimate for gamma.
    """
    land = DynLandscape(problem, driver, samples, seed) if landscape is None else landscape
    if bracket is None:
        bracket = default_bracket(land)
    g, it, used = maximize_dyn(land, bracket, tol)
    curv = _curvature(land, g)
    dg = None
    if land.samples is not None and curv < 0:
        dg = gamma_sampling_error(curv, land.samples)
    return GammaDynResult(g, land(g), curv, dg, used, it)


def gamma_sampling_error(curvature: float, n_samples: int) -> float:
    """Order-of-magnitude spread of gamma_dyn from sampling noise in Dyn_bar.

    Equates the 0.25/sqrt(N) noise in Dyn_bar with the quadratic drop
    -(dgamma)^2 * curvature away from the peak.
    """
    if not curvature < 0:
        raise QuenchError("nonnegative-curvature", f"curvature must be negative, got {curvature}")
    if n_samples < 1:
        raise QuenchError("insufficient-samples", "need n_samples >= 1")
    return math.sqrt(0.25 / math.sqrt(n_samples)) / math.sqrt(-curvature)


@dataclass(frozen=True)
class HeuristicSchedule:
    """Knots (t_i, s_i) of a piecewise-linear s(t); ``dyn_bar`` holds the
    clamped Dyn_bar value used for each interval."""

    t: np.ndarray
    s: np.ndarray
    dyn_bar: np.ndarray
    iterations: int
    converged: bool
    warning: str | None = None
    history: list = field(default_factory=list, repr=False, compare=False)

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    def to_schedule(self) -> Schedule:
        return piecewise_linear_schedule(self.t, self.s)

    def to_json(self) -> str:
        return json.dumps({"t": [float(x) for x in self.t], "s": [float(x) for x in self.s]})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def load_knots(path: str | Path) -> Schedule:
    """Piecewise-linear-in-s schedule from a {"t": [...], "s": [...]} file."""
    try:
        d = json.loads(Path(path).read_text())
        return piecewise_linear_schedule(d["t"], d["s"])
    except OSError as exc:
        raise QuenchError("io-error", str(exc)) from exc
    except (KeyError, json.JSONDecodeError) as exc:
        raise QuenchError("invalid-knots", f"{path}: {exc}") from exc


def gamma_of_s(s: np.ndarray) -> np.ndarray:
    return (1.0 - s) / s


def heuristic_schedule(problem: IsingProblem | None, driver: Driver | None, t_f: float, m_knots: int = 10,
                       dyn_floor: float = DEFAULT_DYN_FLOOR, dyn_fn: Callable[[float], float] | None = None,
                       max_iter: int = 50, tol: float = 1e-6,
                       samples: int | None = None, seed: int = 0) -> HeuristicSchedule:
    """Schedule with increments ds_i proportional to dt / Dyn_bar on uniform time knots.

    Dyn_bar is evaluated at each interval's midpoint s, mapped to
    Gamma = (1 - s)/s, and clamped below by ``dyn_floor``.  Since the knot
    positions depend on Dyn_bar and vice versa, the knots are found by
    fixed-point iteration starting from the linear schedule; the update is
    damped whenever the knot movement stops shrinking.  ``dyn_fn`` replaces
    the problem's Dyn_bar landscape (problem and driver may then be None).
    """
    if m_knots < 3:
        raise QuenchError("invalid-knots", f"m_knots must be >= 3, got {m_knots}")
    if not t_f > 0:
        raise QuenchError("nonpositive-duration", f"t_f must be > 0, got {t_f}")
    if not dyn_floor > 0:
        raise QuenchError("invalid-floor", f"dyn_floor must be > 0, got {dyn_floor}")
    f = DynLandscape(problem, driver, samples, seed) if dyn_fn is None else dyn_fn

    def dyn_at(s: np.ndarray) -> np.ndarray:
        mids = 0.5 * (s[:-1] + s[1:])
        return np.maximum(np.array([f(float(g)) for g in gamma_of_s(mids)]), dyn_floor)

    def knots_from(dyn: np.ndarray) -> np.ndarray:
        w = 1.0 / dyn
        s = np.concatenate(([0.0], np.cumsum(w) / np.sum(w)))
        s[-1] = 1.0
        return s

    t = np.arange(m_knots + 1) * (t_f / m_knots)
    t[-1] = t_f
    s = np.arange(m_knots + 1) / m_knots
    weight, last_move = 1.0, math.inf
    history = [s]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        target = knots_from(dyn_at(s))
        move = float(np.max(np.abs(target - s)))
        if move < tol:
            s = target
            converged = True
            break
        if move >= last_move:
            weight *= 0.5
        last_move = move
        s = (1.0 - weight) * s + weight * target
        history.append(s)
    dyn = dyn_at(s)
    warning = None if converged else f"fixed-point iteration did not converge in {max_iter} iterations"
    if np.any(np.diff(s) <= 0):
        raise QuenchError("invalid-knots", "heuristic knots are not strictly increasing")
    return HeuristicSchedule(t, s, dyn, it, converged, warning, history)
