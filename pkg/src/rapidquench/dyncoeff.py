"""Local transfer, driver and dynamic coefficients and their averages.

For a pair of basis states j, k connected by the driver, the local 2x2
Hamiltonian Gamma*H_drive^(jk) + H_prob^(jk) is summarised by

    T = 2 Gamma |h_jk| / (2 Gamma |h_jk| + |Delta_jk|)
    D = same ratio, evaluated in the eigenbasis of the local driver block
    Dyn = T * D

with Delta_jk = (Gamma d_j + E_j) - (Gamma d_k + E_k), d the driver diagonal.
For unbiased drivers D = 1 - T and Dyn = x / (1 + x)^2 with x = zeta / Gamma,
zeta = |Delta| / (2 |h_jk|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import QuenchError
from .ising import Driver, IsingProblem

EXACT_MAX_QUBITS = 20
SAMPLE_MAX_QUBITS = 24
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class LocalPair:
    j: int
    k: int
    delta: float
    offdiag: float
    drive_delta: float = 0.0

    def __post_init__(self):
        if not self.offdiag > 0:
            raise QuenchError("not-connected", f"states {self.j} and {self.k} are not connected by the driver")

    @property
    def zeta(self) -> float:
        return abs(self.delta) / (2.0 * self.offdiag)

    def total_delta(self, gamma: float) -> float:
        return gamma * self.drive_delta + self.delta


def local_pair(problem: IsingProblem, driver: Driver, j: int, k: int) -> LocalPair:
    if bin(j ^ k).count("1") != 1:
        raise QuenchError("not-connected", f"states {j} and {k} differ in more than one bit")
    e, d = problem.energies, driver.diagonal
    return LocalPair(j, k, float(e[j] - e[k]), driver.hop, float(d[j] - d[k]))


def transfer_coefficient(pair: LocalPair, gamma: float) -> float:
    off = 2.0 * gamma * pair.offdiag
    den = off + abs(pair.total_delta(gamma))
    return 0.0 if den == 0.0 else off / den


def driver_coefficient(pair: LocalPair, gamma: float) -> float:
    """Ratio functional in the local driver eigenbasis (explicit 2x2 diagonalization)."""
    hd = np.array([[0.5 * pair.drive_delta, -pair.offdiag], [-pair.offdiag, -0.5 * pair.drive_delta]])
    hp = np.diag([0.5 * pair.delta, -0.5 * pair.delta])
    lam, U = np.linalg.eigh(hd)
    hp_rot = U.T @ hp @ U
    off = 2.0 * abs(hp_rot[0, 1])
    den = off + abs(hp_rot[0, 0] - hp_rot[1, 1] + gamma * (lam[0] - lam[1]))
    if den == 0.0:
        # both local Hamiltonians vanish; keeps D = 1 - T for unbiased drivers
        return 1.0 - transfer_coefficient(pair, gamma)
    return off / den


def dyn_coefficient(pair: LocalPair, gamma: float) -> float:
    return transfer_coefficient(pair, gamma) * driver_coefficient(pair, gamma)


def dyn_values(delta: np.ndarray, drive_delta: np.ndarray | None, hop: float, gamma: float) -> np.ndarray:
    """Vectorised Dyn for many pairs sharing the hop magnitude ``hop``."""
    delta = np.asarray(delta, dtype=float)
    if gamma == 0.0 or math.isinf(gamma) or hop == 0.0:
        return np.zeros_like(delta)
    if drive_delta is None or not np.any(drive_delta):
        # x/(1+x)^2 with x = |delta|/(2 gamma hop), written to stay finite for tiny gamma
        off, gap = 2.0 * hop * gamma, np.abs(delta)
        den = (off + gap) ** 2
        return np.divide(off * gap, den, out=np.zeros_like(delta), where=den > 0)
    off_t = 2.0 * gamma * hop
    total = gamma * drive_delta + delta
    t = off_t / (off_t + np.abs(total))
    # local driver (dd/2) sz - hop sx has eigen-axis at angle alpha from z
    r = np.sqrt(0.25 * drive_delta**2 + hop**2)
    cos_a, sin_a = 0.5 * drive_delta / r, hop / r
    off_d = np.abs(delta) * sin_a
    den = off_d + np.abs(delta * cos_a + 2.0 * gamma * r)
    d = np.divide(off_d, den, out=np.zeros_like(delta), where=den > 0)
    return t * d


@dataclass(frozen=True)
class DynReport:
    gamma: float
    dyn_bar: float
    dyn_bar_error: float
    method: str
    n_pairs: int
    empirical_error: float | None = None
    dyn_values: np.ndarray | None = None


@dataclass(frozen=True)
class GapStats:
    """Moments of the scaled gaps zeta over driver-connected pairs.

    ``mu2`` is the second central moment.  ``degenerate`` flags mu1 == 0, in
    which case ``ratio`` is infinite.
    """

    mu1: float
    mu2: float
    ratio: float
    count: int
    sigma_gap: float
    degenerate: bool = False


def _gap_stats(zeta: np.ndarray, signed_delta: np.ndarray) -> GapStats:
    count = len(zeta)
    mu1 = float(np.mean(zeta))
    mu2 = float(np.mean((zeta - mu1) ** 2))
    sigma = float(np.sqrt(np.mean(signed_delta**2)))
    if mu1 == 0.0:
        return GapStats(0.0, mu2, math.inf, count, sigma, degenerate=True)
    return GapStats(mu1, mu2, mu2 / mu1**2, count, sigma)


def combine_gap_stats(stats) -> GapStats:
    """Pool several GapStats as if their pairs had been collected together."""
    stats = list(stats)
    total = sum(s.count for s in stats)
    mu1 = sum(s.count * s.mu1 for s in stats) / total
    mu2 = sum(s.count * (s.mu2 + (s.mu1 - mu1) ** 2) for s in stats) / total
    sigma = math.sqrt(sum(s.count * s.sigma_gap**2 for s in stats) / total)
    if mu1 == 0.0:
        return GapStats(0.0, mu2, math.inf, total, sigma, degenerate=True)
    return GapStats(mu1, mu2, mu2 / mu1**2, total, sigma)


class DynLandscape:
    """Pair data for one (problem, driver), evaluated at any Gamma.

    With ``samples=None`` every unordered connected pair is enumerated once
    (n * 2**(n-1) pairs).  Otherwise ``samples`` pairs are drawn with a
    counter-based Philox generator keyed by ``seed``: uniform j, uniform bit.
    """

    def __init__(self, problem: IsingProblem, driver: Driver, samples: int | None = None, seed: int = 0):
        if problem.n != driver.n:
            raise QuenchError("dimension-mismatch", f"problem has n={problem.n}, driver n={driver.n}")
        n = problem.n
        self.n = n
        self.hop = driver.hop
        self.samples = samples
        e, d = problem.energies, driver.diagonal
        if samples is None:
            if n > EXACT_MAX_QUBITS:
                raise QuenchError("too-large-n", f"exact mode supports n <= {EXACT_MAX_QUBITS}")
            idx = np.arange(1 << n)
            js, ks = [], []
            for b in range(n):
                low = idx[(idx >> b) & 1 == 0]
                js.append(low)
                ks.append(low | (1 << b))
            j, k = np.concatenate(js), np.concatenate(ks)
        else:
            if n > SAMPLE_MAX_QUBITS:
                raise QuenchError("too-large-n", f"sample mode supports n <= {SAMPLE_MAX_QUBITS}")
            if samples < 1:
                raise QuenchError("invalid-samples", "need at least one sample")
            rng = np.random.Generator(np.random.Philox(key=seed))
            j = rng.integers(0, 1 << n, size=samples)
            k = j ^ (1 << rng.integers(0, n, size=samples))
        self.delta = e[j] - e[k]
        dd = d[j] - d[k]
        self.drive_delta = dd if np.any(dd) else None

    @property
    def method(self) -> str:
        return "exact" if self.samples is None else f"sampled({self.samples})"

    def values(self, gamma: float) -> np.ndarray:
        return dyn_values(self.delta, self.drive_delta, self.hop, gamma)

    def __call__(self, gamma: float) -> float:
        return float(np.mean(self.values(gamma)))

    def report(self, gamma: float, keep_values: bool = False) -> DynReport:
        v = self.values(gamma)
        m = len(v)
        if self.samples is None:
            err, emp = 0.0, None
        else:
            err, emp = 0.25 / math.sqrt(m), float(np.std(v, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
        return DynReport(gamma, float(np.mean(v)), err, self.method, m, emp, v if keep_values else None)

    def gap_stats(self, gamma: float | None = None) -> GapStats:
        if self.drive_delta is None:
            total = self.delta
        else:
            if gamma is None:
                raise QuenchError("gamma-required", "scaled gaps of a biased driver depend on Gamma")
            total = gamma * self.drive_delta + self.delta
        return _gap_stats(np.abs(total) / (2.0 * self.hop), total)


def average_dyn(problem: IsingProblem, driver: Driver, gamma: float,
                samples: int | None = None, seed: int = 0) -> DynReport:
    """Mean Dyn over connected pairs; exact enumeration when ``samples`` is None."""
    return DynLandscape(problem, driver, samples, seed).report(gamma)


def scaled_gap_moments(problem: IsingProblem, driver: Driver, samples: int | None = None,
                       seed: int = 0, gamma: float | None = None) -> GapStats:
    return DynLandscape(problem, driver, samples, seed).gap_stats(gamma)


def golden_max(f, lo: float, hi: float, tol: float = 1e-8) -> tuple[float, float]:
    """Golden-section search for the maximum of a unimodal f on [lo, hi]."""
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_PHI * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_PHI * (hi - lo)
            f1 = f(x1)
    x = 0.5 * (lo + hi)
    return x, f(x)


def bound_objective(c: float, ratio: float) -> float:
    return (1.0 - c) / (2.0 - c) ** 2 * (1.0 - ratio / c**2)


def dyn_lower_bound(ratio: float) -> tuple[float, float]:
    """Lower bound on max_Gamma Dyn_bar from the scaled-gap moment ratio.

    Returns ``(bound, c)``; the bound is clamped to 0 where the optimum is
    negative (ratio >= 1).
    """
    if not ratio >= 0:
        raise QuenchError("invalid-ratio", f"moment ratio must be >= 0, got {ratio}")
    if math.isinf(ratio):
        return 0.0, 1.0
    eps = 1e-10
    c, val = golden_max(lambda c: bound_objective(c, ratio), eps, 1.0 - eps, tol=1e-9)
    return max(val, 0.0), c
