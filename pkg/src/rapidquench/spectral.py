"""Ground / first-excited gap of H(s) = (1 - s) H_drive + s H_prob along s."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .dyncoeff import DynLandscape
from .errors import QuenchError
from .evolve import hamiltonian_apply
from .io import write_csv
from .ising import Driver, IsingProblem

MAX_QUBITS = 14
DEGENERACY_TOL = 1e-10
DEFAULT_POINTS = 201
DENSE_MAX_DIM = 16


@dataclass(frozen=True)
class GapScan:
    s_grid: np.ndarray
    gaps: np.ndarray
    e0: np.ndarray
    e1: np.ndarray
    dyn_bar: np.ndarray

    @property
    def s_min_gap(self) -> float:
        return float(self.s_grid[np.argmin(self.gaps)])

    @property
    def s_max_dyn(self) -> float:
        return float(self.s_grid[np.argmax(self.dyn_bar)])

    def to_csv(self, path) -> None:
        write_csv(path, ["s", "gap", "dyn_bar"], zip(self.s_grid, self.gaps, self.dyn_bar))


def first_gap(levels: np.ndarray, tol: float = DEGENERACY_TOL) -> tuple[float, float] | None:
    """(E0, E1) with E1 the lowest level more than ``tol`` above E0, or None."""
    levels = np.sort(levels)
    above = levels[levels > levels[0] + tol]
    return (float(levels[0]), float(above[0])) if len(above) else None


def _dense(op, dim: int) -> np.ndarray:
    eye = np.eye(dim, dtype=complex)
    return np.column_stack([op(eye[:, i]) for i in range(dim)]).real


class _LowLevels:
    """Lowest eigenvalues of a sequence of Hamiltonians, warm-started."""

    def __init__(self, dim: int):
        self.dim = dim
        self.noise = np.random.Generator(np.random.PCG64(0)).standard_normal(dim)
        self.prev = None

    def __call__(self, op, norm_bound: float) -> tuple[float, float]:
        dim = self.dim
        if dim <= DENSE_MAX_DIM:
            pair = first_gap(np.linalg.eigvalsh(_dense(op, dim)))
            if pair is None:
                raise QuenchError("eigensolver-no-convergence", "spectrum has a single distinct level")
            return pair
        # c - H is positive semidefinite since the spectrum of H lies in [-c, c]
        c = norm_bound
        shifted = LinearOperator((dim, dim), matvec=lambda v: c * v - op(v).real, dtype=float)
        v0 = self.noise if self.prev is None else self.prev + 0.1 * np.linalg.norm(self.prev) * self.noise / np.sqrt(dim)
        k = 4
        while True:
            k = min(k, dim - 2)
            try:
                w, V = eigsh(shifted, k=k, which="LA", v0=v0, tol=1e-13, maxiter=50 * dim)
            except ArpackNoConvergence as exc:
                raise QuenchError("eigensolver-no-convergence", str(exc)) from exc
            order = np.argsort(-w)
            levels = c - w[order]
            pair = first_gap(levels)
            if pair is not None:
                self.prev = V[:, order[0]]
                return pair
            if k >= dim - 2:
                raise QuenchError("eigensolver-no-convergence", "no distinct excited level found")
            k *= 2


def gap_scan(problem: IsingProblem, driver: Driver, s_grid=None,
             landscape: DynLandscape | None = None) -> GapScan:
    """Gap E1 - E0 and Dyn_bar(Gamma = (1 - s)/s) on ``s_grid`` (201 points by default).

    Degenerate ground levels (within 1e-10) are skipped when locating E1.
    """
    n = problem.n
    if n > MAX_QUBITS:
        raise QuenchError("too-large-n", f"gap_scan supports n <= {MAX_QUBITS}")
    if driver.n != n:
        raise QuenchError("dimension-mismatch", f"problem has n={n}, driver n={driver.n}")
    s_grid = np.linspace(0.0, 1.0, DEFAULT_POINTS) if s_grid is None else np.asarray(s_grid, dtype=float)
    if np.any(s_grid < 0) or np.any(s_grid > 1):
        raise QuenchError("grid-out-of-range", "s values must lie in [0, 1]")
    land = DynLandscape(problem, driver) if landscape is None else landscape
    energies = problem.energies
    e_max = float(np.max(np.abs(energies)))
    d_max = float(np.max(np.abs(driver.diagonal))) + n * abs(driver.hop)
    solver = _LowLevels(problem.dim)
    e0, e1, dyn = [], [], []
    for s in s_grid:
        if s == 1.0:
            pair = first_gap(energies)
            if pair is None:
                raise QuenchError("eigensolver-no-convergence", "problem spectrum has a single level")
        else:
            op = hamiltonian_apply(driver, energies, 1.0 - s, s)
            pair = solver(op, (1.0 - s) * d_max + s * e_max + 1.0)
        e0.append(pair[0])
        e1.append(pair[1])
        dyn.append(land((1.0 - s) / s) if s > 0 else 0.0)
    e0, e1 = np.array(e0), np.array(e1)
    return GapScan(s_grid, e1 - e0, e0, e1, np.array(dyn))
