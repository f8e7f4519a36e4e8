"""Problem and driver Hamiltonians on n qubits.

Basis convention (used everywhere in the package): computational basis index
``j`` has bit ``b`` equal to the state of qubit ``b`` (little-endian), and the
Z eigenvalue of qubit ``b`` is ``s_b = +1`` when that bit is 0 and ``-1`` when
it is 1.  State vectors are plain complex ``numpy`` arrays of length ``2**n``.

Problem Hamiltonians are diagonal:

    E(j) = -1/2 sum_{a != b} J_ab s_a s_b - sum_b h_b s_b

Drivers are shifted so that their ground energy is exactly zero:

    transverse:  n*1 - sum_b X_b
    biased:      n*1 - sum_b (cos(theta) X_b + g_b sin(theta) Z_b)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import QuenchError

MAX_QUBITS = 24
_CHUNK = 1 << 16


def spins(indices: np.ndarray, n: int) -> np.ndarray:
    """Z eigenvalues (+1/-1) of each qubit for the given basis indices, shape (len, n)."""
    bits = (np.asarray(indices, dtype=np.int64)[:, None] >> np.arange(n)) & 1
    return 1.0 - 2.0 * bits


@dataclass(frozen=True, eq=False)
class IsingProblem:
    """Diagonal problem Hamiltonian.

    ``couplings`` is symmetric with zero diagonal.  Problems that are not
    2-local (unstructured search) carry an explicit ``diagonal`` instead and
    zero couplings/fields.
    """

    n: int
    couplings: np.ndarray
    fields: np.ndarray
    id: str = ""
    seed: int | None = None
    sigma: float = 0.0
    diagonal: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 1 <= self.n <= MAX_QUBITS:
            raise QuenchError("invalid-n", f"n must be in [1, {MAX_QUBITS}], got {self.n}")
        J = np.asarray(self.couplings, dtype=float)
        h = np.asarray(self.fields, dtype=float)
        if J.shape != (self.n, self.n) or h.shape != (self.n,):
            raise QuenchError("dimension-mismatch", "couplings must be n x n and fields length n")
        if not np.array_equal(J, J.T) or np.any(np.diag(J) != 0):
            raise QuenchError("invalid-couplings", "couplings must be symmetric with zero diagonal")
        J.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "couplings", J)
        object.__setattr__(self, "fields", h)
        if self.diagonal is not None:
            d = np.asarray(self.diagonal, dtype=float)
            if d.shape != (1 << self.n,):
                raise QuenchError("dimension-mismatch", "diagonal must have length 2**n")
            d.setflags(write=False)
            object.__setattr__(self, "diagonal", d)

    @property
    def dim(self) -> int:
        return 1 << self.n

    @cached_property
    def energies(self) -> np.ndarray:
        e = problem_energies(self)
        e.setflags(write=False)
        return e

    @cached_property
    def ground_energy(self) -> float:
        return float(self.energies.min())

    @cached_property
    def ground_indices(self) -> np.ndarray:
        e = self.energies
        # exact ties only; continuous ensembles are non-degenerate almost surely
        return np.flatnonzero(e == e.min())


def problem_energies(problem: IsingProblem) -> np.ndarray:
    """Diagonal energies E(j) for all 2**n basis states."""
    n = problem.n
    if n > MAX_QUBITS:
        raise QuenchError("too-large-n", f"n={n} exceeds memory guard {MAX_QUBITS}")
    if problem.diagonal is not None:
        return np.array(problem.diagonal, dtype=float)
    J, h = problem.couplings, problem.fields
    dim = 1 << n
    out = np.empty(dim)
    for start in range(0, dim, _CHUNK):
        s = spins(np.arange(start, min(dim, start + _CHUNK)), n)
        out[start:start + len(s)] = -0.5 * np.einsum("ia,ia->i", s @ J, s) - s @ h
    return out


def make_sk_instance(n: int, sigma: float = 1.0, seed: int = 0, convention: str = "upper") -> IsingProblem:
    """Sherrington-Kirkpatrick instance with Gaussian couplings and fields.

    Draws come from ``numpy.random.PCG64(seed)`` via ``Generator.standard_normal``:
    first the couplings in row-major order, then the n fields.

    ``convention="upper"`` draws one J_ab ~ N(0, sigma^2) per unordered pair a < b.
    ``convention="ordered"`` draws J_ab and J_ba independently and stores their
    mean; single-flip gaps then have standard deviation sigma*sqrt(2(n+1)).
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise QuenchError("invalid-n", f"SK instances need n >= 2, got {n}")
    if n > MAX_QUBITS:
        raise QuenchError("too-large-n", f"n={n} exceeds memory guard {MAX_QUBITS}")
    if not sigma > 0:
        raise QuenchError("invalid-sigma", f"sigma must be positive, got {sigma}")
    if not 0 <= seed < 2**64:
        raise QuenchError("invalid-seed", "seed must be a 64-bit unsigned integer")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    J = np.zeros((n, n))
    if convention == "upper":
        iu = np.triu_indices(n, 1)
        J[iu] = sigma * rng.standard_normal(len(iu[0]))
        J = J + J.T
        tag = ""
    elif convention == "ordered":
        off = ~np.eye(n, dtype=bool)
        J[off] = sigma * rng.standard_normal(n * (n - 1))
        J = 0.5 * (J + J.T)
        tag = "o"
    else:
        raise QuenchError("invalid-convention", f"unknown coupling convention {convention!r}")
    h = sigma * rng.standard_normal(n)
    return IsingProblem(n, J, h, id=f"sk{tag}-n{n}-s{seed}", seed=int(seed), sigma=float(sigma))


def make_two_qubit_problem() -> IsingProblem:
    """H = -Z1 Z2 - Z1/2, where Z1 acts on qubit 1 (bit 1) of the index.

    Energies in index order (|00>, |01>, |10>, |11>) are (-1.5, 0.5, 1.5, -0.5).
    """
    J = np.array([[0.0, 1.0], [1.0, 0.0]])
    h = np.array([0.0, 0.5])
    return IsingProblem(2, J, h, id="two-qubit")


def make_search_problem(n: int, marked: int) -> IsingProblem:
    """Unstructured search, H = 1 - 2|m><m|, stored as an explicit diagonal."""
    if not 1 <= n <= MAX_QUBITS:
        raise QuenchError("invalid-n", f"n must be in [1, {MAX_QUBITS}], got {n}")
    if not 0 <= marked < (1 << n):
        raise QuenchError("marked-out-of-range", f"marked={marked} not in [0, 2**{n})")
    diag = np.ones(1 << n)
    diag[marked] = -1.0
    return IsingProblem(n, np.zeros((n, n)), np.zeros(n), id=f"search-n{n}-m{marked}", diagonal=diag)


@dataclass(frozen=True)
class Driver:
    kind: str
    n: int
    guess: tuple[int, ...] | None = None
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("transverse", "biased"):
            raise QuenchError("invalid-driver", f"unknown driver kind {self.kind!r}")
        if not 1 <= self.n <= MAX_QUBITS:
            raise QuenchError("invalid-n", f"n must be in [1, {MAX_QUBITS}], got {self.n}")
        if self.kind == "biased":
            if self.guess is None or len(self.guess) != self.n or any(g not in (-1, 1) for g in self.guess):
                raise QuenchError("invalid-guess", "biased driver needs a length-n guess of +1/-1 values")
            if not 0.0 <= self.theta <= math.pi / 2:
                raise QuenchError("invalid-theta", f"theta must be in [0, pi/2], got {self.theta}")

    @property
    def dim(self) -> int:
        return 1 << self.n

    @property
    def hop(self) -> float:
        """Magnitude of every nonzero off-diagonal element."""
        return 1.0 if self.kind == "transverse" else math.cos(self.theta)

    @property
    def is_unbiased(self) -> bool:
        return self.kind == "transverse" or math.sin(self.theta) == 0.0

    @cached_property
    def diagonal(self) -> np.ndarray:
        if self.is_unbiased:
            d = np.full(self.dim, float(self.n))
        else:
            d = np.empty(self.dim)
            g = np.asarray(self.guess, dtype=float)
            st = math.sin(self.theta)
            for start in range(0, self.dim, _CHUNK):
                s = spins(np.arange(start, min(self.dim, start + _CHUNK)), self.n)
                d[start:start + len(s)] = self.n - st * (s @ g)
        d.setflags(write=False)
        return d


def transverse_driver(n: int) -> Driver:
    return Driver("transverse", n)


def biased_driver(guess, theta: float) -> Driver:
    """Biased driver towards ``guess`` (sequence of +1/-1 Z eigenvalues per qubit)."""
    g = tuple(int(x) for x in guess)
    return Driver("biased", len(g), guess=g, theta=float(theta))


def guess_from_index(j: int, n: int) -> tuple[int, ...]:
    return tuple(int(x) for x in spins(np.array([j]), n)[0])


def flip_bit(psi: np.ndarray, b: int) -> np.ndarray:
    """Apply X on qubit ``b``: returns the vector with entries psi[j ^ (1 << b)]."""
    return psi.reshape(-1, 2, 1 << b)[:, ::-1, :].reshape(-1)


def flip_sum(psi: np.ndarray, n: int) -> np.ndarray:
    """sum_b X_b psi."""
    view = psi.reshape(-1)
    out = flip_bit(view, 0).copy()
    for b in range(1, n):
        out += flip_bit(view, b)
    return out


def driver_apply(driver: Driver, psi: np.ndarray) -> np.ndarray:
    """H_drive @ psi, matrix-free."""
    psi = np.asarray(psi)
    if psi.shape != (driver.dim,):
        raise QuenchError("dimension-mismatch", f"state has shape {psi.shape}, driver acts on {driver.dim}")
    if driver.kind == "transverse":
        return driver.n * psi - flip_sum(psi, driver.n)
    return driver.diagonal * psi - driver.hop * flip_sum(psi, driver.n)


def driver_ground_state(driver: Driver) -> np.ndarray:
    """Zero-energy ground state of the driver as a product state.

    Each qubit points along its local field (cos(theta), 0, g sin(theta)).
    """
    n = driver.n
    if driver.kind == "transverse":
        return np.full(driver.dim, 2.0 ** (-n / 2), dtype=complex)
    psi = np.ones(1, dtype=complex)
    for b in range(n):
        polar = math.acos(max(-1.0, min(1.0, driver.guess[b] * math.sin(driver.theta))))
        qubit = np.array([math.cos(polar / 2), math.sin(polar / 2)], dtype=complex)
        psi = np.kron(qubit, psi)
    return psi


def uniform_state(n: int) -> np.ndarray:
    return np.full(1 << n, 2.0 ** (-n / 2), dtype=complex)


def basis_state(n: int, j: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[j] = 1.0
    return psi


def check_normalized(psi: np.ndarray, tol: float = 1e-10) -> None:
    drift = abs(np.linalg.norm(psi) - 1.0)
    if drift > tol:
        raise QuenchError("not-normalized", f"state norm deviates from 1 by {drift:.3e}")
