"""Lanczos approximation of exp(-i H t) psi for a Hermitian, matrix-free H."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Apply = Callable[[np.ndarray], np.ndarray]


def lanczos(apply: Apply, v0: np.ndarray, m_max: int, breakdown: float = 1e-13):
    """Lanczos with full reorthogonalization.

    Returns ``(V, alpha, beta, beta_next)`` where the rows of ``V`` are the
    orthonormal Krylov vectors, ``alpha``/``beta`` define the tridiagonal
    projection and ``beta_next`` is the norm of the unprocessed residual
    (0.0 on an invariant subspace).
    """
    dim = v0.shape[0]
    m_max = min(m_max, dim)
    V = np.empty((m_max, dim), dtype=complex)
    alpha = np.empty(m_max)
    beta = np.empty(max(m_max - 1, 0))
    V[0] = v0 / np.linalg.norm(v0)
    scale = 0.0
    for k in range(m_max):
        w = apply(V[k])
        alpha[k] = np.vdot(V[k], w).real
        scale = max(scale, abs(alpha[k]))
        # two passes of classical Gram-Schmidt against the whole basis
        for _ in range(2):
            w = w - V[: k + 1].T @ (V[: k + 1].conj() @ w)
        b = np.linalg.norm(w)
        if b <= breakdown * max(scale, 1.0):
            return V[: k + 1], alpha[: k + 1], beta[:k], 0.0
        if k + 1 == m_max:
            return V, alpha, beta, b
        scale = max(scale, b)
        beta[k] = b
        V[k + 1] = w / b
    raise AssertionError("unreachable")


def _tridiag_eig(alpha, beta):
    T = np.diag(alpha)
    if len(beta):
        T += np.diag(beta, 1) + np.diag(beta, -1)
    return np.linalg.eigh(T)


def propagate(
    apply: Apply,
    psi: np.ndarray,
    times: Sequence[float],
    tol: float = 1e-12,
    m_max: int = 40,
) -> list[np.ndarray]:
    """States exp(-i H t) psi for each t in the ascending, non-negative ``times``.

    One Krylov basis is reused for as many consecutive times as its a-posteriori
    error estimate allows; the basis is then rebuilt from the last state reached.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and times[0] < 0):
        raise ValueError("times must be ascending and non-negative")
    out: list[np.ndarray] = []
    cur = np.array(psi, dtype=complex)
    t_cur = 0.0
    i = 0
    while i < len(times):
        if times[i] == t_cur:
            out.append(cur.copy())
            i += 1
            continue
        nrm = np.linalg.norm(cur)
        V, alpha, beta, beta_next = lanczos(apply, cur, m_max)
        theta, Q = _tridiag_eig(alpha, beta)
        q0 = Q[0]

        def coeffs(tau):
            return Q @ (np.exp(-1j * theta * tau) * q0)

        def err(c):
            return beta_next * abs(c[-1]) * nrm

        covered = False
        while i < len(times):
            c = coeffs(times[i] - t_cur)
            if err(c) > tol:
                break
            out.append(nrm * (c @ V))
            covered = True
            i += 1
        if covered:
            cur = out[-1]
            t_cur = times[i - 1]
            continue
        # the next sample is out of reach of this basis: take the largest safe substep
        lo, hi = 0.0, times[i] - t_cur
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if err(coeffs(mid)) <= tol:
                lo = mid
            else:
                hi = mid
        if lo == 0.0:
            raise RuntimeError("Krylov step size underflow")
        cur = nrm * (coeffs(lo) @ V)
        t_cur += lo
    return out


def expm_apply(apply: Apply, psi: np.ndarray, t: float, tol: float = 1e-12, m_max: int = 40) -> np.ndarray:
    """exp(-i H t) psi."""
    return propagate(apply, psi, [t], tol=tol, m_max=m_max)[0]
