"""Dense real-matrix numerics used throughout the package.

Eigenvalues, spectral radius, Schur-stability tests, the discrete Lyapunov
equation F'PF - P + Q = 0, and the discrete algebraic Riccati equation

    P = I + A'PA - A'PG(G'PG + I)^-1 G'PA

with a symmetric PSD "Gramian" input matrix G. The Riccati equation is
solved by the monotone fixed-point scheme

    P_l = I + A' Pbar_{l-1} A,      Pbar_l = (P_l^-1 + GG)^-1,

starting from Pbar_0 = 0, which converges from below to the stabilizing
solution whenever (A, G) is stabilizable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NumericFailure

__all__ = [
    "Spectrum",
    "eigenvalues",
    "spectral_radius",
    "is_schur_stable",
    "solve_discrete_lyapunov",
    "solve_dare",
    "dare_residual",
    "dare_closed_loop",
    "riccati_iterates",
]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a square matrix, sorted by descending magnitude."""

    eigenvalues: np.ndarray
    spectral_radius: float


def _as_square(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("matrix has non-finite entries")
    return a


def eigenvalues(m) -> Spectrum:
    """Full spectrum of a real square matrix, magnitude-sorted descending."""
    a = _as_square(m)
    try:
        ev = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NumericFailure(f"eigenvalue computation failed: {exc}") from exc
    order = np.lexsort((-ev.imag, -ev.real, -np.abs(ev)))
    ev = ev[order]
    return Spectrum(eigenvalues=ev, spectral_radius=float(np.abs(ev[0])) if ev.size else 0.0)


def spectral_radius(m) -> float:
    return eigenvalues(m).spectral_radius


def is_schur_stable(m, margin: float = 0.0) -> bool:
    """True iff every eigenvalue magnitude is strictly below 1 - margin."""
    return spectral_radius(m) < 1.0 - margin


def _check_symmetric_psd(q: np.ndarray, name: str, definite: bool) -> np.ndarray:
    if not np.allclose(q, q.T, atol=1e-10 * max(1.0, np.abs(q).max())):
        raise ValueError(f"{name} must be symmetric")
    q = 0.5 * (q + q.T)
    evs = np.linalg.eigvalsh(q)
    floor = 1e-12 * max(1.0, abs(evs[-1]))
    if definite and evs[0] <= floor:
        raise ValueError(f"{name} must be positive definite (min eigenvalue {evs[0]:.3e})")
    if not definite and evs[0] < -floor:
        raise ValueError(f"{name} must be positive semidefinite (min eigenvalue {evs[0]:.3e})")
    return q


def solve_discrete_lyapunov(f, q) -> np.ndarray:
    """Solve F'PF - P + Q = 0 for symmetric positive definite P.

    Requires F Schur stable and Q symmetric positive definite; the residual
    is verified to 1e-8 * ||P||.
    """
    f = _as_square(f)
    q = _check_symmetric_psd(_as_square(q), "q", definite=True)
    if not is_schur_stable(f):
        raise NumericFailure("f is not Schur stable; the Lyapunov equation has no PD solution")
    # scipy solves a X a^H - X + q = 0, i.e. X = sum_k a^k q (a^H)^k
    p = sla.solve_discrete_lyapunov(f.T, q)
    p = 0.5 * (p + p.T)
    residual = np.linalg.norm(f.T @ p @ f - p + q, 2)
    if residual > 1e-8 * np.linalg.norm(p, 2):
        raise NumericFailure(f"Lyapunov residual too large: {residual:.3e}")
    if np.linalg.eigvalsh(p)[0] <= 0:
        raise NumericFailure("Lyapunov solution is not positive definite")
    return p


def _riccati_step(a: np.ndarray, g: np.ndarray, pbar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One round of the fixed-point scheme: P = I + A'Pbar A, Pbar = (P^-1 + GG)^-1."""
    n = a.shape[0]
    p = np.eye(n) + a.T @ pbar @ a
    # (P^-1 + G G')^-1 via the matrix-inversion lemma; avoids inverting P.
    gpg = g.T @ p @ g
    pbar_next = p - p @ g @ np.linalg.solve(np.eye(n) + gpg, g.T @ p)
    return 0.5 * (p + p.T), 0.5 * (pbar_next + pbar_next.T)


def riccati_iterates(a, g, count: int) -> list[np.ndarray]:
    """First `count` iterates P_1, ..., P_count of the fixed-point scheme.

    The sequence is monotone nondecreasing in the PSD order; useful for the
    channel-addition comparison, which needs per-iteration ordering.
    """
    a = _as_square(a)
    g = _check_symmetric_psd(_as_square(g), "g", definite=False)
    pbar = np.zeros_like(a)
    out = []
    for _ in range(count):
        p, pbar = _riccati_step(a, g, pbar)
        out.append(p)
    return out


def solve_dare(a, g, *, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Stabilizing solution of P = I + A'PA - A'PG(G'PG + I)^-1 G'PA.

    `g` is the symmetric PSD Gramian playing the role of the input matrix
    (unit state and input weights). Iteration stops when the max-abs entry
    change drops below `tol`; non-convergence signals a non-stabilizable
    pair or a numeric failure.
    """
    a = _as_square(a)
    g = _check_symmetric_psd(_as_square(g), "g", definite=False)
    if g.shape != a.shape:
        raise ValueError(f"gramian shape {g.shape} does not match a {a.shape}")
    pbar = np.zeros_like(a)
    p_prev = None
    for _ in range(max_iter):
        p, pbar = _riccati_step(a, g, pbar)
        if p_prev is not None and np.max(np.abs(p - p_prev)) <= tol:
            break
        p_prev = p
    else:
        raise NumericFailure(
            f"Riccati fixed point did not converge within {max_iter} iterations "
            "(pair may not be stabilizable)"
        )
    residual = np.linalg.norm(dare_residual(a, g, p), 2)
    if residual > 1e-8 * np.linalg.norm(p, 2):
        raise NumericFailure(f"Riccati residual too large: {residual:.3e}")
    if not is_schur_stable(dare_closed_loop(a, g, p)):
        raise NumericFailure("Riccati closed loop is not Schur stable")
    return p


def dare_residual(a, g, p) -> np.ndarray:
    """I + A'PA - A'PG(G'PG + I)^-1 G'PA - P."""
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    p = np.asarray(p, dtype=float)
    n = a.shape[0]
    gpg = g.T @ p @ g
    corr = a.T @ p @ g @ np.linalg.solve(gpg + np.eye(n), g.T @ p @ a)
    return np.eye(n) + a.T @ p @ a - corr - p


def dare_closed_loop(a, g, p) -> np.ndarray:
    """A - G(I + G'PG)^-1 G'PA, the loop the stabilizing solution certifies."""
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    p = np.asarray(p, dtype=float)
    n = a.shape[0]
    return a - g @ np.linalg.solve(np.eye(n) + g.T @ p @ g, g.T @ p @ a)
