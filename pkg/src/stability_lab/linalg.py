"""Cross-entropy Hessian and cyclic Jacobi eigenvalues for small dense matrices."""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .dataset import Dataset
from .learners import _design_for_theta


class LinalgError(ValueError):
    pass


class SymmetricMatrix:
    """Order-n symmetric matrix kept as its row-major upper triangle."""

    __slots__ = ("n", "packed")

    def __init__(self, n: int, packed):
        packed = np.array(packed, dtype=np.float64).reshape(-1)
        if packed.size != n * (n + 1) // 2:
            raise LinalgError(f"order {n} needs {n * (n + 1) // 2} packed entries, got {packed.size}")
        packed.flags.writeable = False
        self.n = n
        self.packed = packed

    @classmethod
    def from_dense(cls, A) -> "SymmetricMatrix":
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise LinalgError(f"expected a square matrix, got shape {A.shape}")
        if not np.array_equal(A, A.T):
            raise LinalgError("matrix is not symmetric")
        return cls(A.shape[0], A[np.triu_indices(A.shape[0])])

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        A[np.triu_indices(self.n)] = self.packed
        return A + np.triu(A, 1).T

    def __getitem__(self, ij) -> float:
        i, j = sorted(ij)
        # offset of row i in the packed upper triangle
        return float(self.packed[i * self.n - i * (i - 1) // 2 + (j - i)])

    def __add__(self, other):
        if not isinstance(other, SymmetricMatrix) or other.n != self.n:
            return NotImplemented
        return SymmetricMatrix(self.n, self.packed + other.packed)

    def __sub__(self, other):
        if not isinstance(other, SymmetricMatrix) or other.n != self.n:
            return NotImplemented
        return SymmetricMatrix(self.n, self.packed - other.packed)

    def __eq__(self, other):
        if not isinstance(other, SymmetricMatrix):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.packed, other.packed)

    __hash__ = None

    def __repr__(self):
        return f"SymmetricMatrix({self.to_dense()!r})"


def cross_entropy_hessian(D: Dataset, theta, lam: float) -> SymmetricMatrix:
    """Hessian of the mean cross-entropy plus ``lam / 2 ||theta||^2``.

    ``theta`` of length d + 1 appends a constant bias column to the features.
    """
    theta = np.asarray(theta, dtype=np.float64)
    Xa = _design_for_theta(D, theta)
    p = expit(Xa @ theta)
    H = (Xa * (p * (1.0 - p))[:, None]).T @ Xa / D.m
    H = 0.5 * (H + H.T)
    H[np.diag_indices_from(H)] += lam
    return SymmetricMatrix.from_dense(H)


def jacobi_eigenvalues(A, tol: float = 1e-10, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of one or a stack of symmetric matrices by cyclic Jacobi.

    ``A`` has shape (n, n) or (K, n, n). Sweeps run until every matrix has
    off-diagonal Frobenius norm at most ``tol * max(1, ||A||_F)``, which
    bounds each eigenvalue error by the same amount. Returns ascending
    eigenvalues with shape (n,) or (K, n).
    """
    A = np.array(A, dtype=np.float64)
    single = A.ndim == 2
    if single:
        A = A[None]
    if not np.all(np.isfinite(A)):
        raise LinalgError("matrix has non-finite entries")
    K, n, _ = A.shape
    scale = np.maximum(1.0, np.sqrt(np.einsum("kij,kij->k", A, A)))
    limit = tol * scale
    offdiag = ~np.eye(n, dtype=bool)

    def off_norm():
        return np.sqrt(np.sum(np.where(offdiag, A, 0.0) ** 2, axis=(1, 2)))

    for _ in range(max_sweeps):
        if np.all(off_norm() <= limit):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                active = apq != 0.0
                if not active.any():
                    continue
                app, aqq = A[:, p, p], A[:, q, q]
                # rotation angle zeroing A[p, q] (symmetric Schur decomposition)
                # a huge tau (tiny apq) overflows to inf and correctly yields t = 0
                with np.errstate(over="ignore"):
                    tau = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
                t = np.where(
                    active,
                    np.sign(tau + (tau == 0)) / (np.abs(tau) + np.hypot(1.0, tau)),
                    0.0,
                )
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                Ap, Aq = A[:, :, p].copy(), A[:, :, q].copy()
                A[:, :, p] = c[:, None] * Ap - s[:, None] * Aq
                A[:, :, q] = s[:, None] * Ap + c[:, None] * Aq
                Rp, Rq = A[:, p, :].copy(), A[:, q, :].copy()
                A[:, p, :] = c[:, None] * Rp - s[:, None] * Rq
                A[:, q, :] = s[:, None] * Rp + c[:, None] * Rq
                A[:, p, q] = 0.0
                A[:, q, p] = 0.0
    else:
        if not np.all(off_norm() <= limit):
            raise LinalgError(f"Jacobi did not converge in {max_sweeps} sweeps")
    eig = np.sort(np.diagonal(A, axis1=1, axis2=2), axis=1)
    return eig[0] if single else eig


def smallest_eigenvalue(M, tol: float = 1e-10) -> float:
    if tol <= 0:
        raise LinalgError(f"tol must be > 0, got {tol}")
    A = M.to_dense() if isinstance(M, SymmetricMatrix) else np.asarray(M, dtype=np.float64)
    return float(jacobi_eigenvalues(A, tol)[0])
