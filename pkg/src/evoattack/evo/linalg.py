"""Symmetric eigendecomposition for covariance matrices.

Small matrices go through a cyclic Jacobi solver; above ``JACOBI_MAX_DIM``
the LAPACK symmetric driver (``numpy.linalg.eigh``) takes over, since a
Python-level Jacobi sweep over a 784x784 covariance is far too slow.
"""
from __future__ import annotations

import numpy as np

JACOBI_MAX_DIM = 32
SYMMETRY_TOL = 1e-10
NEGATIVE_EIG_TOL = 1e-10
EIGEN_FLOOR = 1e-12


class NotSymmetric(ValueError):
    pass


class NotPositiveSemidefinite(ValueError):
    pass


def _check_symmetric(C: np.ndarray) -> None:
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise NotSymmetric("matrix has non-finite entries")
    asym = np.max(np.abs(C - C.T)) if C.size else 0.0
    if asym > SYMMETRY_TOL:
        raise NotSymmetric(f"max |C - C^T| = {asym:.3e} exceeds {SYMMETRY_TOL}")


def jacobi_eigh(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    """Cyclic Jacobi rotations. Returns (eigenvalues, eigenvectors) unsorted.

    Each sweep visits every (p, q) pair above the diagonal and annihilates
    a_pq with a plane rotation; sweeps stop once the off-diagonal mass is
    below ``tol`` relative to the full Frobenius norm.
    """
    a = np.array(A, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n < 2 or scale == 0.0:
        return np.diag(a).copy(), v
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def eigendecompose(C, method: str = "auto", floor: float = EIGEN_FLOOR):
    """Factor a symmetric PSD matrix as ``C = B @ diag(D**2) @ B.T``.

    Returns ``(B, D)`` with ``D`` the square roots of the eigenvalues in
    descending order. Eigenvalues below ``floor * max_eigenvalue`` are lifted
    to that floor so that D stays strictly positive.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"``.
    """
    C = np.asarray(C, dtype=float)
    _check_symmetric(C)
    n = C.shape[0]
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        evals, evecs = jacobi_eigh(C)
    elif method == "lapack":
        evals, evecs = np.linalg.eigh(C)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")

    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    B = evecs[:, order]
    if n and evals[-1] < -NEGATIVE_EIG_TOL:
        raise NotPositiveSemidefinite(f"smallest eigenvalue {evals[-1]:.3e}")
    top = evals[0] if n else 0.0
    lifted = np.maximum(evals, floor * top if top > 0.0 else 0.0)
    return B, np.sqrt(lifted)
