"""3x3 singular value decomposition via cyclic Jacobi.

Works on the normal matrix A^T A: Jacobi rotations diagonalize it to get V
and the squared singular values, then U comes from A V with Gram-Schmidt
cleanup and a final Rayleigh refinement of the singular values. Plenty for
rigid point-set alignment; no LAPACK involved.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericalError

_MAX_SWEEPS = 100


def _jacobi_eigh3(s: np.ndarray):
    """Eigen-decomposition of a symmetric 3x3 by cyclic Jacobi sweeps."""
    a = s.copy()
    v = np.eye(3)
    scale = np.abs(a).max()
    if scale == 0.0:
        return np.zeros(3), v
    tol = 1e-30 * scale * scale
    for _ in range(_MAX_SWEEPS):
        off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
        if off <= tol:
            return np.diag(a).copy(), v
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if apq == 0.0:
                continue
            # Classic stable rotation angle computation.
            tau = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            sn = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = sn
            rot[q, p] = -sn
            a = rot.T @ a @ rot
            v = v @ rot
    off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    if off > tol:
        raise NumericalError(f"jacobi sweep cap hit, off-diagonal {off:.3e}")
    return np.diag(a).copy(), v


def _complete_basis(cols: list[np.ndarray]) -> np.ndarray:
    """Extend 0..2 orthonormal columns to a full right-handed-ish 3x3 basis."""
    basis = list(cols)
    candidates = [np.eye(3)[:, i] for i in range(3)]
    while len(basis) < 3:
        best, best_norm = None, -1.0
        for cand in candidates:
            r = cand.copy()
            for b in basis:
                r -= (b @ r) * b
            n = np.linalg.norm(r)
            if n > best_norm:
                best, best_norm = r / n if n > 0 else None, n
        basis.append(best)
    return np.stack(basis, axis=1)


def svd3(m: np.ndarray):
    """SVD of a 3x3 matrix: returns (U, S, V) with m = U @ diag(S) @ V.T.

    U and V are orthonormal, S is non-negative and descending. Raises
    NumericalError if the Jacobi sweeps fail to converge.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise DimensionError(f"svd3 expects a 3x3 matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalError("svd3 input has non-finite entries")

    evals, v = _jacobi_eigh3(m.T @ m)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    v = v[:, order]
    sing = np.sqrt(np.clip(evals, 0.0, None))

    # Columns of U from A v / sigma where sigma is well separated from zero.
    smax = sing[0]
    ucols, fill = [], []
    for i in range(3):
        if smax > 0 and sing[i] > 1e-12 * smax:
            u = m @ v[:, i]
            for prev in ucols:
                u -= (prev @ u) * prev
            n = np.linalg.norm(u)
            if n > 0:
                ucols.append(u / n)
                continue
        fill.append(i)
    u = _complete_basis(ucols)

    # Rayleigh refinement: sigma_i = u_i . A v_i, with sign folded into u.
    for i in range(3):
        s_i = u[:, i] @ m @ v[:, i]
        if s_i < 0:
            u[:, i] = -u[:, i]
            s_i = -s_i
        sing[i] = s_i
    # Refinement can perturb order at the ulp level only; re-sort defensively.
    order = np.argsort(sing)[::-1]
    return u[:, order], sing[order], v[:, order]
