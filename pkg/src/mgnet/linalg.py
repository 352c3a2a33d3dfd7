"""Dense float64 linear algebra used by the models and experiments.

Decompositions are implemented directly (the matrices here are tiny,
dimension <= a few hundred, usually <= 16): Cholesky with an explicit
pivot floor, a cyclic Jacobi eigensolver for symmetric matrices, a PSD
square root built on it, and triangular solves.
"""

from __future__ import annotations

import numpy as np

from .dual import DualScalar  # noqa: F401  (re-export: scalar AD lives with linalg)
from .errors import DimensionMismatch, NoConvergence, NonSymmetric, NotPositiveDefinite, NotPSD

# Absolute tolerance on |A - A.T| before a matrix is rejected as non-symmetric.
SYMMETRY_TOL = 1e-10


def as_vector(x):
    """Validate and return a finite 1-d float64 array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch(f"expected nonempty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_matrix(x):
    """Validate and return a finite 2-d float64 array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise DimensionMismatch(f"expected nonempty matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _square(a):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got shape {a.shape}")
    return a


def _check_symmetric(a, tol=SYMMETRY_TOL):
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > tol:
        raise NonSymmetric(f"asymmetry {asym:.3e} exceeds {tol:.1e}")


def cholesky(a):
    """Lower-triangular L with L @ L.T == a for symmetric positive definite a.

    Raises NotPositiveDefinite when any pivot falls to or below
    1e-12 * max(diag(a)).
    """
    a = _square(a)
    _check_symmetric(a)
    n = a.shape[0]
    floor = 1e-12 * float(np.max(np.diag(a)))
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if pivot <= floor:
            raise NotPositiveDefinite(f"pivot {pivot:.3e} at column {j} (floor {floor:.3e})")
        low[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def solve_lower(low, b):
    """Solve low @ y = b by forward substitution; b may carry leading batch axes."""
    low = _square(low)
    b = np.asarray(b, dtype=np.float64)
    n = low.shape[0]
    if b.shape[-1] != n:
        raise DimensionMismatch(f"rhs last axis {b.shape[-1]} != {n}")
    y = np.empty_like(b)
    for i in range(n):
        acc = b[..., i]
        if i:
            acc = acc - y[..., :i] @ low[i, :i]
        y[..., i] = acc / low[i, i]
    return y


def solve_upper_t(low, b):
    """Solve low.T @ x = b by back substitution; b may carry leading batch axes."""
    low = _square(low)
    b = np.asarray(b, dtype=np.float64)
    n = low.shape[0]
    x = np.empty_like(b)
    for i in range(n - 1, -1, -1):
        acc = b[..., i]
        if i + 1 < n:
            acc = acc - x[..., i + 1 :] @ low[i + 1 :, i]
        x[..., i] = acc / low[i, i]
    return x


def chol_solve(low, b):
    """Solve (low @ low.T) x = b given a Cholesky factor."""
    return solve_upper_t(low, solve_lower(low, b))


def sym_eigen(a, max_sweeps=60):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (w, v): eigenvalues ascending, eigenvectors as columns of v.
    Raises NonSymmetric when max |a - a.T| exceeds 1e-10.
    """
    a = _square(a)
    _check_symmetric(a)
    n = a.shape[0]
    if n == 1:
        return a[0, :1].copy(), np.ones((1, 1))
    m = 0.5 * (a + a.T)  # fold sub-tolerance asymmetry before iterating
    vec = np.eye(n)
    fro = float(np.sqrt(np.sum(m * m)))
    stop = 1e-13 * max(fro, np.finfo(np.float64).tiny)
    for _ in range(max_sweeps):
        off = float(np.sqrt(np.sum(np.tril(m, -1) ** 2) * 2.0))
        if off <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                theta = (m[q, q] - m[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
                if t == 0.0:
                    t = 1.0  # theta == 0: 45-degree rotation
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                app, aqq = m[p, p], m[q, q]
                col_p = m[:, p].copy()
                col_q = m[:, q].copy()
                new_p = c * col_p - s * col_q
                new_q = s * col_p + c * col_q
                m[:, p] = new_p
                m[p, :] = new_p
                m[:, q] = new_q
                m[q, :] = new_q
                m[p, p] = app - t * apq
                m[q, q] = aqq + t * apq
                m[p, q] = m[q, p] = 0.0
                vp = vec[:, p].copy()
                vec[:, p] = c * vp - s * vec[:, q]
                vec[:, q] = s * vp + c * vec[:, q]
    else:
        raise NoConvergence(f"Jacobi sweeps exhausted at off-norm {off:.3e}")
    w = np.diag(m).copy()
    order = np.argsort(w, kind="stable")
    return w[order], vec[:, order]


def sqrt_psd(a):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-1e-10 * ||a||, 0) are clamped to zero; anything lower
    raises NotPSD.
    """
    w, v = sym_eigen(a)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if float(w.min()) < -1e-10 * scale:
        raise NotPSD(f"eigenvalue {w.min():.3e} below -1e-10 * {scale:.3e}")
    root = (v * np.sqrt(np.maximum(w, 0.0))) @ v.T
    return 0.5 * (root + root.T)


def logdet_pd(a):
    """log det of a symmetric positive definite matrix via Cholesky."""
    low = cholesky(a)
    return float(2.0 * np.sum(np.log(np.diag(low))))
