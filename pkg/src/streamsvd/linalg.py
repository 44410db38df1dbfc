"""Small dense kernels: thin QR, full SVD and rank-r truncation.

Matrices are plain 2-D ``numpy.ndarray`` objects of ``float64``.  Storage
order is numpy's default (row-major); nothing here depends on it, and the
binary checkpoint format in :mod:`streamsvd.moses` writes factors
column-major explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

RANK_TOL = 1e-12

# Fixed key for the directions used to complete a rank-deficient QR basis.
_FILL_SEED = 0x5EED_0F_F111


class InvalidArgumentError(ValueError):
    """Raised on shape or parameter mismatches."""


class NumericalFailureError(ArithmeticError):
    """An iterative LAPACK kernel failed to converge.

    ``iterations`` counts the kernel attempts made before giving up (LAPACK
    does not report its inner sweep count).
    """

    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} attempts)")
        self.iterations = iterations


@dataclass(frozen=True)
class TruncatedSvd:
    """Rank-``rank`` factor triple with ``a ~= u @ diag(sigma) @ v.T``."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return a


def _fill_direction(n: int, index: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=_FILL_SEED, counter=index))
    return rng.standard_normal(n)


def _orthogonalize(v: np.ndarray, bases: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Remove from ``v`` its components along every basis in ``bases``.

    Classical Gram-Schmidt repeated until the norm stops collapsing
    (Kahan-Parlett "twice is enough", capped at three passes).  Returns the
    residual and the coefficients against the *last* basis.
    """
    coef = np.zeros(bases[-1].shape[1]) if bases else np.zeros(0)
    norm = np.linalg.norm(v)
    for _ in range(3):
        for i, basis in enumerate(bases):
            if basis.shape[1] == 0:
                continue
            c = basis.T @ v
            v = v - basis @ c
            if i == len(bases) - 1:
                coef += c
        new_norm = np.linalg.norm(v)
        if new_norm > 0.5 * norm:
            break
        norm = new_norm
    return v, coef


def thin_qr(a, against=None, tol: float = RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR factorization ``a = q @ r`` by reorthogonalized Gram-Schmidt.

    Columns whose residual falls below ``tol * ||a||_F`` are treated as
    rank-deficient: the diagonal entry of ``r`` is zero and the ``q`` column is
    filled with a fixed pseudo-random direction orthogonalized against the
    previous columns, so ``q`` always has orthonormal columns.

    ``against`` optionally names an orthonormal ``n x m`` basis that every
    column of ``q`` must also be orthogonal to; the caller is responsible for
    ``a`` already lying in its orthogonal complement.  If no room is left in
    ``R^n`` for a fill direction the column of ``q`` is set to zero.
    """
    a = as_matrix(a, "a")
    n, b = a.shape
    if b < 1 or n < b:
        raise InvalidArgumentError(f"thin_qr needs n >= b >= 1, got {a.shape}")
    extra = []
    if against is not None:
        against = as_matrix(against, "against")
        if against.shape[0] != n:
            raise InvalidArgumentError(
                f"against has {against.shape[0]} rows, expected {n}")
        extra = [against]

    scale = np.linalg.norm(a)
    threshold = tol * scale
    q = np.zeros((n, b))
    r = np.zeros((b, b))
    room = n - sum(e.shape[1] for e in extra)
    filled = 0
    for j in range(b):
        v, coef = _orthogonalize(a[:, j], extra + [q[:, :j]])
        r[:j, j] = coef
        norm = np.linalg.norm(v)
        if scale > 0 and norm > threshold:
            q[:, j] = v / norm
            r[j, j] = norm
            continue
        if j >= room:
            continue
        # Rank-deficient column: complete the basis deterministically.
        for attempt in range(8):
            d, _ = _orthogonalize(_fill_direction(n, j + 97 * attempt + filled),
                                  extra + [q[:, :j]])
            dn = np.linalg.norm(d)
            if dn > 1e-6:
                q[:, j] = d / dn
                break
        filled += 1
    return q, r


def _sign_fix(u: np.ndarray, v: np.ndarray) -> None:
    """Make the largest-magnitude entry of each column of ``u`` positive."""
    if u.shape[1] == 0 or u.shape[0] == 0:
        return
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u *= signs
    v *= signs


def svd_full(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All singular triplets of ``a`` (economy-sized factors).

    Returns ``(u, sigma, v)`` with ``a = u @ diag(sigma) @ v.T``.  Tries the
    divide-and-conquer driver first and falls back to ``gesvd``.
    """
    a = as_matrix(a, "a")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidArgumentError(f"svd_full needs a non-empty matrix, got {a.shape}")
    attempts = 0
    for driver in ("gesdd", "gesvd"):
        attempts += 1
        try:
            u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver=driver,
                                        check_finite=False)
        except np.linalg.LinAlgError:
            continue
        v = vt.T.copy()
        _sign_fix(u, v)
        return u, s, v
    raise NumericalFailureError("SVD did not converge", attempts)


def numerical_rank(sigma: np.ndarray, tol: float = RANK_TOL) -> int:
    if sigma.size == 0 or sigma[0] <= 0:
        return 0
    return int(np.count_nonzero(sigma > tol * sigma[0]))


def svd_truncate(a, r: int, tol: float = RANK_TOL) -> TruncatedSvd:
    """Best rank-``r`` approximation, clipped to the numerical rank of ``a``."""
    if r < 1:
        raise InvalidArgumentError(f"rank must be >= 1, got {r}")
    u, s, v = svd_full(a)
    k = min(r, numerical_rank(s, tol))
    return TruncatedSvd(u[:, :k].copy(), s[:k].copy(), v[:, :k].copy())


def orthonormalize(a) -> np.ndarray:
    """Orthonormal basis with the same number of columns as ``a``."""
    q, _ = thin_qr(a)
    return q
