"""Error functionals and the deterministic MOSES error bound.

The bound checked by :func:`error_bound` is, for ``K`` blocks and ``p > 1``::

    ||Y_K - Y_hat_K||_F^2 <= (prod_{l=2..K} theta_l) * rho_r^2(Y_1)
                             + c * sum_{k=2..K} (prod_{l=k+1..K} theta_l) * innov_k

with ``c = p^(1/3) / (p^(1/3) - 1)``, ``innov_k = ||P_perp(S_{k-1}) y_k||_F^2``
where ``S_{k-1}`` is the true leading-r subspace of the data prefix, and
``theta_k = 1 + p^(1/3) ||y_k||_2^2 / sigma_r(Y_{k-1})^2`` (spectral norm of
the block).  It is the unrolled one-step recursion
``E_k <= theta_k E_{k-1} + c innov_k`` started from the first block's own
truncation residual ``E_1 = rho_r^2(Y_1)``.  The commonly quoted form omits
that first term and is only valid when the first block has rank <= r; it is
reported as ``stated_bound`` for comparison.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import moses
from .linalg import RANK_TOL, InvalidArgumentError, as_matrix, svd_full

DEFAULT_P = 8.0


class DegenerateSpectrumError(ArithmeticError):
    """sigma_r of a data prefix is zero, so theta_k is undefined."""


class BoundViolationError(AssertionError):
    pass


@dataclass
class ErrorTrace:
    algorithm: str
    t_values: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    runtimes: list = field(default_factory=list)
    memory_bytes: list = field(default_factory=list)

    def append(self, t: int, error: float, runtime: float, memory: int) -> None:
        if self.t_values and t <= self.t_values[-1]:
            raise InvalidArgumentError(f"t values must increase ({t} after {self.t_values[-1]})")
        if error < 0:
            raise InvalidArgumentError(f"negative error {error}")
        self.t_values.append(int(t))
        self.errors.append(float(error))
        self.runtimes.append(float(runtime))
        self.memory_bytes.append(int(memory))

    def __len__(self):
        return len(self.t_values)


@dataclass
class BoundReport:
    p: float
    growth_factors: list  # theta_k per block, from block 2
    innovations: list
    partial_bounds: list
    bound_value: float
    actual_error_sq: float
    scale: float = 0.0  # ||Y_K||_F^2, sets the rounding floor of the check
    initial_residual: float = 0.0  # rho_r^2 of the first block
    stated_bound: float = 0.0  # the sum without the first-block term

    @property
    def holds(self) -> bool:
        # Rounding slack only: both sides are sums of O(T) squared entries.
        return self.actual_error_sq <= self.bound_value * (1 + 1e-9) + self.scale * 1e-12

    @property
    def slack_ratio(self) -> float:
        if self.actual_error_sq == 0:
            return float("inf") if self.bound_value > 0 else 1.0
        return self.bound_value / self.actual_error_sq


def moses_error(y_prefix, y_hat) -> float:
    """``||Y_t - Y_hat_t||_F^2 / t``."""
    y_prefix = as_matrix(y_prefix, "y_prefix")
    y_hat = as_matrix(y_hat, "y_hat")
    if y_prefix.shape != y_hat.shape:
        raise InvalidArgumentError(f"shape mismatch {y_prefix.shape} vs {y_hat.shape}")
    d = y_prefix - y_hat
    return float(np.sum(d * d)) / y_prefix.shape[1]


def growth_factor(p: float, block_norm_sq: float, sigma_r_prev_sq: float) -> float:
    if not p > 1:
        raise InvalidArgumentError(f"p must be > 1, got {p}")
    if not sigma_r_prev_sq > 0:
        raise DegenerateSpectrumError(
            f"sigma_r of the previous prefix is {sigma_r_prev_sq}; theta undefined")
    return 1.0 + np.cbrt(p) * block_norm_sq / sigma_r_prev_sq


def error_bound(blocks, r: int, p: float = DEFAULT_P, check: bool = True) -> BoundReport:
    """Evaluate the deterministic bound on a block stream and run MOSES on it.

    ``growth_factors`` and ``innovations`` are indexed by block, starting at block 2.
    Raises :class:`BoundViolationError` when ``check`` is set and the MOSES
    error exceeds the bound.
    """
    blocks = [as_matrix(b, "block") for b in blocks]
    if len(blocks) < 2:
        raise InvalidArgumentError("the bound needs at least two blocks")
    if not p > 1:
        raise InvalidArgumentError(f"p must be > 1, got {p}")
    n, b = blocks[0].shape
    cp = np.cbrt(p)
    c = cp / (cp - 1.0)

    growth, innovations, partial = [], [], []
    prefix = blocks[0]
    _, s1, _ = svd_full(prefix)
    initial = float(np.sum(s1[r:] ** 2))
    running = initial
    stated = 0.0
    for y in blocks[1:]:
        u, s, _ = svd_full(prefix)
        # Rounding leaves sigma_r ~ eps * sigma_1 on rank-deficient prefixes.
        if s.size < r or not s[r - 1] > RANK_TOL * s[0]:
            raise DegenerateSpectrumError(
                f"prefix of {prefix.shape[1]} columns has rank < r={r}")
        s_top = u[:, :r]
        resid = y - s_top @ (s_top.T @ y)
        innov = float(np.sum(resid * resid))
        spec = float(np.linalg.norm(y, 2)) ** 2
        th = growth_factor(p, spec, float(s[r - 1]) ** 2)
        running = th * running + c * innov
        stated = th * stated + c * innov
        growth.append(th)
        innovations.append(innov)
        partial.append(running)
        prefix = np.hstack([prefix, y])

    cfg = moses.MosesConfig(n, r, b, moses.FlushPolicy.never(), relaxed=True)
    state = moses.run(cfg, blocks)
    diff = prefix - moses.reconstruct(state)
    actual = float(np.sum(diff * diff))
    report = BoundReport(p, growth, innovations, partial, running, actual,
                         scale=float(np.sum(prefix * prefix)),
                         initial_residual=initial, stated_bound=stated)
    if check and not report.holds:
        raise BoundViolationError(
            f"MOSES error {actual:.6g} exceeds deterministic bound {running:.6g}")
    return report


def principal_angles(a_basis, b_basis) -> np.ndarray:
    """Principal angles in ``[0, pi/2]``, smallest first."""
    a = as_matrix(a_basis, "a_basis")
    b = as_matrix(b_basis, "b_basis")
    if a.shape != b.shape:
        raise InvalidArgumentError(f"basis shapes differ: {a.shape} vs {b.shape}")
    _, s, _ = svd_full(a.T @ b)
    return np.arccos(np.clip(s, 0.0, 1.0))
