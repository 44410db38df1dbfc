"""Seeded Gaussian streams with a prescribed covariance spectrum.

Columns are ``y = S @ sqrt(Lambda) @ g`` with ``S`` a random orthonormal
basis and ``g`` standard normal.  All randomness comes from numpy's Philox
4x64-10 counter-based generator, so a given ``(spec, seed)`` yields the same
columns on every platform numpy supports.  Columns are drawn one at a time in
stream order, so the sequence does not depend on how it is cut into blocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import InvalidArgumentError


def _generator(seed: int, stream: int) -> np.random.Generator:
    # Philox keyed by the user seed; ``stream`` selects an independent counter range.
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), stream]))


def sample_gaussian_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    return _generator(seed, 2).standard_normal((rows, cols))


@dataclass(frozen=True)
class SpectrumSpec:
    """Covariance eigenvalues.

    ``kind`` is one of ``power_law`` (``alpha``), ``spiked`` (``rank``,
    ``spike``) or ``explicit`` (``values``, padded with zeros up to ``n``).
    """

    kind: str
    n: int
    seed: int = 0
    alpha: float = 1.0
    rank: int = 1
    spike: float = 1.0
    values: tuple = ()

    @classmethod
    def power_law(cls, n: int, alpha: float, seed: int = 0) -> SpectrumSpec:
        return cls("power_law", n, seed, alpha=alpha)

    @classmethod
    def spiked(cls, n: int, rank: int, spike: float, seed: int = 0) -> SpectrumSpec:
        return cls("spiked", n, seed, rank=rank, spike=spike)

    @classmethod
    def explicit(cls, values, seed: int = 0, n: int | None = None) -> SpectrumSpec:
        values = tuple(float(v) for v in values)
        return cls("explicit", len(values) if n is None else n, seed, values=values)

    def eigenvalues(self) -> np.ndarray:
        if self.n < 1:
            raise InvalidArgumentError(f"n must be >= 1, got {self.n}")
        if self.kind == "power_law":
            if not self.alpha > 0:
                raise InvalidArgumentError(f"alpha must be > 0, got {self.alpha}")
            return np.arange(1, self.n + 1, dtype=np.float64) ** -self.alpha
        if self.kind == "spiked":
            if not 1 <= self.rank <= self.n or self.spike < 1:
                raise InvalidArgumentError(
                    f"spiked needs 1 <= rank <= n and spike >= 1, got {self.rank}, {self.spike}")
            lam = np.ones(self.n)
            lam[: self.rank] = self.spike
            return lam
        if self.kind == "explicit":
            vals = np.asarray(self.values, dtype=np.float64)
            if vals.size == 0 or vals.size > self.n:
                raise InvalidArgumentError(
                    f"explicit spectrum needs 1..n={self.n} values, got {vals.size}")
            if np.any(vals < 0) or np.any(np.diff(vals) > 0) or vals[0] <= 0:
                raise InvalidArgumentError("explicit spectrum must be nonincreasing, >= 0")
            return np.concatenate([vals, np.zeros(self.n - vals.size)])
        raise InvalidArgumentError(f"unknown spectrum kind {self.kind!r}")

    def tail(self, r: int) -> float:
        """Population residual ``sum_{i>r} lambda_i``."""
        return float(self.eigenvalues()[r:].sum())

    def with_seed(self, seed: int) -> SpectrumSpec:
        return SpectrumSpec(self.kind, self.n, seed, self.alpha, self.rank, self.spike,
                            self.values)


@dataclass
class StreamHandle:
    spec: SpectrumSpec
    s_basis: np.ndarray
    eigenvalues: np.ndarray
    cursor: int = 0
    _rng: np.random.Generator = field(repr=False, default=None)

    @property
    def covariance(self) -> np.ndarray:
        return (self.s_basis * self.eigenvalues) @ self.s_basis.T


def make_stream(spec: SpectrumSpec) -> StreamHandle:
    lam = spec.eigenvalues()
    g = _generator(spec.seed, 0).standard_normal((spec.n, spec.n))
    q, r = np.linalg.qr(g)
    q *= np.sign(np.diag(r))  # unique (Haar-distributed) orthonormal factor
    return StreamHandle(spec, q, lam, 0, _generator(spec.seed, 1))


def next_block(handle: StreamHandle, b: int) -> np.ndarray:
    if b < 1:
        raise InvalidArgumentError(f"block size must be >= 1, got {b}")
    g = handle._rng.standard_normal((b, handle.spec.n)).T
    handle.cursor += b
    mix = handle.s_basis * np.sqrt(handle.eigenvalues)
    # Accumulate in a fixed order with elementwise ops: a BLAS product would
    # round differently depending on b, breaking block-split independence.
    out = mix[:, :1] * g[0]
    for i in range(1, handle.spec.n):
        out += mix[:, i:i + 1] * g[i]
    return out


def generate(spec: SpectrumSpec, t: int) -> np.ndarray:
    """The first ``t`` columns of the stream for ``spec``."""
    return next_block(make_stream(spec), t)
