"""Slow ground-truth oracles.

``naive_update`` re-truncates the dense concatenation ``[Y_hat, y_k]`` every
block.  It stores the full ``n x kb`` iterate on purpose: it is the thing the
efficient update avoids, and exists only to check it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import InvalidArgumentError, TruncatedSvd, as_matrix, svd_full, svd_truncate


@dataclass(frozen=True)
class NaiveMosesState:
    r: int
    y_hat: np.ndarray | None = None
    k: int = 0

    @property
    def t(self) -> int:
        return 0 if self.y_hat is None else self.y_hat.shape[1]


def naive_update(state: NaiveMosesState, block) -> NaiveMosesState:
    block = as_matrix(block, "block")
    if state.y_hat is None:
        stacked = block
    else:
        if block.shape[0] != state.y_hat.shape[0]:
            raise InvalidArgumentError(
                f"block has {block.shape[0]} rows, stream has {state.y_hat.shape[0]}")
        stacked = np.hstack([state.y_hat, block])
    y_hat = svd_truncate(stacked, state.r).reconstruct()
    return NaiveMosesState(state.r, y_hat, state.k + 1)


def naive_run(blocks, r: int) -> list[np.ndarray]:
    """Every iterate ``Y_hat_{kb,r}`` of the accessible algorithm."""
    state = NaiveMosesState(r)
    out = []
    for block in blocks:
        state = naive_update(state, block)
        out.append(state.y_hat)
    return out


def offline_truncated(y, r: int) -> TruncatedSvd:
    return svd_truncate(y, r)


def residual_sq(y, r: int) -> float:
    """Squared tail energy ``sum_{i>r} sigma_i(y)^2``."""
    if r < 1:
        raise InvalidArgumentError(f"rank must be >= 1, got {r}")
    _, s, _ = svd_full(y)
    return float(np.sum(s[r:] ** 2))
