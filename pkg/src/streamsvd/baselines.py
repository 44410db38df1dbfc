"""Competing streaming subspace estimators.

All three keep a ``SketchState`` and expose an ``n x r`` orthonormal basis
through :func:`basis`:

* Frequent Directions (``fd``): an ``l = 2r`` row sketch, soft-shrunk by the
  smallest squared singular value whenever it fills up.
* Block power method (``power_method``): one power iteration with the
  empirical covariance of each ``2n``-column batch.
* GROUSE (``grouse``): rank-one geodesic steps on the Grassmannian, fully
  observed vectors only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import InvalidArgumentError, as_matrix, svd_full, thin_qr
from .synth import sample_gaussian_matrix

FD_BUFFER_FACTOR = 2
PM_BLOCK_FACTOR = 2
GROUSE_STEP = 2.0


@dataclass
class SketchState:
    variant: str
    n: int
    r: int
    basis: np.ndarray
    aux: np.ndarray
    params: dict = field(default_factory=dict)
    updates: int = 0
    # Occupied FD sketch rows / buffered power-method columns.
    filled: int = 0


def _random_basis(n: int, r: int, seed: int) -> np.ndarray:
    q, _ = thin_qr(sample_gaussian_matrix(n, r, seed))
    return q


def _check_vector(state: SketchState, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != state.n:
        raise InvalidArgumentError(f"vector length {x.shape[0]} != n={state.n}")
    return x


# -- Frequent Directions ------------------------------------------------------

def fd_init(n: int, r: int, buffer_factor: int = FD_BUFFER_FACTOR,
            ell: int | None = None) -> SketchState:
    ell = buffer_factor * r if ell is None else ell
    return SketchState("fd", n, r, np.zeros((n, 0)), np.zeros((ell, n)),
                       {"ell": ell})


def _fd_shrink(state: SketchState) -> None:
    sketch = state.aux
    _, s, v = svd_full(sketch)
    # With l > n the l-th singular value is zero: compress without shrinking.
    delta = s[-1] ** 2 if s.size == sketch.shape[0] else 0.0
    shrunk = np.sqrt(np.maximum(s ** 2 - delta, 0.0))
    if delta > 0:
        shrunk[-1] = 0.0  # exactly, not up to rounding, so a row is always freed
    new = np.zeros_like(sketch)
    new[: s.size] = shrunk[:, None] * v.T
    state.aux = new
    state.filled = int(np.count_nonzero(shrunk > 0))
    state.params["shrinkage"] = state.params.get("shrinkage", 0.0) + delta


def fd_update(state: SketchState, x) -> SketchState:
    x = _check_vector(state, x)
    state.aux[state.filled] = x
    state.filled += 1
    state.updates += 1
    if state.filled == state.aux.shape[0]:
        _fd_shrink(state)
    state.basis = None
    return state


def fd_sketch(state: SketchState) -> np.ndarray:
    return state.aux[: state.filled]


def _fd_basis(state: SketchState) -> np.ndarray:
    sketch = fd_sketch(state)
    if sketch.shape[0] == 0:
        return np.zeros((state.n, 0))
    _, s, v = svd_full(sketch)
    keep = min(state.r, int(np.count_nonzero(s > 1e-12 * max(s[0], 1e-300))))
    return v[:, :keep]


# -- Block power method -------------------------------------------------------

def pm_init(n: int, r: int, seed: int, block_factor: int = PM_BLOCK_FACTOR,
            block: int | None = None) -> SketchState:
    width = block_factor * n if block is None else block
    return SketchState("power_method", n, r, _random_basis(n, r, seed), np.zeros((n, width)),
                       {"block": width})


def pm_update(state: SketchState, block) -> SketchState:
    block = as_matrix(block, "block")
    width = state.params["block"]
    if block.shape != (state.n, width):
        raise InvalidArgumentError(
            f"power-method batch must be {state.n}x{width}, got {block.shape}")
    state.updates += 1
    if not np.any(block):
        return state
    # Scale is irrelevant to the orthonormalized result.
    state.basis, _ = thin_qr(block @ (block.T @ state.basis))
    return state


def pm_push(state: SketchState, x) -> SketchState:
    """Buffer one column; run :func:`pm_update` once a full batch is held."""
    x = _check_vector(state, x)
    state.aux[:, state.filled] = x
    state.filled += 1
    if state.filled == state.params["block"]:
        state.filled = 0
        pm_update(state, state.aux)
    return state


# -- GROUSE -------------------------------------------------------------------

def grouse_init(n: int, r: int, seed: int, step: float = GROUSE_STEP) -> SketchState:
    return SketchState("grouse", n, r, _random_basis(n, r, seed), np.zeros((0, 0)),
                       {"step": step})


def grouse_angle(step: float, residual_norm: float, weight_norm: float,
                 count: int) -> float:
    """Geodesic step length for the ``count``-th update (diminishing ``step/count``)."""
    return step * residual_norm * weight_norm / count


def grouse_update(state: SketchState, x) -> SketchState:
    """One full-observation GROUSE step.

    With ``w = U^T x``, ``p = U w`` and ``res = x - p``, the basis turns by
    ``theta = step * |res| |w| / count`` along the geodesic from ``p`` to
    ``res``; steps with ``theta >= pi/2`` are skipped as in the reference
    GROUSE code.
    """
    x = _check_vector(state, x)
    state.updates += 1
    u = state.basis
    w = u.T @ x
    p = u @ w
    res = x - p
    wn, rn = np.linalg.norm(w), np.linalg.norm(res)
    if wn == 0 or rn <= 1e-14 * np.linalg.norm(x):
        return state
    theta = grouse_angle(state.params["step"], rn, wn, state.updates)
    if theta >= math.pi / 2:
        return state
    direction = (math.cos(theta) - 1.0) * p / wn + math.sin(theta) * res / rn
    u = u + np.outer(direction, w / wn)
    # Rank-one geodesic steps keep orthonormality only to rounding; polish it.
    if state.updates % 64 == 0:
        u, _ = thin_qr(u)
    state.basis = u
    return state


# -- common interface ---------------------------------------------------------

def make(variant: str, n: int, r: int, seed: int = 0, **params) -> SketchState:
    if variant == "fd":
        return fd_init(n, r, **params)
    if variant == "power_method":
        return pm_init(n, r, seed, **params)
    if variant == "grouse":
        return grouse_init(n, r, seed, **params)
    raise InvalidArgumentError(f"unknown baseline {variant!r}")


def feed(state: SketchState, block) -> SketchState:
    """Consume the columns of ``block`` in order."""
    block = as_matrix(block, "block")
    step = {"fd": fd_update, "power_method": pm_push, "grouse": grouse_update}[state.variant]
    for x in block.T:
        step(state, x)
    return state


def basis(state: SketchState) -> np.ndarray:
    if state.variant == "fd":
        if state.basis is None or state.basis.shape[0] != state.n:
            state.basis = _fd_basis(state)
        return state.basis
    return state.basis


def projection_error(basis_, y) -> float:
    """``||y - U U^T y||_F^2 / cols``."""
    y = as_matrix(y, "y")
    basis_ = np.asarray(basis_, dtype=np.float64)
    if basis_.ndim != 2 or basis_.shape[0] != y.shape[0]:
        raise InvalidArgumentError(
            f"basis has shape {basis_.shape}, data has {y.shape[0]} rows")
    resid = y - basis_ @ (basis_.T @ y)
    return float(np.sum(resid * resid)) / y.shape[1]
