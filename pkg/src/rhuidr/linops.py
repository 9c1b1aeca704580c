"""Matrix-free difference operators, their adjoints, and norm-bounded maps.

All operators act on ``rows x n`` matrices whose columns follow the pixel
layout of :mod:`rhuidr.core`; the row count is taken from the input, so the
same spatial operators serve abundance matrices (``m`` rows) and images
(``l`` rows). Boundaries are zero: the last difference along each axis is 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Dims, EndmemberLibrary

__all__ = [
    "LinearMap",
    "diff_v",
    "diff_h",
    "diff_b",
    "adjoint_diff_v",
    "adjoint_diff_h",
    "adjoint_diff_b",
    "spatial_diff",
    "adjoint_spatial_diff",
    "hsstv_op",
    "adjoint_hsstv_op",
    "identity_map",
    "matrix_map",
    "vertical_diff_map",
    "horizontal_diff_map",
    "band_diff_map",
    "spatial_diff_map",
    "spatio_spectral_map",
    "hsstv_map",
    "compose",
    "compose_with_library",
    "power_iteration_norm",
]

Array = np.ndarray


@dataclass(frozen=True)
class LinearMap:
    """A linear operator between matrix spaces with a certified norm bound.

    ``norm_sq`` is an upper bound on the squared operator norm. Squares are
    stored because every stepsize rule consumes them, and bounds such as
    ``||D||^2 <= 8`` stay exact that way.
    """

    in_shape: tuple[int, int]
    out_shape: tuple[int, int]
    forward: Callable[[Array], Array]
    adjoint: Callable[[Array], Array]
    norm_sq: float
    name: str = ""

    @property
    def norm_bound(self) -> float:
        return float(np.sqrt(self.norm_sq))

    def __call__(self, X: Array) -> Array:
        return self.forward(X)


def _grid(X: Array, dims: Dims) -> Array:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != dims.n:
        raise ValueError(f"matrix of shape {X.shape} does not have n={dims.n} columns")
    # axis 1: image column c, axis 2: image row r (stride 1)
    return X.reshape(X.shape[0], dims.n2, dims.n1)


def _fwd_diff(X: Array, axis: int) -> Array:
    out = np.zeros_like(X)
    src = [slice(None)] * X.ndim
    lo, hi = list(src), list(src)
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    out[tuple(lo)] = X[tuple(hi)] - X[tuple(lo)]
    return out


def _fwd_diff_adj(Y: Array, axis: int) -> Array:
    # adjoint of the zero-boundary forward difference: y_{i-1} - y_i with
    # y_{-1} = 0 and the (always zero) last entry of y ignored
    k = Y.shape[axis]
    out = np.zeros_like(Y)
    if k == 1:
        return out
    first = [slice(None)] * Y.ndim
    lo, hi, last = list(first), list(first), list(first)
    first[axis] = 0
    lo[axis] = slice(None, -2)
    hi[axis] = slice(1, -1)
    last[axis] = k - 1
    first_t, lo_t, hi_t, last_t = tuple(first), tuple(lo), tuple(hi), tuple(last)
    out[first_t] = -Y[first_t]
    out[hi_t] += Y[lo_t] - Y[hi_t]
    prev = list(last)
    prev[axis] = k - 2
    out[last_t] = Y[tuple(prev)]
    return out


def diff_v(X: Array, dims: Dims) -> Array:
    return _fwd_diff(_grid(X, dims), 2).reshape(X.shape)


def diff_h(X: Array, dims: Dims) -> Array:
    return _fwd_diff(_grid(X, dims), 1).reshape(X.shape)


def diff_b(X: Array, dims: Dims) -> Array:
    return _fwd_diff(_grid(X, dims), 0).reshape(X.shape)


def adjoint_diff_v(Y: Array, dims: Dims) -> Array:
    return _fwd_diff_adj(_grid(Y, dims), 2).reshape(Y.shape)


def adjoint_diff_h(Y: Array, dims: Dims) -> Array:
    return _fwd_diff_adj(_grid(Y, dims), 1).reshape(Y.shape)


def adjoint_diff_b(Y: Array, dims: Dims) -> Array:
    return _fwd_diff_adj(_grid(Y, dims), 0).reshape(Y.shape)


def spatial_diff(X: Array, dims: Dims) -> Array:
    """Stack ``[Dv X; Dh X]`` into a ``2 rows x n`` matrix."""
    return np.vstack([diff_v(X, dims), diff_h(X, dims)])


def adjoint_spatial_diff(Y: Array, dims: Dims) -> Array:
    if Y.shape[0] % 2:
        raise ValueError(f"spatial difference output must have an even row count, got {Y.shape[0]}")
    k = Y.shape[0] // 2
    return adjoint_diff_v(Y[:k], dims) + adjoint_diff_h(Y[k:], dims)


def hsstv_op(X: Array, dims: Dims, omega: float) -> Array:
    """Stack ``[D(Db X); omega * D X]`` into a ``4 rows x n`` matrix."""
    return np.vstack([spatial_diff(diff_b(X, dims), dims), omega * spatial_diff(X, dims)])


def adjoint_hsstv_op(Y: Array, dims: Dims, omega: float) -> Array:
    if Y.shape[0] % 4:
        raise ValueError(f"HSSTV output must have a row count divisible by 4, got {Y.shape[0]}")
    h = Y.shape[0] // 2
    return (adjoint_diff_b(adjoint_spatial_diff(Y[:h], dims), dims)
            + omega * adjoint_spatial_diff(Y[h:], dims))


# LinearMap factories

def identity_map(shape: tuple[int, int]) -> LinearMap:
    return LinearMap(shape, shape, lambda X: X, lambda Y: Y, 1, "I")


def matrix_map(M: Array, n: int, norm: float | None = None, name: str = "E") -> LinearMap:
    """Left multiplication ``A -> M @ A`` on matrices with ``n`` columns.

    ``norm`` should be an upper bound on the largest singular value of ``M``;
    if omitted it is computed exactly from an SVD.
    """
    M = np.asarray(M, dtype=np.float64)
    if norm is None:
        norm = float(np.linalg.norm(M, 2))
    MT = M.T.copy()
    return LinearMap((M.shape[1], n), (M.shape[0], n), lambda A: M @ A, lambda Z: MT @ Z,
                     norm * norm, name)


def vertical_diff_map(dims: Dims, rows: int) -> LinearMap:
    s = (rows, dims.n)
    return LinearMap(s, s, lambda X: diff_v(X, dims), lambda Y: adjoint_diff_v(Y, dims), 4, "Dv")


def horizontal_diff_map(dims: Dims, rows: int) -> LinearMap:
    s = (rows, dims.n)
    return LinearMap(s, s, lambda X: diff_h(X, dims), lambda Y: adjoint_diff_h(Y, dims), 4, "Dh")


def band_diff_map(dims: Dims, rows: int) -> LinearMap:
    s = (rows, dims.n)
    return LinearMap(s, s, lambda X: diff_b(X, dims), lambda Y: adjoint_diff_b(Y, dims), 4, "Db")


def spatial_diff_map(dims: Dims, rows: int) -> LinearMap:
    return LinearMap((rows, dims.n), (2 * rows, dims.n),
                     lambda X: spatial_diff(X, dims),
                     lambda Y: adjoint_spatial_diff(Y, dims), 8, "D")


def spatio_spectral_map(dims: Dims, rows: int) -> LinearMap:
    """``D o Db`` with bound ``||D|| ||Db|| = 2 sqrt(2) * 2``."""
    return compose(spatial_diff_map(dims, rows), band_diff_map(dims, rows))


def hsstv_map(dims: Dims, rows: int, omega: float) -> LinearMap:
    if omega < 0:
        raise ValueError(f"omega must be nonnegative, got {omega}")
    return LinearMap((rows, dims.n), (4 * rows, dims.n),
                     lambda X: hsstv_op(X, dims, omega),
                     lambda Y: adjoint_hsstv_op(Y, dims, omega),
                     32 + 8 * omega * omega, "C")


def compose(outer: LinearMap, inner: LinearMap) -> LinearMap:
    """``outer o inner``; the norm bound is the product of the two bounds."""
    if inner.out_shape != outer.in_shape:
        raise ValueError(f"cannot compose: {inner.name or 'inner'} maps to {inner.out_shape}, "
                         f"{outer.name or 'outer'} expects {outer.in_shape}")
    return LinearMap(inner.in_shape, outer.out_shape,
                     lambda X: outer.forward(inner.forward(X)),
                     lambda Y: inner.adjoint(outer.adjoint(Y)),
                     outer.norm_sq * inner.norm_sq,
                     f"{outer.name}o{inner.name}")


def compose_with_library(K: LinearMap, E, sigma_max: float | None = None) -> LinearMap:
    """``A -> K(E A)`` with bound ``||K|| * sigma_1(E)``.

    ``E`` is an :class:`EndmemberLibrary` or a plain matrix. ``sigma_max``
    overrides the estimated largest singular value.
    """
    if isinstance(E, EndmemberLibrary):
        M = E.matrix
        if sigma_max is None:
            sigma_max = E.spectral_norm()
    else:
        M = np.asarray(E, dtype=np.float64)
    if M.shape[0] != K.in_shape[0]:
        raise ValueError(f"library has {M.shape[0]} rows, operator expects {K.in_shape[0]}")
    return compose(K, matrix_map(M, K.in_shape[1], sigma_max))


def power_iteration_norm(G: LinearMap, iters: int = 100, seed: int = 0) -> float:
    """Lower estimate of ``||G||_op`` by power iteration on ``G* G``.

    The estimate is ``||G x_k||`` for the normalized iterate ``x_k``; the
    running maximum is returned so the result never decreases with ``iters``.
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(G.in_shape)
    x /= np.linalg.norm(x)
    best = 0.0
    for _ in range(iters):
        y = G.forward(x)
        est = float(np.linalg.norm(y))
        best = max(best, est)
        x = G.adjoint(y)
        nrm = np.linalg.norm(x)
        if nrm == 0.0:
            break
        x /= nrm
    return best
