"""Matrix-shaped domain objects shared by every other module.

An ``l``-band image over an ``n1 x n2`` grid is stored as an ``l x n`` matrix
(``n = n1 * n2``). Pixel ``(r, c)`` lives in column ``c * n1 + r``, so
vertically adjacent pixels occupy adjacent columns. Reshaping a row of the
matrix to ``(n2, n1)`` in C order therefore gives the image transposed, with
the vertical axis last.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Dims",
    "HSCube",
    "EndmemberLibrary",
    "cube_from_matrix",
    "pixel_index",
    "pixel_coords",
    "as_grid",
    "from_grid",
]


@dataclass(frozen=True)
class Dims:
    """Grid and band sizes of a problem.

    ``m`` is the library size; it is optional because images exist without
    a library attached.
    """

    n1: int
    n2: int
    l: int
    m: Optional[int] = None

    def __post_init__(self):
        for name in ("n1", "n2", "l"):
            v = getattr(self, name)
            if int(v) != v or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.m is not None and (int(self.m) != self.m or self.m <= 0):
            raise ValueError(f"m must be a positive integer, got {self.m!r}")

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    @property
    def shape(self) -> tuple[int, int]:
        """Matrix shape ``(l, n)`` of an image with these dims."""
        return (self.l, self.n)


def _check_finite(data: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(data)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{what} has a non-finite entry at index {idx}: {data[idx]!r}")


@dataclass(frozen=True, eq=False)
class HSCube:
    """A hyperspectral image in matrix form (``l x n``, 64-bit floats)."""

    dims: Dims
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != self.dims.shape:
            raise ValueError(
                f"cube data has shape {data.shape}, dims {self.dims} require {self.dims.shape}"
            )
        _check_finite(data, "cube data")
        object.__setattr__(self, "data", data)

    def band_image(self, k: int) -> np.ndarray:
        """Band ``k`` as an ``n1 x n2`` image."""
        return as_grid(self.data[k], self.dims)


@dataclass(frozen=True, eq=False)
class EndmemberLibrary:
    """Candidate spectra as the columns of an ``l x m`` matrix."""

    matrix: np.ndarray
    names: Optional[Sequence[str]] = field(default=None)

    def __post_init__(self):
        E = np.asarray(self.matrix, dtype=np.float64)
        if E.ndim != 2:
            raise ValueError(f"library must be a 2-D matrix, got ndim={E.ndim}")
        _check_finite(E, "library")
        if (E < 0).any():
            raise ValueError("library entries must be nonnegative")
        zero_cols = np.flatnonzero(~E.any(axis=0))
        if zero_cols.size:
            raise ValueError(f"library column {int(zero_cols[0])} is all zero")
        if self.names is not None and len(self.names) != E.shape[1]:
            raise ValueError(f"got {len(self.names)} names for {E.shape[1]} columns")
        object.__setattr__(self, "matrix", E)

    @property
    def l(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        return self.matrix.shape[1]

    def spectral_norm(self, max_iter: int = 1000, rtol: float = 1e-12, seed: int = 0,
                      inflate: float = 1e-6) -> float:
        """Upper estimate of the largest singular value.

        Power iteration on ``E^T E`` from a seeded start, stopped after
        ``max_iter`` steps or when the estimate changes by less than ``rtol``
        relatively; the result is inflated by ``inflate`` so it can be used
        as a bound.
        """
        E = self.matrix
        G = E.T @ E
        rng = np.random.default_rng(seed)
        x = np.abs(rng.standard_normal(E.shape[1])) + 1e-3
        x /= np.linalg.norm(x)
        lam = 0.0
        for _ in range(max_iter):
            y = G @ x
            new = float(x @ y)
            nrm = np.linalg.norm(y)
            if nrm == 0.0:
                return 0.0
            x = y / nrm
            if abs(new - lam) <= rtol * abs(new):
                lam = new
                break
            lam = new
        return float(np.sqrt(lam)) * (1.0 + inflate)


def cube_from_matrix(data, dims: Dims) -> HSCube:
    """Wrap an ``l x n`` matrix as a validated cube; never reshapes."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    return HSCube(dims, arr)


def pixel_index(r: int, c: int, dims: Dims) -> int:
    if not (0 <= r < dims.n1 and 0 <= c < dims.n2):
        raise IndexError(f"pixel ({r}, {c}) outside a {dims.n1}x{dims.n2} grid")
    return c * dims.n1 + r


def pixel_coords(p: int, dims: Dims) -> tuple[int, int]:
    """Inverse of :func:`pixel_index`."""
    if not 0 <= p < dims.n:
        raise IndexError(f"column index {p} outside [0, {dims.n})")
    c, r = divmod(p, dims.n1)
    return r, c


def as_grid(row: np.ndarray, dims: Dims) -> np.ndarray:
    """Reshape one matrix row (length ``n``) to an ``n1 x n2`` image."""
    return np.asarray(row).reshape(dims.n2, dims.n1).T


def from_grid(img: np.ndarray, dims: Dims) -> np.ndarray:
    """Flatten an ``n1 x n2`` image into a length-``n`` matrix row."""
    img = np.asarray(img)
    if img.shape != (dims.n1, dims.n2):
        raise ValueError(f"image shape {img.shape} != ({dims.n1}, {dims.n2})")
    return img.T.reshape(-1)
