"""Seeded synthetic scenes and the eight mixed-noise degradation cases.

Endmembers are sums of Gaussian bumps over the band axis; abundance maps
are normalized mixtures of Gaussian blobs on the grid. Neither reproduces
any particular toolbox, only the qualitative structure (smooth spectra,
smooth maps, row-sparse abundances).

Degradation follows ``V = E A + N + S + L``: Gaussian noise first, then
salt-and-pepper replacement (recorded additively as ``S``), then stripes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Dims, EndmemberLibrary, HSCube
from .metrics import sad

__all__ = [
    "NoiseCase",
    "SceneSpec",
    "CASES",
    "gen_endmembers",
    "gen_abundance",
    "clean_scene",
    "add_gaussian",
    "add_gaussian_noniid",
    "add_salt_pepper",
    "add_stripes",
    "make_case",
]

MIN_SAD = 0.05  # radians; rejection floor between library spectra


@dataclass(frozen=True)
class NoiseCase:
    case_id: int
    sigma: float = 0.0
    sigma_range: Optional[tuple[float, float]] = None  # non-i.i.d. per-band range
    p_s: float = 0.0
    stripe_range: Optional[tuple[float, float]] = None

    @property
    def noniid(self) -> bool:
        return self.sigma_range is not None


_STRIPES = (-0.3, 0.3)
CASES = {
    1: NoiseCase(1, sigma=0.05),
    2: NoiseCase(2, sigma=0.1),
    3: NoiseCase(3, sigma=0.05, p_s=0.05),
    4: NoiseCase(4, sigma=0.05, p_s=0.1),
    5: NoiseCase(5, sigma=0.05, p_s=0.05, stripe_range=_STRIPES),
    6: NoiseCase(6, sigma=0.1, p_s=0.05, stripe_range=_STRIPES),
    7: NoiseCase(7, sigma_range=(0.1, 0.2)),
    8: NoiseCase(8, sigma_range=(0.1, 0.2), p_s=0.05, stripe_range=_STRIPES),
}


@dataclass(frozen=True)
class SceneSpec:
    dims: Dims
    k: int
    seed: int = 0
    smoothness: float = 0.25  # blob width as a fraction of the grid side

    def __post_init__(self):
        if self.dims.m is None:
            raise ValueError("scene dims need a library size m")
        if not 1 <= self.k <= self.dims.m:
            raise ValueError(f"k must be in [1, {self.dims.m}], got {self.k}")
        if not self.smoothness > 0:
            raise ValueError("smoothness must be positive")


def gen_endmembers(l: int, m: int, seed: int = 0, max_tries: int = 1000) -> EndmemberLibrary:
    """``m`` smooth nonnegative spectra with peak exactly 1.

    Each spectrum is a baseline plus 3 to 6 Gaussian bumps; a candidate is
    redrawn when its spectral angle to an accepted one is below
    ``MIN_SAD``.
    """
    if m < 2:
        raise ValueError(f"need at least 2 endmembers, got m={m}")
    if l < 1:
        raise ValueError(f"need at least 1 band, got l={l}")
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, l)
    cols = []
    tries = 0
    while len(cols) < m:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not draw {m} spectra {MIN_SAD} rad apart over {l} bands")
        nb = rng.integers(3, 7)
        centers = rng.uniform(-0.1, 1.1, nb)
        widths = rng.uniform(0.05, 0.3, nb)
        heights = rng.uniform(0.2, 1.0, nb)
        s = rng.uniform(0.0, 0.2) + (heights * np.exp(-0.5 * ((x[:, None] - centers) / widths) ** 2)).sum(axis=1)
        s /= s.max()
        if l > 1 and any(sad(s, c) < MIN_SAD for c in cols):
            continue
        cols.append(s)
    return EndmemberLibrary(np.column_stack(cols))


def gen_abundance(spec: SceneSpec, m: Optional[int] = None) -> np.ndarray:
    """``m x n`` abundance matrix with exactly ``spec.k`` nonzero rows.

    Each active row starts from a few Gaussian blobs of width
    ``smoothness * max(n1, n2)`` over a positive floor; columns are then
    divided by their sum, so every pixel sums to one.
    """
    dims = spec.dims
    m = dims.m if m is None else m
    if spec.k > m:
        raise ValueError(f"k={spec.k} exceeds library size {m}")
    rng = np.random.default_rng(spec.seed)
    active = np.sort(rng.choice(m, size=spec.k, replace=False))
    rr, cc = np.meshgrid(np.arange(dims.n1), np.arange(dims.n2), indexing="ij")
    width = spec.smoothness * max(dims.n1, dims.n2)
    fields = []
    for _ in range(spec.k):
        f = np.full(rr.shape, 0.05)
        for _ in range(rng.integers(2, 5)):
            r0, c0 = rng.uniform(0, dims.n1), rng.uniform(0, dims.n2)
            f += rng.uniform(0.5, 1.0) * np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * width ** 2))
        fields.append(f.T.reshape(-1))  # pixel layout: column-of-image major
    F = np.vstack(fields)
    F /= F.sum(axis=0, keepdims=True)
    A = np.zeros((m, dims.n))
    A[active] = F
    return A


def clean_scene(E: EndmemberLibrary, A: np.ndarray, dims: Dims) -> HSCube:
    return HSCube(Dims(dims.n1, dims.n2, E.l, dims.m), E.matrix @ A)


def add_gaussian(V: HSCube, sigma: float, seed) -> tuple[HSCube, np.ndarray]:
    """Add i.i.d. ``N(0, sigma^2)`` noise; returns the cube and the noise."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    N = sigma * rng.standard_normal(V.data.shape)
    return HSCube(V.dims, V.data + N), N


def add_gaussian_noniid(V: HSCube, sigma_range: tuple[float, float], seed):
    """Per-band noise with ``sigma_i ~ U(sigma_range)``.

    Returns the cube, the noise matrix and the drawn ``sigma_i``.
    """
    lo_, hi = sigma_range
    if lo_ < 0 or hi < lo_:
        raise ValueError(f"bad sigma range {sigma_range}")
    rng = np.random.default_rng(seed)
    sig = rng.uniform(lo_, hi, V.dims.l)
    N = sig[:, None] * rng.standard_normal(V.data.shape)
    return HSCube(V.dims, V.data + N), N, sig


def add_salt_pepper(V: HSCube, p_s: float, seed) -> tuple[HSCube, np.ndarray]:
    """Replace entries by 0 or 1, each with probability ``p_s / 2``.

    Returns the cube and ``S`` = replaced cube minus input cube.
    """
    if not 0 <= p_s <= 1:
        raise ValueError(f"p_s must be in [0, 1], got {p_s}")
    rng = np.random.default_rng(seed)
    u = rng.random(V.data.shape)
    out = V.data.copy()
    out[u < p_s / 2] = 0.0
    out[(u >= p_s / 2) & (u < p_s)] = 1.0
    return HSCube(V.dims, out), out - V.data


def add_stripes(V: HSCube, intensity_range=(-0.3, 0.3), fraction: float = 1.0, seed=None):
    """Add vertical stripes: a constant per selected (band, image column).

    Returns the cube and the stripe matrix ``L`` (constant down each image
    column, so ``Dv(L) = 0`` exactly).
    """
    if not 0 <= fraction <= 1:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    lo_, hi = intensity_range
    if hi < lo_:
        raise ValueError(f"bad intensity range {intensity_range}")
    dims = V.dims
    rng = np.random.default_rng(seed)
    vals = rng.uniform(lo_, hi, (dims.l, dims.n2))
    keep = rng.random((dims.l, dims.n2)) < fraction
    vals = np.where(keep, vals, 0.0)
    L = np.repeat(vals, dims.n1, axis=1)  # pixel p = c * n1 + r
    return HSCube(dims, V.data + L), L


def make_case(V_clean: HSCube, case_id: int, seed: int = 0, stripe_fraction: float = 1.0):
    """Degrade a clean cube per noise case 1..8.

    Returns ``(degraded, truth, case)``; ``truth`` holds ``N``, ``S``, ``L``
    (zeros where absent) and ``sigma`` (scalar or per-band array), with
    ``degraded = clean + N + S + L`` exactly.
    """
    if case_id not in CASES:
        raise ValueError(f"unknown noise case {case_id}; expected 1..8")
    case = CASES[case_id]
    s_gauss, s_sp, s_stripe = np.random.SeedSequence([seed, case_id]).spawn(3)
    if case.noniid:
        V, N, sigma = add_gaussian_noniid(V_clean, case.sigma_range, s_gauss)
    else:
        V, N = add_gaussian(V_clean, case.sigma, s_gauss)
        sigma = case.sigma
    # rebase N so that clean + N reproduces V bit-for-bit
    N = V.data - V_clean.data
    S = np.zeros_like(V.data)
    if case.p_s > 0:
        V, S = add_salt_pepper(V, case.p_s, s_sp)
    L = np.zeros_like(V.data)
    if case.stripe_range is not None:
        V, L = add_stripes(V, case.stripe_range, stripe_fraction, s_stripe)
    return V, {"N": N, "S": S, "L": L, "sigma": sigma}, case
