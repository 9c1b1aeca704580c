"""Robust unmixing with image-domain regularization.

Given an observed image ``V`` (``l x n``) and a library ``E`` (``l x m``),
estimate abundances ``A``, sparse noise ``S`` and stripe noise ``L`` from

    min  ||A||_{1,2,r} + lam1 ||D A||_1 + lam2 R(K(E A)) + lam3 ||L||_1
    s.t. A >= 0,  ||E A + S + L - V||_F <= eps,  ||S||_1 <= eta,  Dv(L) = 0

where ``(R, K)`` is one of HTV, SSTV or HSSTV applied to the reconstructed
image ``E A``. The problem is split into three primal blocks ``(A, S, L)``
and up to five dual blocks and handed to :func:`rhuidr.ppds.solve`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linops as lo
from .core import Dims, EndmemberLibrary, HSCube
from .ppds import (BlockProblem, DualBlock, PrimalBlock, SolveTrace, Stepsizes,
                   compute_stepsizes, relative_change, solve)
from .prox import (project_fro_ball, project_l1_ball, prox_l1, prox_l12_cols,
                   prox_l12_rows, prox_nonneg, prox_zero_set)

__all__ = [
    "REGULARIZERS",
    "RhuidrConfig",
    "UnmixResult",
    "default_epsilon",
    "default_eta",
    "image_operator",
    "build_problem",
    "objective_value",
    "diagnostics_record",
    "unmix",
]

REGULARIZERS = ("htv", "sstv", "hsstv", "none")
DEFAULT_LAMBDA1 = 0.05
DEFAULT_LAMBDA2 = 0.05


@dataclass(frozen=True)
class RhuidrConfig:
    """Hyperparameters of one unmixing run.

    ``lambda2`` defaults to 0.05 for a regularized run and to 0 for
    ``regularizer="none"``; a positive ``lambda2`` without a regularizer is
    rejected. ``eta = 0`` pins the sparse component to zero.
    """

    epsilon: float
    eta: float
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: Optional[float] = None
    lambda3: float = 1.0
    regularizer: str = "htv"
    omega: float = 0.05
    max_iter: int = 50000
    tol: float = 1e-5
    stride: int = 10

    def __post_init__(self):
        reg = self.regularizer.lower()
        if reg not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}; choose from {REGULARIZERS}")
        object.__setattr__(self, "regularizer", reg)
        if self.lambda2 is None:
            object.__setattr__(self, "lambda2", 0.0 if reg == "none" else DEFAULT_LAMBDA2)
        if reg == "none" and self.lambda2 != 0:
            raise ValueError("lambda2 > 0 requires an image-domain regularizer")
        if not self.lambda1 > 0:
            raise ValueError(f"lambda1 must be positive, got {self.lambda1}")
        if self.lambda2 < 0:
            raise ValueError(f"lambda2 must be nonnegative, got {self.lambda2}")
        if not self.lambda3 > 0:
            raise ValueError(f"lambda3 must be positive, got {self.lambda3}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not self.eta >= 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.max_iter < 1 or not self.tol > 0 or self.stride < 1:
            raise ValueError("max_iter and stride must be >= 1 and tol > 0")


@dataclass
class UnmixResult:
    A: np.ndarray
    S: np.ndarray
    L: np.ndarray
    reconstructed: HSCube
    trace: SolveTrace
    stepsizes: Stepsizes
    config: RhuidrConfig
    duals: list = field(default_factory=list, repr=False)

    @property
    def termination_reason(self) -> str:
        return self.trace.reason


def default_epsilon(sigma, p_s: float, nl: int, alpha: float = 1.0) -> float:
    """Fidelity radius from the noise level.

    A scalar ``sigma`` gives ``alpha * sigma * sqrt((1 - p_s) n l)``; a
    per-band sequence gives ``alpha * sqrt((1 - p_s) n l sum_i sigma_i)``.
    """
    sig = np.asarray(sigma, dtype=np.float64)
    if (sig < 0).any() or not 0 <= p_s <= 1 or nl <= 0 or alpha < 0:
        raise ValueError("sigma, alpha must be nonnegative, p_s in [0, 1], nl positive")
    if sig.ndim == 0:
        return float(alpha * sig * np.sqrt((1.0 - p_s) * nl))
    return float(alpha * np.sqrt((1.0 - p_s) * nl * sig.sum()))


def default_eta(p_s: float, nl: int, alpha: float = 0.9) -> float:
    """Sparse-noise radius ``0.5 * alpha * p_s * n l``."""
    if not 0 <= p_s <= 1 or nl <= 0 or alpha < 0:
        raise ValueError("p_s must be in [0, 1], nl positive, alpha nonnegative")
    return 0.5 * alpha * p_s * nl


def image_operator(regularizer: str, dims: Dims, omega: float = 0.05) -> Optional[lo.LinearMap]:
    """The operator ``K`` applied to the reconstructed image."""
    if regularizer == "htv":
        return lo.spatial_diff_map(dims, dims.l)
    if regularizer == "sstv":
        return lo.spatio_spectral_map(dims, dims.l)
    if regularizer == "hsstv":
        return lo.hsstv_map(dims, dims.l, omega)
    if regularizer == "none":
        return None
    raise ValueError(f"unknown regularizer {regularizer!r}")


def _regularizer_value(Y, regularizer):
    if regularizer == "htv":
        return float(np.sqrt((Y * Y).sum(axis=0)).sum())
    return float(np.abs(Y).sum())


def _check_inputs(V: HSCube, E: EndmemberLibrary):
    if E.l != V.dims.l:
        raise ValueError(f"library has {E.l} bands, image has {V.dims.l}")


def _grid_dims(V: HSCube, E: EndmemberLibrary) -> Dims:
    return Dims(V.dims.n1, V.dims.n2, V.dims.l, E.m)


def build_problem(V: HSCube, E: EndmemberLibrary, cfg: RhuidrConfig,
                  sigma_max: Optional[float] = None) -> BlockProblem:
    """Lay the unmixing problem out as primal blocks (A, S, L) and dual blocks.

    Duals, in order: ``Z1 = A``, ``Z2 = D A``, ``Z3 = K(E A)`` (absent for
    ``regularizer="none"``), ``Z4 = E A + S + L``, ``Z5 = Dv L``.
    ``sigma_max`` overrides the estimated largest singular value of ``E``.
    """
    _check_inputs(V, E)
    dims = _grid_dims(V, E)
    l, m, n = dims.l, dims.m, dims.n
    if sigma_max is None:
        sigma_max = E.spectral_norm()
    Emat = E.matrix

    lam1, lam2, lam3 = cfg.lambda1, cfg.lambda2, cfg.lambda3
    eps, eta = cfg.epsilon, cfg.eta
    Vdata = V.data

    if eta > 0:
        prox_S = lambda X, g: project_l1_ball(X, eta)
    else:
        prox_S = prox_zero_set
    primal = [
        PrimalBlock("A", (m, n), prox_nonneg),
        PrimalBlock("S", (l, n), prox_S),
        PrimalBlock("L", (l, n), lambda X, g: prox_l1(X, lam3 * g)),
    ]

    dual = [
        DualBlock("Z1", (m, n), prox_l12_rows),
        DualBlock("Z2", (2 * m, n), lambda X, g: prox_l1(X, lam1 * g)),
    ]
    ops = {
        (0, 0): lo.identity_map((m, n)),
        (1, 0): lo.spatial_diff_map(dims, m),
    }
    K = image_operator(cfg.regularizer, dims, cfg.omega)
    if K is not None:
        if cfg.regularizer == "htv":
            prox_R = lambda X, g: prox_l12_cols(X, lam2 * g)
        else:
            prox_R = lambda X, g: prox_l1(X, lam2 * g)
        ops[(len(dual), 0)] = lo.compose_with_library(K, Emat, sigma_max)
        dual.append(DualBlock("Z3", K.out_shape, prox_R))
    j4 = len(dual)
    dual.append(DualBlock("Z4", (l, n), lambda X, g: project_fro_ball(X, Vdata, eps)))
    ops[(j4, 0)] = lo.matrix_map(Emat, n, sigma_max)
    ops[(j4, 1)] = lo.identity_map((l, n))
    ops[(j4, 2)] = lo.identity_map((l, n))
    dual.append(DualBlock("Z5", (l, n), prox_zero_set))
    ops[(j4 + 1, 2)] = lo.vertical_diff_map(dims, l)
    return BlockProblem(primal, dual, ops)


def objective_value(A, L, cfg: RhuidrConfig, E: EndmemberLibrary, dims: Dims) -> float:
    """``||A||_{1,2,r} + lam1 ||D A||_1 + lam2 R(K(E A)) + lam3 ||L||_1``."""
    val = float(np.sqrt((A * A).sum(axis=1)).sum())
    val += cfg.lambda1 * float(np.abs(lo.spatial_diff(A, dims)).sum())
    if cfg.regularizer != "none" and cfg.lambda2 != 0:
        idims = Dims(dims.n1, dims.n2, E.l)
        K = image_operator(cfg.regularizer, idims, cfg.omega)
        val += cfg.lambda2 * _regularizer_value(K(E.matrix @ A), cfg.regularizer)
    val += cfg.lambda3 * float(np.abs(L).sum())
    return val


def diagnostics_record(A, S, L, V: HSCube, E: EndmemberLibrary, cfg: RhuidrConfig) -> dict:
    """Convergence quantities: objective, ``||V - EA - S - L||_F``,
    ``||S||_1`` and the mean absolute value of ``Dv(L)``."""
    dims = V.dims
    return {
        "objective": objective_value(A, L, cfg, E, dims),
        "fidelity_dist": float(np.linalg.norm(V.data - E.matrix @ A - S - L)),
        "s_l1": float(np.abs(S).sum()),
        "stripe_mav": float(np.abs(lo.diff_v(L, dims)).mean()),
    }


def unmix(V: HSCube, E: EndmemberLibrary, cfg: RhuidrConfig, init_A=None,
          sigma_max: Optional[float] = None) -> UnmixResult:
    """Estimate ``(A, S, L)`` by preconditioned primal-dual splitting.

    Stops when ``||A_new - A||_F / ||A_new||_F <= cfg.tol`` or after
    ``cfg.max_iter`` iterations; the reason is recorded on the trace.
    ``init_A`` warm-starts the abundances; everything else starts at zero.
    """
    problem = build_problem(V, E, cfg, sigma_max)
    steps = compute_stepsizes(problem)
    init = None
    if init_A is not None:
        init = [np.asarray(init_A, dtype=np.float64), np.zeros(V.dims.shape), np.zeros(V.dims.shape)]

    def hook(t, Y, Z):
        return diagnostics_record(Y[0], Y[1], Y[2], V, E, cfg)

    Y, Z, trace = solve(problem, steps, init=init, max_iter=cfg.max_iter, tol=cfg.tol,
                        stop=lambda new, old: relative_change(new[0], old[0]),
                        hook=hook, stride=cfg.stride)
    A, S, L = Y
    rec = HSCube(V.dims, E.matrix @ A)
    return UnmixResult(A, S, L, rec, trace, steps, cfg, Z)
