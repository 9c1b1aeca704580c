"""Robust hyperspectral unmixing with image-domain regularization.

The abundance matrix ``A`` of an ``l x n`` hyperspectral image ``V`` is
estimated against a known endmember library ``E`` while sparse noise ``S``
and vertical stripes ``L`` are separated out::

    V = E A + S + L + noise

The convex model is solved with a block preconditioned primal-dual
splitting (:mod:`rhuidr.ppds`); :func:`rhuidr.model.unmix` is the main
entry point.
"""

from .core import Dims, EndmemberLibrary, HSCube, cube_from_matrix
from .model import RhuidrConfig, UnmixResult, default_epsilon, default_eta, unmix

__all__ = [
    "Dims",
    "EndmemberLibrary",
    "HSCube",
    "cube_from_matrix",
    "RhuidrConfig",
    "UnmixResult",
    "default_epsilon",
    "default_eta",
    "unmix",
]
__version__ = "0.1.0"
