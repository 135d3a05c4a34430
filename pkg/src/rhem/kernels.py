"""Backend selection for the statistic kernels.

The compiled extension is used when importable; set ``RHEM_PURE_PYTHON=1``
to force the pure-Python implementation.
"""
import os

from . import _pykernels

BACKEND = "python"
KernelState = _pykernels.KernelState

if not os.environ.get("RHEM_PURE_PYTHON"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        _kernels = None
    else:
        KernelState = _kernels.KernelState
        BACKEND = "cython"
else:
    _kernels = None

PyKernelState = _pykernels.KernelState
CyKernelState = _kernels.KernelState if _kernels is not None else None

SUB_REP = _pykernels.SUB_REP
PRIOR_SUCC = _pykernels.PRIOR_SUCC
CLOSURE = _pykernels.CLOSURE
SUCC_DISPARITY = _pykernels.SUCC_DISPARITY
NUM_COLLAB = _pykernels.NUM_COLLAB
NUM_COLLAB_SUCC = _pykernels.NUM_COLLAB_SUCC
NUM_AUTH = _pykernels.NUM_AUTH


def available_backends():
    out = {"python": PyKernelState}
    if CyKernelState is not None:
        out["cython"] = CyKernelState
    return out
