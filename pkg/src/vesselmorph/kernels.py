"""Backend selection for the thinning kernel.

The compiled extension is used when it was built; otherwise the pure-Python
implementation is used. Set ``VESSELMORPH_PURE=1`` to force the fallback.
"""
import os

from ._neighborhood import DEGREE, POST, SIMPLE, ZS_STEP1, ZS_STEP2, thin_py

try:
    if os.environ.get("VESSELMORPH_PURE"):
        raise ImportError("pure backend forced")
    from ._ckernels import thin_c
except ImportError:
    thin_c = None

BACKEND = "cython" if thin_c is not None else "python"


def thin_padded(img, backend=None):
    """Thin a zero-padded, C-contiguous 0/1 uint8 image in place."""
    backend = backend or BACKEND
    if backend == "cython":
        if thin_c is None:
            raise RuntimeError("compiled kernel is not available")
        return thin_c(img, ZS_STEP1, ZS_STEP2, POST, SIMPLE, DEGREE)
    if backend == "python":
        return thin_py(img)
    raise ValueError(f"unknown backend {backend!r}")
