"""Backend selection for the episode-simulation kernel.

The compiled extension is used when it imports; set ``OOMUCB_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
simulate = _pykernels.simulate

if os.environ.get("OOMUCB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        simulate = _ckernels.simulate
        BACKEND = "cython"


def get_simulate(backend=None):
    """Return the kernel for ``backend`` ('cython', 'python' or None for the active one)."""
    if backend is None:
        return simulate
    if backend == "python":
        return _pykernels.simulate
    if backend == "cython":
        from . import _ckernels

        return _ckernels.simulate
    raise ValueError(f"unknown backend {backend!r}")
