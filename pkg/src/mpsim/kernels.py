"""Kernel backend selection.

The compiled core is used when it imports; ``MPS_BACKEND=python`` forces the
numpy fallback and ``MPS_BACKEND=cython`` makes a missing extension an error.
``MPS_THREADS`` caps the OpenMP worker count of the compiled core.
"""
import os

from . import _kernels_py

try:
    from . import _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKENDS = {"python": _kernels_py}
if _kernels_c is not None:
    BACKENDS["cython"] = _kernels_c


def get_backend(name=None):
    """Return the kernel module for ``name`` ("auto", "python" or "cython")."""
    name = name or os.environ.get("MPS_BACKEND", "auto")
    if name == "auto":
        return BACKENDS.get("cython", _kernels_py)
    if name not in BACKENDS:
        raise ImportError(f"kernel backend {name!r} is not available (have {sorted(BACKENDS)})")
    return BACKENDS[name]


def set_threads(n):
    """Cap worker threads of every available backend; returns the active count."""
    active = 1
    for mod in BACKENDS.values():
        active = mod.set_num_threads(int(n))
    return active


default = get_backend()
if os.environ.get("MPS_THREADS"):
    set_threads(int(os.environ["MPS_THREADS"]))
