"""Pick the compiled kernels when available.

Set ``LEVYAVG_BACKEND=python`` to force the NumPy implementation.
"""

import os

from . import _kernels_py

kernels = _kernels_py
name = "python"

if os.environ.get("LEVYAVG_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        name = "cython"


def use(backend: str):
    """Switch backends at runtime ("cython" or "python"); returns the previous name."""
    global kernels, name
    prev = name
    if backend == "python":
        kernels, name = _kernels_py, "python"
    elif backend == "cython":
        from . import _kernels as _compiled
        kernels, name = _compiled, "cython"
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return prev
