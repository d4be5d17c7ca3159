"""Backend selection for the hot loops.

The compiled extension is preferred; the pure-Python module is used when it
is missing or when ``GLOSSFORGE_PURE_PYTHON`` is set to a non-empty value
other than ``0``.
"""

import os

from . import _pykernels

if os.environ.get("GLOSSFORGE_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

error_diffuse = _impl.error_diffuse
vector_error_diffuse = _impl.vector_error_diffuse
disk_max_fill = _impl.disk_max_fill


def backends():
    """Map of available backend name -> module, for tests and benchmarks."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
