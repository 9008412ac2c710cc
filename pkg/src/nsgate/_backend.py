"""Select the waveguide stepper: compiled extension if importable, numpy otherwise.

Set ``NSGATE_PURE_PYTHON=1`` to force the numpy implementation.
"""

import os

from . import _bathkernel_py

BACKEND = "python"
rk4_bath = _bathkernel_py.rk4_bath
norm2 = _bathkernel_py.norm2

if os.environ.get("NSGATE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _bathkernel
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "compiled"
        rk4_bath = _bathkernel.rk4_bath
        norm2 = _bathkernel.norm2


def kernels():
    """Available implementations by name."""
    out = {"python": _bathkernel_py.rk4_bath}
    try:
        from . import _bathkernel
        out["compiled"] = _bathkernel.rk4_bath
    except ImportError:
        pass
    return out
