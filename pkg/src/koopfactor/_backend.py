"""Select the compiled jet kernels when built, else the numpy fallback.

Set ``KF_PURE_PYTHON=1`` to force the fallback (used by the benchmark and by
the kernel-equivalence tests).
"""

import os

from . import _jetcore_py

NAME = "python"
_impl = _jetcore_py

if os.environ.get("KF_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _jetcore as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        NAME = "cython"


def compiled_available() -> bool:
    try:
        from . import _jetcore  # noqa: F401
    except ImportError:
        return False
    return True


def implementations() -> dict:
    """All importable kernel implementations keyed by name."""
    out = {"python": _jetcore_py}
    if compiled_available():
        from . import _jetcore

        out["cython"] = _jetcore
    return out


mul_into = _impl.mul_into
mul_rows_into = _impl.mul_rows_into
