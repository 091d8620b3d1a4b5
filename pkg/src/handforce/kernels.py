"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the numpy
fallback is used. Set ``HANDFORCE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled

if _compiled is not None and os.environ.get("HANDFORCE_PURE_PYTHON", "") not in ("1", "true"):
    BACKEND = "compiled"
    _active = _compiled
else:
    BACKEND = "python"
    _active = _kernels_py

hand_fk = _active.hand_fk
contact_wrench = _active.contact_wrench


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        return _active
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; have {sorted(BACKENDS)}") from None
