"""Kernel backend selection.

The compiled extension is used when it imports; otherwise (or when
``SCHOLMIG_PURE_PYTHON=1`` is set) the numpy fallback is used.
"""

from __future__ import annotations

import os

from . import _pykernels

SINGLE, COMPLETE, AVERAGE = _pykernels.SINGLE, _pykernels.COMPLETE, _pykernels.AVERAGE
LINKAGES = {"single": SINGLE, "complete": COMPLETE, "average": AVERAGE}

_compiled = None
if os.environ.get("SCHOLMIG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"
_impl = BACKENDS[BACKEND]


def get(name: str | None = None):
    """Kernel module by backend name (default: the selected one)."""
    return _impl if name is None else BACKENDS[name]


def distance_matrix(*args, backend: str | None = None):
    return get(backend).distance_matrix(*args)


def cluster_threshold(dist, threshold: float, linkage: int, backend: str | None = None):
    return get(backend).cluster_threshold(dist, float(threshold), int(linkage))
