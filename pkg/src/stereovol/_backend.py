"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when it is
missing or when ``STEREOVOL_BACKEND=python`` is set in the environment.
"""

import os

from stereovol import _pykernels

try:
    from stereovol import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_available = {"python": _pykernels}
if _ckernels is not None:
    _available["compiled"] = _ckernels


def available():
    """Names of the usable backends, compiled first when present."""
    return sorted(_available, key=lambda n: n != "compiled")


def get(name):
    try:
        return _available[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {available()}") from None


def _select():
    wanted = os.environ.get("STEREOVOL_BACKEND", "").strip().lower()
    if wanted:
        return get(wanted)
    return _ckernels if _ckernels is not None else _pykernels


kernels = _select()


def use(name):
    """Switch the process-wide backend; returns the previous one's name."""
    global kernels
    prev = kernels.NAME
    kernels = get(name)
    return prev
