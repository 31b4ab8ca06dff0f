"""Kernel backend selection.

The compiled extension is used when it imports; ``VECCHIA_BACKEND=python``
forces the numpy fallback and ``VECCHIA_BACKEND=compiled`` makes a missing
extension an error.  Callers go through :func:`impl` so tests can switch.
"""

import contextlib
import os

from . import _pure

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_BACKENDS = {"python": _pure}
if _core is not None:
    _BACKENDS["compiled"] = _core


def _initial():
    forced = os.environ.get("VECCHIA_BACKEND", "").strip().lower()
    if forced == "python":
        return "python"
    if forced == "compiled":
        if _core is None:
            raise ImportError("VECCHIA_BACKEND=compiled but vecchia._core is not built")
        return "compiled"
    return "compiled" if _core is not None else "python"


_current = _initial()


def available():
    return tuple(_BACKENDS)


def name():
    return _current


def impl():
    return _BACKENDS[_current]


def set_backend(which):
    global _current
    if which not in _BACKENDS:
        raise ValueError(f"backend {which!r} not available; have {available()}")
    _current = which


@contextlib.contextmanager
def use_backend(which):
    prev = _current
    set_backend(which)
    try:
        yield
    finally:
        set_backend(prev)


def default_threads():
    try:
        return max(1, int(os.environ.get("VECCHIA_THREADS", "1")))
    except ValueError:
        return 1
