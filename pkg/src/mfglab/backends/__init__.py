"""Jet kernel backend selection.

Two interchangeable implementations of the network jet recursion exist:

* ``compiled``: a Cython extension (_jetcore) fusing the forward jet pass
  and its reverse sweep into one call per network evaluation;
* ``python``: the same recursion composed from tape primitives.

The active backend is picked once at import: the compiled kernel when the
extension built, the pure-Python path otherwise.  The MFGLAB_BACKEND
environment variable (auto | compiled | python) overrides the choice, and
set_backend() switches at runtime (used by the benchmark and the
equivalence tests).  Both backends produce the same jets; the compiled one
is a speedup, never a correctness dependency.
"""

import os

try:
    from . import _jetcore
    HAVE_COMPILED = True
except ImportError:
    _jetcore = None
    HAVE_COMPILED = False

_VALID = ("auto", "compiled", "python")


def _resolve(name):
    if name not in _VALID:
        raise ValueError(f"MFGLAB_BACKEND must be one of {_VALID}, got {name!r}")
    if name == "auto":
        return "compiled" if HAVE_COMPILED else "python"
    if name == "compiled" and not HAVE_COMPILED:
        raise RuntimeError(
            "MFGLAB_BACKEND=compiled but the _jetcore extension is not built; "
            "reinstall with a C compiler or use MFGLAB_BACKEND=python"
        )
    return name


_active = _resolve(os.environ.get("MFGLAB_BACKEND", "auto"))


def active():
    """Name of the backend in use: 'compiled' or 'python'."""
    return _active


def set_backend(name):
    """Switch backends at runtime; returns the previous name."""
    global _active
    prev = _active
    _active = _resolve(name)
    return prev


def jetcore():
    return _jetcore
