"""Backend selection for the Monte Carlo kernels.

The compiled extension ``mfgfinite._core`` is used when it imports; otherwise
(or when ``MFG_PURE_PYTHON=1``) the numpy implementation in
``mfgfinite._pycore`` is used. Both expose the same four functions.
"""
import os

from . import _pycore

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

_force_python = os.environ.get("MFG_PURE_PYTHON", "").strip() not in ("", "0")

BACKENDS = {"python": _pycore}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

BACKEND = "python" if (_compiled is None or _force_python) else "compiled"
_impl = BACKENDS[BACKEND]


def use_backend(name):
    """Switch the active backend (``"compiled"`` or ``"python"``)."""
    global BACKEND, _impl
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    BACKEND = name
    _impl = BACKENDS[name]


def thin_events(*args):
    return _impl.thin_events(*args)


def states_at(*args):
    return _impl.states_at(*args)


def integrate_paths(*args):
    return _impl.integrate_paths(*args)


def jump_log_rates(*args):
    return _impl.jump_log_rates(*args)
