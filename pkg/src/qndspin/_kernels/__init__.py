"""Fit-kernel backend selection.

The hot path of every Monte Carlo pipeline is the weighted two-Lorentzian
fit; a Cython extension provides it when built, with a numpy implementation
of the identical algorithm as fallback.  Selection happens once at import:
the extension is used when importable unless QNDSPIN_PURE_PYTHON=1.
"""

import os

from . import py_fallback

if os.environ.get("QNDSPIN_PURE_PYTHON"):
    _impl = py_fallback
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = py_fallback

fit_doublet = _impl.fit_doublet
doublet_model = _impl.doublet_model
BACKEND = _impl.BACKEND


def backend_name() -> str:
    return BACKEND
