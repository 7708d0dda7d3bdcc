"""Kernel backend selection.

The compiled Cython extension is preferred when it imported cleanly; the
pure-numpy module is the fallback. Set SFLDA_BACKEND=pure (or =compiled)
to force a choice; forcing `compiled` raises if the extension is missing.
"""

import os

from . import _pure

_requested = os.environ.get("SFLDA_BACKEND", "").strip().lower()

if _requested in ("pure", "python"):
    _impl = _pure
elif _requested in ("", "compiled", "c"):
    try:
        from . import _core as _impl
    except ImportError:
        if _requested:
            raise
        _impl = _pure
else:
    raise ValueError(f"unknown SFLDA_BACKEND value: {_requested!r}")

BACKEND = _impl.BACKEND_NAME

smooth_grid = _impl.smooth_grid
mn_objective = _impl.mn_objective
mn_score_info = _impl.mn_score_info
mn_mstep = _impl.mn_mstep

# The criterion assembly for a single fit is not hot; the pure version is the
# single source of truth for the public smoothing-criterion API.
smoothing_gic_matrices = _pure.smoothing_gic_matrices
smoothing_gic_value = _pure.smoothing_gic_value
