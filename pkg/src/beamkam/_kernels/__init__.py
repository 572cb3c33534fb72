"""Kernel backend selection: compiled core when built, numpy fallback
otherwise.  BEAMKAM_KERNELS=python forces the fallback (used by the
benchmark and the determinism tests)."""

import os

if os.environ.get("BEAMKAM_KERNELS", "").lower() == "python":
    from . import _fallback as _impl
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        from . import _fallback as _impl
        BACKEND = "python"

convolve = _impl.convolve
offset_reduce_max = _impl.offset_reduce_max
