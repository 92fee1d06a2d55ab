"""Pick the kernel implementation once, at import.

``FINECLUSTER_BACKEND`` may be ``cython`` (fail if the extension is missing)
or ``python`` (always use the numpy fallback). Unset means: compiled if
available.
"""
import os

_requested = os.environ.get("FINECLUSTER_BACKEND", "").strip().lower()

if _requested == "python":
    from . import _kernels_py as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import _kernels_py as kernels
        BACKEND = "python"

weighted_scatter = kernels.weighted_scatter
ball_counts = kernels.ball_counts
nearest_center = kernels.nearest_center
projected_energy = kernels.projected_energy

__all__ = ["BACKEND", "weighted_scatter", "ball_counts", "nearest_center", "projected_energy"]
