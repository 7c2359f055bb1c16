"""Kernel backend selection.

Imports the compiled extension when available, otherwise the numpy
fallback.  Set ``ADISEP_PURE=1`` to force the fallback (useful for
debugging and for the backend-comparison benchmark).
"""

import os

if os.environ.get("ADISEP_PURE", "") not in ("", "0"):
    from . import pure as impl
else:
    try:
        from . import _core as impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as impl

BACKEND = impl.BACKEND_NAME

conv2d_forward = impl.conv2d_forward
conv2d_backward = impl.conv2d_backward
bilinear_forward = impl.bilinear_forward
bilinear_backward = impl.bilinear_backward
separate_hard = impl.separate_hard
separate_soft = impl.separate_soft
separate_soft_bounds_grad = impl.separate_soft_bounds_grad
convex_clip = impl.convex_clip
