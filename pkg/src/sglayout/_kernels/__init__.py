"""Hot kernels: compiled Cython core when built, numpy fallback otherwise.

The backend is chosen at import time. ``use_backend`` switches it explicitly,
which the tests and the benchmark use to compare both.
"""

from . import _fallback

try:
    from . import _ckernels as _native
except ImportError:  # extension not built
    _native = None

HAVE_NATIVE = _native is not None
backend = "native" if HAVE_NATIVE else "python"

segment_sum = (_native or _fallback).segment_sum
relative_geometry = (_native or _fallback).relative_geometry
box_iou = (_native or _fallback).box_iou


def use_backend(name):
    """Select ``"native"`` or ``"python"`` kernels for the whole package."""
    global backend, segment_sum, relative_geometry, box_iou
    if name == "native":
        if _native is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        mod = _native
    elif name == "python":
        mod = _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    backend = name
    segment_sum = mod.segment_sum
    relative_geometry = mod.relative_geometry
    box_iou = mod.box_iou
