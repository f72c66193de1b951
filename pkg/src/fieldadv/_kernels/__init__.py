"""Hot kernels with a compiled core and a numpy fallback.

The compiled module is used when it imports and ``FIELDADV_PURE`` is unset
or ``0``. ``BACKEND`` names the active implementation.
"""
import os

from . import _pykernels as py

if os.environ.get("FIELDADV_PURE", "0") not in ("", "0"):
    impl = py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        impl = py
        BACKEND = "python"

hash_encode_fwd = impl.hash_encode_fwd
hash_encode_bwd = impl.hash_encode_bwd
raster_faces = impl.raster_faces

__all__ = ["BACKEND", "hash_encode_fwd", "hash_encode_bwd", "raster_faces", "py", "impl"]
