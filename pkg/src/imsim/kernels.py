"""Kernel backend selection.

The compiled extension is used when importable; set ``IMSIM_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from imsim import _pykernels

if os.environ.get("IMSIM_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from imsim import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

slot_search = _impl.slot_search
brute_force = _impl.brute_force
joint_search = _impl.joint_search
antenna_combinations = _pykernels.antenna_combinations
