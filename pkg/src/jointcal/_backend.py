"""Kernel backend selection.

The compiled ``_kernels`` extension is used when importable. Setting
``JOINTCAL_BACKEND=python`` forces the numpy reference kernels.
"""

import os

from . import _reference

_requested = os.environ.get("JOINTCAL_BACKEND", "auto").lower()

if _requested == "python":
    kernels = _reference
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        if _requested == "cython":
            raise
        kernels = _reference

NAME = kernels.NAME
