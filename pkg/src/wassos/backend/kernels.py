"""Select the Schur complement kernel at import time.

The compiled extension is used when importable; setting the environment
variable ``WASSOS_PURE_PYTHON=1`` forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _schur_py

KERNELS = {"numpy": _schur_py.schur_block, "numpy-kron": _schur_py.schur_block_kron}

try:  # pragma: no cover - depends on the build
    from ._schur import schur_block as _compiled

    KERNELS["cython"] = _compiled
except ImportError:  # pragma: no cover
    _compiled = None

if _compiled is not None and os.environ.get("WASSOS_PURE_PYTHON", "") not in ("1", "true"):
    ACTIVE = "cython"
else:
    ACTIVE = "numpy"

schur_block = KERNELS[ACTIVE]


def get_kernel(name: str):
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"kernel {name!r} unavailable; have {sorted(KERNELS)}") from None
