"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy twin in
``_pykernels`` takes over. Set ``HMOD_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("HMOD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

od_counts = _impl.od_counts
demand_walks = _impl.demand_walks
decay_walks = _impl.decay_walks

__all__ = ["BACKEND", "od_counts", "demand_walks", "decay_walks"]
