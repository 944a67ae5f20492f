"""Backend selection for the hot kernels.

The compiled extension is used when it was built; set ``PRIVGCN_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from privgcn import _pykernels

MLSM = _pykernels.MLSM
PSEUDO_HUBER = _pykernels.PSEUDO_HUBER

_impl = _pykernels
BACKEND = "python"
if not os.environ.get("PRIVGCN_PURE_PYTHON"):
    try:
        from privgcn import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def backends():
    """Map of every importable backend name to its module."""
    out = {"python": _pykernels}
    try:
        from privgcn import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out


loss_derivs = _impl.loss_derivs
loss_and_grad_margins = _impl.loss_and_grad_margins
loss_sum = _impl.loss_sum
normalized_adjacency = _impl.normalized_adjacency
row_diff_norm_sum = _impl.row_diff_norm_sum
