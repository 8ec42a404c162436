"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled module ``pshape._kernels`` is used when it was built; otherwise
(or when ``PSHAPE_PURE=1`` is set) the numpy versions in ``_kernels_py`` are
used. Both backends share signatures and produce identical results up to
floating-point summation order.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("PSHAPE_PURE"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"


def gae(rewards, values, dones, last_value, gamma, lam):
    """Generalized advantage estimates, computed backwards in time."""
    return _impl.gae(
        np.ascontiguousarray(rewards, dtype=np.float64),
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(dones, dtype=np.float64),
        float(last_value), float(gamma), float(lam),
    )


def bfs_distances(free, src_r, src_c):
    """4-connected BFS distance field from one cell; -1 marks unreachable cells."""
    return _impl.bfs_distances(np.ascontiguousarray(free, dtype=np.uint8), int(src_r), int(src_c))


def nearest_centroid(points, centroids):
    """Return (labels, squared distances); ties go to the lowest centroid index."""
    return _impl.nearest_centroid(
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(centroids, dtype=np.float64),
    )


def im2col(x, kh, kw, stride):
    return _impl.im2col(np.ascontiguousarray(x, dtype=np.float64), kh, kw, stride)


def col2im(cols, h, w, c, kh, kw, stride):
    return _impl.col2im(np.ascontiguousarray(cols, dtype=np.float64), h, w, c, kh, kw, stride)
