import numpy as np
import pytest

from clusterdr import kernels
from clusterdr.data import ClusteredDataset


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return kernels.get_backend(request.param)


def make_dataset(sizes, y, r=None, w=None, x=None, ids=()):
    """Small dataset with outcomes ``y`` (None or NaN for missing)."""
    sizes = list(sizes)
    n, G = sum(sizes), len(sizes)
    y = np.array([np.nan if v is None else v for v in y], dtype=np.float64)
    if r is None:
        r = (~np.isnan(y)).astype(np.int8)
    w = np.zeros((n, 1)) if w is None else np.asarray(w, dtype=np.float64)
    x = np.zeros((G, 1)) if x is None else np.asarray(x, dtype=np.float64)
    return ClusteredDataset.from_sizes(x, w, r, y, sizes, ids)
