"""Hot loops over clustered arrays, dispatched to the compiled or numpy backend.

The compiled extension is used when importable; setting the environment
variable ``CLUSTERDR_PURE_PYTHON=1`` forces the numpy fallback. Both backends
produce bit-identical output, which the test-suite checks.

All reductions follow one fixed order: members in time order within a
cluster, then clusters in dataset order, with Neumaier-compensated
accumulation. That order is what makes every estimate reproducible regardless
of how many worker threads run replications.
"""
from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _pykernels

try:
    from . import _ckernels  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None


def available_backends() -> list[str]:
    names = ["python"]
    if _ckernels is not None:
        names.insert(0, "cython")
    return names


def get_backend(name: str | None = None) -> ModuleType:
    """Return the raw kernel module ``name`` (``"cython"`` or ``"python"``)."""
    if name is None:
        if os.environ.get("CLUSTERDR_PURE_PYTHON") == "1" or _ckernels is None:
            return _pykernels
        return _ckernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    if name == "python":
        return _pykernels
    raise ValueError(f"unknown kernel backend {name!r}")


_impl = get_backend()
BACKEND: str = _impl.BACKEND


def _f1(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _f2(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


def _off(offsets) -> np.ndarray:
    return np.ascontiguousarray(offsets, dtype=np.int64)


def compensated_sum(values, *, backend: ModuleType | None = None) -> float:
    return float((backend or _impl).compensated_sum(_f1(values)))


def segment_sums(values, offsets, *, backend: ModuleType | None = None) -> np.ndarray:
    """Per-cluster compensated sums of a flat per-individual array."""
    return (backend or _impl).segment_sums(_f1(values), _off(offsets))


def ordered_sum(values, offsets, *, backend: ModuleType | None = None) -> float:
    """Sum of a per-individual array: per-cluster partial sums, then across clusters."""
    return compensated_sum(segment_sums(values, offsets, backend=backend), backend=backend)


def influence(r, y, pi, mu, *, backend: ModuleType | None = None) -> np.ndarray:
    return (backend or _impl).influence(
        np.ascontiguousarray(r, dtype=np.int8), _f1(y), _f1(pi), _f1(mu)
    )


def ar1_paths(centre, e, offsets, rho: float, sigma: float, *, backend=None) -> np.ndarray:
    """Within-cluster AR(1) around ``centre`` with marginal standard deviation ``sigma``."""
    step = sigma * float(np.sqrt(1.0 - rho * rho))
    return (backend or _impl).ar1_paths(_f1(centre), _f1(e), _off(offsets),
                                        float(rho), float(sigma), step)


def ar2_paths(e, offsets, a1, a2, *, backend=None) -> np.ndarray:
    """Within-cluster vector AR(2) started from two zero states."""
    return (backend or _impl).ar2_paths(_f2(e), _off(offsets), _f2(a1), _f2(a2))


def running_extrema(w, offsets, *, backend=None) -> tuple[np.ndarray, np.ndarray]:
    return (backend or _impl).running_extrema(_f2(w), _off(offsets))


def running_mean(w, offsets, *, backend=None) -> np.ndarray:
    return (backend or _impl).running_mean(_f2(w), _off(offsets))


def window_mean(w, offsets, d: int, *, backend=None) -> np.ndarray:
    if d < 1:
        raise ValueError("window_d must be at least 1")
    return (backend or _impl).window_mean(_f2(w), _off(offsets), int(d))


def past_means(v, offsets, *, backend=None) -> np.ndarray:
    return (backend or _impl).past_means(_f1(v), _off(offsets))
