"""Clustered data model with missing outcomes.

A :class:`ClusteredDataset` stores its members as flat arrays in cluster
order, with ``offsets`` marking cluster boundaries (cluster ``g`` owns rows
``offsets[g]:offsets[g + 1]``). The row order within a cluster is the
sampling/time order, so a member's history is simply the rows before it.
Missing outcomes are stored as NaN and never carry a value.

:class:`IndividualRecord` and :class:`Cluster` are the record-level view used
for hand-built datasets and for per-cluster inspection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .rng import stream


class ValidationError(ValueError):
    """A dataset, file or configuration violates a structural invariant."""


class EstimationError(RuntimeError):
    """A computation could not be carried out on otherwise valid input."""


@dataclass(frozen=True)
class IndividualRecord:
    w: tuple[float, ...]
    r: int
    y: float | None = None
    time_index: int = 0


@dataclass(frozen=True)
class Cluster:
    x: tuple[float, ...]
    members: tuple[IndividualRecord, ...]

    @property
    def size(self) -> int:
        return len(self.members)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ClusteredDataset:
    """Immutable clustered dataset.

    Parameters
    ----------
    x : (G, p) array
        Cluster-level covariates.
    w : (n, q) array
        Individual-level covariates, clusters stacked in order.
    r : (n,) int8 array
        1 if the outcome is observed.
    y : (n,) array
        Outcomes, NaN where ``r == 0``.
    offsets : (G + 1,) int64 array
        Cluster boundaries into the member arrays.
    cluster_ids : tuple of str, optional
        External cluster labels; defaults to ``"0" .. "G-1"``.
    """

    x: np.ndarray
    w: np.ndarray
    r: np.ndarray
    y: np.ndarray
    offsets: np.ndarray
    cluster_ids: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim == 1:
            w = w.reshape(-1, 1)
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "w", _readonly(w))
        object.__setattr__(self, "r", _readonly(np.asarray(self.r, dtype=np.int8)))
        object.__setattr__(self, "y", _readonly(np.asarray(self.y, dtype=np.float64)))
        object.__setattr__(self, "offsets", _readonly(np.asarray(self.offsets, dtype=np.int64)))
        if not self.cluster_ids:
            object.__setattr__(self, "cluster_ids", tuple(str(g) for g in range(self.G)))
        else:
            object.__setattr__(self, "cluster_ids", tuple(str(c) for c in self.cluster_ids))

    # -- shape -----------------------------------------------------------
    @property
    def G(self) -> int:
        return int(self.offsets.shape[0] - 1)

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def time_index(self) -> np.ndarray:
        """0-based position of each member within its cluster."""
        return np.arange(self.n) - np.repeat(self.offsets[:-1], self.sizes)

    @property
    def cluster_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.G), self.sizes)

    @property
    def x_individual(self) -> np.ndarray:
        """Cluster covariates repeated for every member, shape (n, p)."""
        return np.repeat(self.x, self.sizes, axis=0)

    @property
    def y_filled(self) -> np.ndarray:
        """Outcomes with missing entries replaced by 0 (the value of R*Y)."""
        return np.where(self.r == 1, self.y, 0.0)

    # -- constructors ----------------------------------------------------
    @classmethod
    def from_sizes(cls, x, w, r, y, sizes, cluster_ids=(), check: bool = True) -> "ClusteredDataset":
        offsets = np.concatenate([[0], np.cumsum(np.asarray(sizes, dtype=np.int64))])
        ds = cls(x, w, r, y, offsets, tuple(cluster_ids))
        if check:
            validate(ds)
        return ds

    @classmethod
    def from_clusters(cls, clusters: Sequence[Cluster], cluster_ids=()) -> "ClusteredDataset":
        validate_clusters(clusters)
        x = np.array([c.x for c in clusters], dtype=np.float64).reshape(len(clusters), -1)
        members = [m for c in clusters for m in c.members]
        w = np.array([m.w for m in members], dtype=np.float64).reshape(len(members), -1)
        r = np.array([m.r for m in members], dtype=np.int8)
        y = np.array([np.nan if m.y is None else m.y for m in members], dtype=np.float64)
        return cls.from_sizes(x, w, r, y, [c.size for c in clusters], cluster_ids)

    # -- views -----------------------------------------------------------
    def cluster(self, g: int) -> Cluster:
        lo, hi = int(self.offsets[g]), int(self.offsets[g + 1])
        members = tuple(
            IndividualRecord(
                w=tuple(float(v) for v in self.w[i]),
                r=int(self.r[i]),
                y=float(self.y[i]) if self.r[i] == 1 else None,
                time_index=i - lo,
            )
            for i in range(lo, hi)
        )
        return Cluster(x=tuple(float(v) for v in self.x[g]), members=members)

    @property
    def clusters(self) -> tuple[Cluster, ...]:
        return tuple(self.cluster(g) for g in range(self.G))

    def member_index(self, clusters) -> np.ndarray:
        """Flat member rows of ``clusters`` (in the order given)."""
        clusters = np.asarray(clusters, dtype=np.int64)
        if clusters.size == 0:
            return np.zeros(0, dtype=np.int64)
        sizes = self.sizes[clusters]
        starts = self.offsets[clusters]
        within = np.arange(int(sizes.sum())) - np.repeat(np.cumsum(sizes) - sizes, sizes)
        return np.repeat(starts, sizes) + within

    def subset(self, clusters) -> "ClusteredDataset":
        """Dataset made of ``clusters`` in the given order; repeats are allowed."""
        clusters = np.asarray(clusters, dtype=np.int64)
        rows = self.member_index(clusters)
        offsets = np.concatenate([[0], np.cumsum(self.sizes[clusters])])
        if np.unique(clusters).size == clusters.size:
            ids = tuple(self.cluster_ids[g] for g in clusters)
        else:
            ids = tuple(f"{self.cluster_ids[g]}~{j}" for j, g in enumerate(clusters))
        return ClusteredDataset(self.x[clusters], self.w[rows], self.r[rows], self.y[rows], offsets, ids)

    def with_w(self, w) -> "ClusteredDataset":
        """Same clusters and outcomes with replaced individual covariates."""
        return ClusteredDataset(self.x, w, self.r, self.y, self.offsets, self.cluster_ids)


@dataclass(frozen=True, eq=False)
class InfluencePanel:
    """Per-individual influence values aligned with a dataset."""

    values: np.ndarray
    offsets: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _readonly(np.asarray(self.values, dtype=np.float64)))
        object.__setattr__(self, "offsets", _readonly(np.asarray(self.offsets, dtype=np.int64)))
        if self.values.shape != (int(self.offsets[-1]),):
            raise ValidationError("influence panel length does not match cluster offsets")

    @classmethod
    def for_dataset(cls, dataset: ClusteredDataset, values) -> "InfluencePanel":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (dataset.n,):
            raise ValidationError(
                f"alignment mismatch: {values.shape[0] if values.ndim else 0} values for {dataset.n} individuals"
            )
        return cls(values, dataset.offsets)

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    @property
    def G(self) -> int:
        return int(self.offsets.shape[0] - 1)

    def cluster_sums(self) -> np.ndarray:
        return kernels.segment_sums(self.values, self.offsets)

    def mean(self) -> float:
        return kernels.compensated_sum(self.cluster_sums()) / self.n

    def aligned_with(self, dataset: ClusteredDataset) -> bool:
        return np.array_equal(self.offsets, dataset.offsets)


# -- validation ------------------------------------------------------------

def _locate(dataset: ClusteredDataset, row: int) -> str:
    g = int(np.searchsorted(dataset.offsets, row, side="right") - 1)
    return f"cluster {g} ({dataset.cluster_ids[g]!r}), member {row - int(dataset.offsets[g])}"


def validate(dataset: ClusteredDataset) -> None:
    """Check every dataset invariant; raise :class:`ValidationError` on the first violation."""
    off = dataset.offsets
    if off.ndim != 1 or off.shape[0] < 2:
        raise ValidationError("dataset must contain at least one cluster")
    if off[0] != 0:
        raise ValidationError("cluster offsets must start at 0")
    empty = np.flatnonzero(np.diff(off) <= 0)
    if empty.size:
        raise ValidationError(f"cluster {int(empty[0])} is empty")
    n, G = dataset.n, dataset.G
    if dataset.x.shape[0] != G:
        raise ValidationError(f"expected {G} rows of cluster covariates, got {dataset.x.shape[0]}")
    if dataset.w.shape[0] != n or dataset.r.shape != (n,) or dataset.y.shape != (n,):
        raise ValidationError("member arrays disagree with the total count n")
    if len(dataset.cluster_ids) != G:
        raise ValidationError("cluster_ids length differs from the number of clusters")
    if len(set(dataset.cluster_ids)) != G:
        raise ValidationError("cluster_ids are not unique")
    for name, arr in (("x", dataset.x), ("w", dataset.w)):
        bad = np.flatnonzero(~np.isfinite(arr).all(axis=1))
        if bad.size:
            where = f"cluster {int(bad[0])}" if name == "x" else _locate(dataset, int(bad[0]))
            raise ValidationError(f"non-finite covariate {name} at {where}")
    bad = np.flatnonzero((dataset.r != 0) & (dataset.r != 1))
    if bad.size:
        raise ValidationError(f"missing indicator must be 0 or 1 at {_locate(dataset, int(bad[0]))}")
    present = ~np.isnan(dataset.y)
    bad = np.flatnonzero(present & (dataset.r == 0))
    if bad.size:
        raise ValidationError(f"outcome present but marked missing at {_locate(dataset, int(bad[0]))}")
    bad = np.flatnonzero(~present & (dataset.r == 1))
    if bad.size:
        raise ValidationError(f"outcome absent but marked observed at {_locate(dataset, int(bad[0]))}")
    bad = np.flatnonzero(present & ~np.isfinite(dataset.y))
    if bad.size:
        raise ValidationError(f"non-finite outcome at {_locate(dataset, int(bad[0]))}")


def validate_clusters(clusters: Sequence[Cluster]) -> None:
    """Record-level checks run before stacking clusters into arrays."""
    if len(clusters) == 0:
        raise ValidationError("dataset must contain at least one cluster")
    xdim = wdim = None
    for g, c in enumerate(clusters):
        if len(c.members) == 0:
            raise ValidationError(f"cluster {g} is empty")
        if xdim is None:
            xdim = len(c.x)
        elif len(c.x) != xdim:
            raise ValidationError(
                f"cluster covariate dimension mismatch at cluster {g}: {len(c.x)} != {xdim}"
            )
        for i, m in enumerate(c.members):
            if wdim is None:
                wdim = len(m.w)
            elif len(m.w) != wdim:
                raise ValidationError(
                    f"covariate dimension mismatch at cluster {g}, member {i}: {len(m.w)} != {wdim}"
                )
            if m.time_index != i:
                raise ValidationError(f"time_index out of order at cluster {g}, member {i}")
            if m.r not in (0, 1):
                raise ValidationError(f"missing indicator must be 0 or 1 at cluster {g}, member {i}")
            if m.r == 0 and m.y is not None:
                raise ValidationError(f"outcome present but marked missing at cluster {g}, member {i}")
            if m.r == 1 and m.y is None:
                raise ValidationError(f"outcome absent but marked observed at cluster {g}, member {i}")


def cluster_sizes(dataset: ClusteredDataset) -> np.ndarray:
    return dataset.sizes.copy()


def split_clusters(dataset: ClusteredDataset, fraction: float, seed: int,
                   *key: int) -> tuple[np.ndarray, np.ndarray]:
    """Randomly partition cluster indices (0-based) into two sorted sets.

    The first set holds ``round(fraction * G)`` clusters, clamped so that
    neither side is empty.
    """
    G = dataset.G
    if G < 2:
        raise ValidationError("need at least 2 clusters to split")
    if not 0.0 < fraction < 1.0:
        raise ValidationError("fraction must lie in (0, 1)")
    k = min(max(int(math.floor(fraction * G + 0.5)), 1), G - 1)
    perm = stream(seed, "split", *key).permutation(G)
    return np.sort(perm[:k]), np.sort(perm[k:])
