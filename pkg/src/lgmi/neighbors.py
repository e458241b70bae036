"""k-nearest-neighbor queries and bandwidth rules."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .core import BandwidthMatrix, DegenerateData, KTooLarge, SampleSet


class Metric(str, Enum):
    L2 = "L2"
    LINF = "Linf"

    @property
    def p(self) -> float:
        return 2.0 if self is Metric.L2 else np.inf


class BandwidthRule(str, Enum):
    PER_POINT = "per-point"
    GLOBAL_MEAN = "global-mean"


class NeighborIndex:
    """Static kd-tree over a sample set. Read-only after construction."""

    def __init__(self, samples: SampleSet | np.ndarray, metric: Metric | str = Metric.L2):
        data = samples.data if isinstance(samples, SampleSet) else np.asarray(samples, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        self.data = data
        self.metric = Metric(metric)
        self.tree = cKDTree(data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def _member_id(self, q):
        d, i = self.tree.query(q, k=1, p=self.metric.p)
        if d != 0.0:
            return None
        # lowest id among exact copies stands for the query itself
        ids = self.tree.query_ball_point(q, r=0.0, p=self.metric.p)
        return min(ids)

    def query_rows(self, queries: np.ndarray, k: int, self_ids=None):
        """k neighbors for each row of ``queries``, ties broken by id.

        ``self_ids[r]`` (or -1) is the index of query r inside the set,
        which is then never returned.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        nq = queries.shape[0]
        if self_ids is None:
            self_ids = np.full(nq, -1, dtype=np.int64)
        limit = self.n - 1 if np.any(self_ids >= 0) else self.n
        if k < 1 or k > limit:
            raise KTooLarge(f"k={k} but at most {limit} neighbors are available")
        kq = min(k + 3, self.n)
        dist, idx = self.tree.query(queries, k=kq, p=self.metric.p)
        dist = dist.reshape(nq, kq)
        idx = idx.reshape(nq, kq)
        order = np.lexsort((idx, dist), axis=-1)
        dist = np.take_along_axis(dist, order, -1)
        idx = np.take_along_axis(idx, order, -1)
        far = dist[:, -1].copy()
        is_self = idx == self_ids[:, None]
        # move self to the end of its row, then keep the first k
        order = np.argsort(is_self, axis=1, kind="stable")
        dist = np.take_along_axis(dist, order, -1)[:, :k]
        idx = np.take_along_axis(idx, order, -1)[:, :k]
        if kq < self.n:
            # exact ties at the window edge may hide lower ids (or self)
            redo = far == dist[:, -1]
            for r in np.flatnonzero(redo):
                dr, ir = self._ball_sorted(queries[r], dist[r, -1], self_ids[r])
                dist[r], idx[r] = dr[:k], ir[:k]
        return dist, idx.astype(np.int64)

    def _ball_sorted(self, q, radius, self_id):
        if np.isinf(radius):
            ids = np.arange(self.n)
        else:
            # slightly wider than the radius: a zero radius finds nothing,
            # and the tree may round distances differently from us
            r = radius * (1.0 + 1e-12) + 1e-300
            ids = np.asarray(self.tree.query_ball_point(q, r=r, p=self.metric.p), dtype=np.int64)
        ids = ids[ids != self_id]
        diff = self.data[ids] - q
        dist = np.sqrt((diff**2).sum(1)) if self.metric is Metric.L2 else np.abs(diff).max(1)
        order = np.lexsort((ids, dist))
        return dist[order], ids[order]

    def all_neighbors(self, k: int):
        """k neighbors of every member point, self excluded."""
        return self.query_rows(self.data, k, np.arange(self.n, dtype=np.int64))


def knn_query(index: NeighborIndex, q, k: int):
    """List of (point_id, distance) for the k nearest neighbors of ``q``.

    If ``q`` coincides with a member point, that point is skipped.
    """
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    sid = index._member_id(q)
    self_ids = np.array([-1 if sid is None else sid], dtype=np.int64)
    limit = index.n - 1 if sid is not None else index.n
    if k > limit:
        raise KTooLarge(f"k={k} but at most {limit} neighbors are available")
    dist, idx = index.query_rows(q[None, :], k, self_ids)
    return [(int(i), float(dd)) for i, dd in zip(idx[0], dist[0])]


@dataclass(frozen=True)
class BandwidthAssignment:
    """Isotropic bandwidth per sample point (constant under GlobalMean)."""

    per_point: np.ndarray
    d: int
    rule: BandwidthRule
    k: int

    def matrix(self, i: int) -> BandwidthMatrix:
        return BandwidthMatrix.isotropic(self.per_point[i], self.d)

    def as_array(self) -> np.ndarray:
        return np.repeat(self.per_point[:, None], self.d, axis=1)


def kth_neighbor_distances(samples: SampleSet, k: int, index: NeighborIndex | None = None) -> np.ndarray:
    """L2 distance from each point to its k-th nearest other point.

    Zero distances (duplicates) are replaced by the first nonzero distance
    further out, or by the mean of the positive ones.
    """
    n = samples.n
    if k < 1 or k > n - 1:
        raise KTooLarge(f"k={k} must lie in [1, {n - 1}]")
    if index is None:
        index = NeighborIndex(samples, Metric.L2)
    dist, _ = index.all_neighbors(k)
    dk = dist[:, -1].copy()
    zero = np.flatnonzero(dk == 0.0)
    if zero.size:
        full_d, _ = index.query_rows(samples.data[zero], n - 1, zero.astype(np.int64))
        for r, i in enumerate(zero):
            nz = full_d[r][full_d[r] > 0.0]
            if nz.size:
                dk[i] = nz[0]
        still = dk == 0.0
        if still.all():
            raise DegenerateData("all sample points are identical")
        dk[still] = dk[~still].mean()
    return dk


def select_bandwidth(samples: SampleSet, k: int, rule: BandwidthRule | str = BandwidthRule.PER_POINT,
                     index: NeighborIndex | None = None) -> BandwidthAssignment:
    rule = BandwidthRule(rule)
    dk = kth_neighbor_distances(samples, k, index)
    if rule is BandwidthRule.GLOBAL_MEAN:
        dk = np.full_like(dk, dk.mean())
    return BandwidthAssignment(dk, samples.d, rule, k)
