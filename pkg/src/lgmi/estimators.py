"""Entropy and mutual-information estimators.

LGDE-based estimators plug the per-sample local Gaussian densities into
H = -mean(log f(x_i)) and I(x; y) = H(x) + H(y) - H(x, y). The kNN
baselines are the Kozachenko-Leonenko entropy estimator and the first
Kraskov-Stoegbauer-Grassberger MI estimator.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from .core import DegenerateData, DimensionMismatch, EstimateReport, EstimatorName, KTooLarge, SampleSet
from .lgde import FitStatus, LgdeOptions, lgde_density_at_samples
from .neighbors import NeighborIndex, kth_neighbor_distances


def standardize(samples: SampleSet):
    """Zero-mean, unit-variance columns and the per-column scales."""
    data = samples.data
    # column statistics from sorted values, independent of row order
    srt = np.sort(data, axis=0)
    sd = srt.std(axis=0)
    if np.any(sd == 0.0):
        raise DegenerateData(f"constant column(s) {np.flatnonzero(sd == 0.0).tolist()}")
    return SampleSet((data - srt.mean(axis=0)) / sd, samples.column_labels), sd


def _lgde_entropy(samples: SampleSet, opts: LgdeOptions):
    z, sd = standardize(samples)
    dp = lgde_density_at_samples(z, opts)
    # H(a z) = H(z) + log|a| per column
    return -float(dp.log_density.mean()) + float(np.log(sd).sum()), dp


def estimate_entropy_lgde(samples: SampleSet, opts: LgdeOptions | None = None) -> EstimateReport:
    opts = opts or LgdeOptions()
    t0 = time.perf_counter()
    value, dp = _lgde_entropy(samples, opts)
    counts = dp.counts()
    n_conv = counts["converged"]
    return EstimateReport(
        value=value,
        estimator_name=EstimatorName.LGDE_ENTROPY,
        n_samples=samples.n,
        dims=samples.d,
        k=opts.k,
        n_converged=n_conv,
        n_fallback=samples.n - n_conv,
        wall_time=time.perf_counter() - t0,
        bandwidth_rule=opts.rule.value,
        n_maxiters=counts["max_iters"],
        details={"status_counts": counts, "mean_iterations": float(dp.iterations.mean())},
    )


@dataclass(frozen=True)
class MiTask:
    """Joint sample set with the x and y column blocks."""

    joint: SampleSet
    x_cols: tuple
    y_cols: tuple

    def __post_init__(self):
        xc = tuple(int(c) for c in self.x_cols)
        yc = tuple(int(c) for c in self.y_cols)
        object.__setattr__(self, "x_cols", xc)
        object.__setattr__(self, "y_cols", yc)
        if not xc or not yc:
            raise DimensionMismatch("both column blocks need at least one column")
        if len(set(xc)) != len(xc) or len(set(yc)) != len(yc) or set(xc) & set(yc):
            raise DimensionMismatch("column blocks must be disjoint without repeats")
        d = self.joint.d
        if any(c < 0 or c >= d for c in xc + yc):
            raise DimensionMismatch(f"column index out of range for {d} columns")
        if len(xc) + len(yc) != d:
            raise DimensionMismatch("x and y blocks must cover every column")

    @classmethod
    def from_arrays(cls, x, y) -> "MiTask":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        x = x[:, None] if x.ndim == 1 else x
        y = y[:, None] if y.ndim == 1 else y
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch("x and y need the same number of rows")
        d, b = x.shape[1], y.shape[1]
        return cls(SampleSet(np.hstack([x, y])), tuple(range(d)), tuple(range(d, d + b)))

    @property
    def x(self) -> SampleSet:
        return self.joint.columns(self.x_cols)

    @property
    def y(self) -> SampleSet:
        return self.joint.columns(self.y_cols)

    @property
    def xy(self) -> SampleSet:
        # canonical column order, so swapping the blocks gives the same joint
        return self.joint.columns(tuple(sorted(self.x_cols + self.y_cols)))

    def swapped(self) -> "MiTask":
        return MiTask(self.joint, self.y_cols, self.x_cols)


def estimate_mi_lgde(task: MiTask, opts: LgdeOptions | None = None) -> EstimateReport:
    """I = H(x) + H(y) - H(x, y), each block with its own bandwidths.

    A sample point counts as converged only when its fit converged in all
    three blocks; ``n_fallback`` is the remainder.
    """
    opts = opts or LgdeOptions()
    t0 = time.perf_counter()
    hx, px = _lgde_entropy(task.x, opts)
    hy, py = _lgde_entropy(task.y, opts)
    hxy, pxy = _lgde_entropy(task.xy, opts)
    ok = ((px.status == FitStatus.CONVERGED) & (py.status == FitStatus.CONVERGED)
          & (pxy.status == FitStatus.CONVERGED))
    n_conv = int(ok.sum())
    n = task.joint.n
    return EstimateReport(
        value=hx + hy - hxy,
        estimator_name=EstimatorName.LGDE_MI,
        n_samples=n,
        dims=(len(task.x_cols), len(task.y_cols)),
        k=opts.k,
        n_converged=n_conv,
        n_fallback=n - n_conv,
        wall_time=time.perf_counter() - t0,
        bandwidth_rule=opts.rule.value,
        n_maxiters=int(((px.status == FitStatus.MAX_ITERS) | (py.status == FitStatus.MAX_ITERS)
                        | (pxy.status == FitStatus.MAX_ITERS)).sum()),
        details={"h_x": hx, "h_y": hy, "h_xy": hxy,
                 "status_counts": {"x": px.counts(), "y": py.counts(), "xy": pxy.counts()}},
    )


def log_unit_ball_volume(d: int) -> float:
    return 0.5 * d * math.log(math.pi) - float(gammaln(0.5 * d + 1.0))


def _kl_value(samples: SampleSet, k: int) -> float:
    n, d = samples.n, samples.d
    if k < 1 or k >= n:
        raise KTooLarge(f"k={k} must lie in [1, {n - 1}]")
    eps = kth_neighbor_distances(samples, k)
    return float(digamma(n) - digamma(k) + log_unit_ball_volume(d) + d * np.log(eps).mean())


def estimate_entropy_kl(samples: SampleSet, k: int = 5) -> EstimateReport:
    """Kozachenko-Leonenko: psi(N) - psi(k) + log V_d + (d/N) sum log eps_i.

    Zero k-th-neighbor distances (duplicates) get the same substitution as
    the bandwidth rule.
    """
    t0 = time.perf_counter()
    value = _kl_value(samples, k)
    return EstimateReport(value, EstimatorName.KL_ENTROPY, samples.n, samples.d, k,
                          wall_time=time.perf_counter() - t0)


def estimate_mi_kl(task: MiTask, k: int = 5) -> EstimateReport:
    """MI from three Kozachenko-Leonenko entropies."""
    t0 = time.perf_counter()
    value = _kl_value(task.x, k) + _kl_value(task.y, k) - _kl_value(task.xy, k)
    return EstimateReport(value, EstimatorName.KL_ENTROPY, task.joint.n,
                          (len(task.x_cols), len(task.y_cols)), k,
                          wall_time=time.perf_counter() - t0, details={"decomposed": True})


def _marginal_counts(points: np.ndarray, radius: np.ndarray) -> np.ndarray:
    # points strictly inside the max-norm radius, self excluded
    tree = cKDTree(points)
    r = np.nextafter(radius, 0.0)
    return tree.query_ball_point(points, r, p=np.inf, return_length=True) - 1


def estimate_mi_ksg(task: MiTask, k: int = 5) -> EstimateReport:
    """KSG estimator: psi(k) + psi(N) - <psi(n_x + 1) + psi(n_y + 1)>."""
    t0 = time.perf_counter()
    n = task.joint.n
    if k < 1 or k >= n:
        raise KTooLarge(f"k={k} must lie in [1, {n - 1}]")
    joint = task.xy
    idx = NeighborIndex(joint, "Linf")
    dist, _ = idx.all_neighbors(k)
    eps = dist[:, -1]
    nx = _marginal_counts(task.x.data, eps)
    ny = _marginal_counts(task.y.data, eps)
    value = float(digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1)))
    return EstimateReport(value, EstimatorName.KSG, n, (len(task.x_cols), len(task.y_cols)), k,
                          wall_time=time.perf_counter() - t0)
