"""Local Gaussian density estimation.

At a query point x a Gaussian N(mu, Sigma) is fitted by maximizing the
local likelihood

    L(mu, Sigma) = (1/N) sum_i N(x_i; x, H) log N(x_i; mu, Sigma)
                   - N(x; mu, H + Sigma)

with H = diag(h_1, ..., h_d) the kernel covariance. The second term is the
closed form of the kernel-weighted integral of the model density. The estimate is
f(x) = N(x; mu*, Sigma*).

Sigma is parameterized by its lower Cholesky factor L. Gradient and
Hessian are analytic (see ``_kernels``); the Hessian columns are exact
differentials of the gradient, not finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import _kernels as K
from .core import (
    LOG_DENSITY_FLOOR,
    BandwidthMatrix,
    DimensionMismatch,
    GaussianParams,
    KTooLarge,
    SampleSet,
    gaussian_log_density,
)
from .neighbors import BandwidthRule, NeighborIndex, select_bandwidth


class FitStatus(IntEnum):
    CONVERGED = K.CONVERGED
    MAX_ITERS = K.MAX_ITERS
    FALLBACK_KERNEL = K.FALLBACK_KERNEL


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 200
    grad_tol: float = 1e-6
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_search: int = 40
    # L_jj >= diag_floor * h_j
    diag_floor: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ValueError("need 0 < wolfe_c1 < wolfe_c2 < 1")
        if self.max_line_search < 1:
            raise ValueError("max_line_search must be >= 1")
        if not self.diag_floor > 0:
            raise ValueError("diag_floor must be positive")


@dataclass(frozen=True)
class LgdeOptions:
    """Everything that shapes a per-sample density pass."""

    k: int = 5
    rule: BandwidthRule = BandwidthRule.PER_POINT
    # None sums over every other sample; an integer keeps that many
    # nearest neighbors
    truncation_k: int | None = None
    # the query point is one of the samples in its own sum
    include_self: bool = True
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)

    def __post_init__(self):
        object.__setattr__(self, "rule", BandwidthRule(self.rule))
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.truncation_k is not None and self.truncation_k < 1:
            raise ValueError("truncation_k must be >= 1")


@dataclass(frozen=True)
class LocalLikelihoodProblem:
    query: np.ndarray
    neighbor_points: np.ndarray
    kernel_weights: np.ndarray
    bandwidth: BandwidthMatrix
    # N in the 1/N prefactor (the full sample size, not the neighbor count)
    n_total: int

    @property
    def d(self) -> int:
        return self.query.size

    @property
    def m(self) -> int:
        return self.neighbor_points.shape[0]

    def moments(self):
        """(S0, S1, Q) of the offsets from the query, divided by N."""
        u = self.neighbor_points - self.query
        w = self.kernel_weights / self.n_total
        return float(w.sum()), w @ u, (u * w[:, None]).T @ u


@dataclass(frozen=True)
class LocalGaussianFit:
    params: GaussianParams
    log_density_at_query: float
    status: FitStatus
    iterations: int
    final_grad_norm: float
    # objective after each accepted step, starting point first
    trace: np.ndarray = field(default_factory=lambda: np.empty(0))


def kernel_weights(query, points, bandwidth: BandwidthMatrix) -> np.ndarray:
    """Gaussian product kernel N(x_i; x, H); log clamped at the floor."""
    s = bandwidth.kernel_std
    z = (np.atleast_2d(points) - query) / s
    logw = -0.5 * s.size * K.LOG_2PI - np.log(s).sum() - 0.5 * (z * z).sum(1)
    return np.exp(np.maximum(logw, LOG_DENSITY_FLOOR))


def neighbor_count(truncation_k: int | None, n: int, d: int) -> int:
    """Size of the summation set (self not counted)."""
    if truncation_k is None:
        return n - 1
    return max(int(truncation_k), d + 2)


def build_problem(samples: SampleSet, query_index: int, bandwidth: BandwidthMatrix,
                  truncation_k: int | None = None, include_self: bool = True,
                  index: NeighborIndex | None = None) -> LocalLikelihoodProblem:
    """Summation set for one sample point.

    The set is the ``max(truncation_k, d + 2)`` nearest other points (all
    other points when ``truncation_k`` is None), plus the point itself when
    ``include_self`` is set. Truncation is by count only, so tiny weights
    are kept.
    """
    if bandwidth.d != samples.d:
        raise DimensionMismatch(f"bandwidth is {bandwidth.d}-dimensional, samples are {samples.d}-dimensional")
    m = neighbor_count(truncation_k, samples.n, samples.d)
    if m > samples.n - 1:
        raise KTooLarge(f"summation set of {m} neighbors needs N > {m}, got N={samples.n}")
    if truncation_k is None:
        ids = np.delete(np.arange(samples.n), query_index)
    else:
        if index is None:
            index = NeighborIndex(samples)
        _, nbr = index.query_rows(samples.data[query_index][None, :], m,
                                  np.array([query_index], dtype=np.int64))
        ids = nbr[0]
    if include_self:
        ids = np.concatenate([[query_index], ids])
    x = samples.data[query_index].copy()
    pts = samples.data[ids]
    return LocalLikelihoodProblem(x, pts, kernel_weights(x, pts, bandwidth), bandwidth, samples.n)


def penalty_term(query, params: GaussianParams, bandwidth: BandwidthMatrix) -> float:
    """N(x; mu, H + Sigma), the kernel-smoothed model density at x."""
    return float(np.exp(gaussian_log_density(query, GaussianParams.from_cov(
        params.mean, params.cov + bandwidth.kernel_cov))))


def local_likelihood(problem: LocalLikelihoodProblem, params: GaussianParams) -> float:
    """Objective value, summed point by point (independent of the moment form)."""
    L = params.chol_factor
    z = np.linalg.solve(L, (problem.neighbor_points - params.mean).T)
    logp = -0.5 * problem.d * K.LOG_2PI - np.log(np.diag(L)).sum() - 0.5 * (z * z).sum(0)
    data = float(problem.kernel_weights @ logp) / problem.n_total
    return data - penalty_term(problem.query, params, problem.bandwidth)


def _centered(problem, params):
    S0, S1, Q = problem.moments()
    mu = params.mean - problem.query
    return S0, S1, Q, np.array(problem.bandwidth.diag), mu, np.array(params.chol_factor)


def local_likelihood_gradient(problem: LocalLikelihoodProblem, params: GaussianParams) -> np.ndarray:
    """Gradient over (mu, vech(L)); vech is the row-major lower triangle."""
    _, g = K.value_and_gradient(*_centered(problem, params))
    return g


def local_likelihood_hessian(problem: LocalLikelihoodProblem, params: GaussianParams) -> np.ndarray:
    """Analytic Hessian over (mu, vech(L)), symmetrized."""
    _, _, Hs = K.value_grad_hessian(*_centered(problem, params))
    return Hs


def initial_params(problem: LocalLikelihoodProblem, opts: OptimizerOptions | None = None) -> GaussianParams:
    """mu0 = query; L0 from the kernel-weighted neighbor covariance."""
    opts = opts or OptimizerOptions()
    h = problem.bandwidth.diag
    u = problem.neighbor_points - problem.query
    nbr = np.arange(problem.m, dtype=np.int64)
    s = problem.bandwidth.kernel_std
    L0 = K.initial_factor(u, np.zeros(problem.d), nbr, s)
    floor = opts.diag_floor * h
    dg = np.diag(L0)
    bump = dg <= 2.0 * floor
    L0[np.diag_indices_from(L0)] = np.where(bump, 2.0 * floor + s, dg)
    return GaussianParams(problem.query, L0)


def fit_local_gaussian(problem: LocalLikelihoodProblem, opts: OptimizerOptions | None = None,
                       init: GaussianParams | None = None) -> LocalGaussianFit:
    """Modified-Newton ascent with a strong-Wolfe line search."""
    opts = opts or OptimizerOptions()
    if init is None:
        init = initial_params(problem, opts)
    S0, S1, Q = problem.moments()
    h = problem.bandwidth.diag
    floor = opts.diag_floor * h
    trace = np.full(opts.max_iters + 1, np.nan)
    mu, L, st, it, gn, nt = K.fit_point(
        S0, S1, Q, np.array(h), floor, init.mean - problem.query, np.array(init.chol_factor),
        opts.max_iters, opts.grad_tol, opts.wolfe_c1, opts.wolfe_c2, opts.max_line_search, trace)
    logf = K.log_gauss_at(np.zeros(problem.d), mu, L)
    status = FitStatus(st)
    if not np.isfinite(logf):
        status = FitStatus.FALLBACK_KERNEL
        logf = float(np.log(max(S0, np.exp(LOG_DENSITY_FLOOR))))
    return LocalGaussianFit(GaussianParams(mu + problem.query, L), float(logf), status,
                            int(it), float(gn), trace[:nt].copy())


@dataclass(frozen=True)
class DensityPass:
    """log f(x_i) at every sample point plus per-point diagnostics."""

    log_density: np.ndarray
    status: np.ndarray
    iterations: np.ndarray
    grad_norm: np.ndarray
    bandwidth: np.ndarray

    def counts(self) -> dict:
        return {s.name.lower(): int((self.status == s).sum()) for s in FitStatus}


def lgde_density_at_samples(samples: SampleSet, opts: LgdeOptions | None = None,
                            index: NeighborIndex | None = None) -> DensityPass:
    """Fit every sample point; deterministic for fixed inputs."""
    opts = opts or LgdeOptions()
    if samples.n <= opts.k:
        raise KTooLarge(f"k={opts.k} needs more than {opts.k} samples")
    m = neighbor_count(opts.truncation_k, samples.n, samples.d)
    if m > samples.n - 1:
        raise KTooLarge(f"truncation_k={opts.truncation_k} needs N > {m}, got N={samples.n}")
    # work on lexicographically sorted rows so the floating-point summation
    # order, and with it the result, does not depend on the input row order
    order = np.lexsort(samples.data.T[::-1])
    if np.array_equal(order, np.arange(samples.n)):
        work = samples
    else:
        work = SampleSet(samples.data[order], samples.column_labels)
        index = None
    if index is None:
        index = NeighborIndex(work)
    bw = select_bandwidth(work, opts.k, opts.rule, index)
    h = bw.as_array()
    o = opts.optimizer
    args = (np.sqrt(h), o.diag_floor * h, o.max_iters, o.grad_tol, o.wolfe_c1, o.wolfe_c2, o.max_line_search)
    pts = np.ascontiguousarray(work.data)
    if m == samples.n - 1:
        logf, st, it, gn = K.fit_all_dense(pts, opts.include_self, *args)
    else:
        _, nbr = index.all_neighbors(m)
        if opts.include_self:
            nbr = np.hstack([np.arange(samples.n, dtype=np.int64)[:, None], nbr])
        logf, st, it, gn = K.fit_all(pts, np.ascontiguousarray(nbr), *args)
    back = np.empty_like(order)
    back[order] = np.arange(samples.n)
    return DensityPass(logf[back], st[back], it[back], gn[back], bw.per_point[back])
