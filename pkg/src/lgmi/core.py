"""Shared types, validation and the Gaussian log-density."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

LOG_2PI = math.log(2.0 * math.pi)
# log-densities are clamped here before exponentiation
LOG_DENSITY_FLOOR = -700.0


class LgmiError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInput(LgmiError):
    pass


class NonFiniteEntry(LgmiError):
    def __init__(self, row: int, col: int):
        super().__init__(f"non-finite entry at row {row}, column {col}")
        self.row = row
        self.col = col


class DimensionMismatch(LgmiError):
    pass


class KTooLarge(LgmiError):
    pass


class DegenerateData(LgmiError):
    pass


class DuplicateRowsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SampleSet:
    """N x d matrix of i.i.d. observations (rows are samples)."""

    data: np.ndarray
    column_labels: Optional[tuple] = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if self.column_labels is not None:
            object.__setattr__(self, "column_labels", tuple(self.column_labels))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def columns(self, idx: Sequence[int]) -> "SampleSet":
        idx = list(idx)
        labels = None
        if self.column_labels is not None:
            labels = tuple(self.column_labels[i] for i in idx)
        return SampleSet(self.data[:, idx], labels)


@dataclass(frozen=True)
class BandwidthMatrix:
    """Diagonal bandwidth H = diag(h_1, ..., h_d).

    The smoothing kernel is the Gaussian N(.; 0, H), so H itself is the
    kernel covariance (kernel standard deviations are sqrt(h_j)).
    """

    diag: np.ndarray

    def __post_init__(self):
        arr = np.array(self.diag, dtype=np.float64, copy=True).reshape(-1)
        if arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError("bandwidths must be finite and strictly positive")
        arr.setflags(write=False)
        object.__setattr__(self, "diag", arr)

    @classmethod
    def isotropic(cls, h: float, d: int) -> "BandwidthMatrix":
        return cls(np.full(d, float(h)))

    @property
    def d(self) -> int:
        return self.diag.size

    @property
    def kernel_cov(self) -> np.ndarray:
        return np.diag(self.diag)

    @property
    def kernel_std(self) -> np.ndarray:
        return np.sqrt(self.diag)


@dataclass(frozen=True)
class GaussianParams:
    """Mean and lower Cholesky factor of a d-variate Gaussian."""

    mean: np.ndarray
    chol_factor: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mean, dtype=np.float64, copy=True).reshape(-1)
        L = np.array(self.chol_factor, dtype=np.float64, copy=True)
        if L.shape != (mu.size, mu.size):
            raise DimensionMismatch(f"chol_factor shape {L.shape} does not match mean of length {mu.size}")
        if np.any(np.triu(L, 1) != 0):
            raise ValueError("chol_factor must be lower triangular")
        if np.any(np.diag(L) <= 0):
            raise ValueError("chol_factor must have a strictly positive diagonal")
        mu.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "chol_factor", L)

    @classmethod
    def from_cov(cls, mean, cov) -> "GaussianParams":
        return cls(mean, np.linalg.cholesky(np.atleast_2d(np.asarray(cov, dtype=np.float64))))

    @property
    def d(self) -> int:
        return self.mean.size

    @property
    def cov(self) -> np.ndarray:
        return self.chol_factor @ self.chol_factor.T


class EstimatorName(str, Enum):
    LGDE_ENTROPY = "LGDE-entropy"
    LGDE_MI = "LGDE-MI"
    KSG = "KSG"
    KL_ENTROPY = "KL-entropy"


@dataclass
class EstimateReport:
    value: float
    estimator_name: EstimatorName
    n_samples: int
    dims: tuple
    k: int
    n_converged: int = 0
    n_fallback: int = 0
    wall_time: float = 0.0
    bandwidth_rule: Optional[str] = None
    n_maxiters: int = 0
    details: dict = field(default_factory=dict)


def validate_samples(raw, column_labels=None) -> SampleSet:
    """Check a raw matrix and wrap it as a :class:`SampleSet`.

    A 1-D input is read as a single column. Duplicate rows only warn.
    """
    try:
        arr = np.asarray(raw, dtype=np.float64)
    except ValueError as exc:
        raise DimensionMismatch(f"input is not a rectangular numeric matrix: {exc}") from None
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got {arr.ndim} dimensions")
    if arr.shape[0] < 2:
        raise EmptyInput(f"need at least 2 samples, got {arr.shape[0]}")
    if arr.shape[1] < 1:
        raise EmptyInput("need at least one column")
    bad = ~np.isfinite(arr)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise NonFiniteEntry(int(row), int(col))
    if np.unique(arr, axis=0).shape[0] < arr.shape[0]:
        warnings.warn("sample set contains duplicate rows", DuplicateRowsWarning, stacklevel=2)
    return SampleSet(arr, column_labels)


def gaussian_log_density(x, params: GaussianParams) -> float:
    """log N_d(x; mean, L L^T), evaluated with a triangular solve."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != params.d:
        raise DimensionMismatch(f"x has length {x.size}, params are {params.d}-dimensional")
    L = params.chol_factor
    z = solve_triangular(L, x - params.mean, lower=True)
    return float(-0.5 * params.d * LOG_2PI - np.sum(np.log(np.diag(L))) - 0.5 * z @ z)

