"""Synthetic relationships with known mutual information.

Functional families draw ``X ~ U(0, 1)`` and ``Y = f(X) + U(0, theta)``.
The six shapes range from a straight line to a fast sine.

Random streams come from numpy's PCG64 seeded with ``RelationshipSpec.seed``,
so a (family, theta, n, seed) tuple always yields the same floats.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import LgmiError, SampleSet


class InvalidSpec(LgmiError):
    pass


class QuadratureNoConverge(LgmiError):
    pass


class Family(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    CUBIC = "cubic"
    SINE = "sine"
    SINE_HIGH_FREQ = "sine-high-freq"
    SQRT = "sqrt"
    BIVARIATE_GAUSSIAN = "bivariate-gaussian"
    INDEPENDENT_UNIFORM = "independent-uniform"

    @property
    def functional(self) -> bool:
        return self in _SHAPES


def _sine_breaks(cycles):
    # extrema of sin(2*pi*cycles*x) on [0, 1]
    return tuple((2 * j + 1) / (4 * cycles) for j in range(2 * cycles))


# f, interior points where f changes monotonicity
_SHAPES = {
    Family.LINEAR: (lambda x: x, ()),
    Family.QUADRATIC: (lambda x: x * x, ()),
    Family.CUBIC: (lambda x: x**3 - x, (1.0 / math.sqrt(3.0),)),
    Family.SINE: (lambda x: np.sin(4 * np.pi * x), _sine_breaks(2)),
    Family.SINE_HIGH_FREQ: (lambda x: np.sin(16 * np.pi * x), _sine_breaks(8)),
    Family.SQRT: (lambda x: np.sqrt(x), ()),
}


def relationship(family: Family | str):
    """The deterministic part f of a functional family."""
    return _SHAPES[Family(family)][0]


@dataclass(frozen=True)
class RelationshipSpec:
    """``theta`` is the noise width, or the correlation for the Gaussian family."""

    family: Family
    theta: float
    n: int
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", Family(self.family))
        except ValueError:
            raise InvalidSpec(f"unknown family {self.family!r}") from None
        theta = float(self.theta)
        object.__setattr__(self, "theta", theta)
        if not math.isfinite(theta):
            raise InvalidSpec("theta must be finite")
        if self.family is Family.BIVARIATE_GAUSSIAN:
            if not -1.0 < theta < 1.0:
                raise InvalidSpec("correlation must lie in (-1, 1)")
        elif self.family.functional and theta <= 0.0:
            raise InvalidSpec("noise width must be positive")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidSpec("n must be an integer >= 2")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")


def generate(spec: RelationshipSpec) -> SampleSet:
    rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
    n = int(spec.n)
    fam = spec.family
    if fam is Family.BIVARIATE_GAUSSIAN:
        rho = spec.theta
        z = rng.standard_normal((n, 2))
        x = z[:, 0]
        y = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]
    elif fam is Family.INDEPENDENT_UNIFORM:
        u = rng.random((n, 2))
        x, y = u[:, 0], u[:, 1]
    else:
        x = rng.random(n)
        y = relationship(fam)(x) + spec.theta * rng.random(n)
    return SampleSet(np.column_stack([x, y]), ("x", "y"))


def gaussian_entropy(cov) -> float:
    """Differential entropy of N(., cov) in nats."""
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    d = cov.shape[0]
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ValueError("covariance must be positive definite")
    return 0.5 * (d * math.log(2 * math.pi * math.e) + logdet)


def gaussian_mi(rho: float) -> float:
    return -0.5 * math.log1p(-rho * rho)


def true_mi(spec: RelationshipSpec) -> float:
    """Ground-truth I(X; Y) in nats."""
    fam = spec.family
    if fam is Family.BIVARIATE_GAUSSIAN:
        return gaussian_mi(spec.theta)
    if fam is Family.INDEPENDENT_UNIFORM:
        return 0.0
    # H(Y|X) = log(theta) for additive U(0, theta) noise
    return output_entropy(fam, spec.theta) - math.log(spec.theta)


def _pieces(family):
    f, crit = _SHAPES[family]
    edges = (0.0,) + tuple(crit) + (1.0,)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        fa, fb = float(f(a)), float(f(b))
        out.append((a, b, fa, fb))
    return f, out


def _inverse(f, a, b, fa, fb, v):
    """x in [a, b] with f(x) = v on a monotone piece (v inside the range)."""
    lo = np.full_like(v, a)
    hi = np.full_like(v, b)
    inc = fb >= fa
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        above = f(mid) > v if inc else f(mid) < v
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def output_density(family: Family | str, theta: float, y) -> np.ndarray:
    """Density of Y = f(X) + U(0, theta) with X ~ U(0, 1).

    p(y) = |{x in [0,1] : y - theta <= f(x) <= y}| / theta, measured piece by
    piece over the monotone parts of f.
    """
    family = Family(family)
    f, pieces = _pieces(family)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    total = np.zeros_like(y)
    for a, b, fa, fb in pieces:
        lo_f, hi_f = min(fa, fb), max(fa, fb)
        lo = np.clip(y - theta, lo_f, hi_f)
        hi = np.clip(y, lo_f, hi_f)
        xa = _inverse(f, a, b, fa, fb, lo)
        xb = _inverse(f, a, b, fa, fb, hi)
        total += np.abs(xb - xa)
    return total / theta


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _panel_rule(lo, hi, panels):
    """Nodes/weights on [lo, hi] after y = lo + (hi - lo)(1 - cos(pi s))/2.

    The cosine map flattens square-root behavior at both ends, which is
    what the output density does next to an extremum of f.
    """
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    ws = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    y = lo + (hi - lo) * 0.5 * (1.0 - np.cos(np.pi * s))
    w = ws * (hi - lo) * 0.5 * np.pi * np.sin(np.pi * s)
    return y, w


@lru_cache(maxsize=512)
def output_entropy(family: Family | str, theta: float, tol: float = 1e-5) -> float:
    """H(Y) by composite quadrature between the kinks of the output density.

    Panels double until two successive estimates agree to ``tol`` (and at
    least to 1e-9 while that stays cheap).
    """
    family = Family(family)
    _, pieces = _pieces(family)
    vals = sorted({v for _, _, fa, fb in pieces for v in (fa, fb)})
    knots = np.unique(np.array(vals + [v + theta for v in vals]))

    def run(panels):
        ys, ws = zip(*(_panel_rule(lo, hi, panels) for lo, hi in zip(knots[:-1], knots[1:])))
        y, w = np.concatenate(ys), np.concatenate(ws)
        p = output_density(family, theta, y)
        integrand = np.where(p > 0.0, -p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
        return float(w @ integrand)

    prev = run(2)
    panels = 4
    while panels <= 512:
        cur = run(panels)
        diff = abs(cur - prev)
        if diff < 1e-9 or (diff < tol and panels >= 64):
            return cur
        prev = cur
        panels *= 2
    raise QuadratureNoConverge(f"H(Y) for {family.value}, theta={theta}: last change {diff:.3g}")


def write_csv(samples: SampleSet, path, header=("x", "y")) -> None:
    """Two-column fixture: header row, LF endings, 17 significant digits."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in samples.data:
            writer.writerow([format(v, ".17g") for v in row])


def read_csv(path) -> tuple[np.ndarray, list[str]]:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    return np.array(rows, dtype=np.float64).reshape(len(rows), len(header)), header
