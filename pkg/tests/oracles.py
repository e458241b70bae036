"""Independent reference computations used by the tests.

Nothing here calls into the package's numerics: kNN is exhaustive, the
smoothed-density identity is checked by quadrature, derivatives by central
differences and densities through scipy.stats.
"""
import math

import numpy as np
from scipy import integrate, stats


def brute_knn(data, q, k, p=2.0, exclude=None):
    """(ids, dists) of the k nearest rows, ties broken by id."""
    data = np.atleast_2d(data)
    diff = data - np.asarray(q, dtype=float)
    if np.isinf(p):
        dist = np.abs(diff).max(1)
    else:
        dist = np.sqrt((diff**2).sum(1))
    ids = np.arange(len(data))
    if exclude is not None:
        keep = ids != exclude
        ids, dist = ids[keep], dist[keep]
    order = np.lexsort((ids, dist))[:k]
    return ids[order], dist[order]


def brute_kth_distances(data, k):
    n = len(data)
    out = np.empty(n)
    for i in range(n):
        out[i] = brute_knn(data, data[i], k, exclude=i)[1][-1]
    return out


def smoothed_density_quad(x, mu, H, cov):
    """int N(t; x, diag(H)) N(t; mu, cov) dt by adaptive quadrature (d = 1, 2)."""
    x, mu, H = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (x, mu, H))
    cov = np.atleast_2d(cov)
    kern = stats.multivariate_normal(x, np.diag(H))
    model = stats.multivariate_normal(mu, cov)
    d = x.size
    # integrate over the kernel's support, where all the mass is
    s = np.sqrt(H)
    if d == 1:
        f = lambda t: kern.pdf(t) * model.pdf(t)
        val, _ = integrate.quad(f, x[0] - 12 * s[0], x[0] + 12 * s[0], epsabs=1e-14, epsrel=1e-12, limit=400)
        return val
    f = lambda t1, t0: kern.pdf([t0, t1]) * model.pdf([t0, t1])
    val, _ = integrate.dblquad(f, x[0] - 12 * s[0], x[0] + 12 * s[0],
                               x[1] - 12 * s[1], x[1] + 12 * s[1], epsabs=1e-13, epsrel=1e-11)
    return val


def local_likelihood_direct(query, points, H, mu, cov, n_total, include_query=False):
    """The local likelihood evaluated term by term with scipy densities."""
    pts = np.atleast_2d(points)
    if include_query:
        pts = np.vstack([query, pts])
    w = stats.multivariate_normal(query, np.diag(H)).pdf(pts)
    logp = stats.multivariate_normal(mu, cov).logpdf(pts)
    pen = stats.multivariate_normal(mu, cov + np.diag(H)).pdf(query)
    return float(np.sum(np.atleast_1d(w) * np.atleast_1d(logp))) / n_total - pen


def central_gradient(f, theta, step=1e-5):
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for a in range(theta.size):
        e = np.zeros_like(theta)
        e[a] = step
        g[a] = (f(theta + e) - f(theta - e)) / (2 * step)
    return g


def central_jacobian(grad, theta, step=1e-5):
    theta = np.asarray(theta, dtype=float)
    cols = []
    for a in range(theta.size):
        e = np.zeros_like(theta)
        e[a] = step
        cols.append((grad(theta + e) - grad(theta - e)) / (2 * step))
    return np.column_stack(cols)


def gaussian_entropy(cov):
    cov = np.atleast_2d(cov)
    d = cov.shape[0]
    return 0.5 * (d * math.log(2 * math.pi * math.e) + math.log(np.linalg.det(cov)))


def linear_family_mi(theta):
    """I(X; X + U(0, theta)) for X ~ U(0, 1), theta <= 1.

    Y has a trapezoid density (two linear ramps of width theta around a
    flat top at 1), so H(Y) = theta / 2 and H(Y | X) = log(theta).
    """
    assert 0 < theta <= 1
    return theta / 2 - math.log(theta)


def output_entropy_mc(f, theta, n=400_000, seed=0):
    """Monte Carlo H(Y) for Y = f(X) + U(0, theta) via a fine histogram."""
    rng = np.random.default_rng(seed)
    y = f(rng.random(n)) + theta * rng.random(n)
    hist, edges = np.histogram(y, bins=4000, density=True)
    w = np.diff(edges)
    p = hist[hist > 0]
    return float(-(p * np.log(p) * w[hist > 0]).sum())
