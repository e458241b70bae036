"""Per-point local-likelihood kernels.

Everything here is written in the numba-compatible subset of numpy so the
same source runs compiled (default) or interpreted (``LGMI_DISABLE_NUMBA=1``).

Coordinates are centered on the query point. The kernel enters only
through three weighted moments of the neighbor offsets ``u_i = x_i - x``::

    S0 = sum w_i / N,   S1 = sum w_i u_i / N,   Q = sum w_i u_i u_i^T / N

so one Newton iteration costs O(d^3) whatever the neighborhood size.

Parameter vectors are ``theta = (mu, vech(L))`` with the lower triangle of
``L`` in row-major order: (0,0), (1,0), (1,1), (2,0), ... The optimizer
works in a second chart where each diagonal entry is replaced by
``eta_j`` with ``L_jj = floor_j + exp(eta_j)``.
"""
import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit, prange

LOG_2PI = math.log(2.0 * math.pi)
LOG_W_FLOOR = -700.0
# largest log-gap of a Cholesky diagonal entry before a trial point is rejected
ETA_MAX = 300.0

if NUMBA_ENABLED:

    @njit(cache=True)
    def mm(A, B):
        n, k = A.shape
        m = B.shape[1]
        C = np.zeros((n, m))
        for i in range(n):
            for t in range(k):
                a = A[i, t]
                if a != 0.0:
                    for j in range(m):
                        C[i, j] += a * B[t, j]
        return C

    @njit(cache=True)
    def mv(A, v):
        n, k = A.shape
        out = np.zeros(n)
        for i in range(n):
            s = 0.0
            for t in range(k):
                s += A[i, t] * v[t]
            out[i] = s
        return out

    @njit(cache=True)
    def dot(u, v):
        s = 0.0
        for i in range(u.shape[0]):
            s += u[i] * v[i]
        return s

else:

    def mm(A, B):
        return A @ B

    def mv(A, v):
        return A @ v

    def dot(u, v):
        return float(u @ v)


CONVERGED = 0
MAX_ITERS = 1
FALLBACK_KERNEL = 2


@njit(cache=True)
def n_params(d):
    return d + d * (d + 1) // 2


@njit(cache=True)
def pack(mu, L):
    d = mu.shape[0]
    theta = np.empty(n_params(d))
    theta[:d] = mu
    k = d
    for i in range(d):
        for j in range(i + 1):
            theta[k] = L[i, j]
            k += 1
    return theta


@njit(cache=True)
def unpack(theta, d):
    mu = theta[:d].copy()
    L = np.zeros((d, d))
    k = d
    for i in range(d):
        for j in range(i + 1):
            L[i, j] = theta[k]
            k += 1
    return mu, L


@njit(cache=True)
def diag_slots(d):
    """Positions of L_jj inside theta."""
    out = np.empty(d, dtype=np.int64)
    k = d
    for i in range(d):
        k += i
        out[i] = k
        k += 1
    return out


@njit(cache=True)
def cholesky(A):
    """Lower Cholesky factor and a success flag (no exceptions)."""
    n = A.shape[0]
    C = np.zeros((n, n))
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= C[j, k] * C[j, k]
        if not s > 0.0:
            return C, False
        C[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= C[i, k] * C[j, k]
            C[i, j] = t / C[j, j]
    return C, True


@njit(cache=True)
def lower_inverse(L):
    n = L.shape[0]
    K = np.zeros((n, n))
    for c in range(n):
        for i in range(c, n):
            s = 1.0 if i == c else 0.0
            for k in range(c, i):
                s -= L[i, k] * K[k, c]
            K[i, c] = s / L[i, i]
    return K


@njit(cache=True)
def chol_solve(C, b):
    n = C.shape[0]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= C[i, k] * y[k]
        y[i] = s / C[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= C[k, i] * x[k]
        x[i] = s / C[i, i]
    return x


@njit(cache=True)
def _state(S0, S1, Q, h2, mu, L):
    d = mu.shape[0]
    K = lower_inverse(L)
    Si = mm(K.T, K)
    s1 = S1 - S0 * mu
    M = Q - np.outer(S1, mu) - np.outer(mu, S1) + S0 * np.outer(mu, mu)
    logdet = 0.0
    for j in range(d):
        logdet += math.log(L[j, j])
    data = -S0 * (0.5 * d * LOG_2PI + logdet) - 0.5 * np.sum(Si * M)
    A = mm(L, L.T)
    for j in range(d):
        A[j, j] += h2[j]
    CA, ok = cholesky(A)
    if not ok:
        return -np.inf, Si, M, s1, 0.0, np.zeros(d), A, A
    KA = lower_inverse(CA)
    Ainv = mm(KA.T, KA)
    alpha = -mv(Ainv, mu)
    logdetA = 0.0
    for j in range(d):
        logdetA += 2.0 * math.log(CA[j, j])
    logP = -0.5 * d * LOG_2PI - 0.5 * logdetA + 0.5 * dot(mu, alpha)
    P = math.exp(logP)
    G = 0.5 * (np.outer(alpha, alpha) - Ainv)
    return data - P, Si, M, s1, P, alpha, Ainv, G


@njit(cache=True)
def objective(S0, S1, Q, h2, mu, L):
    return _state(S0, S1, Q, h2, mu, L)[0]


@njit(cache=True)
def _grad_from_state(S0, L, Si, M, s1, P, alpha, G):
    d = L.shape[0]
    g_mu = mv(Si, s1) - P * alpha
    GL = mm(mm(mm(Si, M), Si), L) - 2.0 * P * mm(G, L)
    for j in range(d):
        GL[j, j] -= S0 / L[j, j]
    return pack(g_mu, GL)


@njit(cache=True)
def value_and_gradient(S0, S1, Q, h2, mu, L):
    val, Si, M, s1, P, alpha, Ainv, G = _state(S0, S1, Q, h2, mu, L)
    return val, _grad_from_state(S0, L, Si, M, s1, P, alpha, G)


@njit(cache=True)
def value_grad_hessian(S0, S1, Q, h2, mu, L):
    """Objective, gradient and analytic Hessian in (mu, vech(L)).

    Column ``a`` of the Hessian is the exact differential of the gradient
    along the a-th coordinate direction.
    """
    d = mu.shape[0]
    p = n_params(d)
    val, Si, M, s1, P, alpha, Ainv, G = _state(S0, S1, Q, h2, mu, L)
    g = _grad_from_state(S0, L, Si, M, s1, P, alpha, G)
    Hs = np.empty((p, p))
    SiL = mm(Si, L)
    SiM = mm(Si, M)
    GLm = mm(G, L)
    for a in range(p):
        e = np.zeros(p)
        e[a] = 1.0
        dmu, dL = unpack(e, d)
        dLLt = mm(dL, L.T)
        dSig = dLLt + dLLt.T
        dSi = -mm(mm(Si, dSig), Si)
        dM = -(np.outer(dmu, s1) + np.outer(s1, dmu))
        dalpha = -mv(Ainv, mv(dSig, alpha) + dmu)
        dP = P * (dot(alpha, dmu) + np.sum(G * dSig))
        dG = 0.5 * (np.outer(dalpha, alpha) + np.outer(alpha, dalpha) + mm(mm(Ainv, dSig), Ainv))
        dg_mu = mv(dSi, s1) - S0 * mv(Si, dmu) - dP * alpha - P * dalpha
        dGL = (mm(mm(dSi, M), SiL) + mm(mm(Si, dM), SiL) + mm(mm(SiM, dSi), L) + mm(mm(SiM, Si), dL)
               - 2.0 * (dP * GLm + P * mm(dG, L) + P * mm(G, dL)))
        for j in range(d):
            dGL[j, j] += S0 * dL[j, j] / (L[j, j] * L[j, j])
        Hs[:, a] = pack(dg_mu, dGL)
    Hs = 0.5 * (Hs + Hs.T)
    return val, g, Hs


# --- optimizer chart ------------------------------------------------------


@njit(cache=True)
def to_opt(theta, d, floor):
    t = theta.copy()
    slots = diag_slots(d)
    for j in range(d):
        gap = theta[slots[j]] - floor[j]
        if gap < 1e-300:
            gap = floor[j]
        t[slots[j]] = math.log(gap)
    return t


@njit(cache=True)
def from_opt(t, d, floor):
    theta = t.copy()
    slots = diag_slots(d)
    for j in range(d):
        theta[slots[j]] = floor[j] + math.exp(t[slots[j]])
    return theta


@njit(cache=True)
def _eval_opt(S0, S1, Q, h2, t, d, floor, want_hess):
    slots = diag_slots(d)
    p = t.shape[0]
    for j in range(p):
        if not math.isfinite(t[j]):
            return -np.inf, np.zeros(p), np.zeros((p, p))
    for j in range(d):
        if t[slots[j]] > ETA_MAX:
            return -np.inf, np.zeros(p), np.zeros((p, p))
    theta = from_opt(t, d, floor)
    mu, L = unpack(theta, d)
    if want_hess:
        val, g, Hs = value_grad_hessian(S0, S1, Q, h2, mu, L)
    else:
        val, g = value_and_gradient(S0, S1, Q, h2, mu, L)
        Hs = np.zeros((1, 1))
    jac = np.ones(p)
    for j in range(d):
        jac[slots[j]] = theta[slots[j]] - floor[j]
    go = g * jac
    if want_hess:
        Ho = Hs * np.outer(jac, jac)
        for j in range(d):
            Ho[slots[j], slots[j]] += g[slots[j]] * jac[slots[j]]
        return val, go, Ho
    return val, go, Hs


@njit(cache=True)
def modify_hessian(B, tau0):
    """Shift ``B`` by tau*I until it factors with margin.

    Tries tau = 0, then tau0, 2*tau0, ... Acceptance requires
    ``B + (tau - delta) I`` to factor, with ``delta = 1e-2 * tau0``, so the
    returned matrix has every eigenvalue above ``delta``.
    """
    p = B.shape[0]
    delta = 1e-2 * tau0
    tau = 0.0
    for _ in range(2000):
        T = B.copy()
        for i in range(p):
            T[i, i] += tau - delta
        C, ok = cholesky(T)
        if ok:
            Bm = B.copy()
            for i in range(p):
                Bm[i, i] += tau
            Cm, _ = cholesky(Bm)
            return Bm, Cm, tau
        tau = tau0 if tau == 0.0 else 2.0 * tau
    Bm = np.eye(p) * (1.0 + np.max(np.abs(B)))
    Cm, _ = cholesky(Bm)
    return Bm, Cm, tau


@njit(cache=True)
def _line_search(S0, S1, Q, h2, t, d, floor, D, val0, g0, c1, c2, max_trials):
    """Strong-Wolfe step for ascent along D (Nocedal-Wright bracket/zoom).

    Starts at alpha = 1. Returns (ok, alpha, t_new, val_new, g_new).
    """
    dphi0 = dot(g0, D)
    trials = 0
    a_prev = 0.0
    v_prev = val0
    dp_prev = dphi0
    a = 1.0
    lo = 0.0
    hi = 0.0
    v_lo = val0
    dp_lo = dphi0
    v_hi = val0
    hi_finite = False
    bracketed = False
    while trials < max_trials:
        tn = t + a * D
        v, g, _ = _eval_opt(S0, S1, Q, h2, tn, d, floor, False)
        trials += 1
        finite = math.isfinite(v)
        dp = dot(g, D) if finite else 0.0
        if (not finite) or v < val0 + c1 * a * dphi0 or (trials > 1 and v <= v_prev):
            lo, v_lo, dp_lo = a_prev, v_prev, dp_prev
            hi, v_hi, hi_finite = a, v, finite
            bracketed = True
            break
        if abs(dp) <= c2 * dphi0:
            return True, a, tn, v, g
        if dp <= 0.0:
            lo, v_lo, dp_lo = a, v, dp
            hi, v_hi, hi_finite = a_prev, v_prev, True
            bracketed = True
            break
        a_prev, v_prev, dp_prev = a, v, dp
        a = 2.0 * a
    if not bracketed:
        return False, 0.0, t, val0, g0
    while trials < max_trials:
        width = hi - lo
        a = 0.5 * (lo + hi)
        if hi_finite:
            # maximizer of the quadratic through (lo, v_lo, dp_lo) and (hi, v_hi)
            denom = 2.0 * (v_hi - v_lo - dp_lo * width)
            if denom < 0.0:
                cand = lo - dp_lo * width * width / denom
                if lo < hi:
                    lo_b, hi_b = lo + 0.1 * width, hi - 0.1 * width
                else:
                    lo_b, hi_b = hi - 0.1 * width, lo + 0.1 * width
                if lo_b <= cand <= hi_b:
                    a = cand
        tn = t + a * D
        v, g, _ = _eval_opt(S0, S1, Q, h2, tn, d, floor, False)
        trials += 1
        finite = math.isfinite(v)
        if (not finite) or v < val0 + c1 * a * dphi0 or v <= v_lo:
            hi, v_hi, hi_finite = a, v, finite
        else:
            dp = dot(g, D)
            if abs(dp) <= c2 * dphi0:
                return True, a, tn, v, g
            if dp * (hi - lo) <= 0.0:
                hi, v_hi, hi_finite = lo, v_lo, True
            lo, v_lo, dp_lo = a, v, dp
        if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
            break
    return False, 0.0, t, val0, g0


@njit(cache=True)
def _plain_gnorm(g, t, d):
    """inf-norm of the gradient in (mu, vech(L)) from the chart gradient."""
    slots = diag_slots(d)
    out = np.abs(g)
    for j in range(d):
        out[slots[j]] = abs(g[slots[j]]) / math.exp(t[slots[j]])
    return np.max(out)


@njit(cache=True)
def fit_point(S0, S1, Q, h2, floor, mu0, L0, max_iters, grad_tol, c1, c2, max_trials, trace):
    """Modified-Newton ascent of the local likelihood from (mu0, L0).

    Returns (mu, L, status, iterations, grad_inf_norm, n_trace); the norm is
    taken in (mu, vech(L)), not in the optimizer chart. ``trace``
    receives the objective after every accepted step (entry 0 = start).
    """
    d = mu0.shape[0]
    t = to_opt(pack(mu0, L0), d, floor)
    val, g, Hs = _eval_opt(S0, S1, Q, h2, t, d, floor, True)
    trace[0] = val
    n_trace = 1
    status = MAX_ITERS
    it = 0
    small_steps = 0
    gnorm = _plain_gnorm(g, t, d)
    while True:
        if not math.isfinite(val):
            break
        gnorm = _plain_gnorm(g, t, d)
        if gnorm <= grad_tol:
            status = CONVERGED
            break
        if it >= max_iters:
            break
        B = -Hs
        scale = np.max(np.abs(Hs))
        tau0 = 1e-8 * scale if scale > 0.0 else 1e-300
        Bm, Cm, tau = modify_hessian(B, tau0)
        D = chol_solve(Cm, g)
        ok, a, tn, vn, gn = _line_search(S0, S1, Q, h2, t, d, floor, D, val, g, c1, c2, max_trials)
        if not ok:
            break
        it += 1
        dval = vn - val
        t = tn
        val, g, Hs = _eval_opt(S0, S1, Q, h2, t, d, floor, True)
        if n_trace < trace.shape[0]:
            trace[n_trace] = val
            n_trace += 1
        if abs(dval) <= 1e-9 * (1.0 + abs(val)):
            small_steps += 1
            gnorm = _plain_gnorm(g, t, d)
            if gnorm <= grad_tol:
                status = CONVERGED
                break
            if small_steps >= 2:
                break
        else:
            small_steps = 0
    theta = from_opt(t, d, floor)
    mu, L = unpack(theta, d)
    return mu, L, status, it, gnorm, n_trace


@njit(cache=True)
def log_gauss_at(x, mu, L):
    d = x.shape[0]
    r = x - mu
    z = np.empty(d)
    ld = 0.0
    for i in range(d):
        s = r[i]
        for k in range(i):
            s -= L[i, k] * z[k]
        z[i] = s / L[i, i]
        ld += math.log(L[i, i])
    return -0.5 * d * LOG_2PI - ld - 0.5 * dot(z, z)


if NUMBA_ENABLED:

    @njit(cache=True)
    def _weights(points, query, nbr, s):
        d = points.shape[1]
        norm = 0.5 * d * LOG_2PI
        for j in range(d):
            norm += math.log(s[j])
        m = nbr.shape[0]
        w = np.empty(m)
        for jj in range(m):
            q = 0.0
            for j in range(d):
                t = (points[nbr[jj], j] - query[j]) / s[j]
                q += t * t
            w[jj] = math.exp(max(-norm - 0.5 * q, LOG_W_FLOOR))
        return w

    @njit(cache=True)
    def _weighted_moments(points, query, nbr, w, center):
        """sum w, sum w u, sum w u u^T with u = x_j - query - center."""
        d = points.shape[1]
        S0 = 0.0
        S1 = np.zeros(d)
        Q = np.zeros((d, d))
        u = np.empty(d)
        for jj in range(nbr.shape[0]):
            wj = w[jj]
            for a in range(d):
                u[a] = points[nbr[jj], a] - query[a] - center[a]
            S0 += wj
            for a in range(d):
                S1[a] += wj * u[a]
                for b in range(a + 1):
                    Q[a, b] += wj * u[a] * u[b]
        for a in range(d):
            for b in range(a):
                Q[b, a] = Q[a, b]
        return S0, S1, Q

else:

    def _weights(points, query, nbr, s):
        z = (points[nbr] - query) / s
        logw = -0.5 * s.size * LOG_2PI - np.log(s).sum() - 0.5 * (z * z).sum(1)
        return np.exp(np.maximum(logw, LOG_W_FLOOR))

    def _weighted_moments(points, query, nbr, w, center):
        u = points[nbr] - query - center
        return float(w.sum()), w @ u, (u * w[:, None]).T @ u


@njit(cache=True)
def moments(points, query, nbr, s, n_total):
    """Kernel-weighted moments of the offsets, divided by ``n_total``.

    ``s`` holds the kernel standard deviations.
    """
    w = _weights(points, query, nbr, s)
    S0, S1, Q = _weighted_moments(points, query, nbr, w, np.zeros(points.shape[1]))
    return S0 / n_total, S1 / n_total, Q / n_total


@njit(cache=True)
def initial_factor(points, query, nbr, s):
    """Cholesky factor of the kernel-weighted neighbor covariance.

    Falls back to diag(s) when that covariance is singular.
    """
    d = points.shape[1]
    L0 = np.diag(s.copy())
    w = _weights(points, query, nbr, s)
    wsum, m1, _ = _weighted_moments(points, query, nbr, w, np.zeros(d))
    if not wsum > 0.0:
        return L0
    _, _, C = _weighted_moments(points, query, nbr, w, m1 / wsum)
    C = C / wsum
    tr = 0.0
    for j in range(d):
        tr += C[j, j]
    if not tr > 0.0:
        return L0
    for j in range(d):
        C[j, j] += 1e-8 * tr / d
    F, ok = cholesky(C)
    if not ok:
        return L0
    return F


@njit(cache=True)
def _fit_one(points, i, nbr, s, floor, max_iters, grad_tol, c1, c2, max_trials):
    d = points.shape[1]
    x = points[i]
    S0, S1, Q = moments(points, x, nbr, s, float(points.shape[0]))
    L0 = initial_factor(points, x, nbr, s)
    for j in range(d):
        if L0[j, j] <= 2.0 * floor[j]:
            L0[j, j] = 2.0 * floor[j] + s[j]
    trace = np.empty(1)
    mu, L, st, it, gn, _ = fit_point(S0, S1, Q, s * s, floor, np.zeros(d), L0,
                                     max_iters, grad_tol, c1, c2, max_trials, trace)
    lf = log_gauss_at(np.zeros(d), mu, L)
    if not math.isfinite(lf):
        st = FALLBACK_KERNEL
        lf = math.log(max(S0, math.exp(LOG_W_FLOOR)))
    return lf, st, it, gn


@njit(parallel=True, cache=True)
def fit_all(points, nbr, s, floor, max_iters, grad_tol, c1, c2, max_trials):
    """Fit every sample point; row i of ``nbr`` is i's summation set.

    ``s`` and ``floor`` are N x d: kernel standard deviations and the
    lower bounds on diag(L) for each point.
    """
    N = points.shape[0]
    logf = np.empty(N)
    status = np.empty(N, dtype=np.int64)
    iters = np.empty(N, dtype=np.int64)
    gnorm = np.empty(N)
    for i in prange(N):
        logf[i], status[i], iters[i], gnorm[i] = _fit_one(
            points, i, nbr[i], s[i], floor[i], max_iters, grad_tol, c1, c2, max_trials)
    return logf, status, iters, gnorm


@njit(parallel=True, cache=True)
def fit_all_dense(points, include_self, s, floor, max_iters, grad_tol, c1, c2, max_trials):
    """Like ``fit_all`` with every other sample (and optionally self) summed."""
    N = points.shape[0]
    logf = np.empty(N)
    status = np.empty(N, dtype=np.int64)
    iters = np.empty(N, dtype=np.int64)
    gnorm = np.empty(N)
    m = N if include_self else N - 1
    for i in prange(N):
        nbr = np.empty(m, dtype=np.int64)
        c = 0
        for j in range(N):
            if j != i or include_self:
                nbr[c] = j
                c += 1
        logf[i], status[i], iters[i], gnorm[i] = _fit_one(
            points, i, nbr, s[i], floor[i], max_iters, grad_tol, c1, c2, max_trials)
    return logf, status, iters, gnorm
