"""Pure-numpy kernels: reference implementation of the hot inner loops.

The compiled extension (`_core`) mirrors these semantics exactly; tests
assert equivalence. Status codes shared by both backends:

smooth_grid:  0 ok, 1 singular solve, 2 fixed point hit the iteration cap,
              3 criterion matrix singular (fit is still valid).
mn_mstep:     0 gradient converged, 1 iteration cap, 2 step halving stalled
              with a non-small gradient, 3 singular information matrix.
"""

import numpy as np

BACKEND_NAME = "pure"

LOG_2PI = float(np.log(2.0 * np.pi))


def smoothing_gic_matrices(Phi, x, omega, sigma2, zeta, pen):
    """(m+1) x (m+1) influence/curvature blocks of the smoothing criterion.

    Rows/columns 0..m-1 are the coefficient block, the last row/column is the
    noise-variance coordinate. Valid at the fitted point, where the variance
    score sums to zero.
    """
    n = Phi.shape[0]
    m = Phi.shape[1]
    r = x - Phi @ omega
    u1 = Phi.T @ r
    u3 = Phi.T @ (r**3)
    s4 = float(np.sum(r**4))
    m2 = Phi.T @ (r[:, None] ** 2 * Phi)
    kw = pen @ omega
    g = Phi.T @ Phi
    s2 = float(sigma2)
    qf = 1.0 / (n * s2)

    q = np.empty((m + 1, m + 1), dtype=np.float64)
    q[:m, :m] = qf * (m2 / s2 - zeta * np.outer(kw, u1))
    off = qf * (u3 / (2.0 * s2**2) - u1 / (2.0 * s2))
    q[:m, m] = off
    q[m, :m] = off
    q[m, m] = qf * (s4 / (4.0 * s2**3) - n / (4.0 * s2))

    rmat = np.empty((m + 1, m + 1), dtype=np.float64)
    rmat[:m, :m] = qf * (g + (n * zeta * s2) * pen)
    rmat[:m, m] = qf * u1 / s2
    rmat[m, :m] = qf * u1 / s2
    rmat[m, m] = qf * n / (2.0 * s2)
    return q, rmat


def smoothing_gic_value(Phi, x, omega, sigma2, zeta, pen):
    """Criterion value N log(2 pi s2) + N + 2 tr(Q R^-1); NaN if R is singular."""
    n = Phi.shape[0]
    q, rmat = smoothing_gic_matrices(Phi, x, omega, sigma2, zeta, pen)
    try:
        tr = float(np.trace(np.linalg.solve(rmat, q)))
    except np.linalg.LinAlgError:
        return float("nan")
    if not np.isfinite(tr):
        return float("nan")
    return n * float(np.log(2.0 * np.pi * sigma2)) + n + 2.0 * tr


def smooth_grid(Phi, x, pen, zetas, max_iter=100, rtol=1e-10,
                var_floor=1e-12, init_ridge=1e-8):
    """Fixed-point penalized fits plus criterion values over a zeta grid.

    For each zeta: iterate omega = (Phi'Phi + N zeta s2 pen)^-1 Phi'x,
    s2 = RSS/N, from an OLS(ridge)-based start, until both quantities move
    by <= rtol relative or max_iter is hit. Returns (omega, sigma2, gic,
    iters, status) arrays over the grid.
    """
    Phi = np.ascontiguousarray(Phi, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    pen = np.ascontiguousarray(pen, dtype=np.float64)
    zetas = np.asarray(zetas, dtype=np.float64)
    n, m = Phi.shape
    g = len(zetas)

    omega = np.zeros((g, m), dtype=np.float64)
    sigma2 = np.zeros(g, dtype=np.float64)
    gic = np.full(g, np.nan, dtype=np.float64)
    iters = np.zeros(g, dtype=np.int32)
    status = np.zeros(g, dtype=np.int32)

    gram = Phi.T @ Phi
    b = Phi.T @ x
    try:
        w0 = np.linalg.solve(gram + init_ridge * np.eye(m), b)
    except np.linalg.LinAlgError:
        w0 = None
    if w0 is None or not np.all(np.isfinite(w0)):
        status[:] = 1
        return omega, sigma2, gic, iters, status
    r0 = x - Phi @ w0
    s0 = max(float(r0 @ r0) / n, var_floor)

    omega[:] = w0
    sigma2[:] = s0
    active = np.ones(g, dtype=bool)

    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        coeff = n * zetas[idx] * sigma2[idx]
        mats = gram[None, :, :] + coeff[:, None, None] * pen[None, :, :]
        try:
            sols = np.linalg.solve(mats, b[None, :, None])[..., 0]
        except np.linalg.LinAlgError:
            sols = np.empty((idx.size, m))
            for j in range(idx.size):
                try:
                    sols[j] = np.linalg.solve(mats[j], b)
                except np.linalg.LinAlgError:
                    sols[j] = np.nan
        res = x[None, :] - sols @ Phi.T
        s2new = np.maximum(np.einsum("ij,ij->i", res, res) / n, var_floor)

        bad = ~(np.all(np.isfinite(sols), axis=1) & np.isfinite(s2new))
        dw = np.max(np.abs(sols - omega[idx]), axis=1)
        wscale = np.maximum(np.max(np.abs(sols), axis=1), 1e-300)
        ds = np.abs(s2new - sigma2[idx])
        done = (dw <= rtol * wscale) & (ds <= rtol * s2new)

        omega[idx] = np.where(bad[:, None], omega[idx], sols)
        sigma2[idx] = np.where(bad, sigma2[idx], s2new)
        iters[idx] = it
        status[idx[bad]] = 1
        active[idx[bad | done]] = False

    status[active] = 2

    for j in range(g):
        if status[j] == 0:
            val = smoothing_gic_value(Phi, x, omega[j], sigma2[j], float(zetas[j]), pen)
            if np.isnan(val):
                status[j] = 3
            gic[j] = val
    return omega, sigma2, gic, iters, status


def _linear_predictors(Z, beta):
    return Z @ beta.T


def _logsumexp_with_zero(eta):
    """log(1 + sum_k exp(eta_k)) per row, overflow-safe."""
    mx = np.maximum(eta.max(axis=1), 0.0)
    return mx + np.log(np.exp(-mx) + np.sum(np.exp(eta - mx[:, None]), axis=1))


def _penalty_quadform(beta, K):
    return float(np.sum(beta * (beta @ K.T)))


def mn_objective(Z, R, beta, K, n1, lam):
    """Penalized multinomial log-likelihood; R holds responses per row
    (one-hot for labeled rows, posterior weights for unlabeled rows)."""
    eta = _linear_predictors(Z, beta)
    lse = _logsumexp_with_zero(eta)
    return float(np.sum(R * eta) - np.sum(lse) - 0.5 * n1 * lam * _penalty_quadform(beta, K))


def mn_score_info(Z, R, beta, K, n1, lam):
    """Gradient and expected information of the penalized log-likelihood,
    over the stacked (beta_1', ..., beta_{L-1}')' parameter vector."""
    n, q = Z.shape
    lm1 = beta.shape[0]
    eta = _linear_predictors(Z, beta)
    lse = _logsumexp_with_zero(eta)
    p = np.exp(eta - lse[:, None])

    grad = np.empty(lm1 * q, dtype=np.float64)
    diff = R - p
    for k in range(lm1):
        grad[k * q:(k + 1) * q] = Z.T @ diff[:, k] - n1 * lam * (K @ beta[k])

    info = np.empty((lm1 * q, lm1 * q), dtype=np.float64)
    for k in range(lm1):
        for l in range(k, lm1):
            w = p[:, k] * ((1.0 if k == l else 0.0) - p[:, l])
            blk = Z.T @ (w[:, None] * Z)
            if k == l:
                blk = blk + n1 * lam * K
            info[k * q:(k + 1) * q, l * q:(l + 1) * q] = blk
            if l != k:
                info[l * q:(l + 1) * q, k * q:(k + 1) * q] = blk
    return grad, info


def mn_mstep(Z, R, beta0, K, n1, lam, max_iter=100, gtol=1e-8, min_step=2.0**-30):
    """Fisher scoring with step halving; monotone in the objective.

    Returns (beta, iters, status, objective, gradient_max_norm).
    """
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    R = np.ascontiguousarray(R, dtype=np.float64)
    K = np.ascontiguousarray(K, dtype=np.float64)
    beta = np.array(beta0, dtype=np.float64, copy=True)
    lm1, q = beta.shape

    obj = mn_objective(Z, R, beta, K, n1, lam)
    gnorm = np.inf
    for it in range(max_iter):
        grad, info = mn_score_info(Z, R, beta, K, n1, lam)
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gnorm <= gtol * (1.0 + abs(obj)):
            return beta, it, 0, obj, gnorm
        try:
            direction = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            return beta, it, 3, obj, gnorm
        if not np.all(np.isfinite(direction)):
            return beta, it, 3, obj, gnorm
        step = 1.0
        while True:
            cand = beta + step * direction.reshape(lm1, q)
            cand_obj = mn_objective(Z, R, cand, K, n1, lam)
            if cand_obj >= obj and np.isfinite(cand_obj):
                beta = cand
                obj = cand_obj
                break
            step *= 0.5
            if step < min_step:
                return beta, it, 2, obj, gnorm
    grad, _ = mn_score_info(Z, R, beta, K, n1, lam)
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    if gnorm <= gtol * (1.0 + abs(obj)):
        return beta, max_iter, 0, obj, gnorm
    return beta, max_iter, 1, obj, gnorm
