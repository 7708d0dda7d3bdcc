import numpy as np
import pytest
from scipy.optimize import minimize

from sflda.basis import build_basis, design_matrix, place_knots, second_difference_penalty
from sflda.errors import InvalidArgumentError
from sflda.smoother import (
    RawCurve,
    fit_penalized,
    functionalize,
    gic_smoothing,
    select_smoothing,
    smooth_with_basis,
)


def _objective(phi, x, pen, omega, sigma2, zeta):
    """Penalized Gaussian log-likelihood, written out independently."""
    n = len(x)
    r = x - phi @ omega
    return (
        -0.5 * n * np.log(2 * np.pi * sigma2)
        - 0.5 * (r @ r) / sigma2
        - 0.5 * n * zeta * (omega @ pen @ omega)
    )


def _case1_like_curve(rng, n=50, amp=1.0, noise_sd=0.3):
    t = np.linspace(0.0, 2.0, n)
    x = amp * np.sin(np.pi * t) + noise_sd * rng.normal(size=n)
    return RawCurve(times=t, values=x, id="sim")


def test_noise_free_recovery():
    rng = np.random.default_rng(0)
    basis = build_basis(place_knots(0.0, 1.0, m=6))
    omega_star = rng.normal(size=6)
    t = np.linspace(0.0, 1.0, 40)
    x = design_matrix(basis, t) @ omega_star
    fit = fit_penalized(RawCurve(times=t, values=x, id="exact"), basis, zeta=1e-12)
    np.testing.assert_allclose(fit.coefficients, omega_star, atol=1e-6)
    assert fit.noise_variance <= 1e-10


def test_huge_zeta_gives_affine_coefficients():
    rng = np.random.default_rng(1)
    basis = build_basis(place_knots(0.0, 2.0, m=8))
    curve = _case1_like_curve(rng)
    fit = fit_penalized(curve, basis, zeta=1e6)
    d2 = np.diff(fit.coefficients, n=2)
    assert np.max(np.abs(d2)) < 1e-4 * max(1.0, np.max(np.abs(fit.coefficients)))


def test_fit_matches_generic_optimizer():
    """Fixed-point estimates match a generic numerical maximizer in objective."""
    rng = np.random.default_rng(2)
    basis = build_basis(place_knots(0.0, 2.0, m=8))
    pen = second_difference_penalty(8).matrix
    curve = _case1_like_curve(rng)
    phi = design_matrix(basis, curve.times)
    zeta = 1e-3
    fit = fit_penalized(curve, basis, zeta)

    def neg(params):
        omega, log_s2 = params[:8], params[8]
        return -_objective(phi, curve.values, pen, omega, np.exp(log_s2), zeta)

    x0 = np.concatenate([np.zeros(8), [0.0]])
    res = minimize(neg, x0, method="L-BFGS-B", options={"maxiter": 2000, "ftol": 1e-14})
    ours = _objective(phi, curve.values, pen, fit.coefficients, fit.noise_variance, zeta)
    assert ours >= -res.fun - 1e-5 * (1 + abs(res.fun))
    assert ours == pytest.approx(-res.fun, rel=1e-5)


def test_fixed_point_residual():
    rng = np.random.default_rng(3)
    basis = build_basis(place_knots(0.0, 2.0, m=7))
    pen = second_difference_penalty(7).matrix
    curve = _case1_like_curve(rng)
    phi = design_matrix(basis, curve.times)
    n = curve.n_obs
    for zeta in (1e-6, 1e-3, 1e-1):
        fit = fit_penalized(curve, basis, zeta)
        lhs = np.linalg.solve(
            phi.T @ phi + n * zeta * fit.noise_variance * pen, phi.T @ curve.values
        )
        np.testing.assert_allclose(lhs, fit.coefficients, rtol=1e-8, atol=1e-12)
        r = curve.values - phi @ fit.coefficients
        assert fit.noise_variance == pytest.approx(max(r @ r / n, 1e-12), rel=1e-8)


def test_stationarity_against_finite_differences():
    rng = np.random.default_rng(4)
    basis = build_basis(place_knots(0.0, 2.0, m=6))
    pen = second_difference_penalty(6).matrix
    curve = _case1_like_curve(rng)
    phi = design_matrix(basis, curve.times)
    zeta = 1e-2
    fit = fit_penalized(curve, basis, zeta)
    theta = np.concatenate([fit.coefficients, [fit.noise_variance]])
    obj_at = _objective(phi, curve.values, pen, fit.coefficients, fit.noise_variance, zeta)
    grad = np.zeros(7)
    for j in range(7):
        e = np.zeros(7)
        e[j] = 1e-7 * max(1.0, abs(theta[j]))
        up = _objective(phi, curve.values, pen, (theta + e)[:6], (theta + e)[6], zeta)
        dn = _objective(phi, curve.values, pen, (theta - e)[:6], (theta - e)[6], zeta)
        grad[j] = (up - dn) / (2 * e[j])
    assert np.max(np.abs(grad)) <= 1e-6 * (1.0 + abs(obj_at))


def test_penalty_roughness_monotone_in_zeta():
    rng = np.random.default_rng(5)
    basis = build_basis(place_knots(0.0, 2.0, m=8))
    pen = second_difference_penalty(8).matrix
    curve = _case1_like_curve(rng)
    rough = []
    for zeta in np.logspace(-8, 2, 11):
        fit = fit_penalized(curve, basis, zeta)
        rough.append(fit.coefficients @ pen @ fit.coefficients)
    diffs = np.diff(rough)
    assert np.all(diffs <= 1e-10 * max(rough))


def test_fit_rejects_more_basis_than_observations():
    basis = build_basis(place_knots(0.0, 1.0, m=8))
    t = np.linspace(0, 1, 8)
    with pytest.raises(InvalidArgumentError):
        fit_penalized(RawCurve(times=t, values=np.sin(t), id="x"), basis, 1e-3)


def test_gic_deterministic_on_duplicate_curves():
    rng = np.random.default_rng(6)
    basis = build_basis(place_knots(0.0, 2.0, m=6))
    curve = _case1_like_curve(rng)
    twin = RawCurve(times=curve.times.copy(), values=curve.values.copy(), id="twin")
    f1 = fit_penalized(curve, basis, 1e-3)
    f2 = fit_penalized(twin, basis, 1e-3)
    assert gic_smoothing(f1, curve) == gic_smoothing(f2, twin)
    assert f1.gic == f2.gic


def test_gic_matches_stored_fit_value():
    rng = np.random.default_rng(7)
    basis = build_basis(place_knots(0.0, 2.0, m=7))
    curve = _case1_like_curve(rng)
    fit = fit_penalized(curve, basis, 3e-4)
    assert gic_smoothing(fit, curve) == pytest.approx(fit.gic, rel=1e-10)


def test_gic_influence_matrices_match_finite_differences():
    """Q and R agree with per-observation finite-difference derivatives."""
    rng = np.random.default_rng(8)
    n, m = 10, 4
    basis = build_basis(place_knots(0.0, 1.0, m))
    pen = second_difference_penalty(m).matrix
    t = np.sort(rng.uniform(0, 1, n))
    x = np.sin(2 * np.pi * t) + 0.3 * rng.normal(size=n)
    curve = RawCurve(times=t, values=x, id="fd")
    phi = design_matrix(basis, t)
    zeta = 1e-3
    fit = fit_penalized(curve, basis, zeta)
    from sflda._kernels import smoothing_gic_matrices

    Q, R = smoothing_gic_matrices(phi, x, fit.coefficients, fit.noise_variance, zeta, pen)

    theta = np.concatenate([fit.coefficients, [fit.noise_variance]])
    p = m + 1

    def logf(th, i):
        r = x[i] - phi[i] @ th[:m]
        return -0.5 * np.log(2 * np.pi * th[m]) - r * r / (2 * th[m])

    def pen_share(th):
        return 0.5 * zeta * (th[:m] @ pen @ th[:m])

    def fd_grad(f, rel=1e-6):
        g = np.zeros(p)
        for j in range(p):
            e = np.zeros(p)
            e[j] = rel * max(1.0, abs(theta[j]))
            g[j] = (f(theta + e) - f(theta - e)) / (2 * e[j])
        return g

    gpen = fd_grad(pen_share)
    Q_fd = np.zeros((p, p))
    for i in range(n):
        s = fd_grad(lambda th, i=i: logf(th, i))
        Q_fd += np.outer(s - gpen, s)
    Q_fd /= n

    def full(th):
        return sum(logf(th, i) for i in range(n)) - n * pen_share(th)

    H = np.zeros((p, p))
    for a in range(p):
        for b in range(p):
            ea = np.zeros(p)
            ea[a] = 1e-4 * max(1.0, abs(theta[a]))
            eb = np.zeros(p)
            eb[b] = 1e-4 * max(1.0, abs(theta[b]))
            H[a, b] = (
                full(theta + ea + eb) - full(theta + ea - eb)
                - full(theta - ea + eb) + full(theta - ea - eb)
            ) / (4 * ea[a] * eb[b])
    R_fd = -H / n

    assert np.max(np.abs(Q - Q_fd)) <= 1e-5 * np.max(np.abs(Q_fd))
    assert np.max(np.abs(R - R_fd)) <= 1e-5 * np.max(np.abs(R_fd))


def test_gic_selected_zeta_tracks_best_mse():
    """The criterion-chosen zeta predicts the noiseless truth nearly as well
    as the zeta that minimizes true MSE on the grid. Per-draw the ratio is
    noisy, so the check is distributional over draws."""
    rng = np.random.default_rng(9)
    n = 50
    t = np.linspace(0.0, 2.0, n)
    basis = build_basis(place_knots(0.0, 2.0, m=8))
    phi = design_matrix(basis, t)
    zetas = np.logspace(-8, 0, 20)
    ratios = []
    for _ in range(15):
        truth = rng.uniform(0.3, 1.3) * np.sin(np.pi * t)
        x = truth + np.sqrt(0.1) * rng.normal(size=n)
        curve = RawCurve(times=t, values=x, id="c1")
        fits = [fit_penalized(curve, basis, z) for z in zetas]
        mses = np.array([np.mean((phi @ f.coefficients - truth) ** 2) for f in fits])
        gics = np.array([f.gic for f in fits])
        ratios.append(mses[int(np.argmin(gics))] / mses.min())
    assert np.median(ratios) <= 1.5
    assert np.max(ratios) <= 10.0


def test_select_smoothing_singleton_grid():
    rng = np.random.default_rng(10)
    curve = _case1_like_curve(rng)
    fit = select_smoothing(curve, m_grid=[6], zeta_grid=[1e-3])
    direct = fit_penalized(
        curve, build_basis(place_knots(curve.times.min(), curve.times.max(), 6)), 1e-3
    )
    np.testing.assert_array_equal(fit.coefficients, direct.coefficients)
    assert fit.zeta == 1e-3


def test_select_smoothing_exhaustive_oracle():
    rng = np.random.default_rng(11)
    curve = _case1_like_curve(rng)
    m_grid = range(5, 10)
    zetas = np.logspace(-6, 0, 8)
    fit = select_smoothing(curve, m_grid=m_grid, zeta_grid=zetas)
    best = np.inf
    for m in m_grid:
        basis = build_basis(place_knots(curve.times.min(), curve.times.max(), m))
        for z in zetas:
            g = gic_smoothing(fit_penalized(curve, basis, z), curve)
            best = min(best, g)
    assert fit.gic == pytest.approx(best, rel=1e-9)


def test_select_smoothing_prefers_more_than_minimum_basis():
    rng = np.random.default_rng(12)
    t = np.linspace(0.0, 2.0, 60)
    x = np.sin(2.5 * np.pi * t) + 0.05 * rng.normal(size=60)
    fit = select_smoothing(RawCurve(times=t, values=x, id="s"), m_grid=range(4, 13))
    assert fit.basis.m > 4


def test_select_smoothing_rejects_m_too_large():
    t = np.linspace(0, 1, 10)
    curve = RawCurve(times=t, values=np.sin(t), id="short")
    with pytest.raises(InvalidArgumentError):
        select_smoothing(curve, m_grid=[8, 12], zeta_grid=[1e-3])


def _case2_like_curves(rng, n_curves):
    t = np.linspace(1.0, 21.0, 101)
    w = np.maximum(6.0 - np.abs(t - 11.0), 0.0)
    out = []
    for i in range(n_curves):
        u = rng.uniform()
        off = -4.0 if i % 2 == 0 else 4.0
        h = u * w + (1 - u) * (w + off)
        out.append(RawCurve(times=t, values=h + rng.normal(size=101), id=f"c{i:03d}"))
    return out


def test_functionalize_single_curve_matches_select():
    rng = np.random.default_rng(13)
    curve = _case1_like_curve(rng)
    m_grid, zetas = range(5, 9), np.logspace(-6, 0, 6)
    fds = functionalize([curve], None, m_grid=m_grid, zeta_grid=zetas)
    solo = select_smoothing(curve, m_grid=m_grid, zeta_grid=zetas)
    assert fds.basis.m == solo.basis.m
    np.testing.assert_array_equal(fds.coefficient_matrix[0], solo.coefficients)


def test_functionalize_rows_reproduce_fit_penalized():
    rng = np.random.default_rng(14)
    curves = _case2_like_curves(rng, 10)
    fds = functionalize(curves, None, m_grid=range(5, 9), zeta_grid=np.logspace(-6, 0, 6))
    for i, curve in enumerate(curves):
        refit = fit_penalized(curve, fds.basis, fds.zetas[i])
        np.testing.assert_array_equal(fds.coefficient_matrix[i], refit.coefficients)
        assert fds.noise_variances[i] == refit.noise_variance


def test_functionalize_duplicate_curves_identical_rows():
    rng = np.random.default_rng(15)
    base = _case1_like_curve(rng)
    twin = RawCurve(times=base.times.copy(), values=base.values.copy(), id="twin")
    fds = functionalize([base, twin], None, m_grid=range(5, 8), zeta_grid=np.logspace(-5, 0, 5))
    np.testing.assert_array_equal(fds.coefficient_matrix[0], fds.coefficient_matrix[1])


def test_functionalize_shares_one_basis_object():
    rng = np.random.default_rng(16)
    curves = _case2_like_curves(rng, 4)
    fds = functionalize(curves, None, m_grid=range(5, 8), zeta_grid=np.logspace(-5, 0, 5))
    # rows were all fit against the identical shared basis object
    assert fds.coefficient_matrix.shape == (4, fds.basis.m)
    refit_rows, _, _ = smooth_with_basis(curves, fds.basis, np.logspace(-5, 0, 5))
    np.testing.assert_array_equal(refit_rows, fds.coefficient_matrix)


def test_functionalize_label_length_mismatch():
    rng = np.random.default_rng(17)
    curves = _case2_like_curves(rng, 3)
    with pytest.raises(InvalidArgumentError):
        functionalize(curves, [1, 2], m_grid=[5], zeta_grid=[1e-3])
