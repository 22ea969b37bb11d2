"""Tests for the closed-form impact curves and their supporting identities."""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from liqimpact.impact import (
    LinearParams,
    OdeBlowupError,
    OdeSpec,
    ParameterError,
    SqrtParams,
    SShapeParams,
    StructuralParams,
    bernoulli_residual,
    big_phi,
    f_linear,
    f_sqrt,
    f_sshape,
    feasibility_margin,
    g_sshape,
    inflection_point,
    linear_alpha_from_ps,
    mu_p,
    phi,
    sigma_p_squared,
    solve_ode_numeric,
    structural_to_pq,
)

NK = SShapeParams(ell=1.3e-5, p=-0.0034, q=8.15e-5)


def random_feasible_params(rng, n, ell_range=(1e-6, 1e-3), q_range=(1e-8, 1e-2)):
    """Draw n S-shape parameter sets with a comfortably positive margin.

    q is log-uniform over q_range, the normalized drift b = p / sqrt(q) is
    uniform on [-3, 3], and ell is log-uniform but capped so the margin
    stays above 0.05 (the cap comes from solving margin = 0.05 for ell).
    """
    out = []
    while len(out) < n:
        q = math.exp(rng.uniform(math.log(q_range[0]), math.log(q_range[1])))
        b = rng.uniform(-3.0, 3.0)
        p = b * math.sqrt(q)
        log_k = 0.5 * math.log(2.0 * math.pi / q) + 0.5 * b * b + math.log(norm.cdf(b))
        ell_cap = math.exp(math.log(0.95) - log_k)
        lo, hi = ell_range
        hi = min(hi, ell_cap)
        if hi <= lo:
            ell = 0.5 * ell_cap
        else:
            ell = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        params = SShapeParams(ell=ell, p=p, q=q)
        assert feasibility_margin(params) > 0.0
        out.append(params)
    return out


def test_phi_matches_direct_formula():
    rng = np.random.default_rng(11)
    for _ in range(20):
        params = SShapeParams(ell=1e-5, p=rng.uniform(-0.5, 0.5), q=math.exp(rng.uniform(-9, -1)))
        x = rng.uniform(-20.0, 20.0)
        direct = math.exp(-params.p * x - 0.5 * params.q * x * x)
        assert phi(x, params) == pytest.approx(direct, rel=1e-14)


def test_phi_vectorized_matches_scalar():
    params = SShapeParams(ell=1e-5, p=-0.01, q=1e-4)
    xs = np.linspace(-50, 50, 7)
    vec = phi(xs, params)
    for x, v in zip(xs, vec):
        assert v == phi(float(x), params)


def test_big_phi_matches_quadrature():
    """big_phi is the integral of phi from 0 to x; quadrature is the oracle."""
    rng = np.random.default_rng(23)
    for params in random_feasible_params(rng, 30):
        scale = 1.0 / math.sqrt(params.q)
        for x in (-3.0 * scale, -0.3 * scale, 0.7 * scale, 2.5 * scale):
            val, err = integrate.quad(
                lambda t: math.exp(-params.p * t - 0.5 * params.q * t * t),
                0.0, x, limit=200,
            )
            got = big_phi(x, params)
            assert got == pytest.approx(val, rel=1e-9, abs=1e-12 + 10 * abs(err))


def test_big_phi_zero_and_sign():
    params = SShapeParams(ell=1e-5, p=-0.002, q=5e-5)
    assert big_phi(0.0, params) == 0.0
    assert big_phi(10.0, params) > 0.0
    assert big_phi(-10.0, params) < 0.0


def test_big_phi_extreme_tail_stable():
    """A kernel peak of exp(4500) must not poison values that fit in doubles.

    The naive closed form multiplies sqrt(2 pi / q) exp(p^2 / 2q) by a CDF
    difference; its first factor overflows here even though the integral
    itself only reaches about exp(600) on this range. Quadrature of the
    raw integrand is the oracle.
    """
    q = 1e-3
    p = -3.0  # p^2/(2q) = 4500
    params = SShapeParams(ell=1e-300, p=p, q=q)
    xs = np.linspace(-230.0, 230.0, 93)
    vals = np.array([big_phi(float(x), params) for x in xs])
    assert np.all(np.isfinite(vals))
    # phi > 0 so the integral never decreases; deep in the left tail the
    # increments fall below machine precision and the values go flat.
    assert np.all(np.diff(vals) >= 0.0)
    assert np.all(np.diff(vals[xs >= 0.0]) > 0.0)
    for x in (-150.0, 200.0):
        want, err = integrate.quad(
            lambda t: math.exp(-p * t - 0.5 * q * t * t), 0.0, x, limit=400
        )
        assert big_phi(x, params) == pytest.approx(want, rel=1e-8)


def test_f_sshape_small_depth_is_nearly_linear():
    # With p = 0 and q ~ 0 the kernel integral is essentially x, so
    # f = log(1 + ell x). At ell x = 1e-3 the exact value is known to
    # 16 digits and the relative gap to the tangent ell * x is ell*x/2
    # to first order.
    params = SShapeParams(ell=1e-4, p=0.0, q=1e-8)
    x = 10.0
    got = f_sshape(x, params)
    assert got == pytest.approx(0.0009995001665832682, rel=1e-12)
    rel_gap = (params.ell * x - got) / (params.ell * x)
    first_order = 0.5 * params.ell * x
    assert rel_gap == pytest.approx(first_order, rel=1e-2)


def test_f_sshape_zero_at_origin():
    assert f_sshape(0.0, NK) == 0.0


def test_f_linear_and_sqrt():
    lin = LinearParams(alpha=2.5e-6)
    assert f_linear(100.0, lin) == pytest.approx(2.5e-4, rel=1e-15)
    assert f_linear(-40.0, lin) == -f_linear(40.0, lin)
    sq = SqrtParams(alpha=3e-5)
    assert f_sqrt(25.0, sq) == pytest.approx(1.5e-4, rel=1e-15)
    assert f_sqrt(-25.0, sq) == -f_sqrt(25.0, sq)
    assert f_sqrt(0.0, sq) == 0.0


def test_g_sshape_matches_finite_difference():
    rng = np.random.default_rng(37)
    for params in random_feasible_params(rng, 10):
        scale = 1.0 / math.sqrt(params.q)
        for x in (-1.5 * scale, 0.0, 0.8 * scale):
            # Cube-root-of-eps step balances truncation against roundoff.
            h = 6e-6 * max(1.0, abs(x))
            fd = (f_sshape(x + h, params) - f_sshape(x - h, params)) / (2.0 * h)
            assert g_sshape(x, params) == pytest.approx(fd, rel=1e-4, abs=1e-18)


def test_g_solves_defining_equation():
    """g' from finite differences of g must satisfy the Bernoulli residual."""
    rng = np.random.default_rng(41)
    for params in random_feasible_params(rng, 10):
        spec = OdeSpec.from_sshape(params)
        scale = 1.0 / math.sqrt(params.q)
        for x in (-0.9 * scale, 0.4 * scale):
            h = 1e-5 * max(1.0, abs(x))
            gprime = (g_sshape(x + h, params) - g_sshape(x - h, params)) / (2.0 * h)
            res = bernoulli_residual(x, spec, g_sshape(x, params), gprime)
            g0 = abs(g_sshape(x, params))
            assert abs(res) < 1e-4 * max(g0, abs(gprime), 1e-12)


def test_inflection_point_value():
    assert inflection_point(NK) == pytest.approx(41.71779141104294, rel=1e-15)
    assert inflection_point(SShapeParams(1e-5, 0.002, 1e-4)) == -20.0


def test_inflection_is_curvature_flip_of_f():
    # f'' = g' + ... no: curvature of f is f'' = (d/dx) g. The S-shape has
    # f convex left of x* and concave right of it only when s(x) = 0, in
    # which case f'' changes sign where g' + g^2 does; the documented flow
    # depth is the sign change of phi', i.e. x* = -p/q for the kernel.
    params = SShapeParams(ell=1e-5, p=-0.003, q=8e-5)
    xstar = inflection_point(params)
    h = 2.0

    def second(x):
        d = 1e-3
        return (f_sshape(x + d, params) - 2.0 * f_sshape(x, params) + f_sshape(x - d, params)) / (d * d)

    assert second(xstar - h) > 0.0
    assert second(xstar + h) < 0.0


def test_feasibility_margin_matches_naive_formula():
    """Direct evaluation agrees in the regime where it cannot overflow."""
    rng = np.random.default_rng(53)
    for _ in range(50):
        q = math.exp(rng.uniform(math.log(1e-6), math.log(1e-2)))
        b = rng.uniform(-2.5, 2.5)
        p = b * math.sqrt(q)
        ell = math.exp(rng.uniform(math.log(1e-8), math.log(1e-4)))
        params = SShapeParams(ell=ell, p=p, q=q)
        naive = 1.0 - ell * math.sqrt(2.0 * math.pi / q) * math.exp(0.5 * b * b) * norm.cdf(b)
        assert feasibility_margin(params) == pytest.approx(naive, rel=1e-12, abs=1e-12)


def test_feasibility_margin_no_overflow_far_tail():
    for load in (1e2, 1e3, 1e4):
        q = 1e-4
        p = -math.sqrt(2.0 * q * load)
        m = feasibility_margin(SShapeParams(ell=1e-6, p=p, q=q))
        assert math.isfinite(m) or m == -math.inf
        # With p this negative N(p/sqrt(q)) collapses faster than exp(load)
        # grows, so the margin should still be close to one.
        assert m == pytest.approx(1.0, abs=1e-3)
    # Positive p with the same load does overflow the subtracted term.
    q = 1e-4
    p = math.sqrt(2.0 * q * 1e4)
    assert feasibility_margin(SShapeParams(ell=1e-6, p=p, q=q)) == -math.inf


def test_feasibility_margin_boundary():
    q = 8.15e-5
    p = -0.0034
    b = p / math.sqrt(q)
    k = math.sqrt(2.0 * math.pi / q) * math.exp(0.5 * b * b) * norm.cdf(b)
    for eps in (0.5, 0.05):
        params = SShapeParams(ell=(1.0 - eps) / k, p=p, q=q)
        assert feasibility_margin(params) == pytest.approx(eps, rel=1e-10)
    assert feasibility_margin(SShapeParams(ell=1.5 / k, p=p, q=q)) < 0.0


def test_infeasible_curve_is_partially_undefined():
    # Negative margin means 1 + ell * Phi crosses zero somewhere; asking
    # for f there must raise rather than return a wrong number.
    q = 8.15e-5
    p = -0.0034
    b = p / math.sqrt(q)
    k = math.sqrt(2.0 * math.pi / q) * math.exp(0.5 * b * b) * norm.cdf(b)
    params = SShapeParams(ell=2.0 / k, p=p, q=q)
    assert feasibility_margin(params) < 0.0
    with pytest.raises(ParameterError, match="undefined"):
        f_sshape(np.linspace(-3000.0, 0.0, 2001), params)
    # Near the origin the curve is still fine.
    assert math.isfinite(f_sshape(1.0, params))


def test_linear_alpha_identity():
    rng = np.random.default_rng(61)
    for _ in range(200):
        p = rng.uniform(-1.5, 1.5)
        s = math.exp(rng.uniform(math.log(0.5), math.log(5.0)))
        alpha, beta = linear_alpha_from_ps(p, s)
        assert alpha > 0.0
        assert p * alpha + alpha * alpha == pytest.approx(s, rel=1e-14)
        assert beta == pytest.approx(p + 2.0 * alpha, rel=1e-15)


def test_linear_alpha_sign_relation():
    # The two quadratic roots mirror under p -> -p: alpha(-p) = alpha(p) + p.
    alpha_pos, _ = linear_alpha_from_ps(0.8, 2.0)
    alpha_neg, _ = linear_alpha_from_ps(-0.8, 2.0)
    assert alpha_neg == pytest.approx(alpha_pos + 0.8, rel=1e-14)
    with pytest.raises(ParameterError):
        linear_alpha_from_ps(0.5, 0.0)
    with pytest.raises(ParameterError):
        linear_alpha_from_ps(0.5, -1.0)


def test_structural_to_pq_components():
    sp = StructuralParams(mu_s=0.08, sigma_s=0.25, rho=0.4, c=0.2, m=3.0,
                          eta=80.0, delta=0.001, tau=0.5, r=0.05, kappa0=0.0)
    dec = structural_to_pq(sp)
    inv = 2.0 / (sp.eta * sp.eta)
    assert dec.p == pytest.approx(inv * (sp.c * sp.m + sp.rho * sp.eta * sp.sigma_s - sp.delta), rel=1e-15)
    assert dec.q == pytest.approx(inv * (sp.tau - sp.c), rel=1e-15)
    assert dec.q == pytest.approx(9.375e-5, rel=1e-12)
    assert dec.p == pytest.approx(0.0026871875, rel=1e-12)
    assert dec.mean_reversion + dec.covariance + dec.liquidity == pytest.approx(dec.p, rel=1e-12)


def test_structural_to_pq_requires_tau_above_c():
    sp = StructuralParams(mu_s=0.08, sigma_s=0.25, rho=0.4, c=0.2, m=3.0,
                          eta=80.0, delta=0.0, tau=0.2, r=0.05, kappa0=0.0)
    with pytest.raises(ParameterError):
        structural_to_pq(sp)


def test_sigma_p_and_mu_p_formulas():
    sp = StructuralParams(mu_s=0.08, sigma_s=0.25, rho=0.4, c=0.2, m=3.0,
                          eta=80.0, delta=0.0, tau=0.0, r=0.05, kappa0=0.0)
    g = 0.0012
    gp = -3e-5
    x = 7.0
    want_var = sp.sigma_s ** 2 + (sp.eta * g) ** 2 + 2 * sp.rho * sp.eta * sp.sigma_s * g
    assert sigma_p_squared(x, g, sp) == pytest.approx(want_var, rel=1e-15)
    want_mu = sp.mu_s + (sp.c * (sp.m - x) + sp.rho * sp.eta * sp.sigma_s) * g \
        + 0.5 * sp.eta ** 2 * (gp + g * g)
    assert mu_p(x, sp, g, gp) == pytest.approx(want_mu, rel=1e-15)
    # Uncorrelated flow with zero g leaves only the exogenous variance.
    assert sigma_p_squared(0.0, 0.0, sp) == pytest.approx(sp.sigma_s ** 2, rel=1e-15)


def test_ode_constant_coefficient_solution_is_constant():
    # With constant p and s the equation has the constant solution
    # g = alpha from the quadratic; RK4 must stay on it to rounding.
    spec = OdeSpec.from_linear(p=0.3, s=1.2)
    alpha, _ = linear_alpha_from_ps(0.3, 1.2)
    sol = solve_ode_numeric(spec, (-4.0, 4.0), step=1e-2)
    assert np.max(np.abs(sol.g - alpha)) < 1e-12
    assert sol.f[np.argmin(np.abs(sol.x - 2.0))] == pytest.approx(2.0 * alpha, rel=1e-6)


def test_ode_matches_g_sshape():
    params = SShapeParams(ell=1.3e-5, p=-0.0034, q=8.15e-5)
    span = 5.0 / math.sqrt(params.q)
    sol = solve_ode_numeric(OdeSpec.from_sshape(params), (-span, span), step=span / 2000.0)
    want = g_sshape(sol.x, params)
    assert np.max(np.abs(sol.g - want)) < 1e-10
    # f accumulated by the trapezoid rule tracks the closed form too.
    want_f = f_sshape(sol.x, params)
    assert np.max(np.abs(sol.f - want_f)) < 1e-7


def test_ode_blowup_detected_at_known_position():
    # g' = -2 - g^2 with g(0) = 0 is g(x) = -sqrt(2) tan(sqrt(2) x),
    # which leaves every finite bound at x = pi / (2 sqrt(2)).
    spec = OdeSpec(p_fn=lambda x: 0.0, s_fn=lambda x: -2.0, ell=0.0)
    blow_at = math.pi / (2.0 * math.sqrt(2.0))
    with pytest.raises(OdeBlowupError) as exc_info:
        solve_ode_numeric(spec, (0.0, 2.0), step=1e-4)
    assert blow_at - 0.01 < exc_info.value.x <= blow_at


def test_ode_range_validation():
    spec = OdeSpec.from_linear(p=0.0, s=1.0)
    with pytest.raises(ValueError):
        solve_ode_numeric(spec, (1.0, 2.0), step=0.01)
    with pytest.raises(ValueError):
        solve_ode_numeric(spec, (-1.0, 1.0), step=0.0)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        SShapeParams(ell=0.0, p=0.0, q=1e-4)
    with pytest.raises(ParameterError):
        SShapeParams(ell=1e-5, p=0.0, q=0.0)
    with pytest.raises(ParameterError):
        SShapeParams(ell=-1e-5, p=0.0, q=1e-4)
    with pytest.raises(ParameterError):
        LinearParams(alpha=0.0)
    with pytest.raises(ParameterError):
        SqrtParams(alpha=-1e-6)


def test_structural_validation():
    good = dict(mu_s=0.05, sigma_s=0.2, rho=0.3, c=0.2, m=2.0, eta=50.0,
                delta=0.0, tau=0.0, r=0.03, kappa0=0.0)
    StructuralParams(**good)
    StructuralParams(**{**good, "sigma_s": 0.0})  # deterministic exogenous leg is allowed
    for bad in ({"eta": 0.0}, {"c": 0.0}, {"rho": 1.5}, {"rho": -1.01},
                {"sigma_s": -0.1}, {"kappa0": -0.2}):
        with pytest.raises(ParameterError):
            StructuralParams(**{**good, **bad})
