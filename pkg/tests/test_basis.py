import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import minimize

from nonlinritz.basis import (
    FreeKnotHats,
    GaussianBumps,
    IndicatorPair,
    NonlinearDomain,
    SyntheticAmplitude,
    basis_difference_norm,
    basis_norms,
    dparam_norm,
    estimate_hoelder,
    estimate_sup_norm,
    eval_basis,
    eval_basis_dparam,
    realisation,
)
from nonlinritz.errors import (
    ConfigError,
    DerivativeUnavailableError,
    DomainViolationError,
    NumericalError,
)
from nonlinritz.variational import Field, L2Approx, QuadratureRule, integrate


# ---------------------------------------------------------------------------
# admissible domain
# ---------------------------------------------------------------------------


def test_domain_validation():
    with pytest.raises(ConfigError):
        NonlinearDomain([0.0, 1.0], [1.0, 0.5])
    with pytest.raises(ConfigError):
        NonlinearDomain([0.0], [np.inf])
    with pytest.raises(ConfigError):
        NonlinearDomain([0.0, 1.0], [1.0, 2.0], chains=((0,),))
    with pytest.raises(ConfigError):
        NonlinearDomain([0.0] * 3, [1.0] * 3, chains=((0, 1), (1, 2)))
    with pytest.raises(ConfigError):
        NonlinearDomain([0.0, 0.0], [1.0, 1.0], chains=((0, 1),), gap=-0.1)
    # chain gap larger than the box extent leaves no feasible point
    with pytest.raises(ConfigError, match="empty"):
        NonlinearDomain([0.0, 0.0], [1.0, 1.0], chains=((0, 1),), gap=1.5)


def test_contains_and_require():
    dom = NonlinearDomain([0.0, 0.0], [1.0, 1.0], chains=((0, 1),), gap=0.25)
    assert dom.contains([0.2, 0.6])
    assert not dom.contains([0.2, 0.3])  # gap violated
    assert not dom.contains([-0.1, 0.6])
    with pytest.raises(DomainViolationError, match="chain gap"):
        dom.require([0.5, 0.5])


def test_project_box_only_is_clip():
    dom = NonlinearDomain([0.0, -1.0], [1.0, 1.0])
    assert_allclose(dom.project([2.0, -3.0]), [1.0, -1.0])
    assert_allclose(dom.project([0.3, 0.4]), [0.3, 0.4])


def test_project_feasible_point_is_bitwise_passthrough():
    dom = NonlinearDomain([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], chains=((0, 1, 2),),
                          gap=0.1)
    p = np.array([0.1, 0.30000000000000004, 0.7])
    q = dom.project(p)
    assert all(a == b for a, b in zip(p, q))


def test_project_counterexample_to_clip_after_pool():
    # projecting (3, 0) with ordering x0 <= x1 and x1 >= 2: plain
    # pool-then-clip would give (1.5, 2) with value 6.25; the true
    # projection is (2, 2) with value 5
    dom = NonlinearDomain([-10.0, 2.0], [10.0, 10.0], chains=((0, 1),))
    assert_allclose(dom.project([3.0, 0.0]), [2.0, 2.0], atol=1e-14)


def test_project_respects_gap_shift():
    dom = NonlinearDomain([0.0, 0.0], [1.0, 1.0], chains=((0, 1),), gap=0.5)
    got = dom.project([0.6, 0.4])
    # symmetric pull onto the active gap constraint
    assert_allclose(got, [0.25, 0.75], atol=1e-14)
    assert dom.contains(got)


def _slsqp_project(dom, p, d):
    cons = []
    for c in dom.chains:
        for a, b in zip(c[:-1], c[1:]):
            cons.append(
                {"type": "ineq", "fun": lambda x, a=a, b=b: x[b] - x[a] - dom.gap}
            )
    res = minimize(
        lambda x: float(np.sum(d * (x - p) ** 2)),
        np.clip(p, dom.lower, dom.upper),
        jac=lambda x: 2.0 * d * (x - p),
        bounds=list(zip(dom.lower, dom.upper)),
        constraints=cons,
        method="SLSQP",
        options={"maxiter": 200, "ftol": 1e-14},
    )
    return res.x


def test_project_matches_slsqp_oracle():
    rng = np.random.default_rng(7)
    dom = NonlinearDomain(
        [0.0, 0.0, 0.0, -1.0], [1.0, 1.0, 1.0, 1.0], chains=((0, 1, 2),), gap=0.15
    )
    for _ in range(40):
        p = rng.uniform(-0.5, 1.5, 4)
        d = rng.uniform(0.2, 3.0, 4)
        mine = dom.project(p, weights=d)
        assert dom.contains(mine, tol=1e-9)
        ref = _slsqp_project(dom, p, d)
        obj_mine = float(np.sum(d * (mine - p) ** 2))
        obj_ref = float(np.sum(d * (ref - p) ** 2))
        assert obj_mine <= obj_ref + 1e-8


def test_sample_feasible_and_deterministic():
    dom = NonlinearDomain([0.0, 0.0], [1.0, 1.0], chains=((0, 1),), gap=0.3)
    pts = [dom.sample(np.random.default_rng(5)) for _ in range(3)]
    assert all(dom.contains(p) for p in pts)
    assert_allclose(pts[0], pts[1])


def test_shrink_gives_margin():
    dom = NonlinearDomain([0.0, 0.0], [1.0, 1.0], chains=((0, 1),), gap=0.2)
    inner = dom.shrink(0.05)
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = inner.sample(rng)
        for i in range(2):
            for s in (-0.05, 0.05):
                q = p.copy()
                q[i] += s
                assert dom.contains(q, tol=1e-12)


# ---------------------------------------------------------------------------
# gaussian bumps
# ---------------------------------------------------------------------------


def _gauss_family(n=2, width=0.1):
    dom = NonlinearDomain([0.1] * n, [0.9] * n)
    return GaussianBumps(dom, np.full(n, width))


def test_gaussian_values_and_derivs():
    fam = _gauss_family()
    xi = np.array([0.5, 0.3])
    x = np.array([0.6])
    vals, ders = eval_basis(fam, xi, x)
    assert_allclose(vals[0, 0], math.exp(-0.5), rtol=1e-15)
    # d/dx of exp(-(x-c)^2 / (2 s^2)) at x=0.6, c=0.5, s=0.1
    assert_allclose(ders[0, 0], -10.0 * math.exp(-0.5), rtol=1e-14)


def test_gaussian_dparam_diagonal_value():
    fam = _gauss_family()
    xi = np.array([0.5, 0.3])
    dvals, dders = eval_basis_dparam(fam, xi, np.array([0.6]))
    assert dvals.shape == (2, 2, 1)
    assert_allclose(dvals[0, 0, 0], 10.0 * math.exp(-0.5), rtol=1e-14)
    assert dvals[1, 0, 0] == 0.0 and dvals[0, 1, 0] == 0.0  # centers are independent
    assert dders is not None


def test_gaussian_dparam_matches_fd():
    fam = _gauss_family()
    xi = np.array([0.4, 0.7])
    x = np.linspace(0.0, 1.0, 11)
    dvals, _ = eval_basis_dparam(fam, xi, x)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (fam.basis_values(xi + e, x) - fam.basis_values(xi - e, x)) / (2 * h)
        assert_allclose(dvals[i], fd, atol=1e-8)


def test_bad_parameter_shape_rejected():
    fam = _gauss_family()
    with pytest.raises(DomainViolationError):
        eval_basis(fam, np.array([0.5]), np.array([0.5]))
    with pytest.raises(DomainViolationError):
        eval_basis(fam, np.array([0.5, 2.0]), np.array([0.5]))


# ---------------------------------------------------------------------------
# free-knot hats
# ---------------------------------------------------------------------------


def _hat_family(m=3, dirichlet=False, gap=0.05):
    dom = NonlinearDomain([0.05] * m, [0.95] * m, chains=(tuple(range(m)),), gap=gap)
    return FreeKnotHats(dom, 0.0, 1.0, dirichlet=dirichlet)


def test_hats_partition_of_unity_including_endpoints():
    fam = _hat_family()
    xi = np.array([0.2, 0.5, 0.7])
    x = np.linspace(0.0, 1.0, 101)  # includes both interval endpoints
    vals, _ = eval_basis(fam, xi, x)
    assert vals.shape == (5, 101)
    assert_allclose(vals.sum(axis=0), np.ones(101), atol=1e-14)


def test_hats_interpolate_at_knots():
    fam = _hat_family()
    xi = np.array([0.2, 0.5, 0.7])
    knots = np.concatenate([[0.0], xi, [1.0]])
    vals, _ = eval_basis(fam, xi, knots)
    assert_allclose(vals, np.eye(5), atol=1e-14)


def test_hats_dirichlet_drops_boundary_functions():
    fam = _hat_family(dirichlet=True)
    assert fam.n_linear == 3
    assert fam.vanishes_on_boundary
    vals, _ = eval_basis(fam, np.array([0.2, 0.5, 0.7]), np.array([0.0, 1.0]))
    assert_allclose(vals, np.zeros((3, 2)), atol=1e-15)


def test_hats_zero_width_cell_stays_finite():
    dom = NonlinearDomain([0.0, 0.0], [1.0, 1.0], chains=((0, 1),), gap=0.0)
    fam = FreeKnotHats(dom, 0.0, 1.0)
    vals, ders = eval_basis(fam, np.array([0.5, 0.5]), np.linspace(0, 1, 21))
    assert np.all(np.isfinite(vals))
    assert np.all(np.isfinite(ders))


def test_hats_breakpoints_are_knots():
    fam = _hat_family()
    xi = np.array([0.2, 0.5, 0.7])
    assert set(fam.breakpoints(xi)) == {0.0, 0.2, 0.5, 0.7, 1.0}


# ---------------------------------------------------------------------------
# indicator pair
# ---------------------------------------------------------------------------


def _indicator_family():
    dom = NonlinearDomain([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], chains=((0, 1, 2),))
    return IndicatorPair(dom)


def test_indicator_values():
    fam = _indicator_family()
    xi = np.array([0.0, 0.5, 1.0])
    vals, ders = eval_basis(fam, xi, np.array([0.25, 0.75]))
    assert_allclose(vals, [[1.0, 0.0], [0.0, 1.0]])
    assert ders is None  # indicators live in L2 only


def test_indicator_dparam_raises():
    fam = _indicator_family()
    with pytest.raises(DerivativeUnavailableError, match="Dirac"):
        fam.dparam_values(np.array([0.0, 0.5, 1.0]), np.array([0.3]))
    assert fam.smoothness_nu == 0.5


# ---------------------------------------------------------------------------
# synthetic amplitude
# ---------------------------------------------------------------------------


def test_synthetic_sphere_quartic_profile():
    dom = NonlinearDomain([-2.0, -2.0], [2.0, 2.0])
    fam = SyntheticAmplitude(dom, profile="sphere_quartic", radius=1.0, scale=0.5)
    xi = np.array([0.6, 0.8])  # on the unit circle
    vals, _ = eval_basis(fam, xi, np.array([0.1, 0.9]))
    assert_allclose(vals, np.zeros((1, 2)), atol=1e-15)
    xi = np.array([1.0, 1.0])
    vals, _ = eval_basis(fam, xi, np.array([0.3]))
    assert_allclose(vals[0, 0], math.sqrt(2.0) * 0.5 * 1.0, rtol=1e-15)


def test_synthetic_norm_profile_raises_at_origin():
    dom = NonlinearDomain([-1.0, -1.0], [1.0, 1.0])
    fam = SyntheticAmplitude(dom, profile="norm")
    with pytest.raises(NumericalError):
        fam.dparam_values(np.zeros(2), np.array([0.5]))


# ---------------------------------------------------------------------------
# realisation and norms
# ---------------------------------------------------------------------------


def test_realisation_matches_manual_combination():
    fam = _gauss_family()
    xi = np.array([0.4, 0.6])
    w = np.array([2.0, -1.0])
    r = realisation(fam, xi, w)
    x = np.linspace(0, 1, 7)
    manual = w @ fam.basis_values(xi, x)
    assert_allclose(r.values(x), manual, rtol=1e-15)
    assert r.in_h1


def test_basis_norms_against_direct_quadrature():
    fam = _gauss_family()
    xi = np.array([0.4, 0.6])
    rule = QuadratureRule.on_interval(0.0, 1.0, 16, 6)
    problem = L2Approx(Field.constant(0.0))
    total = 0.0
    for k in range(2):
        total += integrate(lambda x, k=k: fam.basis_values(xi, x)[k] ** 2, rule)
    assert_allclose(basis_norms(problem, rule, fam, xi), math.sqrt(total), rtol=1e-13)


def test_basis_difference_norm_zero_for_same_point():
    fam = _gauss_family()
    rule = QuadratureRule.on_interval(0.0, 1.0, 8, 5)
    problem = L2Approx(Field.constant(0.0))
    xi = np.array([0.4, 0.6])
    assert basis_difference_norm(problem, rule, fam, xi, xi) == 0.0
    assert basis_difference_norm(problem, rule, fam, xi, np.array([0.5, 0.6])) > 0.0


def test_dparam_norm_positive():
    fam = _gauss_family()
    rule = QuadratureRule.on_interval(0.0, 1.0, 8, 5)
    problem = L2Approx(Field.constant(0.0))
    assert dparam_norm(problem, rule, fam, np.array([0.4, 0.6])) > 0.0


def test_estimate_sup_norm_dominates_samples():
    fam = _gauss_family()
    rule = QuadratureRule.on_interval(0.0, 1.0, 8, 5)
    problem = L2Approx(Field.constant(0.0))
    sup = estimate_sup_norm(problem, rule, fam, n_samples=30, seed=0)
    rng = np.random.default_rng(1)
    for _ in range(10):
        xi = fam.domain.sample(rng)
        assert basis_norms(problem, rule, fam, xi) <= sup + 1e-12


def test_estimate_hoelder_exponents():
    rule = QuadratureRule.on_interval(0.0, 1.0, 16, 5)
    problem = L2Approx(Field.constant(0.0))
    nu_ind, L_ind = estimate_hoelder(problem, rule, _indicator_family(), 40, 3)
    assert 0.3 <= nu_ind <= 0.7  # square-root behaviour of indicator shifts
    assert L_ind > 0.0
    nu_g, _ = estimate_hoelder(problem, rule, _gauss_family(), 40, 3)
    assert nu_g >= 0.85  # smooth family is Lipschitz (exponent clipped at 1)
