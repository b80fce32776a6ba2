import numpy as np
import pytest
from numpy.testing import assert_allclose

from nonlinritz.assembly import AssembledSystem, assemble, quadratic_energy
from nonlinritz.basis import (
    FreeKnotHats,
    GaussianBumps,
    IndicatorPair,
    NonlinearDomain,
    SyntheticAmplitude,
)
from nonlinritz.errors import (
    CgConvergenceError,
    ConfigError,
    SpdViolationError,
)
from nonlinritz.updates import (
    DiagonalGeometry,
    EuclideanGeometry,
    Frozen,
    FullSolveCG,
    SteepestDescent,
    bregman_div,
    conjugate_gradient,
    decrease_check,
    gradient_mapping,
    make_gradients,
    prox_optimality_residual,
    prox_step,
    update_linear,
)
from nonlinritz.variational import (
    DiffusionReaction1D,
    Field,
    L2Approx,
    QuadratureRule,
)

RULE = QuadratureRule.on_interval(0.0, 1.0, n_panels=16, order=5)


def _toy_system(matrix, load):
    matrix = np.asarray(matrix, dtype=float)
    evals = np.linalg.eigvalsh(matrix)
    return AssembledSystem(
        xi=np.zeros(1),
        matrix=matrix,
        load=np.asarray(load, dtype=float),
        gram=matrix.copy(),
        lambda_min=float(evals[0]),
        lambda_max=float(evals[-1]),
        omega=float(evals[0]),
        phi_u2=float(np.sqrt(np.trace(matrix))),
    )


# ---------------------------------------------------------------------------
# conjugate gradients
# ---------------------------------------------------------------------------


def test_cg_solves_spd_system():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((6, 6))
    A = B @ B.T + 6 * np.eye(6)
    b = rng.standard_normal(6)
    x = conjugate_gradient(A, b, np.zeros(6), 1e-13, 100)
    assert np.linalg.norm(b - A @ x) <= 1e-13 * np.linalg.norm(b)


def test_cg_zero_load_short_circuits():
    # a relative residual test can never trigger for b = 0; the unique
    # solution of the SPD system is returned directly
    A = np.diag([1.0, 2.0])
    x = conjugate_gradient(A, np.zeros(2), np.array([3.0, -1.0]), 1e-12, 50)
    assert_allclose(x, np.zeros(2))


def test_cg_warm_start_already_converged():
    A = np.diag([1.0, 2.0])
    b = np.array([1.0, 2.0])
    x = conjugate_gradient(A, b, np.array([1.0, 1.0]), 1e-12, 50)
    assert_allclose(x, [1.0, 1.0])


def test_cg_rejects_indefinite():
    A = np.diag([1.0, -1.0])
    with pytest.raises(SpdViolationError):
        conjugate_gradient(A, np.array([1.0, 1.0]), np.zeros(2), 1e-12, 50)


def test_cg_iteration_cap():
    rng = np.random.default_rng(1)
    B = rng.standard_normal((8, 8))
    A = B @ B.T + 1e-3 * np.eye(8)
    with pytest.raises(CgConvergenceError):
        conjugate_gradient(A, rng.standard_normal(8), np.zeros(8), 1e-14, 1)


# ---------------------------------------------------------------------------
# linear update rules and the guaranteed decrease
# ---------------------------------------------------------------------------


def test_steepest_descent_hand_example():
    # A = diag(1, 2), load (1, 2), start 0: beta = (r.r)/(r.Ar) = 5/9;
    # achieved drop 25/18, guaranteed 0.5 * (1/2) * 5 = 1.25
    system = _toy_system(np.diag([1.0, 2.0]), [1.0, 2.0])
    w0 = np.zeros(2)
    w1 = update_linear(SteepestDescent(), system, w0)
    assert_allclose(w1, [5.0 / 9.0, 10.0 / 9.0], rtol=1e-15)
    achieved, guaranteed = decrease_check(system, w0, w1)
    assert_allclose(achieved, 25.0 / 18.0, rtol=1e-15)
    assert_allclose(guaranteed, 1.25, rtol=1e-15)
    assert achieved >= guaranteed


def test_full_solve_exact_and_decrease():
    system = _toy_system(np.diag([1.0, 2.0]), [1.0, 2.0])
    w1 = update_linear(FullSolveCG(), system, np.zeros(2))
    assert_allclose(w1, [1.0, 1.0], rtol=1e-12)
    achieved, guaranteed = decrease_check(system, np.zeros(2), w1)
    assert_allclose(achieved, 1.5, rtol=1e-12)
    assert achieved >= guaranteed


def test_frozen_keeps_coefficients():
    system = _toy_system(np.diag([1.0, 2.0]), [1.0, 2.0])
    w = np.array([0.3, -0.4])
    w1 = update_linear(Frozen(), system, w)
    assert_allclose(w1, w)
    assert w1 is not w  # defensive copy


def test_decrease_holds_on_random_systems():
    rng = np.random.default_rng(4)
    for _ in range(25):
        B = rng.standard_normal((4, 4))
        system = _toy_system(B @ B.T + 0.5 * np.eye(4), rng.standard_normal(4))
        w = rng.standard_normal(4)
        for rule in (FullSolveCG(), SteepestDescent()):
            w1 = update_linear(rule, system, w)
            achieved, guaranteed = decrease_check(system, w, w1)
            assert achieved >= guaranteed - 1e-9


# ---------------------------------------------------------------------------
# Bregman geometries and the prox step
# ---------------------------------------------------------------------------


def test_geometry_moduli():
    assert EuclideanGeometry().mu == 1.0
    geom = DiagonalGeometry([2.0, 0.5, 4.0])
    assert geom.mu == 0.5
    with pytest.raises(ConfigError):
        DiagonalGeometry([1.0, 0.0])


def test_bregman_divergence_values():
    e = np.array([1.0, 2.0])
    x = np.array([0.0, 0.0])
    assert_allclose(bregman_div(EuclideanGeometry(), e, x), 2.5)
    assert_allclose(bregman_div(DiagonalGeometry([2.0, 1.0]), e, x), 3.0)


def test_prox_step_interior_is_plain_gradient_step():
    dom = NonlinearDomain([0.0, 0.0], [1.0, 1.0])
    xi = np.array([0.5, 0.5])
    g = np.array([1.0, -1.0])
    got = prox_step(EuclideanGeometry(), dom, xi, g, 0.25)
    assert_allclose(got, [0.25, 0.75])
    # the gradient mapping then reproduces the gradient itself
    assert_allclose(gradient_mapping(xi, got, 0.25), g)


def test_prox_step_diagonal_geometry_scales_per_coordinate():
    dom = NonlinearDomain([0.0, 0.0], [1.0, 1.0])
    got = prox_step(
        DiagonalGeometry([1.0, 4.0]), dom, np.array([0.5, 0.5]),
        np.array([1.0, 1.0]), 0.4,
    )
    assert_allclose(got, [0.1, 0.4])


def test_prox_step_clips_to_box():
    dom = NonlinearDomain([0.0, 0.0], [1.0, 1.0])
    got = prox_step(EuclideanGeometry(), dom, np.array([0.5, 0.5]),
                    np.array([1.0, -1.0]), 1.0)
    assert_allclose(got, [0.0, 1.0])


def test_prox_step_is_bregman_minimiser_by_grid_search():
    # brute-force the prox objective over a fine feasible grid
    dom = NonlinearDomain([0.0, 0.0], [1.0, 1.0], chains=((0, 1),), gap=0.2)
    geom = DiagonalGeometry([1.0, 3.0])
    xi = np.array([0.62, 0.7])
    g = np.array([-2.0, 1.5])
    gamma = 0.3
    got = prox_step(geom, dom, xi, g, gamma)

    def objective(eta):
        return gamma * float(g @ eta) + geom.div(eta, xi)

    best = np.inf
    for a in np.linspace(0, 1, 201):
        for b in np.linspace(0, 1, 201):
            eta = np.array([a, b])
            if dom.contains(eta):
                best = min(best, objective(eta))
    assert dom.contains(got)
    assert objective(got) <= best + 1e-4


def test_prox_optimality_residual_certifies_the_step():
    rng = np.random.default_rng(9)
    dom = NonlinearDomain([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], chains=((0, 1, 2),),
                          gap=0.1)
    geom = DiagonalGeometry([1.0, 2.0, 0.5])
    for _ in range(25):
        xi = dom.sample(rng)
        g = rng.standard_normal(3)
        gamma = 10.0 ** rng.uniform(-2, 0.5)
        xp = prox_step(geom, dom, xi, g, gamma)
        assert prox_optimality_residual(geom, dom, xi, g, gamma, xp) <= 1e-8
    # a deliberately wrong answer is flagged
    xi = np.array([0.2, 0.5, 0.8])
    g = np.array([1.0, 0.0, 0.0])
    wrong = np.array([0.5, 0.65, 0.8])
    assert prox_optimality_residual(geom, dom, xi, g, 0.1, wrong) > 1e-3


# ---------------------------------------------------------------------------
# energy gradients
# ---------------------------------------------------------------------------


def _l2_problem():
    return L2Approx(Field(lambda x: np.sin(np.pi * x)))


def _h1_problem():
    return DiffusionReaction1D(
        diffusivity=Field(lambda x: 1.0 + 0.5 * x),
        reaction=Field.constant(1.0),
        source=Field.constant(1.0),
        x_lo=0.0,
        x_hi=1.0,
        bc_lo=0.2,
        bc_hi=-0.1,
    )


def test_analytic_grad_matches_fd_gaussians_l2():
    fam = GaussianBumps(NonlinearDomain([0.1] * 2, [0.9] * 2), np.array([0.1, 0.12]))
    grads = make_gradients(_l2_problem(), RULE, fam, mode="analytic")
    fd = make_gradients(_l2_problem(), RULE, fam, mode="fd", fd_step=1e-6)
    rng = np.random.default_rng(5)
    for _ in range(5):
        xi = fam.domain.sample(rng)
        w = rng.standard_normal(2)
        assert_allclose(grads.grad_xi(w, xi), fd.grad_xi(w, xi), atol=1e-8)


def test_fd_grad_hats_h1_matches_direct_difference():
    # knot motion leaves H1, so hats under the Dirichlet energy use fd; check
    # it against an independent central difference of the assembled energy
    dom = NonlinearDomain([0.15, 0.15], [0.85, 0.85], chains=((0, 1),), gap=0.1)
    fam = FreeKnotHats(dom, 0.0, 1.0, dirichlet=True)
    problem = _h1_problem()
    grads = make_gradients(problem, RULE, fam, mode="fd", fd_step=1e-6)
    rng = np.random.default_rng(6)
    for _ in range(3):
        xi = dom.shrink(0.01).sample(rng)
        w = rng.standard_normal(fam.n_linear)
        got = grads.grad_xi(w, xi)
        h = 1e-5
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            kp = quadratic_energy(assemble(problem, RULE, fam, xi + e), w)
            km = quadratic_energy(assemble(problem, RULE, fam, xi - e), w)
            assert abs(got[i] - (kp - km) / (2 * h)) <= 1e-5 * (1 + abs(got[i]))


def test_indicator_closed_form_matches_fd():
    dom = NonlinearDomain([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], chains=((0, 1, 2),),
                          gap=0.05)
    fam = IndicatorPair(dom)
    grads = make_gradients(_l2_problem(), RULE, fam)  # auto -> closed_form
    assert grads.mode == "closed_form"
    fd = make_gradients(_l2_problem(), RULE, fam, mode="fd", fd_step=1e-5)
    rng = np.random.default_rng(7)
    for _ in range(5):
        xi = dom.shrink(0.02).sample(rng)
        w = rng.standard_normal(2)
        # fd of the quadrature energy is noisy for indicators (panel splits
        # move with xi); the closed form is the trustworthy one
        assert_allclose(grads.grad_xi(w, xi), fd.grad_xi(w, xi), atol=5e-4)


def test_hats_under_h1_need_fd():
    dom = NonlinearDomain([0.1, 0.1], [0.9, 0.9], chains=((0, 1),), gap=0.05)
    fam = FreeKnotHats(dom, 0.0, 1.0, dirichlet=True)
    problem = _h1_problem()
    auto = make_gradients(problem, RULE, fam)
    assert auto.mode == "fd"  # knot motion leaves H1: no analytic route
    with pytest.raises(ConfigError, match="L2 energy"):
        make_gradients(problem, RULE, fam, mode="analytic")
    # under the L2 energy the same family supports the analytic route
    l2_auto = make_gradients(_l2_problem(), RULE, fam)
    assert l2_auto.mode == "analytic"


def test_hats_analytic_matches_fd_l2():
    dom = NonlinearDomain([0.1, 0.1], [0.9, 0.9], chains=((0, 1),), gap=0.1)
    fam = FreeKnotHats(dom, 0.0, 1.0)
    grads = make_gradients(_l2_problem(), RULE, fam, mode="analytic")
    fd = make_gradients(_l2_problem(), RULE, fam, mode="fd", fd_step=1e-6)
    rng = np.random.default_rng(8)
    for _ in range(5):
        xi = dom.shrink(0.01).sample(rng)
        w = rng.standard_normal(fam.n_linear)
        assert_allclose(grads.grad_xi(w, xi), fd.grad_xi(w, xi), atol=1e-6)


def test_synthetic_amplitude_gradient():
    # K(1, xi) = scale^2 (||xi||^2 - R^2)^2 on the quartic profile; its
    # gradient is 4 scale^2 (||xi||^2 - R^2) xi
    dom = NonlinearDomain([-2.0, -2.0], [2.0, 2.0])
    fam = SyntheticAmplitude(dom, profile="sphere_quartic", radius=1.0, scale=0.7)
    problem = L2Approx(Field.constant(0.0))
    grads = make_gradients(problem, RULE, fam, mode="analytic")
    xi = np.array([0.8, -0.5])
    r2 = float(xi @ xi)
    expect = 4.0 * 0.49 * (r2 - 1.0) * xi
    assert_allclose(grads.grad_xi(np.ones(1), xi), expect, rtol=1e-12)


def test_grad_w_is_residual():
    fam = GaussianBumps(NonlinearDomain([0.1] * 2, [0.9] * 2), np.array([0.1, 0.1]))
    problem = _l2_problem()
    grads = make_gradients(problem, RULE, fam)
    xi = np.array([0.4, 0.7])
    w = np.array([0.5, -0.2])
    system = assemble(problem, RULE, fam, xi)
    assert_allclose(grads.grad_w(w, xi), system.matrix @ w - system.load, atol=1e-15)
    # quadratic energy agrees as well
    assert_allclose(grads.energy(w, xi), quadratic_energy(system, w), atol=1e-15)
