"""Update rules for both parameter blocks.

Linear block: exact solve by conjugate gradients, a single steepest-descent
sweep, or frozen coefficients.  Both non-frozen rules satisfy the decrease
inequality

    K(w+, xi) <= K(w, xi) - 0.5 * ||grad_w K(w, xi)||^2 / lambda_max(A(xi)),

whose two sides :func:`decrease_check` reports.

Nonlinear block: a Bregman proximal (mirror-descent) step over the convex
admissible domain,

    xi+ = argmin_{eta in X}  gamma * <g, eta> + D_psi(eta; xi),

realised for quadratic mirror maps as a weighted projection of the
unconstrained point ``xi - gamma * D^{-1} g``.  The first-order optimality
condition  -gamma*g - grad psi(xi+) + grad psi(xi) in N_X(xi+)  is checked
by :func:`prox_optimality_residual` as a distance to the active normal cone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.optimize

from .assembly import AssembledSystem, assemble, quadratic_energy
from .basis import IndicatorPair, NonlinearDomain
from .errors import (
    CgConvergenceError,
    ConfigError,
    NonFiniteValueError,
    NumericalError,
    SpdViolationError,
)
from .variational import L2Approx, QuadratureRule

__all__ = [
    "FullSolveCG",
    "SteepestDescent",
    "Frozen",
    "conjugate_gradient",
    "update_linear",
    "decrease_check",
    "EuclideanGeometry",
    "DiagonalGeometry",
    "bregman_div",
    "prox_step",
    "gradient_mapping",
    "prox_optimality_residual",
    "EnergyGradients",
    "make_gradients",
]


# ---------------------------------------------------------------------------
# linear updates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FullSolveCG:
    """Solve A w = load by conjugate gradients warm-started at the iterate."""

    rel_tol: float = 1e-12
    max_iters: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ConfigError("FullSolveCG.rel_tol must lie in (0, 1)")


@dataclass(frozen=True)
class SteepestDescent:
    """One exact line search along the residual direction."""


@dataclass(frozen=True)
class Frozen:
    """Keep the linear coefficients fixed (fully nonlinear approximation)."""


def conjugate_gradient(A, b, x0, rel_tol: float, max_iters: int) -> np.ndarray:
    """CG for symmetric positive semidefinite A with consistent b.

    Stops when ||b - A x|| <= rel_tol * ||b||.  A zero load short-circuits
    to the zero solution.  Raises on indefiniteness or non-convergence.
    """
    b = np.asarray(b, dtype=float)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros_like(b)
    tol = rel_tol * norm_b
    x = np.array(x0, dtype=float, copy=True)
    r = b - A @ x
    res = float(np.linalg.norm(r))
    if res <= tol:
        return x
    p = r.copy()
    rr = float(r @ r)
    for _ in range(max_iters):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SpdViolationError(
                f"CG met a non-positive curvature direction (p.A.p = {pAp!r})"
            )
        step = rr / pAp
        x += step * p
        r -= step * Ap
        rr_new = float(r @ r)
        if np.sqrt(rr_new) <= tol:
            return x
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise CgConvergenceError(
        f"CG failed to reach residual {tol!r} within {max_iters} iterations "
        f"(final residual {np.sqrt(rr)!r})"
    )


def update_linear(rule, system: AssembledSystem, w) -> np.ndarray:
    """Apply a linear update rule at the assembled parameter point."""
    w = np.asarray(w, dtype=float)
    if isinstance(rule, Frozen):
        return w.copy()
    if isinstance(rule, FullSolveCG):
        iters = rule.max_iters or (10 * system.n_linear + 50)
        return conjugate_gradient(system.matrix, system.load, w, rule.rel_tol, iters)
    if isinstance(rule, SteepestDescent):
        r = system.load - system.matrix @ w
        nr = float(np.linalg.norm(r))
        if nr <= 1e-15 * (1.0 + float(np.linalg.norm(system.load))):
            return w.copy()
        rAr = float(r @ system.matrix @ r)
        if rAr <= 0.0:
            raise SpdViolationError(
                f"steepest descent met non-positive curvature (r.A.r = {rAr!r})"
            )
        beta = (nr * nr) / rAr
        return w + beta * r
    raise ConfigError(f"unknown linear update rule {rule!r}")


def decrease_check(system: AssembledSystem, w, w_plus):
    """Achieved vs guaranteed energy drop of a linear update.

    Returns ``(achieved, guaranteed)`` where ``achieved = K(w) - K(w+)`` and
    ``guaranteed = 0.5 * ||A w - load||^2 / lambda_max(A)``.
    """
    if system.lambda_max <= 0.0:
        raise SpdViolationError(
            f"decrease bound undefined: lambda_max = {system.lambda_max!r}"
        )
    achieved = quadratic_energy(system, w) - quadratic_energy(system, w_plus)
    g = system.matrix @ np.asarray(w, dtype=float) - system.load
    guaranteed = 0.5 * float(g @ g) / system.lambda_max
    return achieved, guaranteed


# ---------------------------------------------------------------------------
# Bregman geometry and the constrained mirror step
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EuclideanGeometry:
    """psi = 0.5 ||xi||^2; the prox is the Euclidean projected gradient step."""

    mu: float = 1.0

    def weights(self, dim: int) -> np.ndarray:
        return np.ones(dim)

    def div(self, eta, xi) -> float:
        d = np.asarray(eta, dtype=float) - np.asarray(xi, dtype=float)
        return 0.5 * float(d @ d)

    def grad_psi(self, xi) -> np.ndarray:
        return np.asarray(xi, dtype=float)


@dataclass(frozen=True)
class DiagonalGeometry:
    """psi = 0.5 xi.D.xi with positive diagonal D; mu = min(D)."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.diag, dtype=float))
        object.__setattr__(self, "diag", d)
        if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
            raise ConfigError("mirror-map diagonal must be positive and finite")

    @property
    def mu(self) -> float:
        return float(np.min(self.diag))

    def weights(self, dim: int) -> np.ndarray:
        if self.diag.size != dim:
            raise ConfigError(
                f"mirror-map diagonal has size {self.diag.size}, expected {dim}"
            )
        return self.diag

    def div(self, eta, xi) -> float:
        d = np.asarray(eta, dtype=float) - np.asarray(xi, dtype=float)
        return 0.5 * float(d @ (self.weights(d.size) * d))

    def grad_psi(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return self.weights(xi.size) * xi


def bregman_div(geom, eta, xi) -> float:
    """D_psi(eta; xi) = psi(eta) - psi(xi) - <grad psi(xi), eta - xi>."""
    return geom.div(eta, xi)


def prox_step(geom, domain: NonlinearDomain, xi, grad, gamma: float) -> np.ndarray:
    """One constrained mirror-descent step.

    With a quadratic mirror map the minimiser of
    ``gamma <g, eta> + D_psi(eta; xi)`` over the domain is the D-weighted
    projection of ``xi - gamma D^{-1} g``.  Unconstrained Euclidean steps
    pass through bitwise (the projection leaves interior points untouched).
    """
    if not gamma > 0.0:
        raise ConfigError(f"step size gamma must be positive, got {gamma!r}")
    xi = np.asarray(xi, dtype=float)
    g = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(g)):
        raise NonFiniteValueError("non-finite energy gradient in prox step")
    d = geom.weights(xi.size)
    return domain.project(xi - gamma * (g / d), weights=d)


def gradient_mapping(xi, xi_plus, gamma: float) -> np.ndarray:
    """G = (xi - xi+) / gamma; equals the gradient itself for interior steps."""
    return (np.asarray(xi, dtype=float) - np.asarray(xi_plus, dtype=float)) / gamma


def _active_normals(domain: NonlinearDomain, xi_plus, atol: float):
    rows = []
    n = domain.dim
    for i in range(n):
        if xi_plus[i] <= domain.lower[i] + atol:
            e = np.zeros(n)
            e[i] = -1.0
            rows.append(e)
        if xi_plus[i] >= domain.upper[i] - atol:
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e)
    for c in domain.chains:
        for a, b in zip(c[:-1], c[1:]):
            if xi_plus[b] - xi_plus[a] <= domain.gap + atol:
                e = np.zeros(n)
                e[a], e[b] = 1.0, -1.0
                rows.append(e)
    return rows


def prox_optimality_residual(
    geom, domain: NonlinearDomain, xi, grad, gamma: float, xi_plus
) -> float:
    """Distance of -gamma*g - (grad psi(xi+) - grad psi(xi)) to the normal cone.

    Zero (up to roundoff) certifies that ``xi_plus`` satisfies the prox
    optimality condition; the distance is computed by nonnegative least
    squares over the active constraint normals at ``xi_plus``.
    """
    xi = np.asarray(xi, dtype=float)
    xi_plus = np.asarray(xi_plus, dtype=float)
    g = np.asarray(grad, dtype=float)
    v = -gamma * g - (geom.grad_psi(xi_plus) - geom.grad_psi(xi))
    scale = 1.0 + float(np.max(np.abs(domain.upper - domain.lower)))
    normals = _active_normals(domain, xi_plus, atol=1e-9 * scale)
    if not normals:
        return float(np.linalg.norm(v))
    N = np.stack(normals, axis=1)
    _, resid = scipy.optimize.nnls(N, v)
    return float(resid)


# ---------------------------------------------------------------------------
# energy gradient oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyGradients:
    """Gradients of K(w, xi) in both blocks, by one of three routes.

    * ``analytic``: differentiate under the integral using the family's
      parameter derivatives (requires them to be members of the ambient
      space).
    * ``closed_form``: hand-derived formulas; available for the indicator
      pair under the L2 energy, where the basis itself is not
      differentiable but the energy is.
    * ``fd``: central finite differences of the assembled energy.
    """

    problem: object
    rule: QuadratureRule
    family: object
    mode: str
    fd_step: float = 1e-6

    def system(self, xi) -> AssembledSystem:
        return assemble(self.problem, self.rule, self.family, xi)

    def energy(self, w, xi, system: Optional[AssembledSystem] = None) -> float:
        sys_ = system if system is not None else self.system(xi)
        return quadratic_energy(sys_, w)

    def grad_w(self, w, xi, system: Optional[AssembledSystem] = None) -> np.ndarray:
        sys_ = system if system is not None else self.system(xi)
        return sys_.matrix @ np.asarray(w, dtype=float) - sys_.load

    def grad_xi(self, w, xi) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        xi = self.family.require_param(xi)
        if self.mode == "analytic":
            return self._grad_xi_analytic(w, xi)
        if self.mode == "closed_form":
            return self._grad_xi_indicator(w, xi)
        if self.mode == "fd":
            return self._grad_xi_fd(w, xi)
        raise ConfigError(f"unknown gradient mode {self.mode!r}")

    # -- analytic: d_i K = a(u, u_i) - ell(u_i) with u_i = w . d_i phi ------

    def _grad_xi_analytic(self, w, xi):
        fam, prob = self.family, self.problem
        r = self.rule.split_at(
            tuple(fam.breakpoints(xi)) + tuple(prob.coefficient_breakpoints())
        )
        x, q = r.nodes, r.weights
        vals = fam.basis_values(xi, x)
        dvals = fam.dparam_values(xi, x)
        u = w @ vals
        du = np.einsum("l,klx->kx", w, dvals)
        if prob.needs_h1:
            dders = fam.dparam_derivs(xi, x)
            if dders is None:
                raise ConfigError(
                    "analytic parameter gradients need spatial derivatives of "
                    "the parameter derivatives; this family cannot provide "
                    "them under an H1 energy (use mode='fd')"
                )
            ders = fam.basis_derivs(xi, x)
            up = w @ ders
            dup = np.einsum("l,klx->kx", w, dders)
            Kx = prob.diffusivity.values(x)
            sx = prob.reaction.values(x)
            fx = prob.source.values(x)
            a_term = dup @ (q * Kx * up) + du @ (q * sx * u)
            ell_term = du @ (q * fx)
            if prob.bc_lo != 0.0 or prob.bc_hi != 0.0:
                lift = prob.lifting
                ell_term -= dup @ (q * Kx * lift.derivs(x)) + du @ (
                    q * sx * lift.values(x)
                )
            return a_term - ell_term
        fx = prob.target.values(x)
        return du @ (q * u) - du @ (q * fx)

    # -- closed form for the indicator pair under the L2 energy ------------

    def _grad_xi_indicator(self, w, xi):
        a, b, c = (float(t) for t in xi)
        w1, w2 = (float(t) for t in w)
        f = self.problem.target
        fa, fb, fc = (float(f.values(np.array([t]))[0]) for t in (a, b, c))
        return np.array(
            [
                -0.5 * w1 * w1 + w1 * fa,
                0.5 * (w1 * w1 - w2 * w2) + (w2 - w1) * fb,
                0.5 * w2 * w2 - w2 * fc,
            ]
        )

    # -- central differences of the assembled energy -----------------------

    def _grad_xi_fd(self, w, xi):
        h = self.fd_step
        out = np.empty(xi.size)
        for i in range(xi.size):
            e = np.zeros(xi.size)
            e[i] = h
            kp = self.energy(w, xi + e)
            km = self.energy(w, xi - e)
            out[i] = (kp - km) / (2.0 * h)
        return out


def make_gradients(problem, rule, family, mode: str = "auto", fd_step: float = 1e-6) -> EnergyGradients:
    """Build a gradient oracle, validating the requested mode for the family."""
    if mode == "auto":
        if family.supports_analytic_dparam(problem):
            mode = "analytic"
        elif isinstance(family, IndicatorPair) and isinstance(problem, L2Approx):
            mode = "closed_form"
        else:
            mode = "fd"
    if mode == "analytic" and not family.supports_analytic_dparam(problem):
        raise ConfigError(
            "analytic parameter gradients need basis derivatives living in "
            "the ambient space; this family/problem pair does not provide "
            "them (the indicator pair never does; free-knot hats only under "
            "the L2 energy)"
        )
    if mode == "closed_form" and not (
        isinstance(family, IndicatorPair) and isinstance(problem, L2Approx)
    ):
        raise ConfigError(
            "closed-form energy gradients are implemented for the indicator "
            "pair under the L2 energy only"
        )
    if mode not in ("analytic", "closed_form", "fd"):
        raise ConfigError(f"unknown gradient mode {mode!r}")
    if not fd_step > 0.0:
        raise ConfigError("fd_step must be positive")
    return EnergyGradients(problem, rule, family, mode, fd_step)
