"""Assembly of the parameter-dependent linear systems.

For fixed nonlinear parameters ``xi`` the energy restricted to the linear
coefficients is the quadratic

    K(w, xi) = 0.5 * w.A(xi).w - w.load(xi),

with A(xi)_ij = a(phi_j, phi_i), load(xi)_j = ell(phi_j) and the Gram matrix
G(xi)_ij = (phi_j, phi_i)_U.  The spectral statistics of A and G drive every
solvability and conditioning certificate downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError, SpdViolationError
from .variational import ProblemConstants, QuadratureRule

__all__ = [
    "AssembledSystem",
    "assemble",
    "quadratic_energy",
    "check_lambda_max_bound",
    "SpdCheck",
    "check_assumption_spd",
    "kappa_bound",
    "ConsistencyReport",
    "check_consistency",
]

_SYM_TOL = 1e-12


@dataclass(frozen=True)
class AssembledSystem:
    """Stiffness/Gram matrices and load vector at one parameter point."""

    xi: np.ndarray
    matrix: np.ndarray          # A(xi), symmetrised
    load: np.ndarray            # ell(phi(xi))
    gram: np.ndarray            # G(xi), symmetrised
    lambda_min: float           # min eigenvalue of A
    lambda_max: float           # max eigenvalue of A
    omega: float                # min eigenvalue of G
    phi_u2: float               # ||phi(xi)||_{U,2} = sqrt(trace G)

    @property
    def n_linear(self) -> int:
        return int(self.load.size)


def _symmetrise(M: np.ndarray, label: str) -> np.ndarray:
    scale = float(np.max(np.abs(M))) or 1.0
    skew = float(np.max(np.abs(M - M.T)))
    if skew > _SYM_TOL * scale:
        raise NumericalError(
            f"assembled {label} is asymmetric beyond tolerance: "
            f"max|M-M^T| = {skew!r} at scale {scale!r}"
        )
    return 0.5 * (M + M.T)


def assemble(problem, rule: QuadratureRule, family, xi) -> AssembledSystem:
    """Assemble A(xi), load(xi), G(xi) with panels split at all breakpoints."""
    xi = family.require_param(xi)
    if problem.needs_h1 and not family.vanishes_on_boundary:
        raise ConfigError(
            "the Dirichlet problem needs trial functions vanishing on the "
            "boundary; this family does not (use FreeKnotHats with "
            "dirichlet=True)"
        )
    r = rule.split_at(
        tuple(family.breakpoints(xi)) + tuple(problem.coefficient_breakpoints())
    )
    x, w = r.nodes, r.weights
    vals = family.basis_values(xi, x)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("basis evaluation produced non-finite values")

    if problem.needs_h1:
        ders = family.basis_derivs(xi, x)
        Kx = problem.diffusivity.values(x)
        sx = problem.reaction.values(x)
        fx = problem.source.values(x)
        A = (ders * (w * Kx)) @ ders.T + (vals * (w * sx)) @ vals.T
        G = (ders * w) @ ders.T + (vals * w) @ vals.T
        load = vals @ (w * fx)
        if problem.bc_lo != 0.0 or problem.bc_hi != 0.0:
            lift = problem.lifting
            lv, ld = lift.values(x), lift.derivs(x)
            load = load - (ders @ (w * Kx * ld) + vals @ (w * sx * lv))
    else:
        fx = problem.target.values(x)
        A = (vals * w) @ vals.T
        load = vals @ (w * fx)
        G = A.copy()  # the ambient inner product is the bilinear form itself

    A = _symmetrise(A, "stiffness matrix")
    G = _symmetrise(G, "Gram matrix")
    ev_a = scipy.linalg.eigh(A, eigvals_only=True)
    ev_g = scipy.linalg.eigh(G, eigvals_only=True)
    return AssembledSystem(
        xi=xi,
        matrix=A,
        load=load,
        gram=G,
        lambda_min=float(ev_a[0]),
        lambda_max=float(ev_a[-1]),
        omega=float(ev_g[0]),
        phi_u2=float(np.sqrt(np.trace(G))),
    )


def quadratic_energy(system: AssembledSystem, w) -> float:
    """K(w, xi) = 0.5 * w.A.w - w.load at the system's parameter point."""
    w = np.asarray(w, dtype=float)
    return float(0.5 * w @ system.matrix @ w - w @ system.load)


def check_lambda_max_bound(system: AssembledSystem, constants: ProblemConstants):
    """Both sides of lambda_max(A) <= ||a|| * ||phi(xi)||_{U,2}^2."""
    return system.lambda_max, constants.norm_a * system.phi_u2 ** 2


@dataclass(frozen=True)
class SpdCheck:
    omega: float
    omega_min: float
    margin: float
    passed: bool


def check_assumption_spd(system: AssembledSystem, omega_min: float) -> SpdCheck:
    """Is the Gram matrix uniformly positive at this point: omega >= omega_min?"""
    if not omega_min > 0.0:
        raise ConfigError("omega_min must be positive to assert solvability")
    margin = system.omega - omega_min
    return SpdCheck(system.omega, float(omega_min), float(margin), margin >= 0.0)


def kappa_bound(constants: ProblemConstants, m_phi: float, omega_min: float):
    """Condition-number bounds (norm_a/alpha) * m_phi / omega_min, both variants.

    Returns ``(kappa, kappa_squared)`` where the second uses ``m_phi**2``;
    downstream estimates take the conservative (larger) of the two.
    """
    if not (m_phi > 0.0 and omega_min > 0.0):
        raise ConfigError("kappa_bound needs positive m_phi and omega_min")
    base = constants.norm_a / constants.alpha / omega_min
    return base * m_phi, base * m_phi ** 2


@dataclass(frozen=True)
class ConsistencyReport:
    """Evidence that A w = load is solvable even when A is singular.

    ``load_kernel_residual`` is the norm of the load's component in the
    kernel of A (zero in exact arithmetic: the load lies in the range), and
    ``realisation_gap`` is the U-norm distance between the realisations of
    two distinct least-squares solutions (also zero: the kernel does not
    change the realised function).
    """

    kernel_dim: int
    load_kernel_residual: float
    realisation_gap: float
    w_primary: np.ndarray
    w_alternate: np.ndarray


def check_consistency(system: AssembledSystem, kernel_tol: float = 1e-10) -> ConsistencyReport:
    evals, Q = scipy.linalg.eigh(system.matrix)
    scale = max(float(evals[-1]), 0.0)
    if evals[0] < -kernel_tol * max(scale, 1.0):
        raise SpdViolationError(
            f"stiffness matrix has a negative eigenvalue {evals[0]!r}"
        )
    cut = kernel_tol * max(scale, 1.0)
    kernel = evals <= cut
    kdim = int(np.count_nonzero(kernel))

    coeffs = Q.T @ system.load
    inv = np.where(kernel, 0.0, 1.0 / np.where(kernel, 1.0, evals))
    w1 = Q @ (inv * coeffs)
    residual = float(np.linalg.norm(coeffs[kernel])) if kdim else 0.0
    if kdim:
        w2 = w1 + Q[:, kernel] @ np.ones(kdim)
    else:
        w2 = w1.copy()
    dw = w2 - w1
    gap_sq = float(dw @ system.gram @ dw)
    return ConsistencyReport(
        kernel_dim=kdim,
        load_kernel_residual=residual,
        realisation_gap=float(np.sqrt(max(gap_sq, 0.0))),
        w_primary=w1,
        w_alternate=w2,
    )
