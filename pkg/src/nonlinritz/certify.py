"""Numerical certificates for the convergence guarantees.

Every certified inequality becomes a :class:`CertificateEntry` holding both
sides, the anchor (which step or sample realised the worst margin) and a
pass/fail/skipped status.  Inequalities are checked with a combined
absolute-plus-relative tolerance (1e-8 each by default).

Minimiser knowledge enters only through explicit oracle objects: an
analytic description (point list or sphere) or a brute-force grid search
over the reduced energy.  The optimality gap K* and the Bregman distance
delta*(xi) = inf over minimisers of D_psi(xi*; xi) always come from the
oracle, never from the run being certified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .assembly import assemble, quadratic_energy
from .basis import (
    basis_difference_norm,
    basis_norms,
    dparam_difference_norm,
    dparam_norm,
    realisation,
)
from .errors import ConfigError, NumericalError
from .optimizer import RunRecord, reduced_energy
from .updates import DiagonalGeometry, EuclideanGeometry, make_gradients
from .variational import Field, bilinear, linear_form

__all__ = [
    "CertificateEntry",
    "CertificateReport",
    "GridSearchOracle",
    "AnalyticPointsOracle",
    "AnalyticSphereOracle",
    "minimiser_grid_oracle",
    "delta_star",
    "quasi_stationarity_level",
    "decrease_certificate",
    "lambda_max_certificate",
    "spd_certificate",
    "energy_monotonicity_certificate",
    "local_rate_certificate",
    "surrogate_certificate",
    "global_step_certificate",
    "global_rate_certificate",
    "cea_certificate",
    "directional_convexity_probe",
    "quantitative_dc_condition",
    "best_linear_bounds_check",
    "regularity_constants_check",
]

ATOL = 1e-8
RTOL = 1e-8


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------


@dataclass
class CertificateEntry:
    """One checked inequality: lhs <= rhs within tolerance."""

    name: str
    anchor: str
    lhs: float
    rhs: float
    margin: float
    status: str  # "pass" | "fail" | "skipped"
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "status": self.status,
            "note": self.note,
        }


def _check(name, anchor, lhs, rhs, atol=ATOL, rtol=RTOL, note="") -> CertificateEntry:
    lhs, rhs = float(lhs), float(rhs)
    tol = atol + rtol * max(abs(lhs), abs(rhs))
    ok = lhs <= rhs + tol
    return CertificateEntry(
        name=name,
        anchor=anchor,
        lhs=lhs,
        rhs=rhs,
        margin=rhs - lhs,
        status="pass" if ok else "fail",
        note=note,
    )


def _skipped(name, note) -> CertificateEntry:
    return CertificateEntry(name, "-", math.nan, math.nan, math.nan, "skipped", note)


@dataclass
class CertificateReport:
    entries: List[CertificateEntry] = field(default_factory=list)

    def extend(self, more) -> "CertificateReport":
        if isinstance(more, CertificateEntry):
            self.entries.append(more)
        else:
            self.entries.extend(more)
        return self

    @property
    def failures(self) -> List[CertificateEntry]:
        return [e for e in self.entries if e.status == "fail"]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "entries": [e.to_dict() for e in self.entries],
        }


# ---------------------------------------------------------------------------
# minimiser oracles and the Bregman distance to the optimum
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticPointsOracle:
    """Explicitly known (finite) minimiser set."""

    points: np.ndarray  # (m, d)
    K_star: float

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", p)


@dataclass(frozen=True)
class AnalyticSphereOracle:
    """Minimiser set {xi : ||xi - center|| = radius}."""

    center: np.ndarray
    radius: float
    K_star: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        if not self.radius > 0.0:
            raise ConfigError("sphere oracle needs a positive radius")


@dataclass(frozen=True)
class GridSearchOracle:
    """Brute-force minimiser evidence on a feasible grid."""

    points: np.ndarray      # (N, d) feasible grid
    values: np.ndarray      # (N,) reduced energies
    K_star: float
    minimisers: np.ndarray  # (m, d) points within slack of the minimum
    resolution: float
    slack: float


def minimiser_grid_oracle(
    problem,
    rule,
    family,
    resolution: float,
    frozen_w=None,
    reduced_cg_tol: float = 1e-12,
    max_points: int = 2_000_000,
) -> GridSearchOracle:
    """Evaluate the reduced energy on a full feasible grid.

    The minimiser set is reported as all grid points within
    ``slack = L_est * resolution`` of the grid minimum, where ``L_est`` is
    the largest energy difference quotient between adjacent feasible grid
    points.  Limited to three nonlinear parameters; use an analytic oracle
    beyond that.
    """
    domain = family.domain
    if domain.dim > 3:
        raise ConfigError(
            "grid oracle supports at most 3 nonlinear parameters; provide an "
            "analytic minimiser oracle instead"
        )
    if not resolution > 0.0:
        raise ConfigError("grid resolution must be positive")
    axes = []
    for lo, hi in zip(domain.lower, domain.upper):
        if hi > lo:
            m = int(np.ceil((hi - lo) / resolution)) + 1
            axes.append(np.linspace(lo, hi, m))
        else:
            axes.append(np.array([lo]))
    shape = tuple(a.size for a in axes)
    if int(np.prod(shape)) > max_points:
        raise ConfigError(
            f"grid of {int(np.prod(shape))} points exceeds the limit "
            f"{max_points}; coarsen the resolution or use an analytic oracle"
        )
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    feasible = np.array([domain.contains(p) for p in mesh])
    pts = mesh[feasible]
    if pts.shape[0] == 0:
        raise ConfigError("no feasible grid points; check domain and resolution")

    def value(p):
        if frozen_w is not None:
            return quadratic_energy(assemble(problem, rule, family, p), frozen_w)
        return reduced_energy(problem, rule, family, p, reduced_cg_tol)[0]

    vals_full = np.full(shape, np.nan).reshape(-1)
    vals = np.array([value(p) for p in pts])
    vals_full[feasible] = vals
    vals_full = vals_full.reshape(shape)

    # difference quotients between adjacent feasible grid points
    L_est = 0.0
    for ax in range(domain.dim):
        if shape[ax] < 2:
            continue
        h = axes[ax][1] - axes[ax][0]
        a = np.moveaxis(vals_full, ax, 0)
        diffs = np.abs(a[1:] - a[:-1]) / h
        finite = np.isfinite(diffs)
        if np.any(finite):
            L_est = max(L_est, float(np.max(diffs[finite])))

    K_star = float(np.min(vals))
    slack = L_est * resolution
    minimisers = pts[vals <= K_star + slack]
    return GridSearchOracle(
        points=pts,
        values=vals,
        K_star=K_star,
        minimisers=minimisers,
        resolution=float(resolution),
        slack=float(slack),
    )


def _sphere_project(oracle: AnalyticSphereOracle, geom, xi: np.ndarray):
    v = xi - oracle.center
    r = float(np.linalg.norm(v))
    if isinstance(geom, EuclideanGeometry):
        if r == 0.0:
            u = np.zeros_like(xi)
            u[0] = 1.0
            return oracle.center + oracle.radius * u
        return oracle.center + (oracle.radius / r) * v
    if isinstance(geom, DiagonalGeometry) and xi.size == 2:
        # weighted nearest point on a circle: dense angular scan plus a
        # golden-section refinement (deterministic)
        th = np.linspace(0.0, 2.0 * np.pi, 4097)
        cand = oracle.center[None, :] + oracle.radius * np.stack(
            [np.cos(th), np.sin(th)], axis=1
        )
        divs = np.array([geom.div(c, xi) for c in cand])
        j = int(np.argmin(divs))
        lo, hi = th[max(j - 1, 0)], th[min(j + 1, th.size - 1)]
        phi = (math.sqrt(5.0) - 1.0) / 2.0

        def f(t):
            p = oracle.center + oracle.radius * np.array([math.cos(t), math.sin(t)])
            return geom.div(p, xi)

        a, b = lo, hi
        c1, c2 = b - phi * (b - a), a + phi * (b - a)
        for _ in range(200):
            if f(c1) < f(c2):
                b, c2 = c2, c1
                c1 = b - phi * (b - a)
            else:
                a, c1 = c1, c2
                c2 = a + phi * (b - a)
        t = 0.5 * (a + b)
        return oracle.center + oracle.radius * np.array([math.cos(t), math.sin(t)])
    raise ConfigError(
        "sphere oracle projections are implemented for Euclidean geometry "
        "(any dimension) and diagonal geometry in 2-d"
    )


def delta_star(geom, oracle, xi):
    """Bregman distance to the minimiser set and the attaining point.

    Returns ``(value, xi_star)`` with
    ``value = min over represented minimisers of D_psi(xi*; xi)``.
    """
    xi = np.asarray(xi, dtype=float)
    if isinstance(oracle, AnalyticSphereOracle):
        p = _sphere_project(oracle, geom, xi)
        return float(geom.div(p, xi)), p
    if isinstance(oracle, (AnalyticPointsOracle, GridSearchOracle)):
        pts = oracle.points if isinstance(oracle, AnalyticPointsOracle) else oracle.minimisers
        vals = [geom.div(p, xi) for p in pts]
        j = int(np.argmin(vals))
        return float(vals[j]), pts[j]
    raise ConfigError(f"unknown oracle type {type(oracle).__name__}")


def quasi_stationarity_level(L: float, nu: float, gamma: float, mu: float, c: float) -> float:
    """Certified stationarity level L*(gamma*c)^nu + mu*c of a surrogate pair."""
    if not 0.0 < nu <= 1.0:
        raise ConfigError(f"nu must lie in (0, 1], got {nu!r}")
    if not gamma > 0.0:
        raise ConfigError(f"gamma must be positive, got {gamma!r}")
    if L < 0.0 or mu < 0.0 or c < 0.0:
        raise ConfigError("L, mu and c must be nonnegative")
    return float(L * (gamma * c) ** nu + mu * c)


# ---------------------------------------------------------------------------
# per-run certificates on recorded iterates
# ---------------------------------------------------------------------------


def _transitions(record: RunRecord):
    return record.iterates[:-1]


def decrease_certificate(record: RunRecord, atol: float = 1e-9) -> List[CertificateEntry]:
    """Achieved linear-update drop >= guaranteed drop at every update."""
    if record.frozen:
        return [_skipped("linear-decrease", "frozen linear rule: no linear updates")]
    worst = None
    checks = []
    if record.initial_decrease is not None:
        checks.append(("initial update", *record.initial_decrease))
    for it in _transitions(record):
        checks.append((f"step {it.k}", it.decrease_achieved, it.decrease_guaranteed))
    for anchor, ach, gua in checks:
        e = _check("linear-decrease", anchor, gua, ach, atol=atol, rtol=0.0)
        if worst is None or e.margin < worst.margin:
            worst = e
    if worst is None:
        return [_skipped("linear-decrease", "no linear updates recorded")]
    worst.note = f"checked {len(checks)} updates"
    return [worst]


def lambda_max_certificate(record: RunRecord, constants) -> List[CertificateEntry]:
    """lambda_max(A(xi_k)) <= norm_a * ||phi(xi_k)||_{U,2}^2 at every iterate."""
    worst = None
    for it in record.iterates:
        e = _check(
            "lambda-max-bound",
            f"iterate {it.k}",
            it.lambda_max,
            constants.norm_a * it.phi_u2 ** 2,
            atol=1e-9,
            rtol=0.0,
        )
        if worst is None or e.margin < worst.margin:
            worst = e
    worst.note = f"checked {len(record.iterates)} iterates"
    return [worst]


def spd_certificate(record: RunRecord, omega_min: float) -> List[CertificateEntry]:
    """omega(xi_k) >= omega_min at every visited parameter point."""
    if record.frozen:
        return [_skipped("uniform-solvability", "frozen linear rule: not asserted")]
    worst = None
    for it in record.iterates:
        e = _check("uniform-solvability", f"iterate {it.k}", omega_min, it.omega,
                   atol=0.0, rtol=0.0)
        if worst is None or e.margin < worst.margin:
            worst = e
    worst.note = f"checked {len(record.iterates)} iterates"
    return [worst]


def energy_monotonicity_certificate(
    record: RunRecord, tol: float = 1e-10
) -> List[CertificateEntry]:
    """K_{k+1} <= K_k along the recorded iterates (valid step sizes)."""
    worst = None
    its = record.iterates
    if len(its) < 2:
        return [_skipped("energy-monotone", "run recorded no steps")]
    for a, b in zip(its[:-1], its[1:]):
        scale = 1.0 + abs(a.K)
        e = _check("energy-monotone", f"step {a.k}", b.K, a.K, atol=tol * scale, rtol=0.0)
        if worst is None or e.margin < worst.margin:
            worst = e
    worst.note = f"checked {len(its) - 1} steps"
    return [worst]


def local_rate_certificate(
    record: RunRecord,
    K_star_lower: float,
    eps: float = 0.0,
    L_values=None,
    atol: float = ATOL,
    rtol: float = RTOL,
) -> List[CertificateEntry]:
    """Telescoped stationarity bound at every horizon n.

    min_{k<n} (||G_k||^2 + ||grad_w K(w_k, xi_{k+1})||^2)
        <= 2 (K_0 - K_star_lower + n*eps) / S_n,
    S_n = sum_{k<n} min(gamma_k (2 mu - gamma_k L_k), 1/lambda_max(A(xi_k))).

    ``K_star_lower`` must lower-bound the energy (oracle or config).
    ``L_values`` overrides the per-step Lipschitz surrogates when the run
    used a constant step size.
    """
    if record.frozen:
        return [_skipped("local-rate", "frozen linear rule: decrease bound unavailable")]
    trans = _transitions(record)
    if not trans:
        return [_skipped("local-rate", "run recorded no steps")]
    mu = record.mu
    K0 = record.iterates[0].K
    best_lhs = math.inf
    S = 0.0
    worst = None
    for n, it in enumerate(trans, start=1):
        L_k = it.lipschitz_L if it.lipschitz_L is not None else None
        if L_k is None and L_values is not None:
            L_k = L_values[n - 1] if np.ndim(L_values) else float(L_values)
        if L_k is None:
            return [
                _skipped(
                    "local-rate",
                    "no Lipschitz surrogate recorded; pass L_values for "
                    "constant-step runs",
                )
            ]
        A_k = it.gamma * (2.0 * mu - it.gamma * L_k)
        B_k = 1.0 / it.lambda_max
        term = min(A_k, B_k)
        if term <= 0.0:
            return [
                _skipped(
                    "local-rate",
                    f"step {it.k}: gamma {it.gamma!r} too large for surrogate "
                    f"L {L_k!r} (nonpositive descent coefficient)",
                )
            ]
        S += term
        best_lhs = min(best_lhs, it.grad_map_norm ** 2 + it.grad_w_post_norm ** 2)
        rhs = 2.0 * (K0 - K_star_lower + n * eps) / S
        e = _check("local-rate", f"horizon n={n}", best_lhs, rhs, atol=atol, rtol=rtol)
        if worst is None or e.margin < worst.margin:
            worst = e
    worst.note = f"checked horizons 1..{len(trans)}"
    return [worst]


def surrogate_certificate(
    record: RunRecord,
    problem,
    rule,
    family,
    L: float,
    nu: float,
    eps_target: float,
    cg_tol: float = 1e-12,
    atol: float = ATOL,
    rtol: float = RTOL,
) -> List[CertificateEntry]:
    """Quasi-stationarity level certified at the stopped iterate.

    Requires the parameter-stabilisation trigger: the recorded final step
    satisfied ||xi_{k+1} - xi_k|| <= eps_xi = eps_target * gamma.  A fresh
    high-accuracy solve at the stopped point supplies the linear-gradient
    part of c; the certified level L (gamma c)^nu + mu c must not exceed
    L (gamma eps)^nu + mu eps.
    """
    if record.termination != "xi_stabilised":
        return [
            _skipped(
                "surrogate-level",
                f"run terminated by {record.termination!r}, not parameter "
                "stabilisation",
            )
        ]
    last = record.iterates[-2]
    gamma = last.gamma
    xi_stop = record.iterates[-1].xi
    if record.frozen:
        grad_w_norm = 0.0  # the frozen coefficient is the exact linear optimum
    else:
        system = assemble(problem, rule, family, xi_stop)
        _, w_fin = reduced_energy(problem, rule, family, xi_stop, cg_tol)
        grad_w_norm = float(np.linalg.norm(system.matrix @ w_fin - system.load))
    c = math.hypot(last.grad_map_norm, grad_w_norm)
    level = quasi_stationarity_level(L, nu, gamma, record.mu, c)
    bound = quasi_stationarity_level(L, nu, gamma, record.mu, eps_target)
    e = _check("surrogate-level", f"stopped at step {last.k}", level, bound,
               atol=atol, rtol=rtol)
    e.note = f"c = {c!r} (grad-map {last.grad_map_norm!r}, linear residual {grad_w_norm!r})"
    return [e]


# ---------------------------------------------------------------------------
# global certificates (exact linear updates in a convexity basin)
# ---------------------------------------------------------------------------


def _deltas(record: RunRecord, geom, oracle):
    out = []
    for it in record.iterates:
        if it.delta_star is not None:
            out.append(it.delta_star)
        else:
            out.append(delta_star(geom, oracle, it.xi)[0])
    return out


def _require_exact_updates(record: RunRecord, name):
    if record.linear_rule_kind not in ("full", "frozen"):
        return _skipped(
            name,
            f"global guarantees need exact linear updates; run used "
            f"{record.linear_rule_kind!r}",
        )
    return None


def global_step_certificate(
    record: RunRecord,
    geom,
    oracle,
    L_bar: float,
    rho: Optional[float] = None,
    atol: float = ATOL,
    rtol: float = RTOL,
) -> List[CertificateEntry]:
    """Per-step descent of the reduced energy in the certified basin.

    Checks, for every step, monotone decay of the Bregman distance to the
    minimiser set and

        Kbar(xi_{k+1}) <= K* - 0.5 (mu/gamma_k - L_bar) ||xi_{k+1}-xi_k||^2
                          + (delta*_k - delta*_{k+1}) / gamma_k.

    Entries are skipped (not asserted) when the start lies outside the
    basin ``delta*(xi_0) <= rho`` or when some gamma_k L_bar > mu.
    """
    bad = _require_exact_updates(record, "global-step")
    if bad is not None:
        return [bad]
    trans = _transitions(record)
    if not trans:
        return [_skipped("global-step", "run recorded no steps")]
    deltas = _deltas(record, geom, oracle)
    if rho is not None and deltas[0] > rho + ATOL:
        return [
            _skipped(
                "global-step",
                f"start outside certified basin: delta*(xi_0) = {deltas[0]!r} "
                f"> rho = {rho!r}",
            )
        ]
    mu = record.mu
    for it in trans:
        if it.gamma * L_bar > mu * (1.0 + RTOL):
            return [
                _skipped(
                    "global-step",
                    f"step {it.k}: gamma*L_bar = {it.gamma * L_bar!r} exceeds "
                    f"mu = {mu!r}; the per-step guarantee does not apply",
                )
            ]
    worst_mono = None
    worst_desc = None
    for it in trans:
        k = it.k
        e1 = _check(
            "global-step-delta-monotone",
            f"step {k}",
            deltas[k + 1],
            deltas[k],
            atol=atol,
            rtol=rtol,
        )
        if worst_mono is None or e1.margin < worst_mono.margin:
            worst_mono = e1
        rhs = (
            oracle.K_star
            - 0.5 * (mu / it.gamma - L_bar) * it.step_norm ** 2
            + (deltas[k] - deltas[k + 1]) / it.gamma
        )
        e2 = _check(
            "global-step-descent",
            f"step {k}",
            record.iterates[k + 1].K_reduced,
            rhs,
            atol=atol,
            rtol=rtol,
        )
        if worst_desc is None or e2.margin < worst_desc.margin:
            worst_desc = e2
    worst_mono.note = f"checked {len(trans)} steps"
    worst_desc.note = f"checked {len(trans)} steps"
    return [worst_mono, worst_desc]


def global_rate_certificate(
    record: RunRecord,
    geom,
    oracle,
    rho: Optional[float] = None,
    atol: float = ATOL,
    rtol: float = RTOL,
) -> List[CertificateEntry]:
    """Kbar(xi_n) - K* <= delta*(xi_0) / sum_{k<n} gamma_k at every horizon."""
    bad = _require_exact_updates(record, "global-rate")
    if bad is not None:
        return [bad]
    trans = _transitions(record)
    if not trans:
        return [_skipped("global-rate", "run recorded no steps")]
    deltas = _deltas(record, geom, oracle)
    if rho is not None and deltas[0] > rho + ATOL:
        return [
            _skipped(
                "global-rate",
                f"start outside certified basin: delta*(xi_0) = {deltas[0]!r} "
                f"> rho = {rho!r}",
            )
        ]
    gsum = 0.0
    worst = None
    for n, it in enumerate(trans, start=1):
        gsum += it.gamma
        lhs = record.iterates[n].K_reduced - oracle.K_star
        rhs = deltas[0] / gsum
        e = _check("global-rate", f"horizon n={n}", lhs, rhs, atol=atol, rtol=rtol)
        if worst is None or e.margin < worst.margin:
            worst = e
    worst.note = f"checked horizons 1..{len(trans)}"
    return [worst]


@dataclass
class CeaResult:
    entry: CertificateEntry
    horizons: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    gap: np.ndarray  # lhs - best_in_V

    def gap_slope(self, floor: float = 1e-12) -> float:
        """Least-squares slope of log(gap) against log(n), above the floor."""
        mask = self.gap > floor
        if np.count_nonzero(mask) < 2:
            return -math.inf
        A = np.stack(
            [np.log(self.horizons[mask]), np.ones(int(np.count_nonzero(mask)))],
            axis=1,
        )
        coef, *_ = np.linalg.lstsq(A, np.log(self.gap[mask]), rcond=None)
        return float(coef[0])


def cea_certificate(
    record: RunRecord,
    problem,
    rule,
    family,
    u_star: Field,
    oracle,
    L_bar: float,
    zeta: float,
    geom,
    best_in_V: Optional[float] = None,
    cg_tol: float = 1e-12,
    atol: float = ATOL,
    rtol: float = RTOL,
) -> CeaResult:
    """Quasi-optimality of the realised approximation at every horizon.

    ||Rbar(xi_n) - u*||_a^2 <= best_in_V + 2 L_bar delta*(xi_0) / (zeta mu n)

    with ``best_in_V`` the squared best-approximation error over the whole
    nonlinear class (from the grid oracle when not supplied:
    2*(K*_grid - J(u*))).  The left side is evaluated by quadrature on the
    realised fields, independently of the recorded energies.
    """
    bad = _require_exact_updates(record, "cea")
    if bad is not None:
        return CeaResult(bad, np.array([]), np.array([]), np.array([]), np.array([]))
    trans = _transitions(record)
    if not trans:
        return CeaResult(
            _skipped("cea", "run recorded no steps"),
            np.array([]), np.array([]), np.array([]), np.array([]),
        )
    if best_in_V is None:
        j_star = 0.5 * bilinear(problem, rule, u_star, u_star) - linear_form(
            problem, rule, u_star
        )
        best_in_V = 2.0 * (oracle.K_star - j_star)
    delta0 = _deltas(record, geom, oracle)[0]
    mu = record.mu
    ns, lhss, rhss = [], [], []
    for n in range(1, len(record.iterates)):
        xi_n = record.iterates[n].xi
        if record.frozen:
            w_n = record.iterates[n].w
        else:
            _, w_n = reduced_energy(problem, rule, family, xi_n, cg_tol)
        diff = realisation(family, xi_n, w_n) - u_star
        lhs = bilinear(problem, rule, diff, diff)
        rhs = best_in_V + 2.0 * L_bar * delta0 / (zeta * mu * n)
        ns.append(n)
        lhss.append(lhs)
        rhss.append(rhs)
    ns = np.asarray(ns, dtype=float)
    lhss = np.asarray(lhss)
    rhss = np.asarray(rhss)
    worst = None
    for n, lhs, rhs in zip(ns, lhss, rhss):
        e = _check("cea", f"horizon n={int(n)}", lhs, rhs, atol=atol, rtol=rtol)
        if worst is None or e.margin < worst.margin:
            worst = e
    worst.note = f"best_in_V = {best_in_V!r}; checked horizons 1..{int(ns[-1])}"
    return CeaResult(worst, ns, lhss, rhss, lhss - best_in_V)


# ---------------------------------------------------------------------------
# convexity probes and the lemma constant checks
# ---------------------------------------------------------------------------


@dataclass
class ProbeResult:
    min_curvature: float
    convex: bool
    t_worst: float


def directional_convexity_probe(
    reduced_fn: Callable[[np.ndarray], float],
    xi,
    xi_star,
    n_probe: int = 9,
    h: float = 1e-3,
    tol: float = 1e-6,
    domain=None,
) -> ProbeResult:
    """Second differences of t -> Kbar(xi + t (xi* - xi)) on (0, 1).

    Declares the segment directionally convex when the smallest probed
    curvature exceeds ``-tol``.  Probe points keep distance ``h`` from the
    segment ends so all evaluations stay on the segment (hence inside the
    domain, by convexity).
    """
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    if domain is not None:
        domain.require(xi)
        domain.require(xi_star)
    if n_probe < 1:
        raise ConfigError("need at least one probe point")
    dxi = xi_star - xi

    def g(t):
        return reduced_fn(xi + t * dxi)

    ts = np.linspace(h, 1.0 - h, n_probe + 2)[1:-1]
    worst, t_worst = math.inf, math.nan
    for t in ts:
        curv = (g(t + h) - 2.0 * g(t) + g(t - h)) / (h * h)
        if curv < worst:
            worst, t_worst = curv, t
    return ProbeResult(float(worst), bool(worst >= -tol), float(t_worst))


def quantitative_dc_condition(
    problem,
    rule,
    family,
    xi,
    xi_star,
    kappa_max: float,
    norm_ell: float,
    alpha: float,
    L_phi: float,
    rho: float,
    inf_dist: float,
    n_samples: int = 5,
    h_rel: float = 1e-4,
    frozen_w=None,
    cg_tol: float = 1e-12,
    atol: float = ATOL,
    rtol: float = RTOL,
) -> CertificateEntry:
    """Directional-convexity sufficient condition along a segment.

    At points eta on the segment from ``xi`` to ``xi_star`` the condition

        ||d Rbar(eta)[D]||_a^2 >=
            (C L_phi rho + inf_dist) * ||d^2 Rbar(eta)[D,D]||_a,

    with D the segment direction and C = 2 kappa (1+kappa) ||ell|| / alpha,
    is evaluated with Richardson-extrapolated central differences of the
    reduced realisation (step ``h_rel`` of the segment length).
    """
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    D = xi_star - xi
    C = 2.0 * kappa_max * (1.0 + kappa_max) * norm_ell / alpha
    factor = C * L_phi * rho + inf_dist

    def real_at(eta):
        if frozen_w is not None:
            return realisation(family, eta, np.asarray(frozen_w, dtype=float))
        _, w = reduced_energy(problem, rule, family, eta, cg_tol)
        return realisation(family, eta, w)

    def a_norm(fld):
        return math.sqrt(max(bilinear(problem, rule, fld, fld), 0.0))

    ts = np.linspace(0.0, 1.0, n_samples + 2)[1:-1]
    worst = None
    for t in ts:
        eta = xi + t * D
        h = h_rel
        # first and second directional differences, Richardson extrapolated
        def d1(step):
            fp = real_at(eta + step * D)
            fm = real_at(eta - step * D)
            return (1.0 / (2.0 * step)) * (fp - fm)

        def d2(step):
            fp = real_at(eta + step * D)
            f0 = real_at(eta)
            fm = real_at(eta - step * D)
            return (1.0 / (step * step)) * ((fp - f0) - (f0 - fm))

        g1 = (4.0 / 3.0) * d1(h / 2.0) - (1.0 / 3.0) * d1(h)
        g2 = (4.0 / 3.0) * d2(h / 2.0) - (1.0 / 3.0) * d2(h)
        lhs = factor * a_norm(g2)
        rhs = a_norm(g1) ** 2
        e = _check("quantitative-dc", f"t={t:.3f}", lhs, rhs, atol=atol, rtol=rtol)
        if worst is None or e.margin < worst.margin:
            worst = e
    worst.note = f"C = {C!r}; checked {len(ts)} segment points"
    return worst


def best_linear_bounds_check(
    problem,
    rule,
    family,
    pairs: Sequence,
    norm_ell: float,
    alpha: float,
    omega_min: float,
    m_phi: float,
    kappa_max: float,
    m_dphi: Optional[float] = None,
    gradient_mode: str = "auto",
    cg_tol: float = 1e-12,
    atol: float = ATOL,
    rtol: float = RTOL,
) -> List[CertificateEntry]:
    """Stability of the exact linear solutions across parameter pairs.

    Checks, over the sampled pairs ``(xi, eta)``:

    * ``||w*(xi)|| <= norm_ell * m_phi / (alpha * omega_min)``
    * ``||w*(xi) - w*(eta)|| <= (1 + 2 kappa) norm_ell / (alpha omega_min)
      * ||phi(xi) - phi(eta)||``
    * with ``m_dphi`` given, the Hoelder bound on the reduced gradient
      differences with the two lemma constants.
    """
    bound_w = norm_ell * m_phi / (alpha * omega_min)
    coef_diff = (1.0 + 2.0 * kappa_max) * norm_ell / (alpha * omega_min)
    grads = None
    if m_dphi is not None:
        grads = make_gradients(problem, rule, family, mode=gradient_mode)
        c1 = (kappa_max + (1.0 + 2.0 * kappa_max) ** 2) * norm_ell ** 2 / (
            alpha * omega_min
        ) * m_dphi
        c2 = (1.0 + kappa_max) * norm_ell ** 2 / (alpha * omega_min) * m_phi
    worst = {}

    def keep(key, e):
        if key not in worst or e.margin < worst[key].margin:
            worst[key] = e

    for idx, (xi, eta) in enumerate(pairs):
        _, w_xi = reduced_energy(problem, rule, family, xi, cg_tol)
        _, w_eta = reduced_energy(problem, rule, family, eta, cg_tol)
        keep(
            "norm",
            _check(
                "best-linear-norm",
                f"pair {idx}",
                float(np.linalg.norm(w_xi)),
                bound_w,
                atol=atol,
                rtol=rtol,
            ),
        )
        dphi = basis_difference_norm(problem, rule, family, xi, eta)
        keep(
            "diff",
            _check(
                "best-linear-hoelder",
                f"pair {idx}",
                float(np.linalg.norm(w_xi - w_eta)),
                coef_diff * dphi,
                atol=atol,
                rtol=rtol,
            ),
        )
        if grads is not None:
            g_xi = grads.grad_xi(w_xi, xi)
            g_eta = grads.grad_xi(w_eta, eta)
            ddphi = dparam_difference_norm(problem, rule, family, xi, eta)
            keep(
                "grad",
                _check(
                    "reduced-gradient-hoelder",
                    f"pair {idx}",
                    float(np.linalg.norm(g_xi - g_eta)),
                    c1 * dphi + c2 * ddphi,
                    atol=atol,
                    rtol=rtol,
                ),
            )
    out = []
    for key in ("norm", "diff", "grad"):
        if key in worst:
            worst[key].note = f"checked {len(pairs)} pairs"
            out.append(worst[key])
    return out


def regularity_constants_check(
    problem,
    rule,
    family,
    state_pairs: Sequence,
    norm_a: float,
    norm_ell: float,
    gradient_mode: str = "auto",
    atol: float = ATOL,
    rtol: float = RTOL,
) -> List[CertificateEntry]:
    """Joint Lipschitz bounds of the energy gradients across state pairs.

    For states ``(v, xi)`` and ``(w, eta)`` with pairwise maxima
    ``M_phi``, ``M_W``, ``M_dphi``:

    * linear block:
      ``||grad_w K(v,xi) - grad_w K(w,eta)|| <= norm_a M_phi^2 ||v-w||
        + (2 norm_a M_W M_phi + norm_ell) ||phi(xi)-phi(eta)||``
    * nonlinear block:
      ``||grad_xi K(v,xi) - grad_xi K(w,eta)|| <=
        (2 norm_a M_W M_phi + norm_ell) M_dphi ||v-w||
        + norm_a M_W^2 M_dphi ||phi(xi)-phi(eta)||
        + M_W (norm_a M_W M_phi + norm_ell) ||dphi(xi)-dphi(eta)||``
    """
    grads = make_gradients(problem, rule, family, mode=gradient_mode)
    worst_w, worst_xi = None, None
    for idx, ((v, xi), (w, eta)) in enumerate(state_pairs):
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        sys_xi = assemble(problem, rule, family, xi)
        sys_eta = assemble(problem, rule, family, eta)
        m_phi = max(basis_norms(problem, rule, family, xi),
                    basis_norms(problem, rule, family, eta))
        m_w = max(float(np.linalg.norm(v)), float(np.linalg.norm(w)))
        dphi = basis_difference_norm(problem, rule, family, xi, eta)
        dv = float(np.linalg.norm(v - w))

        lhs_w = float(
            np.linalg.norm(
                (sys_xi.matrix @ v - sys_xi.load) - (sys_eta.matrix @ w - sys_eta.load)
            )
        )
        rhs_w = norm_a * m_phi ** 2 * dv + (2.0 * norm_a * m_w * m_phi + norm_ell) * dphi
        e = _check("regularity-linear-grad", f"pair {idx}", lhs_w, rhs_w,
                   atol=atol, rtol=rtol)
        if worst_w is None or e.margin < worst_w.margin:
            worst_w = e

        m_dphi = max(dparam_norm(problem, rule, family, xi),
                     dparam_norm(problem, rule, family, eta))
        ddphi = dparam_difference_norm(problem, rule, family, xi, eta)
        lhs_xi = float(np.linalg.norm(grads.grad_xi(v, xi) - grads.grad_xi(w, eta)))
        rhs_xi = (
            (2.0 * norm_a * m_w * m_phi + norm_ell) * m_dphi * dv
            + norm_a * m_w ** 2 * m_dphi * dphi
            + m_w * (norm_a * m_w * m_phi + norm_ell) * ddphi
        )
        e = _check("regularity-nonlinear-grad", f"pair {idx}", lhs_xi, rhs_xi,
                   atol=atol, rtol=rtol)
        if worst_xi is None or e.margin < worst_xi.margin:
            worst_xi = e
    worst_w.note = f"checked {len(state_pairs)} state pairs"
    worst_xi.note = f"checked {len(state_pairs)} state pairs"
    return [worst_w, worst_xi]
