"""Parameter-dependent basis families and their admissible domain.

A family maps a nonlinear parameter vector ``xi`` (living in a convex
compact set: a box intersected with ordered chains) to a tuple of basis
functions ``phi_1(xi), ..., phi_nL(xi)``.  Realisations are linear
combinations ``w . phi(xi)``.

Families
--------
GaussianBumps      movable centers, fixed widths; smooth in x and xi
FreeKnotHats       piecewise-linear hats on movable interior knots
IndicatorPair      two indicators sharing a movable breakpoint (L2 only;
                   parameter derivatives exist only distributionally)
SyntheticAmplitude single spatially-constant function whose amplitude is a
                   closed-form map of xi; realises fully nonlinear test
                   objectives when the linear coefficient is frozen at 1
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DerivativeUnavailableError,
    DomainViolationError,
    NumericalError,
)
from .variational import Field, QuadratureRule, integrate

__all__ = [
    "NonlinearDomain",
    "GaussianBumps",
    "FreeKnotHats",
    "IndicatorPair",
    "SyntheticAmplitude",
    "eval_basis",
    "eval_basis_dparam",
    "basis_norms",
    "basis_difference_norm",
    "dparam_norm",
    "dparam_difference_norm",
    "realisation",
    "estimate_sup_norm",
    "estimate_hoelder",
]


# ---------------------------------------------------------------------------
# admissible parameter domain
# ---------------------------------------------------------------------------


def _bounded_isotonic(y, w, lo, hi):
    """Weighted least-squares fit of a nondecreasing sequence within bounds.

    Solves  min sum w_i (x_i - y_i)^2  s.t.  x nondecreasing, lo <= x <= hi
    by pool-adjacent-violators with blockwise minimisers (clipped weighted
    block means).  ``lo``/``hi`` must already be the monotone envelopes
    (nondecreasing).  Plain clip-after-PAV is wrong for non-uniform bounds;
    the clipping has to participate in the pooling decisions.

    Returns ``(x, changed)`` where ``changed`` is False when the input was
    already feasible and untouched (bitwise passthrough).
    """
    n = len(y)
    # blocks as parallel lists: start index, weight sum, mean, lo, hi
    starts, wsum, mean, blo, bhi = [], [], [], [], []

    def value(j):
        return min(max(mean[j], blo[j]), bhi[j])

    for i in range(n):
        starts.append(i)
        wsum.append(w[i])
        mean.append(y[i])
        blo.append(lo[i])
        bhi.append(hi[i])
        while len(starts) >= 2 and value(len(starts) - 2) > value(len(starts) - 1):
            # merge the top two blocks
            w2, w1 = wsum.pop(), wsum[-1]
            m2 = mean.pop()
            starts.pop()
            l2 = blo.pop()
            h2 = bhi.pop()
            wsum[-1] = w1 + w2
            mean[-1] = (w1 * mean[-1] + w2 * m2) / (w1 + w2)
            blo[-1] = max(blo[-1], l2)
            bhi[-1] = min(bhi[-1], h2)

    x = np.empty(n)
    changed = len(starts) < n
    boundaries = starts + [n]
    for j in range(len(starts)):
        v = value(j)
        if v != mean[j]:
            changed = True
        x[boundaries[j]:boundaries[j + 1]] = v
    return x, changed


@dataclass(frozen=True)
class NonlinearDomain:
    """Box plus ordered chains: the admissible set for nonlinear parameters.

    Parameters
    ----------
    lower, upper : arrays of per-coordinate bounds.
    chains : tuple of index tuples; within each chain consecutive
        coordinates must increase by at least ``gap``.  Chains must be
        pairwise disjoint.
    gap : minimum increment along every chain (>= 0).
    """

    lower: np.ndarray
    upper: np.ndarray
    chains: tuple = ()
    gap: float = 0.0

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(
            self, "chains", tuple(tuple(int(i) for i in c) for c in self.chains)
        )
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError("domain bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigError("domain bounds must be finite (compact set)")
        if np.any(lo > hi):
            raise ConfigError("domain has lower > upper in some coordinate")
        if self.gap < 0.0:
            raise ConfigError("chain gap must be nonnegative")
        seen: set = set()
        for c in self.chains:
            if len(c) < 2:
                raise ConfigError("ordering chains need at least two coordinates")
            for i in c:
                if not 0 <= i < lo.size:
                    raise ConfigError(f"chain index {i} out of range")
                if i in seen:
                    raise ConfigError(f"coordinate {i} appears in two chains")
                seen.add(i)
        # nonempty check: the chain-respecting midpoint must project cleanly
        mid = 0.5 * (lo + hi)
        try:
            p = self.project(mid)
        except ConfigError:
            raise
        if not self.contains(p, tol=1e-9 * (1.0 + float(np.max(hi - lo)))):
            raise ConfigError("domain is empty: box and chain constraints conflict")

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    def violations(self, xi, tol: float = 1e-12) -> list:
        xi = np.asarray(xi, dtype=float)
        out = []
        if xi.shape != self.lower.shape:
            return [f"expected {self.dim} coordinates, got {xi.shape}"]
        for i in range(self.dim):
            if xi[i] < self.lower[i] - tol:
                out.append(f"xi[{i}]={xi[i]!r} below lower bound {self.lower[i]!r}")
            if xi[i] > self.upper[i] + tol:
                out.append(f"xi[{i}]={xi[i]!r} above upper bound {self.upper[i]!r}")
        for c in self.chains:
            for a, b in zip(c[:-1], c[1:]):
                if xi[b] - xi[a] < self.gap - tol:
                    out.append(
                        f"chain gap violated: xi[{b}]-xi[{a}]="
                        f"{xi[b] - xi[a]!r} < {self.gap!r}"
                    )
        return out

    def contains(self, xi, tol: float = 1e-12) -> bool:
        return not self.violations(xi, tol)

    def require(self, xi, tol: float = 1e-12) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        bad = self.violations(xi, tol)
        if bad:
            raise DomainViolationError(
                "parameter point outside admissible domain: " + "; ".join(bad)
            )
        return xi

    def project(self, point, weights=None) -> np.ndarray:
        """Weighted Euclidean projection onto the domain.

        Minimises ``sum_i d_i (x_i - p_i)^2`` over the domain; this is the
        Bregman prox geometry's projection when ``weights`` holds the
        diagonal of the mirror map.  Coordinates outside chains clip to the
        box; each chain reduces, after the gap shift ``z_k = x_k - k*gap``,
        to bounded weighted isotonic regression.
        """
        p = np.asarray(point, dtype=float)
        d = np.ones(self.dim) if weights is None else np.asarray(weights, dtype=float)
        if np.any(d <= 0.0):
            raise ConfigError("projection weights must be positive")
        x = np.minimum(np.maximum(p, self.lower), self.upper)
        for c in self.chains:
            idx = np.asarray(c)
            k = np.arange(idx.size, dtype=float)
            shift = k * self.gap
            y = p[idx] - shift
            lo = self.lower[idx] - shift
            hi = self.upper[idx] - shift
            # monotone envelopes make the bounds consistent with isotonicity
            lo_env = np.maximum.accumulate(lo)
            hi_env = np.minimum.accumulate(hi[::-1])[::-1]
            if np.any(lo_env > hi_env):
                raise ConfigError(
                    "domain is empty along chain "
                    f"{c}: bounds and gap {self.gap!r} are incompatible"
                )
            z, changed = _bounded_isotonic(y, d[idx], lo_env, hi_env)
            x[idx] = z + shift if changed else p[idx]
        return x

    def sample(self, rng: np.random.Generator, max_tries: int = 200) -> np.ndarray:
        """Draw a feasible point: rejection from the box, projection fallback."""
        for _ in range(max_tries):
            p = rng.uniform(self.lower, self.upper)
            if self.contains(p):
                return p
        return self.project(rng.uniform(self.lower, self.upper))

    def shrink(self, margin: float) -> "NonlinearDomain":
        """Domain whose points keep all constraints slack by ``margin``.

        Any single coordinate of a point of the shrunk domain may move by up
        to ``margin`` without leaving the original domain (used by finite
        difference probes).
        """
        return NonlinearDomain(
            self.lower + margin, self.upper - margin, self.chains,
            self.gap + 2.0 * margin,
        )


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------


class _FamilyBase:
    """Shared validation; concrete families fill in the evaluations."""

    #: Hoelder exponent of xi -> phi(xi) in the U-norm, declared per family
    smoothness_nu: float = 1.0
    vanishes_on_boundary: bool = False

    def require_param(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.n_nonlinear,):
            raise DomainViolationError(
                f"expected {self.n_nonlinear} nonlinear parameters, got shape {xi.shape}"
            )
        return self.domain.require(xi)

    def breakpoints(self, xi) -> tuple:
        return ()

    def basis_derivs(self, xi, x):
        return None

    def dparam_derivs(self, xi, x):
        return None

    def supports_analytic_dparam(self, problem) -> bool:
        return False


@dataclass(frozen=True)
class GaussianBumps(_FamilyBase):
    """phi_k(xi, x) = exp(-(x - xi_k)^2 / (2 widths_k^2)); one bump per center."""

    domain: NonlinearDomain
    widths: np.ndarray

    smoothness_nu = 1.0
    vanishes_on_boundary = False

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.widths, dtype=float))
        object.__setattr__(self, "widths", w)
        if w.size != self.domain.dim:
            raise ConfigError("one width per center is required")
        if np.any(w <= 0.0):
            raise ConfigError("bump widths must be positive")

    @property
    def n_linear(self) -> int:
        return int(self.widths.size)

    @property
    def n_nonlinear(self) -> int:
        return int(self.widths.size)

    def _z(self, xi, x):
        return (np.asarray(x)[None, :] - xi[:, None]) / self.widths[:, None] ** 2

    def basis_values(self, xi, x):
        x = np.asarray(x, dtype=float)
        d = x[None, :] - xi[:, None]
        return np.exp(-0.5 * (d / self.widths[:, None]) ** 2)

    def basis_derivs(self, xi, x):
        return -self._z(xi, x) * self.basis_values(xi, x)

    def dparam_values(self, xi, x):
        n = self.n_linear
        out = np.zeros((n, n, np.size(x)))
        diag = self._z(xi, x) * self.basis_values(xi, x)
        out[np.arange(n), np.arange(n), :] = diag
        return out

    def dparam_derivs(self, xi, x):
        n = self.n_linear
        x = np.asarray(x, dtype=float)
        d = x[None, :] - xi[:, None]
        s2 = self.widths[:, None] ** 2
        vals = self.basis_values(xi, x)
        out = np.zeros((n, n, x.size))
        out[np.arange(n), np.arange(n), :] = vals * (1.0 / s2 - d ** 2 / s2 ** 2)
        return out

    def supports_analytic_dparam(self, problem) -> bool:
        return True


@dataclass(frozen=True)
class FreeKnotHats(_FamilyBase):
    """Piecewise-linear hats on the grid (x_lo, xi_1, ..., xi_m, x_hi).

    ``dirichlet=True`` keeps only the interior hats (they vanish on the
    boundary); otherwise all ``m + 2`` hats are used.  Zero-width cells
    (coincident knots) evaluate to the zero function on that cell, so
    degenerate parameters stay well defined in L2.
    """

    domain: NonlinearDomain
    x_lo: float
    x_hi: float
    dirichlet: bool = False

    smoothness_nu = 1.0

    def __post_init__(self):
        if not self.x_hi > self.x_lo:
            raise ConfigError("empty interval for FreeKnotHats")
        if np.any(self.domain.lower < self.x_lo) or np.any(self.domain.upper > self.x_hi):
            raise ConfigError("knot domain must lie inside the interval")

    @property
    def vanishes_on_boundary(self) -> bool:  # type: ignore[override]
        return self.dirichlet

    @property
    def n_nonlinear(self) -> int:
        return self.domain.dim

    @property
    def n_linear(self) -> int:
        return self.n_nonlinear if self.dirichlet else self.n_nonlinear + 2

    def _grid(self, xi) -> np.ndarray:
        return np.concatenate(([self.x_lo], xi, [self.x_hi]))

    def breakpoints(self, xi) -> tuple:
        return tuple(self._grid(np.asarray(xi, dtype=float)))

    def _hat_range(self):
        m = self.n_nonlinear
        return range(1, m + 1) if self.dirichlet else range(0, m + 2)

    def basis_values(self, xi, x):
        x = np.asarray(x, dtype=float)
        t = self._grid(xi)
        rows = []
        for j in self._hat_range():
            v = np.zeros_like(x)
            if j > 0 and t[j] > t[j - 1]:
                m = (x >= t[j - 1]) & (x <= t[j])
                v[m] = (x[m] - t[j - 1]) / (t[j] - t[j - 1])
            if j < t.size - 1 and t[j + 1] > t[j]:
                m = ((x >= t[j]) if j == 0 else (x > t[j])) & (x <= t[j + 1])
                v[m] = (t[j + 1] - x[m]) / (t[j + 1] - t[j])
            rows.append(v)
        return np.stack(rows)

    def basis_derivs(self, xi, x):
        x = np.asarray(x, dtype=float)
        t = self._grid(xi)
        rows = []
        for j in self._hat_range():
            v = np.zeros_like(x)
            if j > 0 and t[j] > t[j - 1]:
                m = (x >= t[j - 1]) & (x <= t[j])
                v[m] = 1.0 / (t[j] - t[j - 1])
            if j < t.size - 1 and t[j + 1] > t[j]:
                m = ((x >= t[j]) if j == 0 else (x > t[j])) & (x <= t[j + 1])
                v[m] = -1.0 / (t[j + 1] - t[j])
            rows.append(v)
        return np.stack(rows)

    def dparam_values(self, xi, x):
        # d hat_j / d t_k on the up-piece (a,b): d/da = (x-b)/(b-a)^2,
        # d/db = -(x-a)/(b-a)^2; on the down-piece (b,c): d/db = (c-x)/(c-b)^2,
        # d/dc = (x-b)/(c-b)^2.  Interior knot i sits at grid position i+1.
        x = np.asarray(x, dtype=float)
        t = self._grid(xi)
        hats = list(self._hat_range())
        out = np.zeros((self.n_nonlinear, len(hats), x.size))
        for i in range(self.n_nonlinear):
            k = i + 1  # grid index of this knot
            for col, j in enumerate(hats):
                a, b = t[j - 1] if j > 0 else None, t[j]
                c = t[j + 1] if j < t.size - 1 else None
                g = np.zeros_like(x)
                if a is not None and b > a:
                    up = (x >= a) & (x <= b)
                    if k == j - 1:
                        g[up] += (x[up] - b) / (b - a) ** 2
                    elif k == j:
                        g[up] += -(x[up] - a) / (b - a) ** 2
                if c is not None and c > b:
                    dn = (x > b) & (x <= c)
                    if k == j:
                        g[dn] += (c - x[dn]) / (c - b) ** 2
                    elif k == j + 1:
                        g[dn] += (x[dn] - b) / (c - b) ** 2
                out[i, col] = g
        return out

    def supports_analytic_dparam(self, problem) -> bool:
        # the knot-derivatives of a hat jump at the knot: members of L2 but
        # not of H1, so the analytic path is only valid for L2 energies
        return not problem.needs_h1


@dataclass(frozen=True)
class IndicatorPair(_FamilyBase):
    """phi(xi) = (chi_(a,b), chi_(b,c)) for xi = (a, b, c).

    The map xi -> phi(xi) is 1/2-Hoelder in L2 and nowhere differentiable
    into L2 (the formal derivatives are Dirac masses), yet the assembled
    energy is smooth in xi: use the closed-form energy gradient.
    """

    domain: NonlinearDomain

    smoothness_nu = 0.5
    n_linear = 2
    n_nonlinear = 3

    def __post_init__(self):
        if self.domain.dim != 3:
            raise ConfigError("IndicatorPair needs a 3-coordinate domain (a, b, c)")

    def breakpoints(self, xi) -> tuple:
        return tuple(np.asarray(xi, dtype=float))

    def basis_values(self, xi, x):
        x = np.asarray(x, dtype=float)
        a, b, c = xi
        return np.stack(
            [
                np.where((x > a) & (x < b), 1.0, 0.0),
                np.where((x > b) & (x < c), 1.0, 0.0),
            ]
        )

    def dparam_values(self, xi, x):
        raise DerivativeUnavailableError(
            "indicator basis has no parameter derivative in L2 (boundary "
            "movement is a Dirac mass); use the closed-form energy gradient"
        )


_PROFILES = ("sphere_quartic", "norm")


@dataclass(frozen=True)
class SyntheticAmplitude(_FamilyBase):
    """Single basis function, constant in space: phi_1(xi, x) = g(xi).

    Profiles (with the linear coefficient frozen at 1 and zero target):

    * ``sphere_quartic``: g = sqrt(2)*scale*(||xi||^2 - radius^2), so the
      energy is scale^2 * (||xi||^2 - radius^2)^2 — minimised on a sphere.
    * ``norm``: g = scale*||xi||, so the energy is scale^2 * ||xi||^2 / 2.
    """

    domain: NonlinearDomain
    profile: str = "sphere_quartic"
    radius: float = 1.0
    scale: float = 1.0

    smoothness_nu = 1.0
    n_linear = 1

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ConfigError(
                f"unknown synthetic profile {self.profile!r}; options: {_PROFILES}"
            )

    @property
    def n_nonlinear(self) -> int:
        return self.domain.dim

    def _g(self, xi):
        if self.profile == "sphere_quartic":
            return np.sqrt(2.0) * self.scale * (float(xi @ xi) - self.radius ** 2)
        r = float(np.linalg.norm(xi))
        if r == 0.0:
            raise NumericalError("norm profile is not differentiable at xi = 0")
        return self.scale * r

    def _dg(self, xi):
        if self.profile == "sphere_quartic":
            return 2.0 * np.sqrt(2.0) * self.scale * xi
        r = float(np.linalg.norm(xi))
        if r == 0.0:
            raise NumericalError("norm profile is not differentiable at xi = 0")
        return self.scale * xi / r

    def basis_values(self, xi, x):
        return np.full((1, np.size(x)), self._g(xi))

    def basis_derivs(self, xi, x):
        return np.zeros((1, np.size(x)))

    def dparam_values(self, xi, x):
        return np.tile(self._dg(xi)[:, None, None], (1, 1, np.size(x)))

    def dparam_derivs(self, xi, x):
        return np.zeros((self.n_nonlinear, 1, np.size(x)))

    def supports_analytic_dparam(self, problem) -> bool:
        return True


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def eval_basis(family, xi, x):
    """Values (and spatial derivatives, if the family has them) at points x.

    Returns ``(values, derivs)`` with shapes ``(n_linear, len(x))``; derivs
    is None for L2-only families.  Raises a domain violation listing the
    offended constraints when ``xi`` is inadmissible.
    """
    xi = family.require_param(xi)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return family.basis_values(xi, x), family.basis_derivs(xi, x)


def eval_basis_dparam(family, xi, x):
    """Parameter derivatives d phi_k / d xi_i at points x.

    Returns ``(dvalues, dderivs)`` with shapes ``(n_nonlinear, n_linear,
    len(x))``; ``dderivs`` is None when the family cannot provide spatial
    derivatives of the parameter derivatives.
    """
    xi = family.require_param(xi)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return family.dparam_values(xi, x), family.dparam_derivs(xi, x)


def realisation(family, xi, w) -> Field:
    """The function w . phi(xi) as a Field."""
    xi = family.require_param(xi)
    w = np.asarray(w, dtype=float)
    if w.shape != (family.n_linear,):
        raise ConfigError(
            f"expected {family.n_linear} linear coefficients, got shape {w.shape}"
        )

    def value_fn(x):
        return w @ family.basis_values(xi, np.atleast_1d(x))

    deriv_fn = None
    if family.basis_derivs(xi, np.zeros(1)) is not None:
        def deriv_fn(x):
            return w @ family.basis_derivs(xi, np.atleast_1d(x))

    return Field(value_fn, deriv_fn, family.breakpoints(xi))


def _u_weights(problem, rule: QuadratureRule, family, xi):
    """Quadrature data for U-norms of basis-like matrices at xi."""
    r = rule.split_at(family.breakpoints(xi) + problem.coefficient_breakpoints())
    return r


def _sq_u_norms(problem, rule, family, xi, mat_values, mat_derivs):
    """Sum over the last axis of the squared U-norm of each entry."""
    w = rule.weights
    out = np.tensordot(mat_values ** 2, w, axes=(-1, 0))
    if problem.needs_h1:
        if mat_derivs is None:
            raise DerivativeUnavailableError(
                "H1 norms requested but spatial derivatives are unavailable"
            )
        out = out + np.tensordot(mat_derivs ** 2, w, axes=(-1, 0))
    return out


def basis_norms(problem, rule: QuadratureRule, family, xi) -> float:
    """||phi(xi)||_{U,2} = sqrt(sum_k ||phi_k(xi)||_U^2)."""
    xi = family.require_param(xi)
    r = _u_weights(problem, rule, family, xi)
    vals = family.basis_values(xi, r.nodes)
    ders = family.basis_derivs(xi, r.nodes) if problem.needs_h1 else None
    return float(np.sqrt(np.sum(_sq_u_norms(problem, r, family, xi, vals, ders))))


def basis_difference_norm(problem, rule: QuadratureRule, family, xi, eta) -> float:
    """||phi(xi) - phi(eta)||_{U,2} on a common refined rule."""
    xi = family.require_param(xi)
    eta = family.require_param(eta)
    r = rule.split_at(
        tuple(family.breakpoints(xi))
        + tuple(family.breakpoints(eta))
        + tuple(problem.coefficient_breakpoints())
    )
    dv = family.basis_values(xi, r.nodes) - family.basis_values(eta, r.nodes)
    dd = None
    if problem.needs_h1:
        dd = family.basis_derivs(xi, r.nodes) - family.basis_derivs(eta, r.nodes)
    return float(np.sqrt(np.sum(_sq_u_norms(problem, r, family, xi, dv, dd))))


def dparam_norm(problem, rule: QuadratureRule, family, xi) -> float:
    """||grad_xi phi(xi)||_{U,2,2}: root sum of squared U-norms of all entries."""
    xi = family.require_param(xi)
    r = _u_weights(problem, rule, family, xi)
    dv = family.dparam_values(xi, r.nodes)
    dd = family.dparam_derivs(xi, r.nodes) if problem.needs_h1 else None
    return float(np.sqrt(np.sum(_sq_u_norms(problem, r, family, xi, dv, dd))))


def dparam_difference_norm(problem, rule: QuadratureRule, family, xi, eta) -> float:
    """||grad_xi phi(xi) - grad_xi phi(eta)||_{U,2,2} on a common rule."""
    xi = family.require_param(xi)
    eta = family.require_param(eta)
    r = rule.split_at(
        tuple(family.breakpoints(xi))
        + tuple(family.breakpoints(eta))
        + tuple(problem.coefficient_breakpoints())
    )
    dv = family.dparam_values(xi, r.nodes) - family.dparam_values(eta, r.nodes)
    dd = None
    if problem.needs_h1:
        dd = family.dparam_derivs(xi, r.nodes) - family.dparam_derivs(eta, r.nodes)
    return float(np.sqrt(np.sum(_sq_u_norms(problem, r, family, xi, dv, dd))))


def _corner_points(domain: NonlinearDomain, cap: int = 64):
    n = domain.dim
    if 2 ** n > cap:
        return []
    corners = []
    for mask in range(2 ** n):
        p = np.where(
            [(mask >> i) & 1 for i in range(n)], domain.upper, domain.lower
        ).astype(float)
        corners.append(domain.project(p))
    return corners


def estimate_sup_norm(problem, rule, family, n_samples: int, seed: int) -> float:
    """Sampled lower estimate of sup_xi ||phi(xi)||_{U,2}.

    Uses ``n_samples`` feasible draws plus the (projected) box corners; a
    sampling-based quantity, so a lower bound witness rather than a proof.
    """
    if n_samples < 1:
        raise ConfigError("estimate_sup_norm needs at least one sample")
    rng = np.random.default_rng(seed)
    pts = [family.domain.sample(rng) for _ in range(n_samples)]
    pts.extend(_corner_points(family.domain))
    return max(basis_norms(problem, rule, family, p) for p in pts)


def estimate_hoelder(problem, rule, family, n_pairs: int, seed: int):
    """Fit ||phi(xi)-phi(eta)|| ~ L * ||xi-eta||^nu on sampled pairs.

    Pairs are a feasible base point plus a random direction at log-spaced
    radii between 1e-4 and 1e-1 of the domain extent, so the fitted slope
    reflects the local smoothness that step-size selection relies on (at
    domain scale, smooth families saturate and would masquerade as rough).
    Log-log least squares; the slope is clipped into (0, 1] and the
    intercept gets a 1.5x safety factor.  Returns ``(nu_hat, L_hat)``.
    """
    if n_pairs < 10:
        raise ConfigError("estimate_hoelder needs at least 10 pairs")
    rng = np.random.default_rng(seed)
    span = float(np.max(family.domain.upper - family.domain.lower))
    if not span > 0.0:
        raise ConfigError("degenerate (single point) domain")
    ds, ys = [], []
    tries = 0
    while len(ds) < n_pairs and tries < 50 * n_pairs:
        tries += 1
        xi = family.domain.sample(rng)
        u = rng.standard_normal(family.domain.dim)
        nrm = float(np.linalg.norm(u))
        if nrm <= 0.0:
            continue
        r = span * 10.0 ** rng.uniform(-4.0, -1.0)
        eta = family.domain.project(xi + (r / nrm) * u)
        d = float(np.linalg.norm(eta - xi))
        if d <= 1e-12 * span:
            continue
        y = basis_difference_norm(problem, rule, family, xi, eta)
        if y <= 0.0:
            continue
        ds.append(d)
        ys.append(y)
    if len(ds) < n_pairs:
        raise NumericalError("could not sample enough informative pairs")
    A = np.stack([np.log(ds), np.ones(len(ds))], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(ys), rcond=None)
    nu_hat = float(min(max(coef[0], 1e-6), 1.0))
    L_hat = float(np.exp(coef[1]) * 1.5)
    return nu_hat, L_hat
