"""Self-similar density profile and the reconstructed fields rho, u.

The profile f solves the first-order ODE

    xi / (2 kappa theta) + f(s)^(theta-2) f'(s) = 0,    f(0) = alpha,

in the similarity variable ``s = sum_k (x_k + d_k)^2 / a_k(t)^2``. Its closed
form is an exponential for theta = 1 and a power of the linear function
``A(s) = alpha^(theta-1) - c s``, ``c = xi (theta-1) / (2 kappa theta)``,
otherwise. When ``c > 0`` the function A vanishes at a finite ``s*``: for
theta > 1 the profile is truncated to zero beyond it (compact support), for
theta < 1 it becomes singular there and is undefined past it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as sp_integrate

from .errors import DomainError, InfiniteMassError, ValidationError
from .model import EmdenSpec, PhaseState

__all__ = [
    "Profile",
    "FieldSample",
    "profile_for",
    "profile_eval",
    "profile_derivative",
    "profile_ode_residual",
    "field_eval",
    "total_mass",
    "physical_mass",
    "sphere_area",
]


@dataclass(frozen=True)
class Profile:
    theta: float
    xi: float
    kappa: float
    alpha: float

    def __post_init__(self):
        for name in ("theta", "xi", "kappa", "alpha"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.kappa > 0.0:
            raise ValidationError("profile requires kappa > 0")
        if not self.alpha >= 0.0:
            raise ValidationError("profile requires alpha >= 0")
        if not self.theta > 0.0:
            raise ValidationError("profile requires theta > 0")

    @property
    def slope(self):
        """The coefficient c in A(s) = alpha^(theta-1) - c*s (0 when theta = 1)."""
        if self.theta == 1.0:
            return 0.0
        return self.xi * (self.theta - 1.0) / (2.0 * self.kappa * self.theta)

    @property
    def boundary(self):
        """Position s* where A(s) vanishes, or ``inf`` when it never does."""
        c = self.slope
        if self.alpha == 0.0 or self.theta == 1.0 or c <= 0.0:
            return math.inf
        return self.alpha ** (self.theta - 1.0) / c

    @property
    def boundary_kind(self):
        """``None``, ``"truncation"`` (theta > 1) or ``"singular"`` (theta < 1)."""
        if math.isinf(self.boundary):
            return None
        return "truncation" if self.theta > 1.0 else "singular"

    @property
    def length_scale(self):
        """Characteristic width in s of the profile near s = 0."""
        if self.xi == 0.0:
            return 1.0
        return 2.0 * self.kappa * self.theta / abs(self.xi) * max(self.alpha, 1e-300) ** (self.theta - 1.0)


@dataclass(frozen=True)
class FieldSample:
    rho: float
    u: np.ndarray
    s: float


def profile_for(spec: EmdenSpec) -> Profile:
    """Profile matching ``spec`` (uses the active viscosity constant)."""
    return Profile(theta=spec.theta, xi=spec.xi, kappa=spec.kappa, alpha=spec.alpha)


def _raw(p: Profile, s):
    """Closed form without domain checks; returns (f, f') for array ``s``.

    Valid for negative s as long as A(s) > 0, which the FD stencils rely on.
    """
    s = np.asarray(s, dtype=float)
    if p.alpha == 0.0:
        zero = np.zeros_like(s)
        return zero, zero
    if p.theta == 1.0:
        rate = p.xi / (2.0 * p.kappa)
        f = p.alpha * np.exp(-rate * s)
        return f, -rate * f
    q = 1.0 / (p.theta - 1.0)
    lin = p.alpha ** (p.theta - 1.0) - p.slope * s
    pos = lin > 0.0
    safe = np.where(pos, lin, 1.0)
    f = np.where(pos, safe**q, 0.0)
    df = np.where(pos, -(p.xi / (2.0 * p.kappa * p.theta)) * safe ** (q - 1.0), 0.0)
    if p.theta < 1.0:
        f = np.where(pos, f, np.nan)
        df = np.where(pos, df, np.nan)
    return f, df


def _check_s(p: Profile, s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise DomainError("similarity variable must satisfy s >= 0")
    if p.boundary_kind == "singular" and np.any(s >= p.boundary):
        raise DomainError(f"profile is singular at s*={p.boundary:.6g} and undefined beyond")
    return s


def profile_eval(p: Profile, s):
    """Value f(s) >= 0; accepts a scalar or an array."""
    s = _check_s(p, s)
    f, _ = _raw(p, s)
    return float(f) if f.ndim == 0 else f


def profile_derivative(p: Profile, s):
    """Closed-form derivative f'(s) (zero beyond a truncation point)."""
    s = _check_s(p, s)
    _, df = _raw(p, s)
    return float(df) if df.ndim == 0 else df


def profile_ode_residual(p: Profile, s, rel_step=2e-3, value=None):
    """``xi/(2 kappa theta) + f^(theta-2) f'`` with f' from a 4th-order central difference.

    The step is ``rel_step`` times the local length ``|A/A'|`` (or the decay
    length for theta = 1). ``value`` substitutes another closed form
    ``value(s)`` for :func:`profile_eval`, which is how alternative profile
    formulas are screened against the ODE.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if value is None:
        _check_s(p, s)

        def value(z):
            return _raw(p, z)[0]

    if p.theta == 1.0 or p.slope == 0.0:
        length = np.full_like(s, p.length_scale)
    else:
        lin = p.alpha ** (p.theta - 1.0) - p.slope * s
        length = np.abs(lin / p.slope)
    h = rel_step * length
    f = value(s)
    df = (-value(s + 2 * h) + 8 * value(s + h) - 8 * value(s - h) + value(s - 2 * h)) / (12 * h)
    out = p.xi / (2.0 * p.kappa * p.theta) + f ** (p.theta - 2.0) * df
    return out


def _similarity(spec, a, x):
    y = np.asarray(x, dtype=float) + np.asarray(spec.drifts)
    return y, np.sum((y / a) ** 2, axis=-1)


def field_eval(spec: EmdenSpec, p: Profile, state: PhaseState, x) -> FieldSample:
    """Density and velocity at position ``x`` for the scale factors in ``state``."""
    a = np.asarray(state.a, dtype=float)
    if not np.all(a > 0.0):
        raise DomainError("scale factors must satisfy a_i > 0")
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dimension,):
        raise DomainError(f"x must have shape ({spec.dimension},)")
    y, s = _similarity(spec, a, x)
    rho = profile_eval(p, float(s)) / float(np.prod(a))
    u = state.adot / a * y
    return FieldSample(rho=rho, u=u, s=float(s))


def sphere_area(n):
    """Surface area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _radial_integrand(p, n):
    def g(r):
        return float(_raw(p, r * r)[0]) * r ** (n - 1)

    return g


def total_mass(spec: EmdenSpec, p: Profile, state: PhaseState | None = None, epsrel=1e-11):
    """Total mass ``int rho dx`` over R^N.

    After the change of variables ``y_k = (x_k + d_k)/a_k`` the mass reduces
    to ``|S^{N-1}| int_0^inf f(r^2) r^(N-1) dr``, which does not depend on the
    state (conservation of mass); ``state`` is only validated.

    Raises :class:`InfiniteMassError` when f is not integrable.
    """
    if state is not None and not np.all(np.asarray(state.a) > 0.0):
        raise DomainError("scale factors must satisfy a_i > 0")
    n = spec.dimension
    if p.alpha == 0.0:
        return 0.0
    if p.xi <= 0.0:
        raise InfiniteMassError("mass is infinite for xi <= 0")
    g = _radial_integrand(p, n)
    opts = dict(epsabs=0.0, epsrel=epsrel, limit=400)
    if p.theta == 1.0:
        rate = p.xi / (2.0 * p.kappa)
        width = 1.0 / math.sqrt(rate)
        # e^{-50} r^{N-1} tail is far below 1e-12 of the integral
        edge = width * math.sqrt(50.0 + 2.0 * n)
        knots = np.linspace(0.0, edge, 5)
        value = sum(sp_integrate.quad(g, lo, hi, **opts)[0] for lo, hi in zip(knots[:-1], knots[1:]))
    elif p.theta > 1.0:
        value = sp_integrate.quad(g, 0.0, math.sqrt(p.boundary), **opts)[0]
    else:
        # integrand ~ r^(N - 1 - 2/(1-theta)); integrable iff N (1-theta) < 2
        if n * (1.0 - p.theta) >= 2.0 * (1.0 - 1e-12):
            raise InfiniteMassError(f"profile tail is not integrable for N={n}, theta={p.theta}")
        knee = math.sqrt(p.length_scale)
        value = sp_integrate.quad(g, 0.0, knee, **opts)[0] + sp_integrate.quad(g, knee, math.inf, **opts)[0]
    return sphere_area(n) * value


def physical_mass(spec: EmdenSpec, p: Profile, state: PhaseState, epsrel=1e-10):
    """Mass by direct quadrature of rho(t, x) in physical coordinates (N <= 3).

    Independent of the similarity substitution used by :func:`total_mass`;
    comparing the two at different times checks mass conservation.
    """
    n = spec.dimension
    if n > 3:
        raise ValueError("physical_mass supports N <= 3")
    a = np.asarray(state.a, dtype=float)
    if not np.all(a > 0.0):
        raise DomainError("scale factors must satisfy a_i > 0")
    if p.alpha == 0.0:
        return 0.0
    if p.xi <= 0.0:
        raise InfiniteMassError("mass is infinite for xi <= 0")
    d = np.asarray(spec.drifts)
    prod = float(np.prod(a))
    s_max = p.boundary

    def density(*x):
        y = np.asarray(x) + d
        s = float(np.sum((y / a) ** 2))
        return float(_raw(p, s)[0]) / prod

    if math.isinf(s_max):
        ranges = [(-math.inf, math.inf)] * n
    else:
        ranges = [_ellipsoid_range(i, n, a, d, s_max) for i in range(n)]
    result, _ = sp_integrate.nquad(density, ranges, opts={"epsabs": 0.0, "epsrel": epsrel, "limit": 200})
    return result


def _ellipsoid_range(i, n, a, d, s_max):
    # variable i is integrated inside variables i+1..n-1
    def rng(*outer):
        used = sum(((outer[k] + d[i + 1 + k]) / a[i + 1 + k]) ** 2 for k in range(n - 1 - i))
        rem = max(s_max - used, 0.0)
        half = a[i] * math.sqrt(rem)
        return (-d[i] - half, -d[i] + half)

    return rng
