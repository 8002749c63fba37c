"""Pointwise residuals of the pressureless density-dependent Navier-Stokes system.

For the reconstructed fields ``rho = f(s)/prod a_k``, ``u_i = (a_i'/a_i)(x_i + d_i)``
this module evaluates

    mass:        rho_t + div(rho u)
    momentum_i:  rho (u_i,t + u . grad u_i) - kappa1 d_i(rho^theta div u)
                 - kappa2 div(rho^theta grad u_i)

in two independent ways: from closed-form derivatives (:func:`mass_residual`,
:func:`momentum_residual`) and from 4th-order central differences of the
fields themselves (:func:`fd_oracle_residual`). The scale-factor
acceleration used by the analytic route is ``rhs(spec, state)``, so
interpolation error of the trajectory does not enter the check.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import qmc

from .errors import SupportBoundaryError
from .fields import Profile, _raw, profile_for
from .integrator import IntegrationConfig, Trajectory, dense_eval, integrate
from .model import EmdenSpec, PhaseState, System, vector_field

__all__ = [
    "Method",
    "ResidualReport",
    "Adjudication",
    "mass_residual",
    "momentum_residual",
    "fd_oracle_residual",
    "sample_points",
    "verify_trajectory",
    "verify_run",
    "adjudicate",
    "DEFAULT_MARGIN",
    "MASS_TOL",
    "MOMENTUM_TOL",
]

DEFAULT_MARGIN = 1e-3
MASS_TOL = 1e-10
MOMENTUM_TOL = 1e-6

_FD_OFFSETS = (-2, -1, 1, 2)
_FD_WEIGHTS = (1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0)


class Method(str, enum.Enum):
    ANALYTIC = "Analytic"
    FINITE_DIFFERENCE = "FiniteDifference"


@dataclass(frozen=True)
class ResidualReport:
    """Sup-norm residuals over a sample set.

    Residuals are raw; ``normalization`` is ``sup |rho * Du/Dt|`` over the
    samples and the ``*_relative`` properties divide by it (or return the raw
    value when the flow is unaccelerated and the scale vanishes).
    """

    sample_points: list
    mass_residual_max: float
    momentum_residual_max: np.ndarray
    method: Method
    normalization: float
    system: System = None

    @property
    def mass_relative(self):
        return _relative(self.mass_residual_max, self.normalization)

    @property
    def momentum_relative(self):
        return _relative(float(np.max(self.momentum_residual_max)), self.normalization)

    def passed(self, mass_tol=MASS_TOL, momentum_tol=MOMENTUM_TOL):
        return self.mass_relative < mass_tol and self.momentum_relative < momentum_tol

    def to_dict(self):
        return {
            "system": None if self.system is None else self.system.value,
            "method": self.method.value,
            "n_samples": len(self.sample_points),
            "mass_residual_max": self.mass_residual_max,
            "momentum_residual_max": [float(v) for v in self.momentum_residual_max],
            "normalization": self.normalization,
            "mass_relative": self.mass_relative,
            "momentum_relative": self.momentum_relative,
            "mass_tol": MASS_TOL,
            "momentum_tol": MOMENTUM_TOL,
            "passed": self.passed(),
        }


def _relative(value, scale):
    return value / scale if scale > 0.0 else value


def _check_margin(p: Profile, s_lo, s_hi, margin):
    """Raise unless [s_lo, s_hi] sits strictly on one side of the profile edge."""
    edge = p.boundary
    if math.isinf(edge):
        return
    if p.boundary_kind == "singular":
        if np.any(s_hi >= edge - margin):
            raise SupportBoundaryError(
                f"sample reaches s={float(np.max(s_hi)):.6g}; singular profile requires s < {edge - margin:.6g}"
            )
        return
    inside = s_hi < edge - margin
    outside = s_lo > edge + margin
    if not np.all(inside | outside):
        raise SupportBoundaryError(f"sample within margin {margin} of the support edge s*={edge:.6g}")


def _analytic(spec: EmdenSpec, p: Profile, state: PhaseState, x, margin):
    """Signed residuals at points ``x`` of shape (M, N).

    Returns (mass (M,), momentum (M, N), inertia (M, N)).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a = state.a
    v = state.adot
    acc = vector_field(spec)(state.vector)[spec.dimension:]
    y = x + np.asarray(spec.drifts)
    s = np.sum((y / a) ** 2, axis=1)
    _check_margin(p, s, s, margin)
    f, df = _raw(p, s)
    prod = float(np.prod(a))
    rho = f / prod
    rate = v / a
    dil = float(np.sum(rate))

    # mass equation, term by term
    s_t = -2.0 * np.sum(v * y**2 / a**3, axis=1)
    rho_t = df * s_t / prod - rho * dil
    grad_rho = (df / prod)[:, None] * 2.0 * y / a**2
    div_flux = np.sum(grad_rho * rate * y, axis=1) + rho * dil
    mass = rho_t + div_flux

    # momentum: u_t + u . grad u = (a''/a - (a'/a)^2) y + (a'/a)^2 y
    accel = (acc / a - rate**2) * y + rate**2 * y
    inertia = rho[:, None] * accel
    theta = p.theta
    with np.errstate(divide="ignore", invalid="ignore"):
        grad_rho_theta = np.where(
            (rho > 0.0)[:, None], theta * (rho ** (theta - 1.0))[:, None] * grad_rho, 0.0
        )
    bulk = spec.kappa1 * dil * grad_rho_theta
    shear = spec.kappa2 * grad_rho_theta * rate
    momentum = inertia - bulk - shear
    return mass, momentum, inertia


def mass_residual(spec: EmdenSpec, p: Profile, traj: Trajectory, t, x, margin=DEFAULT_MARGIN):
    """``|rho_t + div(rho u)|`` at (t, x) from closed-form derivatives."""
    state = dense_eval(traj, t)
    mass, _, _ = _analytic(spec, p, state, x, margin)
    return float(abs(mass[0]))


def momentum_residual(spec: EmdenSpec, p: Profile, traj: Trajectory, t, x, margin=DEFAULT_MARGIN):
    """Per-component absolute momentum residual at (t, x)."""
    state = dense_eval(traj, t)
    _, momentum, _ = _analytic(spec, p, state, x, margin)
    return np.abs(momentum[0])


def _local_states(spec, state, h):
    """States at t + k h, k = -2..2, obtained by re-integrating from ``state``.

    Uses an 8th-order solver at tight tolerance so the temporal stencil sees
    the exact flow rather than the piecewise trajectory interpolant.
    """
    f = vector_field(spec)

    def fun(_t, y):
        return f(y)

    out = {0: state.vector}
    for sign in (1, -1):
        sol = solve_ivp(
            fun,
            (0.0, sign * 2.0 * h),
            state.vector,
            method="DOP853",
            t_eval=[sign * h, sign * 2.0 * h],
            rtol=1e-13,
            atol=1e-15,
        )
        if not sol.success:
            raise SupportBoundaryError(f"local re-integration failed: {sol.message}")
        out[sign] = sol.y[:, 0]
        out[2 * sign] = sol.y[:, 1]
    return out


def fd_oracle_residual(spec: EmdenSpec, p: Profile, traj: Trajectory, t, x, h, margin=DEFAULT_MARGIN):
    """Residuals ``(|mass|, |momentum| (N,))`` from 4th-order central differences.

    All derivatives (temporal, spatial and the nested viscous ones) are taken
    numerically from the evaluated fields with step ``h``.
    """
    mass, momentum, _ = _fd(spec, p, dense_eval(traj, t), np.atleast_2d(x), h, margin)
    return float(abs(mass[0])), np.abs(momentum[0])


def _fd(spec, p, state, x, h, margin):
    n = spec.dimension
    d = np.asarray(spec.drifts)
    states = _local_states(spec, state, h)

    # every stencil point lies within 4h of x in each coordinate
    for y_state in states.values():
        a = y_state[:n]
        y = x + d
        near = np.maximum(np.abs(y) - 4.0 * h, 0.0)
        far = np.abs(y) + 4.0 * h
        _check_margin(p, np.sum((near / a) ** 2, axis=1), np.sum((far / a) ** 2, axis=1), margin)

    def fields(k, pts):
        a = states[k][:n]
        v = states[k][n:]
        y = pts + d
        s = np.sum((y / a) ** 2, axis=1)
        rho = _raw(p, s)[0] / float(np.prod(a))
        return rho, (v / a) * y

    def rho_of(pts):
        return fields(0, pts)[0]

    def u_of(i):
        return lambda pts: fields(0, pts)[1][:, i]

    def ddx(g, j, pts):
        shift = np.zeros(n)
        total = 0.0
        for off, w in zip(_FD_OFFSETS, _FD_WEIGHTS):
            shift[j] = off * h
            total = total + w * g(pts + shift)
        return total / h

    def ddt(component):
        total = 0.0
        for off, w in zip(_FD_OFFSETS, _FD_WEIGHTS):
            total = total + w * component(fields(off, x))
        return total / h

    rho, u = fields(0, x)
    rho_t = ddt(lambda fu: fu[0])
    div_flux = sum(ddx(lambda pts, j=j: rho_of(pts) * u_of(j)(pts), j, x) for j in range(n))
    mass = rho_t + div_flux

    def div_u(pts):
        return sum(ddx(u_of(j), j, pts) for j in range(n))

    theta = p.theta
    momentum = np.empty((x.shape[0], n))
    inertia = np.empty((x.shape[0], n))
    for i in range(n):
        u_t = ddt(lambda fu, i=i: fu[1][:, i])
        advect = sum(u[:, j] * ddx(u_of(i), j, x) for j in range(n))
        inertia[:, i] = rho * (u_t + advect)
        bulk = 0.0
        if spec.kappa1 != 0.0:
            bulk = spec.kappa1 * ddx(lambda pts: rho_of(pts) ** theta * div_u(pts), i, x)
        shear = 0.0
        if spec.kappa2 != 0.0:
            shear = spec.kappa2 * sum(
                ddx(lambda pts, j=j: rho_of(pts) ** theta * ddx(u_of(i), j, pts), j, x) for j in range(n)
            )
        momentum[:, i] = inertia[:, i] - bulk - shear
    return mass, momentum, inertia


def sample_points(spec: EmdenSpec, p: Profile, traj: Trajectory, n_samples=100, time_slices=10,
                  margin=DEFAULT_MARGIN, seed=0, pad=0.0):
    """Quasi-random interior samples ``[(t, x), ...]``.

    Times are uniform on ``[0, 0.9 * t_final]``; at each time, scrambled
    Halton points fill the box ``-d_i +/- 2 a_i(t)``. Points closer than
    ``margin + pad`` (in s) to the profile edge, or past a singular shell,
    are skipped.
    """
    n = spec.dimension
    d = np.asarray(spec.drifts)
    slices = np.linspace(0.0, 0.9 * traj.t_final, time_slices)
    per_slice = [n_samples // time_slices + (1 if k < n_samples % time_slices else 0) for k in range(time_slices)]
    halton = qmc.Halton(d=n, scramble=True, seed=seed)
    out = []
    for t, count in zip(slices, per_slice):
        a = dense_eval(traj, t).a
        got = 0
        for _ in range(200):
            if got == count:
                break
            unit = halton.random(max(4 * count, 8))
            for z in unit:
                y = (2.0 * z - 1.0) * 2.0 * a
                s = float(np.sum((y / a) ** 2))
                try:
                    _check_margin(p, s, s, margin + pad)
                except SupportBoundaryError:
                    continue
                out.append((float(t), y - d))
                got += 1
                if got == count:
                    break
        else:
            raise SupportBoundaryError("could not place interior samples away from the profile edge")
    return out


def verify_trajectory(spec: EmdenSpec, traj: Trajectory, p: Profile | None = None, n_samples=100,
                      method=Method.ANALYTIC, seed=0, margin=DEFAULT_MARGIN, time_slices=10, h=None):
    """Residual report for an existing trajectory, profile defaulting to ``profile_for(spec)``."""
    p = profile_for(spec) if p is None else p
    method = Method(method)
    if method is Method.FINITE_DIFFERENCE and h is None:
        h = 1e-3
    pad = 0.0
    if method is Method.FINITE_DIFFERENCE and not math.isinf(p.boundary):
        # difference stencils cannot resolve the field right next to the edge
        pad = 0.1 * p.boundary
    points = sample_points(spec, p, traj, n_samples, time_slices, margin, seed, pad)
    mass_max = 0.0
    mom_max = np.zeros(spec.dimension)
    scale = 0.0
    by_time = {}
    for t, x in points:
        by_time.setdefault(t, []).append(x)
    used = []
    for t, xs in by_time.items():
        xs = np.array(xs)
        state = dense_eval(traj, t)
        if method is Method.ANALYTIC:
            mass, mom, inertia = _analytic(spec, p, state, xs, margin)
            used.extend((t, x) for x in xs)
        else:
            # stencils that straddle the support edge are dropped
            kept = []
            for x in xs:
                try:
                    kept.append(_fd(spec, p, state, x[None, :], h, margin))
                except SupportBoundaryError:
                    continue
                used.append((t, x))
            if not kept:
                continue
            mass, mom, inertia = (np.concatenate(parts) for parts in zip(*kept))
        mass_max = max(mass_max, float(np.max(np.abs(mass))))
        mom_max = np.maximum(mom_max, np.max(np.abs(mom), axis=0))
        scale = max(scale, float(np.max(np.abs(inertia))))
    return ResidualReport(used, mass_max, mom_max, method, scale, spec.system)


def verify_run(spec: EmdenSpec, cfg: IntegrationConfig, **kwargs) -> ResidualReport:
    """Integrate ``spec`` and verify the reconstructed fields."""
    return verify_trajectory(spec, integrate(spec, cfg), **kwargs)


@dataclass(frozen=True)
class Adjudication:
    """Outcome of verifying the coupled and decoupled viscous systems side by side."""

    reports: dict = field(default_factory=dict)

    @property
    def verified(self):
        return sorted(name for name, r in self.reports.items() if r.momentum_relative < MOMENTUM_TOL)

    @property
    def separation_orders(self):
        """log10 ratio between the larger and smaller relative momentum residual."""
        values = [max(r.momentum_relative, 1e-300) for r in self.reports.values()]
        return math.log10(max(values) / min(values))

    def to_dict(self):
        return {
            "reports": {name: r.to_dict() for name, r in sorted(self.reports.items())},
            "verified_systems": self.verified,
            "separation_orders": self.separation_orders,
        }


def adjudicate(spec: EmdenSpec, cfg: IntegrationConfig, **kwargs) -> Adjudication:
    """Run the same data through ``BProof`` and ``BTheorem`` and verify both.

    The profile is the kappa2 profile of ``spec`` in both cases.
    """
    if spec.system not in (System.BPROOF, System.BTHEOREM):
        raise ValueError("adjudication compares the BProof and BTheorem systems")
    reports = {}
    for system in (System.BPROOF, System.BTHEOREM):
        variant = spec.replace(system=system)
        reports[system.value] = verify_run(variant, cfg, **kwargs)
    return Adjudication(reports)
