import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate
from scipy import special

from ellipflow.errors import DomainError, InfiniteMassError, ValidationError
from ellipflow.fields import (
    Profile,
    field_eval,
    physical_mass,
    profile_derivative,
    profile_eval,
    profile_for,
    profile_ode_residual,
    sphere_area,
    total_mass,
)
from ellipflow.integrator import IntegrationConfig, dense_eval, integrate
from ellipflow.model import EmdenSpec, PhaseState


def spec_for(theta, xi, n=1, kappa=1.0, alpha=1.0, **kw):
    kw.setdefault("a0", tuple(1.0 + 0.3 * i for i in range(n)))
    kw.setdefault("a1", tuple(0.1 * (-1) ** i for i in range(n)))
    return EmdenSpec("A", n, theta, xi, kappa1=kappa, alpha=alpha, **kw)


def interior_points(p, count=100, seed=0):
    rng = np.random.default_rng(seed)
    s_max = p.boundary if math.isfinite(p.boundary) else 5.0 * p.length_scale
    return rng.uniform(0.0, 0.98 * s_max, count)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0, 1.5, 3.0])
@pytest.mark.parametrize("alpha", [0.7, 1.3])
def test_value_at_origin(theta, alpha):
    assert profile_eval(Profile(theta, 1.7, 0.8, alpha), 0.0) == pytest.approx(alpha, rel=1e-15)


def test_exponential_decay_length():
    p = Profile(1.0, 3.0, 0.5, 2.0)
    assert profile_eval(p, 2.0 * 0.5 / 3.0) == pytest.approx(2.0 * math.exp(-1.0), rel=1e-15)


def test_compact_support_edge():
    # c = xi (theta-1)/(2 kappa theta) = 1, so f = max(1 - s, 0)
    p = Profile(2.0, 4.0, 1.0, 1.0)
    assert p.boundary == pytest.approx(1.0)
    assert p.boundary_kind == "truncation"
    assert profile_eval(p, 0.5) == pytest.approx(0.5, rel=1e-15)
    np.testing.assert_array_equal(profile_eval(p, np.array([1.0, 1.5, 10.0])), 0.0)


def test_compact_support_matches_numeric_ode():
    p = Profile(2.5, 4.0, 1.0, 1.3)
    rate = p.xi / (2 * p.kappa * p.theta)

    sol = sp_integrate.solve_ivp(lambda s, f: -rate * f ** (2.0 - p.theta), (0.0, 0.9 * p.boundary), [p.alpha],
                                 rtol=1e-12, atol=1e-14, dense_output=True)
    s = np.linspace(0.0, 0.9 * p.boundary, 40)
    np.testing.assert_allclose(profile_eval(p, s), sol.sol(s)[0], rtol=1e-9)


@pytest.mark.parametrize("theta", [0.5, 1.0, 1.5, 2.0, 3.0])
@pytest.mark.parametrize("xi", [-1.0, 1.0, 2.5])
@pytest.mark.parametrize("kappa", [0.5, 2.0])
def test_profile_ode_residual(theta, xi, kappa):
    p = Profile(theta, xi, kappa, 1.2)
    s = interior_points(p)
    assert np.max(np.abs(profile_ode_residual(p, s))) < 1e-6


def _gamma_form(p, gamma):
    # alternative closed form: constant alpha, 2 kappa gamma in the denominator
    def value(s):
        lin = p.alpha - p.xi * (p.theta - 1.0) * s / (2.0 * p.kappa * gamma)
        return np.maximum(lin, 0.0) ** (1.0 / (p.theta - 1.0))

    return value


@pytest.mark.parametrize("theta,gamma", [(2.0, 1.4), (0.5, 1.4), (3.0, 5.0 / 3.0)])
def test_gamma_form_with_foreign_exponent_fails_the_ode(theta, gamma):
    p = Profile(theta, 1.0, 1.0, 1.0)
    s = interior_points(p) * 0.5
    assert np.max(np.abs(profile_ode_residual(p, s, value=_gamma_form(p, gamma)))) > 1e-6


@pytest.mark.parametrize("theta", [0.5, 1.5, 3.0])
def test_unscaled_constant_relabels_the_amplitude(theta):
    # with gamma = theta this form solves the ODE but f(0) = alpha^(1/(theta-1)), not alpha
    p = Profile(theta, 1.0, 1.0, 1.7)
    value = _gamma_form(p, theta)
    s = interior_points(Profile(theta, 1.0, 1.0, 1.7 ** (1.0 / (theta - 1.0)))) * 0.5
    assert np.max(np.abs(profile_ode_residual(p, s, value=value))) < 1e-6
    assert abs(value(np.array(0.0)) - p.alpha) > 0.1


def test_derivative_matches_difference():
    p = Profile(1.7, 1.3, 0.9, 1.1)
    s = np.linspace(0.0, 0.9 * p.boundary, 30)[1:]
    h = 1e-6
    fd = (profile_eval(p, s + h) - profile_eval(p, s - h)) / (2 * h)
    np.testing.assert_allclose(profile_derivative(p, s), fd, rtol=1e-7)


@given(theta=st.floats(1.05, 4.0), xi=st.floats(0.1, 5.0), kappa=st.floats(0.2, 3.0))
@settings(max_examples=40, deadline=None)
def test_truncated_profile_monotone_and_continuous(theta, xi, kappa):
    p = Profile(theta, xi, kappa, 1.0)
    s = np.linspace(0.0, 2.0 * p.boundary, 400)
    f = profile_eval(p, s)
    assert np.all(np.diff(f) <= 1e-15)
    assert np.all(f[s >= p.boundary] == 0.0)
    assert profile_eval(p, p.boundary * (1 - 1e-12)) < 1e-6 ** (1.0 / (theta - 1.0)) + 1e-3


def test_negative_s_and_singular_shell_raise():
    with pytest.raises(DomainError):
        profile_eval(Profile(1.0, 1.0, 1.0, 1.0), -0.1)
    shell = Profile(0.5, -1.0, 1.0, 1.0)
    assert shell.boundary_kind == "singular"
    with pytest.raises(DomainError):
        profile_eval(shell, shell.boundary)
    assert profile_eval(shell, 0.5 * shell.boundary) > 0.0


def test_profile_invariants():
    with pytest.raises(ValidationError):
        Profile(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValidationError):
        Profile(1.0, 1.0, 1.0, -1.0)


def test_field_at_centre():
    spec = spec_for(1.0, 1.0, n=2, alpha=1.5, drifts=(0.3, -0.7))
    state = PhaseState(0.0, np.array([1.0, 2.0]), np.array([0.5, -1.0]))
    sample = field_eval(spec, profile_for(spec), state, np.array([-0.3, 0.7]))
    assert sample.s == 0.0
    assert sample.rho == pytest.approx(1.5 / 2.0)
    np.testing.assert_array_equal(sample.u, [0.0, 0.0])


def test_field_hand_values():
    spec = spec_for(1.0, 1.0, n=2)
    state = PhaseState(0.0, np.array([1.0, 2.0]), np.array([0.5, -1.0]))
    sample = field_eval(spec, profile_for(spec), state, np.array([1.0, 2.0]))
    assert sample.s == pytest.approx(2.0)
    np.testing.assert_allclose(sample.u, [0.5, -1.0])
    assert sample.rho == pytest.approx(math.exp(-1.0) / 2.0)


def test_density_decays_along_rays():
    spec = spec_for(1.0, 2.0, n=3)
    state = spec.initial_state
    p = profile_for(spec)
    direction = np.array([0.3, -0.5, 0.8])
    rho = [field_eval(spec, p, state, r * direction).rho for r in np.linspace(0, 3, 25)]
    assert np.all(np.diff(rho) < 0)


def test_field_rejects_nonpositive_scale():
    spec = spec_for(1.0, 1.0, n=1)
    with pytest.raises(DomainError):
        field_eval(spec, profile_for(spec), PhaseState(0.0, np.array([0.0]), np.array([1.0])), np.array([0.1]))


def test_gaussian_mass_is_root_pi():
    spec = spec_for(1.0, 2.0, n=1)
    assert total_mass(spec, profile_for(spec)) == pytest.approx(math.sqrt(math.pi), rel=1e-6)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_gaussian_mass_in_n_dimensions(n):
    spec = spec_for(1.0, 3.0, n=n, kappa=0.7, alpha=1.4)
    rate = 3.0 / (2 * 0.7)
    assert total_mass(spec, profile_for(spec)) == pytest.approx(1.4 * (math.pi / rate) ** (n / 2), rel=1e-9)


def _beta_mass(p, n):
    q = 1.0 / (p.theta - 1.0)
    b = abs(p.slope) * p.alpha ** (1.0 - p.theta)
    if p.theta > 1.0:
        radial = 0.5 * b ** (-n / 2) * special.beta(n / 2, q + 1)
    else:
        radial = 0.5 * b ** (-n / 2) * special.beta(n / 2, -q - n / 2)
    return sphere_area(n) * p.alpha * radial


@pytest.mark.parametrize(
    "theta,xi,n",
    [(2.0, 1.0, 1), (2.0, 1.0, 3), (1.5, 2.0, 2), (3.0, 0.7, 2), (0.5, 1.0, 1), (0.8, 1.0, 2), (0.8, 1.0, 3)],
)
def test_mass_matches_beta_function(theta, xi, n):
    spec = spec_for(theta, xi, n=n, kappa=1.3, alpha=0.9)
    p = profile_for(spec)
    assert total_mass(spec, p) == pytest.approx(_beta_mass(p, n), rel=1e-8)


@pytest.mark.parametrize("theta,xi,n", [(1.0, -1.0, 2), (1.0, 0.0, 1), (2.0, -1.0, 2), (0.5, 1.0, 4), (0.8, 1.0, 10)])
def test_infinite_mass_cases(theta, xi, n):
    spec = spec_for(theta, xi, n=n)
    with pytest.raises(InfiniteMassError):
        total_mass(spec, profile_for(spec))


def test_vacuum_has_zero_mass():
    spec = spec_for(2.0, -1.0, n=2, alpha=0.0)
    assert total_mass(spec, profile_for(spec)) == 0.0


@pytest.mark.parametrize("theta,xi,n", [(1.0, 1.0, 2), (2.0, 1.0, 2), (2.0, 2.0, 3)])
def test_physical_mass_conserved_along_trajectory(theta, xi, n):
    spec = spec_for(theta, xi, n=n, drifts=tuple(0.2 * i for i in range(n)))
    p = profile_for(spec)
    traj = integrate(spec, IntegrationConfig(t_end=2.0))
    reference = total_mass(spec, p)
    for t in (0.0, 1.0, traj.t_final):
        m = physical_mass(spec, p, dense_eval(traj, t), epsrel=1e-9)
        assert abs(m - reference) / reference < 1e-6
