import numpy as np
import pytest

from ellipflow.errors import SupportBoundaryError
from ellipflow.fields import Profile, profile_for
from ellipflow.integrator import IntegrationConfig, integrate
from ellipflow.model import EmdenSpec
from ellipflow.verify import (
    MOMENTUM_TOL,
    Method,
    adjudicate,
    fd_oracle_residual,
    mass_residual,
    momentum_residual,
    sample_points,
    verify_run,
    verify_trajectory,
)

CFG = IntegrationConfig(t_end=1.5)


def viscous(system, n, theta, xi, a0, a1, **kw):
    if system == "A":
        return EmdenSpec(system, n, theta, xi, a0, a1, kappa1=1.0, **kw)
    return EmdenSpec(system, n, theta, xi, a0, a1, kappa2=1.0, **kw)


def test_static_fields_have_zero_residual():
    spec = viscous("A", 2, 2.0, 0.0, (1.0, 1.5), (0.0, 0.0))
    traj = integrate(spec, CFG)
    p = Profile(2.0, 1.0, 1.0, 1.0)  # any profile: u = 0 makes every term vanish
    x = np.array([0.3, -0.2])
    assert mass_residual(spec, p, traj, 0.7, x) == 0.0
    np.testing.assert_array_equal(momentum_residual(spec, p, traj, 0.7, x), 0.0)
    mass_fd, mom_fd = fd_oracle_residual(spec, p, traj, 0.7, x, 1e-3)
    assert mass_fd < 1e-12 and np.all(mom_fd < 1e-12)


@pytest.mark.parametrize("system", ["A", "BProof"])
def test_vacuum_has_zero_residual(system):
    spec = viscous(system, 2, 1.5, 1.0, (1.0, 1.5), (0.3, -0.2), alpha=0.0)
    report = verify_run(spec, CFG, n_samples=20)
    assert report.mass_residual_max == 0.0
    assert np.all(report.momentum_residual_max == 0.0)


def test_mass_residual_system_a_three_dimensions():
    spec = viscous("A", 3, 1.0, 1.0, (1.0, 1.4, 0.8), (0.2, -0.3, 0.1), drifts=(0.1, 0.0, -0.2))
    report = verify_run(spec, CFG, n_samples=100)
    assert len(report.sample_points) == 100
    assert report.normalization > 0.0
    assert report.mass_relative < 1e-10


@pytest.mark.parametrize("system", ["A", "BProof"])
@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_matching_family_verifies(system, theta):
    spec = viscous(system, 2, theta, -1.0, (1.0, 1.7), (0.4, -0.3))
    report = verify_run(spec, CFG, n_samples=100, seed=3)
    assert report.passed(), report.to_dict()


def test_mass_equation_holds_for_any_profile():
    # conservation of mass only needs u = (a'/a) y, whatever the profile
    spec = viscous("BTheorem", 2, 2.0, 1.0, (1.0, 2.0), (0.4, -0.3))
    traj = integrate(spec, CFG)
    report = verify_trajectory(spec, traj, Profile(1.3, 0.7, 2.0, 1.1), n_samples=60)
    assert report.mass_relative < 1e-10


def test_adjudication_separates_the_viscous_systems():
    spec = viscous("BProof", 2, 2.0, 1.0, (1.0, 2.0), (0.3, -0.2))
    result = adjudicate(spec, CFG, n_samples=100)
    coupled, decoupled = result.reports["BProof"], result.reports["BTheorem"]
    assert coupled.momentum_relative < MOMENTUM_TOL
    assert decoupled.momentum_relative > 1e-2
    assert result.verified == ["BProof"]
    assert result.separation_orders >= 4


@pytest.mark.parametrize(
    "theta,a0,a1",
    [(1.0, (1.0, 2.0), (0.3, -0.2)), (2.0, (1.3, 1.3), (0.25, 0.25))],
)
def test_viscous_systems_both_verify_on_coincidence_locus(theta, a0, a1):
    result = adjudicate(viscous("BTheorem", 2, theta, 1.0, a0, a1), CFG, n_samples=50)
    assert result.verified == ["BProof", "BTheorem"]


@pytest.mark.parametrize("system", ["A", "BProof", "BTheorem"])
def test_difference_oracle_converges_at_fourth_order(system):
    spec = viscous(system, 2, 1.5, 1.0, (1.0, 1.6), (0.3, -0.2))
    traj = integrate(spec, CFG)
    p = profile_for(spec)
    x = np.array([0.35, -0.4])
    t = 0.6
    mass = mass_residual(spec, p, traj, t, x)
    mom = momentum_residual(spec, p, traj, t, x)
    diffs = []
    for h in (4e-2, 2e-2):
        m_fd, mo_fd = fd_oracle_residual(spec, p, traj, t, x, h)
        diffs.append(np.max(np.abs(mo_fd - mom)) + abs(m_fd - mass))
    ratio = diffs[0] / diffs[1]
    assert 10.0 < ratio < 24.0


def test_difference_oracle_report_agrees_with_analytic():
    spec = viscous("A", 2, 2.0, 1.0, (1.0, 1.6), (0.3, -0.2))
    analytic = verify_run(spec, CFG, n_samples=30)
    fd = verify_run(spec, CFG, n_samples=30, method=Method.FINITE_DIFFERENCE)
    assert fd.method is Method.FINITE_DIFFERENCE
    assert fd.momentum_relative < 1e-5
    assert analytic.momentum_relative < fd.momentum_relative


def test_support_margin_is_enforced():
    # f = max(1 - s, 0) with a = (1, 1) at t = 0: the edge is the unit circle
    spec = viscous("A", 2, 2.0, 4.0, (1.0, 1.0), (0.0, 0.0))
    traj = integrate(spec, CFG)
    p = profile_for(spec)
    with pytest.raises(SupportBoundaryError):
        momentum_residual(spec, p, traj, 0.0, np.array([1.0 + 1e-5, 0.0]))
    momentum_residual(spec, p, traj, 0.0, np.array([0.9, 0.0]))
    momentum_residual(spec, p, traj, 0.0, np.array([1.1, 0.0]))


def test_samples_avoid_the_edge_and_are_deterministic():
    spec = viscous("A", 2, 2.0, 2.0, (1.0, 1.5), (0.2, 0.1))
    traj = integrate(spec, CFG)
    p = profile_for(spec)
    one = sample_points(spec, p, traj, 100, seed=5)
    two = sample_points(spec, p, traj, 100, seed=5)
    assert len(one) == 100
    assert all(t1 == t2 and np.array_equal(x1, x2) for (t1, x1), (t2, x2) in zip(one, two))
    times = sorted({t for t, _ in one})
    assert len(times) == 10 and times[-1] == pytest.approx(0.9 * traj.t_final)
