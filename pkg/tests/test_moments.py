import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shearflow.errors import ConfigError, ContractViolation
from shearflow.kernel import KernelSpec, collide_pairs, directions_from_cos
from shearflow.moments import (MomentState, closure_rhs, collision_term, fit_log_trace_slope,
                               growth_cubic, growth_rate_exact, integrate_moments,
                               rescaled_closure_rhs, trajectory_array)

B0 = np.pi / 2


def _sphere_average_T(g, kernel, n_z=64, n_phi=64):
    """(1/2) int_{S^2} B0 [W' + W*' - W - W*] d omega by tensor Gauss-Legendre
    in z (split at 0) and the trapezoid rule in the azimuth."""
    x, w = np.polynomial.legendre.leggauss(n_z)
    z = np.concatenate([(x - 1) / 2, (x + 1) / 2])
    wz = np.concatenate([w, w]) / 2
    phi = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
    Z, P = np.meshgrid(z, phi, indexing="ij")
    W = np.outer(wz, np.full(n_phi, 2 * np.pi / n_phi))
    e = g / np.linalg.norm(g)
    om = directions_from_cos(np.tile(e, (Z.size, 1)), Z.ravel(), P.ravel())
    v = np.tile(g, (Z.size, 1))
    vs = np.zeros_like(v)
    vp, vsp = collide_pairs(v, vs, om)
    dW = (np.einsum("ni,nj->nij", vp, vp) + np.einsum("ni,nj->nij", vsp, vsp)
          - np.einsum("ni,nj->nij", v, v))
    weights = (W.ravel() * kernel.b0_function(Z.ravel()))[:, None, None]
    return 0.5 * np.sum(weights * dW, axis=0)


@pytest.mark.parametrize("g", [[1.0, 0.0, 0.0], [0.3, -1.2, 0.7], [0.0, 0.0, 2.5]])
def test_pair_identity_behind_the_closure(g):
    g = np.asarray(g)
    k = KernelSpec()
    T = _sphere_average_T(g, k)
    expected = -k.b0 * (np.outer(g, g) - np.eye(3) * (g @ g) / 3)
    np.testing.assert_allclose(T, expected, atol=1e-10)


def test_closure_rhs_examples():
    assert np.all(closure_rhs(MomentState(np.eye(3)), 0.0, B0) == 0)
    d = closure_rhs(MomentState(np.eye(3)), 0.5, B0)
    assert d[0, 1] == pytest.approx(-0.5)
    assert np.trace(d) == pytest.approx(0.0, abs=1e-15)


@given(st.lists(st.floats(-2, 2), min_size=9, max_size=9), st.floats(0, 2))
@settings(max_examples=100, deadline=None)
def test_trace_changes_only_through_shear(entries, alpha):
    A = np.array(entries).reshape(3, 3)
    M = A @ A.T
    d = closure_rhs(MomentState(M), alpha, B0)
    assert np.trace(d) == pytest.approx(-2 * alpha * M[0, 1], abs=1e-12)
    assert np.trace(collision_term(M, B0)) == pytest.approx(0.0, abs=1e-12)


def test_closure_requires_normalized_state():
    with pytest.raises(ContractViolation):
        closure_rhs(MomentState(np.eye(3), rho=2.0), 0.1, B0)
    st_ = MomentState(np.eye(3) * 2 + 2 * np.outer([1, 0, 0], [1, 0, 0]), rho=2.0, u=[2.0, 0, 0])
    n = st_.normalized()
    np.testing.assert_allclose(n.M, np.eye(3))


def test_growth_rate_matches_polynomial_roots():
    for alpha in (0.01, 0.1, 0.3, 1.0, 2.0):
        sol = growth_rate_exact(alpha, B0)
        roots = np.roots([1, 4 * B0, 4 * B0**2, -4 / 3 * alpha**2 * B0])
        positive = [r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0]
        assert len(positive) == 1
        assert sol.s == pytest.approx(positive[0], rel=1e-12)
        assert abs(growth_cubic(sol.s, alpha, B0)) <= 1e-14
        assert sol.beta == sol.s / 2


def test_growth_rate_reference_values():
    sol = growth_rate_exact(0.1, B0)
    assert sol.s == pytest.approx(2.1192e-3, rel=1e-4)
    assert sol.beta == pytest.approx(1.0596e-3, rel=1e-4)
    assert sol.M_steady[0, 1] == pytest.approx(-3 * sol.beta / 0.1, rel=1e-14)
    assert sol.M_steady[0, 1] == pytest.approx(-0.031788, rel=1e-4)
    assert np.trace(sol.M_steady) == pytest.approx(3.0, rel=1e-14)
    assert sol.M_steady[0, 2] == sol.M_steady[1, 2] == 0
    leading = 0.01 / (6 * B0)
    assert 0 < (leading - sol.beta) / leading < 0.002


def test_alpha_zero_is_isotropic():
    sol = growth_rate_exact(0.0, B0)
    assert sol.s == 0 and sol.beta == 0
    np.testing.assert_array_equal(sol.M_steady, np.eye(3))


def test_steady_shape_is_fixed_point():
    for alpha in (0.05, 0.1, 0.5, 2.0):
        sol = growth_rate_exact(alpha, B0)
        d = rescaled_closure_rhs(MomentState(sol.M_steady), alpha, B0, sol.beta)
        assert np.max(np.abs(d)) <= 1e-12
        assert sol.M_steady[0, 1] < 0
        assert np.all(np.linalg.eigvalsh(sol.M_steady) > 0)


@given(st.lists(st.floats(-2, 2), min_size=9, max_size=9), st.floats(0, 1), st.floats(0, 0.5))
@settings(max_examples=100, deadline=None)
def test_rescaled_trace_identity(entries, alpha, beta):
    A = np.array(entries).reshape(3, 3)
    M = A @ A.T
    d = rescaled_closure_rhs(MomentState(M), alpha, B0, beta)
    assert np.trace(d) + 2 * beta * np.trace(M) + 2 * alpha * M[0, 1] == pytest.approx(0.0, abs=1e-12)


@given(st.floats(0.01, 2.0), st.floats(0.2, 5.0))
@settings(max_examples=60, deadline=None)
def test_growth_rate_monotone(alpha, b0):
    s = growth_rate_exact(alpha, b0).s
    assert growth_rate_exact(alpha * 1.01, b0).s > s
    # s ~ alpha^2/(3 b0) for small shear, s ~ (alpha^2 b0)^(1/3) for large shear
    if alpha <= 0.5 * b0:
        assert growth_rate_exact(alpha, b0 * 1.01).s < s


def test_pure_relaxation_closed_form():
    M0 = np.array([[2.0, 0.3, 0.0], [0.3, 0.5, 0.1], [0.0, 0.1, 0.5]])
    traj = integrate_moments(MomentState(M0), 0.0, B0, 3.0, 0.01)
    e = np.trace(M0)
    for s in traj[::50]:
        exact = e / 3 * np.eye(3) + (M0 - e / 3 * np.eye(3)) * np.exp(-2 * B0 * s.t)
        np.testing.assert_allclose(s.M, exact, atol=1e-9)
        assert s.trace == pytest.approx(e, abs=1e-12)


def test_log_trace_slope_matches_cubic():
    traj = integrate_moments(MomentState(np.eye(3)), 0.1, B0, 400.0, 0.01)
    slope = fit_log_trace_slope(traj, 200.0, 400.0)
    s = growth_rate_exact(0.1, B0).s
    assert abs(slope / s - 1) <= 1e-6


def test_rk4_fourth_order():
    M0 = MomentState(np.eye(3))
    ref = integrate_moments(M0, 0.5, B0, 2.0, 0.0025)[-1].M
    e1 = np.abs(integrate_moments(M0, 0.5, B0, 2.0, 0.02)[-1].M - ref).max()
    e2 = np.abs(integrate_moments(M0, 0.5, B0, 2.0, 0.01)[-1].M - ref).max()
    assert 13 < e1 / e2 < 19


def test_trajectory_stays_psd_and_trace_grows():
    traj = integrate_moments(MomentState(np.eye(3)), 0.3, B0, 20.0, 0.01)
    arr = trajectory_array(traj)
    for s in traj:
        assert np.linalg.eigvalsh(s.M).min() >= -1e-12
    grows = arr[:, 2] < 0
    assert np.all(np.diff(arr[grows, 5]) > 0)


def test_integrate_rejects_large_step():
    with pytest.raises(ConfigError):
        integrate_moments(MomentState(np.eye(3)), 0.1, B0, 1.0, 0.05)
    with pytest.raises(ConfigError):
        integrate_moments(MomentState(np.eye(3)), 0.1, B0, 1.0, 0.0)


def test_beta_gap_within_two_tenths_percent_for_small_alpha():
    for alpha in (0.01, 0.05, 0.1):
        beta = growth_rate_exact(alpha, B0).beta
        lead = alpha**2 / (6 * B0)
        assert abs(beta - lead) / lead <= 0.002
