import numpy as np
import pandas as pd
import pytest

from shearflow.dsmc import FrameState, HomogeneousConfig, run_homogeneous
from shearflow.errors import AnalysisError, ConfigError, NumericalGuardError
from shearflow.kernel import KernelSpec
from shearflow.spatial import (InhomogeneousConfig, SpatialEnsemble, fit_mode_decay,
                               init_spatial, per_cell_collision_step, run_inhomogeneous,
                               sample_perturbed_positions, spatial_mode_amplitudes,
                               spatial_transport_step)


def _single(v, x=0.0, L=10.0):
    return SpatialEnsemble(np.array([v], dtype=float), np.random.default_rng(0),
                           positions=np.array([x]), L=L, n_cells=1)


def test_position_update_examples():
    ens = _single([1.0, 0.0, 0.0])
    spatial_transport_step(ens, 0.0, 0.0, 0.0, 0.5)
    assert ens.positions[0] == 0.5
    # x-drift of a particle moving only in xi2: -alpha h^2 / 2, wrapped
    ens = _single([0.0, 1.0, 0.0], x=1.0)
    spatial_transport_step(ens, 1.0, 0.0, 0.0, 1.0)
    assert ens.positions[0] == pytest.approx(0.5)
    np.testing.assert_allclose(ens.velocities[0], [-1.0, 1.0, 0.0])
    ens = _single([-1.0, 0.0, 0.0], x=0.25, L=1.0)
    spatial_transport_step(ens, 0.0, 0.0, 0.0, 0.5)
    assert ens.positions[0] == pytest.approx(0.75)


def test_position_map_is_exact_semigroup():
    rng = np.random.default_rng(1)
    v = rng.normal(size=(50, 3))
    x = 50.0 + rng.random(50)
    alpha, beta = 0.8, 0.3

    def ens():
        return SpatialEnsemble(v.copy(), rng, positions=x.copy(), L=100.0, n_cells=1)

    one = spatial_transport_step(ens(), alpha, beta, 0.0, 0.4, log_scale=0.0)
    two = spatial_transport_step(ens(), alpha, beta, 0.0, 0.1, log_scale=0.0)
    two = spatial_transport_step(two, alpha, beta, 0.1, 0.3, log_scale=beta * 0.1)
    np.testing.assert_allclose(one.positions, two.positions, atol=1e-12)
    np.testing.assert_allclose(one.velocities, two.velocities, atol=1e-14)


def test_position_map_matches_quadrature():
    # integrate exp(beta s) V1(s) with V1(s) = exp(-beta s)(xi1 - alpha s xi2)
    v = np.array([[0.7, -1.3, 0.2]])
    e = SpatialEnsemble(v.copy(), np.random.default_rng(0), positions=np.zeros(1), L=1e6, n_cells=1)
    spatial_transport_step(e, 0.4, 0.2, 0.0, 0.9, log_scale=0.0)
    s = np.linspace(0, 0.9, 100_001)
    integrand = v[0, 0] - 0.4 * s * v[0, 1]
    assert e.positions[0] == pytest.approx(np.trapezoid(integrand, s), abs=1e-10)


def test_mode_amplitude_of_perturbed_density():
    ens = init_spatial(400_000, seed=0, amplitude=0.5)
    modes = spatial_mode_amplitudes(ens, 3)
    assert modes.rho_hat[0] == pytest.approx(1.0)
    assert abs(modes.rho_hat[1]) == pytest.approx(0.25, abs=3 / np.sqrt(4e5))
    assert abs(modes.rho_hat[2]) < 5 / np.sqrt(4e5)
    with pytest.raises(ConfigError):
        sample_perturbed_positions(np.random.default_rng(0), 10, 1.0, 1, 1.0)
    with pytest.raises(ConfigError):
        spatial_mode_amplitudes(ens, 0)


def test_single_cell_reproduces_homogeneous_solver_bitwise():
    kw = dict(N=4000, alpha=0.3, dt=0.01, t_end=1.0, seed=9)
    hom = run_homogeneous(HomogeneousConfig(**kw)).series
    inh = run_inhomogeneous(InhomogeneousConfig(**kw, n_cells=1, amplitude=0.2)).series
    cols = ["t", "M11", "M12", "M13", "M22", "M23", "M33", "trace", "collisions"]
    pd.testing.assert_frame_equal(hom[cols], inh[cols], check_exact=True)


def test_per_cell_collisions_conserve_and_match_rate():
    k = KernelSpec()
    ens = init_spatial(32_000, seed=4, n_cells=16)
    p0, e0 = ens.velocities.sum(axis=0), np.sum(ens.velocities ** 2)
    total = sum(per_cell_collision_step(ens, k, 0.01, FrameState()) for _ in range(20))
    np.testing.assert_allclose(ens.velocities.sum(axis=0), p0, atol=1e-9)
    assert np.sum(ens.velocities ** 2) == pytest.approx(e0, rel=1e-12)
    homogeneous_rate = 20 * 32_000 * k.nu0 * 0.01 / 2
    assert abs(total / homogeneous_rate - 1) < 0.01


def test_per_cell_guard():
    ens = init_spatial(1000, n_cells=4)
    ens.positions[:] = 0.0
    with pytest.raises(NumericalGuardError):
        per_cell_collision_step(ens, KernelSpec(), 0.05)


def test_fit_mode_decay_synthetic():
    t = np.arange(0, 10, 0.1)
    modes = pd.DataFrame({"t": t, "k": 1, "abs_rho_hat": 0.05 * np.exp(-0.3 * t)})
    rate, err = fit_mode_decay(modes)
    assert rate == pytest.approx(0.3, rel=1e-10)
    rate, _ = fit_mode_decay(modes, noise_floor=0.01)
    assert rate == pytest.approx(0.3, rel=1e-10)
    with pytest.raises(AnalysisError):
        fit_mode_decay(modes, noise_floor=0.1)


def test_inhomogeneous_run_tables():
    cfg = InhomogeneousConfig(N=4000, alpha=0.1, t_end=0.5, n_cells=8, k_max=2, amplitude=0.3)
    r = run_inhomogeneous(cfg)
    modes, cells = r.extra_tables["modes"], r.extra_tables["cells"]
    assert set(modes.k) == {1, 2}
    assert len(cells) == 8 * len(r.records)
    assert cells.groupby("t")["count"].sum().eq(4000).all()
    assert r.records[0].extra["abs_rho_hat_1"] == pytest.approx(0.15, abs=0.05)
