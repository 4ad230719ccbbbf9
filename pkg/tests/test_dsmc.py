import numpy as np
import pandas as pd
import pytest

from shearflow.dsmc import (FrameState, HomogeneousConfig, ParticleEnsemble, collide_selected,
                            collision_step, dynamic_beta, init_maxwellian,
                            measure_beta_from_energy, run_homogeneous, shear_flow_map,
                            shear_transport_step)
from shearflow.errors import AnalysisError, ConfigError, NumericalGuardError
from shearflow.kernel import KernelSpec


def test_init_maxwellian_centred_and_normalised():
    ens = init_maxwellian(10_000, seed=3, normalize_energy=True)
    np.testing.assert_allclose(ens.momentum(), 0.0, atol=1e-15)
    assert np.trace(ens.second_moments()) == pytest.approx(3.0, rel=1e-14)
    again = init_maxwellian(10_000, seed=3, normalize_energy=True)
    np.testing.assert_array_equal(ens.velocities, again.velocities)
    with pytest.raises(ConfigError):
        init_maxwellian(1)


def test_shear_perturbation_sets_off_diagonal():
    ens = init_maxwellian(200_000, seed=0, shear_perturbation=0.3)
    assert ens.second_moments()[0, 1] == pytest.approx(0.3, abs=0.02)


def test_shear_flow_map_example_and_semigroup():
    v = np.array([[1.0, 1.0, 0.0]])
    shear_flow_map(v, 1.0, 0.0, 1.0)
    np.testing.assert_array_equal(v, [[0.0, 1.0, 0.0]])

    rng = np.random.default_rng(0)
    v0 = rng.normal(size=(100, 3))
    one = shear_flow_map(v0.copy(), 0.7, 0.2, 0.3)
    two = shear_flow_map(shear_flow_map(v0.copy(), 0.7, 0.2, 0.1), 0.7, 0.2, 0.2)
    np.testing.assert_allclose(one, two, rtol=0, atol=1e-14)
    # matches the closed form solution of the linear ODE
    e = np.exp(-0.2 * 0.3)
    np.testing.assert_allclose(one[:, 0], e * (v0[:, 0] - 0.7 * 0.3 * v0[:, 1]), atol=1e-14)
    np.testing.assert_allclose(one[:, 1:], e * v0[:, 1:], atol=1e-15)


def test_shear_transport_rejects_bad_step():
    ens = init_maxwellian(10)
    with pytest.raises(ConfigError):
        shear_transport_step(ens, 0.1, 0.0, 0.0)


def test_collision_step_conserves_and_counts():
    k = KernelSpec()
    ens = init_maxwellian(20_000, seed=1)
    p0, e0 = ens.velocities.sum(axis=0), np.sum(ens.velocities ** 2)
    frame = FrameState()
    dt = 0.01
    total = sum(collision_step(ens, k, dt, frame) for _ in range(50))
    expected = 50 * 20_000 * k.nu0 * dt / 2
    assert abs(total - expected) <= 1
    np.testing.assert_allclose(ens.velocities.sum(axis=0), p0, atol=1e-9)
    assert np.sum(ens.velocities ** 2) == pytest.approx(e0, rel=1e-12)


def test_collision_guard():
    ens = init_maxwellian(100)
    with pytest.raises(NumericalGuardError):
        collision_step(ens, KernelSpec(), 0.1)


def test_identical_pair_is_left_alone():
    v = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    rng = np.random.default_rng(0)
    n = collide_selected(v, np.array([0, 2]), np.array([1, 3]), KernelSpec(), rng)
    assert n == 1
    np.testing.assert_array_equal(v[:2], [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])


def test_isotropisation_rate_is_two_b0():
    # without shear, dM/dt = -2 b0 (M - tr M / 3)
    k = KernelSpec()
    N = 200_000
    ens = init_maxwellian(N, seed=5)
    ens.velocities *= np.sqrt([2.0, 0.5, 0.5])
    d0 = ens.second_moments()[0, 0] - ens.second_moments()[1, 1]
    cfg = HomogeneousConfig(N=N, alpha=0.0, dt=0.005, t_end=0.5, cadence=0.1, seed=5)
    series = run_homogeneous(cfg, ens).series
    for row in series.itertuples():
        measured = row.M11 - row.M22
        predicted = d0 * np.exp(-2 * k.b0 * row.t)
        assert abs(measured - predicted) < 5 * np.sqrt(8.0 / N) + 0.01 * abs(predicted)


def test_dynamic_beta_holds_energy():
    cfg = HomogeneousConfig(N=20_000, alpha=0.5, dt=0.01, t_end=5, frame="self_similar",
                            beta_policy="dynamic", normalize_energy=True)
    series = run_homogeneous(cfg).series
    assert np.max(np.abs(series.trace - 3)) < 0.01
    ens = init_maxwellian(1000, normalize_energy=True)
    assert dynamic_beta(ens, 0.3) == pytest.approx(-0.1 * ens.second_moments()[0, 1])


def test_fixed_beta_log_scale():
    cfg = HomogeneousConfig(N=2000, alpha=0.1, dt=0.01, t_end=2, frame="self_similar",
                            beta_policy="fixed", beta=0.05)
    series = run_homogeneous(cfg).series
    np.testing.assert_allclose(series.log_scale, 0.05 * series.t, atol=1e-12)
    assert np.all(series.beta_current == 0.05)


def test_physical_frame_has_no_rescaling():
    series = run_homogeneous(HomogeneousConfig(N=2000, t_end=1)).series
    assert np.all(series.log_scale == 0) and np.all(series.beta_current == 0)


def test_runs_are_deterministic():
    cfg = HomogeneousConfig(N=5000, alpha=0.3, t_end=1, seed=11, moment_orders=(2, 4))
    a, b = run_homogeneous(cfg).series, run_homogeneous(cfg).series
    pd.testing.assert_frame_equal(a, b, check_exact=True)
    c = run_homogeneous(HomogeneousConfig(N=5000, alpha=0.3, t_end=1, seed=12)).series
    assert not np.array_equal(a.M12.to_numpy(), c.M12.to_numpy())


def test_partitioned_threads_match_serial():
    base = dict(N=8000, alpha=0.3, t_end=1, seed=2, partitions=4)
    a = run_homogeneous(HomogeneousConfig(**base, threads=0)).series
    b = run_homogeneous(HomogeneousConfig(**base, threads=4)).series
    pd.testing.assert_frame_equal(a, b, check_exact=True)


def test_histograms_accumulate():
    cfg = HomogeneousConfig(N=3000, t_end=1, hist_from=0.5, hist_bins=8)
    r = run_homogeneous(cfg)
    assert r.hist_xy.n_snapshots == 6
    assert r.hist_xy.mass.sum() + r.hist_xy.overflow == pytest.approx(1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        HomogeneousConfig(alpha=-1).validate()
    with pytest.raises(ConfigError):
        HomogeneousConfig(splitting="euler").validate()
    with pytest.raises(NumericalGuardError):
        HomogeneousConfig(dt=0.1).validate()
    with pytest.raises(ConfigError):
        HomogeneousConfig(frame="lab").validate()


def _synthetic(beta, t_end=6000.0, noise=0.0, seed=0):
    t = np.arange(0, t_end + 1e-9, 1.0)
    y = 2 * beta * t + noise * np.random.default_rng(seed).standard_normal(t.size)
    return pd.DataFrame({"t": t, "trace": 3 * np.exp(y)})


def test_measure_beta_exact_on_synthetic_series():
    est = measure_beta_from_energy(_synthetic(0.001))
    assert abs(est.beta - 0.001) <= 1e-10
    noisy = measure_beta_from_energy(_synthetic(0.001, noise=0.01))
    assert noisy.ci_low < 0.001 < noisy.ci_high


def test_measure_beta_uses_log_scale():
    df = _synthetic(0.002, t_end=3000)
    df["log_scale"] = 0.002 * df.t
    df["trace"] = 3.0
    assert measure_beta_from_energy(df).beta == pytest.approx(0.002, rel=1e-10)


def test_measure_beta_span_guard():
    short = _synthetic(0.001, t_end=100.0, noise=1e-4)
    with pytest.raises(AnalysisError):
        measure_beta_from_energy(short)
    assert measure_beta_from_energy(short, min_span=50).beta == pytest.approx(0.001, rel=0.05)
    with pytest.raises(AnalysisError):
        measure_beta_from_energy(short, transient=99.0)


def test_pair_rate_bookkeeping():
    # N nu0 dt / 2 = 1000 * 2 pi * 1e-3 / 2 ~ 3.14 pairs per step
    ens = init_maxwellian(1000, seed=0)
    frame = FrameState()
    counts = [collision_step(ens, KernelSpec(), 1e-3, frame) for _ in range(10_000)]
    assert np.mean(counts) == pytest.approx(np.pi, rel=0.01)
    poisson = FrameState()
    counts = [collision_step(ens, KernelSpec(), 1e-3, poisson, "poisson") for _ in range(10_000)]
    assert np.mean(counts) == pytest.approx(np.pi, rel=0.05)


def test_isotropic_ensemble_has_no_dynamic_beta():
    N = 100_000
    ens = init_maxwellian(N, seed=2)
    assert abs(dynamic_beta(ens, 0.3)) < 3 * 0.3 / (3 * np.sqrt(N))


def test_energy_changes_only_through_shear():
    cfg = HomogeneousConfig(N=20_000, alpha=0.5, dt=0.01, t_end=2.0, cadence=0.01, seed=3)
    s = run_homogeneous(cfg).series
    de = np.diff(s.trace.to_numpy())
    m12 = s.M12.to_numpy()
    # trapezoid in time of -2 alpha M12; the Strang error is O(dt^2) per step
    predicted = -2 * 0.5 * 0.5 * (m12[1:] + m12[:-1]) * 0.01
    assert np.max(np.abs(de - predicted)) < 1e-4


def test_fixed_beta_frame_is_rescaled_physical_run():
    # collisions are scale-equivariant and the pair rate ignores speed, so
    # with shared seeds the two frames differ only by the factor exp(-beta t)
    kw = dict(N=5000, alpha=0.4, dt=0.01, t_end=3.0, seed=8)
    phys = run_homogeneous(HomogeneousConfig(**kw)).series
    ss = run_homogeneous(HomogeneousConfig(**kw, frame="self_similar", beta_policy="fixed",
                                           beta=0.07)).series
    scale = np.exp(-2 * 0.07 * phys.t)
    for col in ("M11", "M12", "M22", "M33"):
        np.testing.assert_allclose(ss[col], phys[col] * scale, rtol=1e-9, atol=1e-12)
