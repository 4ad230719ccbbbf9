"""1-D periodic, spatially inhomogeneous shear flow with cell-local collisions.

Positions follow ``dX/ds = exp(lambda(s)) V1(s)`` where ``lambda`` is the
accumulated self-similar log-scale (zero in the physical frame).  With
``beta`` constant over a step of length ``h`` starting at ``t``,
``exp(lambda(s)) V1(s) = exp(lambda(t)) (xi1 - alpha (s - t) xi2)``, so the
step is integrated exactly:

    x += exp(lambda(t)) * (h xi1 - alpha h^2 xi2 / 2).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dsmc import (COLLISION_RATE_GUARD, FrameState, HomogeneousConfig, ParticleEnsemble,
                   RunResult, SplitStepper, _pair_count, collide_selected, collision_step,
                   init_maxwellian, make_streams, shear_flow_map, snapshot)
from .errors import AnalysisError, ConfigError, NumericalGuardError
from .kernel import KernelSpec


@dataclass
class SpatialEnsemble(ParticleEnsemble):
    positions: np.ndarray = None
    L: float = 2.0 * np.pi
    n_cells: int = 32
    cell_rngs: list = field(default_factory=list)
    cell_carry: np.ndarray = None

    def __post_init__(self):
        if self.positions is None:
            self.positions = np.zeros(self.N)
        if self.cell_carry is None:
            self.cell_carry = np.zeros(self.n_cells)

    def cell_index(self) -> np.ndarray:
        c = (self.positions * (self.n_cells / self.L)).astype(np.int64)
        return np.minimum(c, self.n_cells - 1)

    def cell_counts(self) -> np.ndarray:
        return np.bincount(self.cell_index(), minlength=self.n_cells)


def sample_perturbed_positions(rng, N, L, mode_k=1, amplitude=0.0) -> np.ndarray:
    """Rejection-sample ``x`` with density proportional to ``1 + eps cos(2 pi k x / L)``."""
    if abs(amplitude) >= 1:
        raise ConfigError("perturbation amplitude must be below 1", amplitude=amplitude)
    if amplitude == 0:
        return rng.random(N) * L
    out = np.empty(0)
    while out.size < N:
        m = int(1.2 * (N - out.size)) + 16
        x = rng.random(m) * L
        accept = rng.random(m) * (1 + abs(amplitude)) <= 1 + amplitude * np.cos(2 * np.pi * mode_k * x / L)
        out = np.concatenate([out, x[accept]])
    return out[:N]


def init_spatial(N, seed=0, L=2.0 * np.pi, n_cells=32, mode_k=1, amplitude=0.0,
                 normalize_energy=False, shear_perturbation=0.0) -> SpatialEnsemble:
    """Maxwellian velocities (same stream as the homogeneous initializer)
    and positions on a separate stream."""
    if n_cells < 1:
        raise ConfigError("spatial.n_cells must be >= 1", n_cells=n_cells)
    base = init_maxwellian(N, seed, normalize_energy, shear_perturbation)
    pos_rng = make_streams(seed)[2]
    x = sample_perturbed_positions(pos_rng, int(N), L, mode_k, amplitude)
    cell_rngs = [np.random.default_rng(s) for s in
                 np.random.SeedSequence([seed, 7919, n_cells]).spawn(n_cells)]
    return SpatialEnsemble(base.velocities, base.rng, 0.0, [], x, float(L), int(n_cells),
                           cell_rngs)


def spatial_transport_step(ens: SpatialEnsemble, alpha: float, beta: float, t: float,
                           dt: float, log_scale: float = None) -> SpatialEnsemble:
    """Advance positions and velocities along the exact characteristics.

    ``log_scale`` is the accumulated ``int beta``; it defaults to ``beta * t``
    (constant beta since time zero).
    """
    if not dt > 0:
        raise ConfigError("dt must be positive", dt=dt)
    lam = beta * t if log_scale is None else log_scale
    v = ens.velocities
    ens.positions += np.exp(lam) * (dt * v[:, 0] - 0.5 * alpha * dt * dt * v[:, 1])
    np.mod(ens.positions, ens.L, out=ens.positions)
    # mod can round up to exactly L for tiny negative inputs
    ens.positions[ens.positions >= ens.L] = 0.0
    shear_flow_map(v, alpha, beta, dt)
    return ens


def per_cell_collision_step(ens: SpatialEnsemble, kernel: KernelSpec, dt: float,
                            frame: FrameState | None = None, count_policy="carry") -> int:
    """Cell-local collisions; returns the number of pairs drawn.

    A cell holding ``n_c`` particles at relative density
    ``n_c * n_cells / N`` draws ``n_c * (n_c n_cells / N) nu0 dt / 2`` pairs,
    which reproduces the homogeneous rate for a uniform gas.  A single cell
    delegates to :func:`shearflow.dsmc.collision_step`.
    """
    if ens.n_cells == 1:
        return collision_step(ens, kernel, dt, frame, count_policy)
    counts = ens.cell_counts()
    density_ratio = counts * ens.n_cells / ens.N
    if dt * kernel.nu0 * density_ratio.max() > COLLISION_RATE_GUARD:
        raise NumericalGuardError("cell collision guard violated: need dt*nu0*max density ratio <= 0.5",
                                  dt=dt, max_density_ratio=float(density_ratio.max()))
    cells = ens.cell_index()
    order = np.argsort(cells.astype(np.int32), kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)])
    total = 0
    for c in range(ens.n_cells):
        n_c = int(counts[c])
        rng = ens.cell_rngs[c]
        expected = n_c * density_ratio[c] * kernel.nu0 * dt / 2.0
        n_pairs, ens.cell_carry[c] = _pair_count(expected, ens.cell_carry[c], count_policy,
                                                 rng, n_c // 2)
        if n_pairs == 0:
            continue
        local = rng.choice(n_c, 2 * n_pairs, replace=False)
        idx = order[starts[c] + local]
        collide_selected(ens.velocities, idx[:n_pairs], idx[n_pairs:], kernel, rng)
        total += n_pairs
    return total


def spatial_mode_amplitudes(ens: SpatialEnsemble, k_max: int) -> pd.DataFrame:
    """Density and ``xi_1``-momentum Fourier modes ``k = 0..k_max``."""
    if k_max < 1:
        raise ConfigError("k_max must be >= 1", k_max=k_max)
    k = np.arange(k_max + 1)
    phase = np.exp(-2j * np.pi * np.outer(k, ens.positions) / ens.L)
    rho = phase.mean(axis=1)
    mom = phase @ ens.velocities[:, 0] / ens.N
    return pd.DataFrame({"k": k, "rho_hat": rho, "mom1_hat": mom})


@dataclass
class InhomogeneousConfig(HomogeneousConfig):
    n_cells: int = 32
    L: float = 2.0 * np.pi
    mode_k: int = 1
    amplitude: float = 0.1
    k_max: int = 4

    def validate(self):
        super().validate()
        if self.n_cells < 1 or self.L <= 0 or self.k_max < 1:
            raise ConfigError("need n_cells >= 1, L > 0 and k_max >= 1")


def run_inhomogeneous(cfg: InhomogeneousConfig, ens: SpatialEnsemble | None = None) -> RunResult:
    """Spatial transport plus per-cell collisions, recording global moments,
    per-cell moments and Fourier modes every ``cfg.cadence``."""
    cfg.validate()
    start = time.perf_counter()
    if ens is None:
        ens = init_spatial(cfg.N, cfg.seed, cfg.L, cfg.n_cells, cfg.mode_k, cfg.amplitude,
                           cfg.normalize_energy, cfg.shear_perturbation)
    frame = FrameState(cfg.frame, cfg.beta_policy, cfg.resolved_beta())

    def transport(e, fr, beta, h):
        spatial_transport_step(e, cfg.alpha, beta, e.t, h, fr.log_scale)
        fr.log_scale += beta * h

    def collide(e, fr, h):
        return per_cell_collision_step(e, cfg.kernel, h, fr, cfg.count_policy)

    stepper = SplitStepper(cfg, transport, collide)
    n_steps = int(round(cfg.t_end / cfg.dt))
    stride = max(1, int(round(cfg.cadence / cfg.dt)))
    mode_rows, cell_rows = [], []

    def observe(collisions):
        rec = snapshot(ens, frame, collisions, cfg.moment_orders)
        modes = spatial_mode_amplitudes(ens, cfg.k_max)
        for row in modes.itertuples():
            if row.k == 0:
                continue
            mode_rows.append({"t": ens.t, "k": row.k, "abs_rho_hat": abs(row.rho_hat),
                              "arg_rho_hat": float(np.angle(row.rho_hat)),
                              "abs_mom1_hat": abs(row.mom1_hat)})
        rec.extra["abs_rho_hat_1"] = float(abs(modes.rho_hat[1]))
        cells = ens.cell_index()
        counts = np.bincount(cells, minlength=ens.n_cells)
        e_cell = np.bincount(cells, weights=np.einsum("ij,ij->i", ens.velocities, ens.velocities),
                             minlength=ens.n_cells)
        u_cell = np.bincount(cells, weights=ens.velocities[:, 0], minlength=ens.n_cells)
        with np.errstate(invalid="ignore", divide="ignore"):
            for c in range(ens.n_cells):
                cell_rows.append({"t": ens.t, "cell": c, "count": int(counts[c]),
                                  "u1": u_cell[c] / counts[c] if counts[c] else 0.0,
                                  "energy": e_cell[c] / counts[c] if counts[c] else 0.0})
        return rec

    collisions = 0
    frame.update_beta(ens, cfg.alpha)
    records = [observe(collisions)]
    for n in range(1, n_steps + 1):
        collisions += stepper.step(ens, frame)
        ens.t = n * cfg.dt
        if n % stride == 0 or n == n_steps:
            records.append(observe(collisions))
    result = RunResult(records, ens, frame, wall_time=time.perf_counter() - start)
    result.extra_tables["modes"] = pd.DataFrame(mode_rows)
    result.extra_tables["cells"] = pd.DataFrame(cell_rows)
    return result


def fit_mode_decay(modes: pd.DataFrame, k: int = 1, noise_floor: float = 0.0,
                   t_min: float = 0.0) -> tuple[float, float]:
    """Exponential decay rate of ``|rho_hat_k|`` (positive = decaying) and its
    standard error, fitted while the amplitude stays above ``noise_floor``."""
    sel = modes[(modes.k == k) & (modes.t >= t_min)].sort_values("t")
    t = sel.t.to_numpy()
    a = sel.abs_rho_hat.to_numpy()
    below = np.nonzero(a <= noise_floor)[0]
    stop = below[0] if below.size else a.size
    t, a = t[:stop], a[:stop]
    if t.size < 3:
        raise AnalysisError("mode amplitude falls below the noise floor too early to fit",
                          samples=int(t.size))
    coef, cov = np.polyfit(t, np.log(a), 1, cov=True)
    return float(-coef[0]), float(np.sqrt(cov[0, 0]))
