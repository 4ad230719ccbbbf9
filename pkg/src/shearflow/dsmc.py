"""Direct simulation Monte Carlo for spatially homogeneous uniform shear flow.

Each step splits the kinetic equation into the exact characteristic flow of
the shear (and, in the self-similar frame, dilation) term and a stochastic
Maxwell-molecule collision step.  Maxwell molecules collide at the velocity
independent rate ``nu0`` per particle, so ``N nu0 dt / 2`` pairs are drawn
uniformly per step and no acceptance-rejection is needed.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import DiagnosticsRecord, Histogram1D, Histogram2D, records_to_frame
from .errors import AnalysisError, ConfigError, NumericalGuardError
from .kernel import KernelSpec, collide_pairs, sample_scattering_directions
from .moments import growth_rate_exact

log = logging.getLogger(__name__)

FRAMES = ("physical", "self_similar")
BETA_POLICIES = ("fixed", "dynamic")
SPLITTINGS = ("strang", "lie")
COUNT_POLICIES = ("carry", "poisson")
COLLISION_RATE_GUARD = 0.5


def make_streams(seed: int, n: int = 3) -> list[np.random.Generator]:
    """Independent generators for initial velocities, collisions and positions."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class ParticleEnsemble:
    """Equal-weight velocity samples of the (possibly rescaled) distribution."""

    velocities: np.ndarray
    rng: np.random.Generator
    t: float = 0.0
    partition_rngs: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.velocities.shape[0]

    @property
    def weight(self) -> float:
        return 1.0 / self.N

    def second_moments(self) -> np.ndarray:
        v = self.velocities
        return v.T @ v / self.N

    def momentum(self) -> np.ndarray:
        return self.velocities.sum(axis=0) / self.N


@dataclass
class FrameState:
    frame: str = "physical"
    beta_policy: str = "fixed"
    beta_fixed: float = 0.0
    beta_current: float = 0.0
    collision_carry: float = 0.0
    # integral of beta over time, i.e. log of the velocity scale factor
    log_scale: float = 0.0
    partition_carry: list = field(default_factory=list)

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ConfigError(f"unknown frame {self.frame!r}", choices=list(FRAMES))
        if self.beta_policy not in BETA_POLICIES:
            raise ConfigError(f"unknown beta policy {self.beta_policy!r}",
                              choices=list(BETA_POLICIES))
        if self.frame == "physical":
            self.beta_fixed = 0.0
        self.beta_current = self.beta_fixed if self.beta_policy == "fixed" else 0.0

    def update_beta(self, ens: ParticleEnsemble, alpha: float) -> float:
        if self.frame == "physical":
            self.beta_current = 0.0
        elif self.beta_policy == "dynamic":
            self.beta_current = dynamic_beta(ens, alpha)
        else:
            self.beta_current = self.beta_fixed
        return self.beta_current


def init_maxwellian(N: int, seed=0, normalize_energy: bool = False,
                    shear_perturbation: float = 0.0) -> ParticleEnsemble:
    """Standard-normal velocities with the sample mean removed.

    ``normalize_energy`` rescales to ``<|v|^2> = 3`` exactly;
    ``shear_perturbation`` adds ``eps * v2`` to ``v1`` before centring.
    """
    if N < 2:
        raise ConfigError("need at least two particles", N=N)
    vel_rng, coll_rng, _ = make_streams(seed)
    v = vel_rng.standard_normal((int(N), 3))
    if shear_perturbation:
        v[:, 0] += shear_perturbation * v[:, 1]
    v -= v.mean(axis=0)
    if normalize_energy:
        v *= np.sqrt(3.0 / np.mean(np.sum(v * v, axis=1)))
    return ParticleEnsemble(v, coll_rng)


def shear_flow_map(v: np.ndarray, alpha: float, beta: float, dt: float) -> np.ndarray:
    """Exact characteristic map of ``dV1 = -beta V1 - alpha V2``,
    ``dVi = -beta Vi`` over ``dt``, applied in place to rows of ``v``."""
    if alpha:
        v[:, 0] -= (alpha * dt) * v[:, 1]
    if beta:
        v *= np.exp(-beta * dt)
    return v


def shear_transport_step(ens: ParticleEnsemble, alpha: float, beta: float,
                         dt: float) -> ParticleEnsemble:
    if not dt > 0:
        raise ConfigError("dt must be positive", dt=dt)
    shear_flow_map(ens.velocities, alpha, beta, dt)
    return ens


def _pair_count(expected: float, carry: float, policy: str, rng, cap: int):
    if policy == "poisson":
        n = int(rng.poisson(expected))
        new_carry = carry
    else:
        total = expected + carry
        n = int(np.floor(total))
        new_carry = total - n
    return min(n, cap), new_carry


def collide_selected(v: np.ndarray, i: np.ndarray, j: np.ndarray, kernel: KernelSpec,
                     rng: np.random.Generator) -> int:
    """Collide rows ``i[k]`` with ``j[k]`` in place; returns the non-degenerate count.

    Directions are drawn for every pair so the random stream does not depend
    on how many pairs turn out to have zero relative velocity.
    """
    if i.size == 0:
        return 0
    vi, vj = v[i], v[j]
    g = vi - vj
    gnorm = np.sqrt(np.einsum("ij,ij->i", g, g))
    ok = gnorm > 0
    rel_dir = np.zeros_like(g)
    rel_dir[ok] = g[ok] / gnorm[ok, None]
    rel_dir[~ok, 2] = 1.0
    omega = sample_scattering_directions(kernel, rng, rel_dir)
    new_i, new_j = collide_pairs(vi, vj, omega)
    v[i[ok]] = new_i[ok]
    v[j[ok]] = new_j[ok]
    return int(ok.sum())


def _collide_block(v, lo, hi, kernel, dt, carry, policy, rng):
    n_block = hi - lo
    n_pairs, carry = _pair_count(n_block * kernel.nu0 * dt / 2.0, carry, policy, rng,
                                 n_block // 2)
    if n_pairs == 0:
        return 0, carry
    idx = rng.choice(n_block, 2 * n_pairs, replace=False) + lo
    collide_selected(v, idx[:n_pairs], idx[n_pairs:], kernel, rng)
    return n_pairs, carry


def collision_step(ens: ParticleEnsemble, kernel: KernelSpec, dt: float,
                   frame: FrameState | None = None, count_policy: str = "carry",
                   threads: int = 0) -> int:
    """Execute this step's collisions; returns the number of pairs drawn.

    Each particle collides at most once per step, so second-moment
    anisotropy relaxes by ``1 - 2 b0 dt`` rather than ``exp(-2 b0 dt)``:
    the scheme is first order in ``dt`` and acts like a collision constant
    inflated by about ``b0 dt``.

    With ``ens.partition_rngs`` set, the ensemble is split into contiguous
    virtual sub-cells that collide independently on their own streams
    (optionally on ``threads`` workers); results depend only on the seed and
    the partition count.
    """
    if dt * kernel.nu0 > COLLISION_RATE_GUARD:
        raise NumericalGuardError("collision splitting guard violated: need dt*nu0 <= 0.5",
                                  dt=dt, nu0=kernel.nu0)
    if count_policy not in COUNT_POLICIES:
        raise ConfigError(f"unknown collision count policy {count_policy!r}")
    frame = frame if frame is not None else FrameState()
    v = ens.velocities
    if not ens.partition_rngs:
        n, frame.collision_carry = _collide_block(v, 0, ens.N, kernel, dt,
                                                  frame.collision_carry, count_policy, ens.rng)
        return n
    P = len(ens.partition_rngs)
    bounds = np.linspace(0, ens.N, P + 1).astype(int)
    if len(frame.partition_carry) != P:
        frame.partition_carry = [0.0] * P
    jobs = [(v, bounds[k], bounds[k + 1], kernel, dt, frame.partition_carry[k], count_policy,
             ens.partition_rngs[k]) for k in range(P)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda a: _collide_block(*a), jobs))
    else:
        results = [_collide_block(*a) for a in jobs]
    frame.partition_carry = [c for _, c in results]
    return sum(n for n, _ in results)


def dynamic_beta(ens: ParticleEnsemble, alpha: float) -> float:
    """``-(alpha/3) <v1 v2>``: the rate that keeps the energy at 3."""
    if ens.N == 0:
        raise ConfigError("empty ensemble")
    v = ens.velocities
    return -alpha / 3.0 * float(np.dot(v[:, 0], v[:, 1])) / ens.N


@dataclass
class HomogeneousConfig:
    N: int = 100_000
    alpha: float = 0.1
    dt: float = 0.01
    t_end: float = 10.0
    seed: int = 0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    frame: str = "physical"
    beta_policy: str = "dynamic"
    beta: float | None = None
    splitting: str = "strang"
    count_policy: str = "carry"
    cadence: float = 0.1
    threads: int = 0
    partitions: int = 0
    normalize_energy: bool = False
    shear_perturbation: float = 0.0
    moment_orders: tuple = ()
    hist_from: float | None = None
    hist_bins: int = 32
    hist_half_width: float = 4.0
    speed_hist_max: float = 12.0

    def validate(self):
        if self.N < 2:
            raise ConfigError("run.N must be at least 2", N=self.N)
        if not (self.dt > 0 and self.t_end > 0 and self.cadence > 0):
            raise ConfigError("dt, t_end and cadence must be positive")
        if self.alpha < 0:
            raise ConfigError("run.alpha must be non-negative", alpha=self.alpha)
        if self.splitting not in SPLITTINGS:
            raise ConfigError(f"unknown splitting {self.splitting!r}", choices=list(SPLITTINGS))
        if self.count_policy not in COUNT_POLICIES:
            raise ConfigError(f"unknown count policy {self.count_policy!r}")
        if self.dt * self.kernel.nu0 > COLLISION_RATE_GUARD:
            raise NumericalGuardError("need dt*nu0 <= 0.5", dt=self.dt, nu0=self.kernel.nu0)
        FrameState(self.frame, self.beta_policy)

    def resolved_beta(self) -> float:
        if self.frame == "physical":
            return 0.0
        if self.beta is not None:
            return float(self.beta)
        return growth_rate_exact(self.alpha, self.kernel.b0).beta


@dataclass
class RunResult:
    records: list
    ensemble: ParticleEnsemble
    frame: FrameState
    hist_xy: Histogram2D | None = None
    hist_speed: Histogram1D | None = None
    wall_time: float = 0.0
    extra_tables: dict = field(default_factory=dict)

    @property
    def series(self):
        return records_to_frame(self.records)


def snapshot(ens: ParticleEnsemble, frame: FrameState, collisions: int,
             moment_orders=()) -> DiagnosticsRecord:
    moms = {}
    if moment_orders:
        speed = np.sqrt(np.einsum("ij,ij->i", ens.velocities, ens.velocities))
        for p in moment_orders:
            moms[float(p)] = float(np.mean(speed ** p))
    return DiagnosticsRecord(ens.t, ens.second_moments(), frame.beta_current,
                             frame.log_scale, collisions, moms)


class SplitStepper:
    """Transport/collision splitting shared by the homogeneous and spatial solvers."""

    def __init__(self, cfg, transport, collide):
        self.cfg = cfg
        self.transport = transport
        self.collide = collide

    def step(self, ens, frame: FrameState) -> int:
        cfg = self.cfg
        beta = frame.update_beta(ens, cfg.alpha)
        dt = cfg.dt
        if cfg.splitting == "strang":
            self.transport(ens, frame, beta, 0.5 * dt)
            n = self.collide(ens, frame, dt)
            self.transport(ens, frame, beta, 0.5 * dt)
        else:
            self.transport(ens, frame, beta, dt)
            n = self.collide(ens, frame, dt)
        return n


def run_homogeneous(cfg: HomogeneousConfig, ens: ParticleEnsemble | None = None) -> RunResult:
    """Simulate and return one diagnostics record per ``cfg.cadence``."""
    cfg.validate()
    start = time.perf_counter()
    if ens is None:
        ens = init_maxwellian(cfg.N, cfg.seed, cfg.normalize_energy, cfg.shear_perturbation)
    if cfg.partitions > 1 and not ens.partition_rngs:
        ens.partition_rngs = [np.random.default_rng(s) for s in
                              np.random.SeedSequence([cfg.seed, cfg.partitions]).spawn(cfg.partitions)]
    frame = FrameState(cfg.frame, cfg.beta_policy, cfg.resolved_beta())

    def transport(e, fr, beta, h):
        shear_flow_map(e.velocities, cfg.alpha, beta, h)
        fr.log_scale += beta * h

    def collide(e, fr, h):
        return collision_step(e, cfg.kernel, h, fr, cfg.count_policy, cfg.threads)

    stepper = SplitStepper(cfg, transport, collide)
    n_steps = int(round(cfg.t_end / cfg.dt))
    stride = max(1, int(round(cfg.cadence / cfg.dt)))
    hist_xy = hist_speed = None
    if cfg.hist_from is not None:
        hist_xy = Histogram2D.uniform(cfg.hist_bins, cfg.hist_half_width)
        hist_speed = Histogram1D(np.linspace(0.0, cfg.speed_hist_max, 4 * cfg.hist_bins + 1))

    collisions = 0
    frame.update_beta(ens, cfg.alpha)
    records = [snapshot(ens, frame, collisions, cfg.moment_orders)]
    for n in range(1, n_steps + 1):
        collisions += stepper.step(ens, frame)
        ens.t = n * cfg.dt
        if n % stride == 0 or n == n_steps:
            records.append(snapshot(ens, frame, collisions, cfg.moment_orders))
            if hist_xy is not None and ens.t >= cfg.hist_from - 1e-12:
                hist_xy.add(ens.velocities)
                hist_speed.add(np.linalg.norm(ens.velocities, axis=1))
            if not np.all(np.isfinite(records[-1].M)):
                raise NumericalGuardError("non-finite velocities", t=ens.t)
    wall = time.perf_counter() - start
    log.info("homogeneous run: N=%d steps=%d wall=%.2fs", ens.N, n_steps, wall)
    return RunResult(records, ens, frame, hist_xy, hist_speed, wall)


@dataclass
class BetaEstimate:
    beta: float
    ci_low: float
    ci_high: float
    stderr: float
    window: tuple

    def to_dict(self):
        return {"beta_hat": self.beta, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "stderr": self.stderr, "window": list(self.window)}


def physical_energy(series) -> tuple[np.ndarray, np.ndarray]:
    """``(t, trace)`` with self-similar-frame traces mapped back to the physical frame."""
    t = np.asarray(series["t"], dtype=float)
    trace = np.asarray(series["trace"], dtype=float)
    if "log_scale" in series:
        trace = trace * np.exp(2.0 * np.asarray(series["log_scale"], dtype=float))
    return t, trace


def measure_beta_from_energy(series, transient: float = 0.0, min_span: float | None = None,
                             n_boot: int = 400, block: int | None = None, seed: int = 0,
                             level: float = 0.95) -> BetaEstimate:
    """Half the least-squares slope of ``log(E/3)`` after ``transient``,
    with a moving-block bootstrap confidence interval.

    The window must span ``min_span`` time units; by default ``5/beta_hat``
    whenever the growth is statistically resolved.
    """
    t, energy = physical_energy(series)
    sel = t >= transient
    t, y = t[sel], np.log(energy[sel] / 3.0)
    if t.size < 4:
        raise AnalysisError("fewer than four samples after the transient", transient=transient)
    span = float(t[-1] - t[0])
    X = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    beta_hat = 0.5 * coef[1]
    resid = y - X @ coef

    rng = np.random.default_rng(seed)
    n = t.size
    b = block or max(2, int(round(n ** (1.0 / 3.0))))
    n_blocks = int(np.ceil(n / b))
    starts = rng.integers(0, n - b + 1, size=(n_boot, n_blocks))
    offsets = np.arange(b)
    boot = np.empty(n_boot)
    pinv = np.linalg.pinv(X)
    fitted = X @ coef
    for k in range(n_boot):
        idx = (starts[k][:, None] + offsets).ravel()[:n]
        boot[k] = 0.5 * (pinv @ (fitted + resid[idx]))[1]
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(boot, [tail, 1.0 - tail])
    stderr = float(np.std(boot, ddof=1))
    # centre the interval on the point estimate
    lo, hi = beta_hat - (np.median(boot) - lo), beta_hat + (hi - np.median(boot))

    resolved = lo > 0 or hi < 0
    required = min_span if min_span is not None else (5.0 / abs(beta_hat) if resolved else 0.0)
    if span < required:
        raise AnalysisError("energy series too short to resolve beta",
                            span=span, required_span=required)
    return BetaEstimate(float(beta_hat), float(lo), float(hi), stderr,
                        (float(t[0]), float(t[-1])))
