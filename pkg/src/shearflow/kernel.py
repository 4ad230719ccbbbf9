"""Maxwell-molecule angular kernel, derived constants and binary collisions.

The collision kernel depends only on ``z = cos(theta)``, the cosine between
the relative velocity ``v - v_star`` and the scattering direction ``omega``.
Two kernels are supported:

* ``cutoff-maxwell``: ``B0(z) = c * |z|``
* ``tabulated``: ``(z, B0(z))`` samples on [-1, 1], linearly interpolated

Both must respect the angular cutoff bound ``0 <= B0(z) <= C |z|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, ContractViolation

KERNEL_IDS = ("cutoff-maxwell", "tabulated")

_GL_LOW = np.polynomial.legendre.leggauss(10)
_GL_HIGH = np.polynomial.legendre.leggauss(20)


def _gauss_legendre(f, a, b, nodes_weights):
    x, w = nodes_weights
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return half * float(np.dot(w, f(mid + half * x)))


def adaptive_gauss_legendre(f: Callable, a: float, b: float, tol: float = 1e-12,
                            max_depth: int = 40) -> float:
    """Integrate ``f`` over [a, b] by recursive bisection until the 10- and
    20-point Gauss-Legendre rules agree to ``tol`` (absolute)."""
    coarse = _gauss_legendre(f, a, b, _GL_LOW)
    fine = _gauss_legendre(f, a, b, _GL_HIGH)
    if not (np.isfinite(coarse) and np.isfinite(fine)):
        raise ConfigError("non-finite kernel integrand", interval=[a, b])
    if abs(fine - coarse) <= tol or max_depth == 0:
        return fine
    m = 0.5 * (a + b)
    return (adaptive_gauss_legendre(f, a, m, 0.5 * tol, max_depth - 1)
            + adaptive_gauss_legendre(f, m, b, 0.5 * tol, max_depth - 1))


def _integrate_over_kernel(kernel: "KernelSpec", weight: Callable) -> float:
    def integrand(z):
        return kernel.b0_function(z) * weight(z)

    # split at the kink of |z| and at every table node
    breaks = np.unique(np.concatenate([[-1.0, 0.0, 1.0], kernel.breakpoints]))
    return sum(adaptive_gauss_legendre(integrand, lo, hi)
               for lo, hi in zip(breaks[:-1], breaks[1:]))


@dataclass(frozen=True)
class KernelSpec:
    """Immutable angular kernel with its two derived constants.

    ``b0`` is the relaxation coefficient of deviatoric second moments and
    ``nu0`` the (velocity independent) per-particle collision frequency.
    """

    kernel_id: str = "cutoff-maxwell"
    c: float = 1.0
    table_z: np.ndarray | None = field(default=None, repr=False, compare=False)
    table_b: np.ndarray | None = field(default=None, repr=False, compare=False)
    b0: float = field(init=False)
    nu0: float = field(init=False)
    cutoff_constant: float = field(init=False)

    def __post_init__(self):
        if self.kernel_id not in KERNEL_IDS:
            raise ConfigError(f"unknown kernel id {self.kernel_id!r}", choices=list(KERNEL_IDS))
        if not np.isfinite(self.c) or self.c < 0:
            raise ConfigError("kernel amplitude must be finite and non-negative", amplitude=self.c)
        if self.kernel_id == "tabulated":
            z, b = _validate_table(self.table_z, self.table_b)
            object.__setattr__(self, "table_z", z)
            object.__setattr__(self, "table_b", self.c * b)
            nz = z != 0
            cutoff = float(np.max(self.table_b[nz] / np.abs(z[nz])))
        else:
            cutoff = float(self.c)
        object.__setattr__(self, "cutoff_constant", cutoff)
        b0 = compute_b0(self)
        nu0 = compute_nu0(self)
        if not (b0 > 0 and nu0 > 0):
            raise ConfigError("kernel must have b0 > 0 and nu0 > 0", b0=b0, nu0=nu0)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "nu0", nu0)

    @property
    def breakpoints(self) -> np.ndarray:
        if self.kernel_id == "tabulated":
            return self.table_z
        return np.array([0.0])

    def b0_function(self, z):
        """Evaluate ``B0(z)``."""
        z = np.asarray(z, dtype=float)
        if self.kernel_id == "tabulated":
            return np.interp(z, self.table_z, self.table_b)
        return self.c * np.abs(z)

    def sample_cos_theta(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``z`` with density proportional to ``B0(z)`` on [-1, 1]."""
        u = rng.random(size)
        if self.kernel_id == "cutoff-maxwell":
            # |z| density: z = sign * sqrt(u'), reusing one uniform for both
            sign = np.where(u < 0.5, -1.0, 1.0)
            return sign * np.sqrt(np.abs(2.0 * u - 1.0))
        return _invert_piecewise_linear(self.table_z, self.table_b, u)

    def summary(self) -> dict:
        return {"kernel_id": self.kernel_id, "amplitude": self.c,
                "b0": self.b0, "nu0": self.nu0}


def _validate_table(z, b):
    if z is None or b is None:
        raise ConfigError("tabulated kernel requires z and B0 arrays")
    z = np.asarray(z, dtype=float)
    b = np.asarray(b, dtype=float)
    if z.ndim != 1 or z.shape != b.shape or z.size < 3:
        raise ConfigError("kernel table must be two 1-D arrays of equal length >= 3")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(b))):
        raise ConfigError("kernel table contains non-finite values")
    if np.any(np.diff(z) <= 0) or z[0] != -1.0 or z[-1] != 1.0:
        raise ConfigError("kernel table z must increase strictly from -1 to 1")
    if np.any(b < 0):
        raise ConfigError("kernel table has negative B0 values")
    if float(np.interp(0.0, z, b)) != 0.0:
        raise ConfigError("tabulated kernel violates the cutoff bound B0 <= C|z| at z = 0")
    if 0.0 not in z:
        # linear interpolation through a zero at an off-grid point is still bounded
        at = int(np.searchsorted(z, 0.0))
        z = np.insert(z, at, 0.0)
        b = np.insert(b, at, 0.0)
    return z, b


def _invert_piecewise_linear(z, p, u):
    seg_area = 0.5 * (p[:-1] + p[1:]) * np.diff(z)
    cdf = np.concatenate([[0.0], np.cumsum(seg_area)])
    target = u * cdf[-1]
    k = np.clip(np.searchsorted(cdf, target, side="right") - 1, 0, len(seg_area) - 1)
    r = target - cdf[k]
    pa = p[k]
    slope = (p[k + 1] - p[k]) / (z[k + 1] - z[k])
    disc = np.sqrt(np.maximum(pa * pa + 2.0 * slope * r, 0.0))
    denom = pa + disc
    with np.errstate(invalid="ignore", divide="ignore"):
        step = np.where(denom > 0, 2.0 * r / denom, 0.0)
    return np.clip(z[k] + step, -1.0, 1.0)


def load_kernel_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column ``z, B0`` text/CSV file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError("kernel table not found", path=str(path))
    data = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=2)
    if data.shape[1] != 2:
        raise ConfigError("kernel table must have two columns", path=str(path))
    return data[:, 0], data[:, 1]


def make_kernel(kernel_id="cutoff-maxwell", amplitude=1.0, table_path=None) -> KernelSpec:
    if kernel_id == "tabulated":
        if not table_path:
            raise ConfigError("kernel.table_path is required for a tabulated kernel")
        z, b = load_kernel_table(table_path)
        return KernelSpec("tabulated", float(amplitude), table_z=z, table_b=b)
    return KernelSpec(kernel_id, float(amplitude))


def compute_b0(kernel: KernelSpec) -> float:
    """``3 pi * int_{-1}^{1} B0(z) z^2 (1 - z^2) dz``."""
    return 3.0 * np.pi * _integrate_over_kernel(kernel, lambda z: z * z * (1.0 - z * z))


def compute_nu0(kernel: KernelSpec) -> float:
    """``2 pi * int_{-1}^{1} B0(z) dz`` (the Maxwellian mass integral is 1)."""
    return 2.0 * np.pi * _integrate_over_kernel(kernel, np.ones_like)


def collide_pair(v, v_star, omega, atol=1e-12):
    """Post-collision pair in the omega-representation.

    Returns ``(v', v_star')`` with ``v' = v + [(v_star - v).omega] omega``
    and ``v_star' = v_star - [(v_star - v).omega] omega``.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if abs(float(np.dot(omega, omega)) - 1.0) > 2 * atol:
        raise ContractViolation("omega must be a unit vector", norm=float(np.linalg.norm(omega)))
    d = float(np.dot(v_star - v, omega))
    return v + d * omega, v_star - d * omega


def collide_pairs(v, v_star, omega):
    """Vectorised :func:`collide_pair` over rows; no unit check."""
    d = np.einsum("ij,ij->i", v_star - v, omega)[:, None]
    return v + d * omega, v_star - d * omega


def orthonormal_frame(e):
    """Two unit vectors completing each row of ``e`` to a right-handed basis."""
    e = np.atleast_2d(e)
    ref = np.zeros_like(e)
    use_y = np.abs(e[:, 0]) > 0.9
    ref[~use_y, 0] = 1.0
    ref[use_y, 1] = 1.0
    a = np.cross(e, ref)
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b = np.cross(e, a)
    return a, b


def directions_from_cos(rel_dir, z, phi):
    """Unit vectors at polar cosine ``z`` and azimuth ``phi`` about ``rel_dir``."""
    a, b = orthonormal_frame(rel_dir)
    sin_t = np.sqrt(np.maximum(1.0 - z * z, 0.0))[:, None]
    return (z[:, None] * rel_dir + sin_t * (np.cos(phi)[:, None] * a
                                            + np.sin(phi)[:, None] * b))


def sample_scattering_directions(kernel: KernelSpec, rng: np.random.Generator, rel_dir):
    """One omega per row of ``rel_dir`` (unit rows), with ``rel_dir.omega``
    distributed as ``B0`` and a uniform azimuth."""
    rel_dir = np.atleast_2d(np.asarray(rel_dir, dtype=float))
    n = rel_dir.shape[0]
    z = kernel.sample_cos_theta(rng, n)
    phi = rng.random(n) * (2.0 * np.pi)
    return directions_from_cos(rel_dir, z, phi)


def sample_scattering_direction(kernel: KernelSpec, rng: np.random.Generator, rel_dir):
    rel_dir = np.asarray(rel_dir, dtype=float)
    norm = float(np.linalg.norm(rel_dir))
    if norm == 0.0:
        raise ContractViolation("zero relative velocity: skip the pair instead of sampling")
    if abs(norm - 1.0) > 1e-12:
        raise ContractViolation("rel_dir must be a unit vector", norm=norm)
    return sample_scattering_directions(kernel, rng, rel_dir[None, :])[0]


def predicted_beta_leading(alpha: float, b0: float) -> float:
    """Leading-order self-similar rate ``alpha^2 / (6 b0)``."""
    if alpha < 0 or b0 <= 0:
        raise ContractViolation("need alpha >= 0 and b0 > 0", alpha=alpha, b0=b0)
    return alpha * alpha / (6.0 * b0)


def g1_value(v, b0: float):
    """First-order profile correction ``-v1 v2 sqrt(mu(v)) / (2 b0)``."""
    v = np.asarray(v, dtype=float)
    sq = np.sum(v * v, axis=-1)
    sqrt_mu = (2.0 * np.pi) ** -0.75 * np.exp(-0.25 * sq)
    return -v[..., 0] * v[..., 1] * sqrt_mu / (2.0 * b0)
