"""Exact second-moment dynamics of uniform shear flow for Maxwell molecules.

For Maxwell molecules the collision contribution to ``d/dt int v_i v_j F``
depends on second moments only.  Symmetrising the weak form of the collision
operator and averaging the pair identity

    T_ij = -b0 [ (v - v*)_i (v - v*)_j - delta_ij |v - v*|^2 / 3 ]

over two independent particles of a normalised distribution (unit mass, zero
momentum) gives ``int (v - v*)_i (v - v*)_j F F* = 2 M_ij``, hence

    dM/dt = S(M) - 2 b0 (M - tr(M) I / 3),
    S(M)_ij = -alpha (delta_i1 M_2j + delta_j1 M_i2).

In the self-similar frame the dilation adds ``-2 beta M``.  Substituting
``M = m exp(s t)`` into the closure and eliminating ``m`` yields the cubic

    s (s + 2 b0)^2 = 4/3 alpha^2 b0,

whose positive root is twice the self-similar rate ``beta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractViolation


@dataclass
class MomentState:
    """Mass, momentum and second-moment tensor at time ``t``."""

    M: np.ndarray
    rho: float = 1.0
    u: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float = 0.0

    def __post_init__(self):
        self.M = np.array(self.M, dtype=float).reshape(3, 3)
        self.u = np.array(self.u, dtype=float).reshape(3)

    @property
    def trace(self) -> float:
        return float(np.trace(self.M))

    @property
    def heat_flux(self) -> float:
        return float(self.M[0, 1])

    def is_normalized(self, atol=1e-12) -> bool:
        return abs(self.rho - 1.0) <= atol and bool(np.all(np.abs(self.u) <= atol))

    def normalized(self) -> "MomentState":
        """Galilean shift to zero momentum and rescale to unit mass."""
        if self.rho <= 0:
            raise ContractViolation("density must be positive", rho=self.rho)
        u = self.u / self.rho
        M = self.M / self.rho - np.outer(u, u)
        return MomentState(M, 1.0, np.zeros(3), self.t)

    @classmethod
    def isotropic(cls, energy=3.0, t=0.0) -> "MomentState":
        return cls(np.eye(3) * (energy / 3.0), t=t)


@dataclass(frozen=True)
class SelfSimilarSolution:
    alpha: float
    b0: float
    s: float
    beta: float
    M_steady: np.ndarray
    residual: float = 0.0

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "b0": self.b0, "s": self.s, "beta": self.beta,
                "M_steady": self.M_steady.tolist()}


def _require_normalized(state: MomentState):
    if not state.is_normalized():
        raise ContractViolation("moment closure expects rho = 1 and u = 0",
                                rho=state.rho, u=state.u.tolist())


def shear_term(M, alpha):
    S = np.zeros((3, 3))
    S[0, :] -= alpha * M[1, :]
    S[:, 0] -= alpha * M[:, 1]
    return S


def collision_term(M, b0):
    return -2.0 * b0 * (M - np.trace(M) / 3.0 * np.eye(3))


def _rhs_matrix(M, alpha, b0, beta=0.0):
    return shear_term(M, alpha) + collision_term(M, b0) - 2.0 * beta * M


def closure_rhs(state: MomentState, alpha: float, b0: float) -> np.ndarray:
    """``dM/dt`` in the physical frame."""
    _require_normalized(state)
    return _rhs_matrix(state.M, alpha, b0)


def rescaled_closure_rhs(state: MomentState, alpha: float, b0: float, beta: float) -> np.ndarray:
    """``dM/dt`` in the self-similar frame (extra dilation ``-2 beta M``)."""
    _require_normalized(state)
    return _rhs_matrix(state.M, alpha, b0, beta)


def integrate_moments(state0: MomentState, alpha: float, b0: float, t_end: float, dt: float,
                      beta: float = 0.0) -> list[MomentState]:
    """Fixed-step RK4 trajectory sampled at every multiple of ``dt``.

    ``beta`` > 0 integrates the self-similar-frame system instead.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive", dt=dt)
    if dt * (2.0 * b0 + abs(alpha) + 2.0 * abs(beta)) >= 0.1:
        raise ConfigError("step too large: need dt*(2*b0 + alpha) < 0.1", dt=dt)
    state0 = state0 if state0.is_normalized() else state0.normalized()
    n_steps = int(round((t_end - state0.t) / dt))
    # the closure is linear, so one RK4 step is the degree-4 Taylor
    # polynomial of dt*A applied to vec(M)
    A = np.column_stack([_rhs_matrix(E.reshape(3, 3), alpha, b0, beta).ravel()
                         for E in np.eye(9)])
    hA = dt * A
    step = np.eye(9) + hA @ (np.eye(9) + hA @ (np.eye(9) / 2 + hA @ (np.eye(9) / 6 + hA / 24)))
    m = state0.M.ravel().copy()
    out = [MomentState(m.reshape(3, 3).copy(), t=state0.t)]
    for n in range(n_steps):
        m = step @ m
        out.append(MomentState(m.reshape(3, 3).copy(), t=state0.t + (n + 1) * dt))
    return out


def trajectory_array(trajectory) -> np.ndarray:
    """Rows ``(t, M11, M12, M22, M33, trace)``."""
    return np.array([[s.t, s.M[0, 0], s.M[0, 1], s.M[1, 1], s.M[2, 2], s.trace]
                     for s in trajectory])


def growth_cubic(s, alpha, b0):
    return s * (s + 2.0 * b0) ** 2 - 4.0 / 3.0 * alpha * alpha * b0


def growth_rate_exact(alpha: float, b0: float) -> SelfSimilarSolution:
    """Positive root of ``s (s + 2 b0)^2 = 4/3 alpha^2 b0`` and the steady
    second-moment shape normalised to trace 3."""
    if alpha < 0 or b0 <= 0:
        raise ContractViolation("need alpha >= 0 and b0 > 0", alpha=alpha, b0=b0)
    if alpha == 0:
        return SelfSimilarSolution(0.0, b0, 0.0, 0.0, np.eye(3))
    c = 4.0 / 3.0 * alpha * alpha * b0
    lo, hi = 0.0, max(alpha, c ** (1.0 / 3.0))
    # cubic is increasing on s >= 0, negative at 0 and positive at hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if growth_cubic(mid, alpha, b0) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(hi, 1e-300):
            break
    s = 0.5 * (lo + hi)
    for _ in range(4):
        deriv = (s + 2.0 * b0) * (3.0 * s + 2.0 * b0)
        step = growth_cubic(s, alpha, b0) / deriv
        s -= step
        if abs(step) <= 1e-17 * s:
            break
    e = 3.0
    M22 = 2.0 * b0 * e / (3.0 * (s + 2.0 * b0))
    M12 = -s * e / (2.0 * alpha)
    M = np.diag([e - 2.0 * M22, M22, M22])
    M[0, 1] = M[1, 0] = M12
    return SelfSimilarSolution(alpha, b0, s, 0.5 * s, M, abs(growth_cubic(s, alpha, b0)))


def fit_log_trace_slope(trajectory, t_min: float, t_max: float) -> float:
    """Least-squares slope of ``log trace(M)`` over ``[t_min, t_max]``."""
    arr = trajectory_array(trajectory)
    sel = (arr[:, 0] >= t_min) & (arr[:, 0] <= t_max)
    if sel.sum() < 2:
        raise ConfigError("fit window contains fewer than two samples")
    slope, _ = np.polyfit(arr[sel, 0], np.log(arr[sel, 5]), 1)
    return float(slope)
