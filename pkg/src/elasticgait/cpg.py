"""Coupled phase-dependent Hopf oscillators and the foot-trajectory mapping.

One oscillator per leg, legs ordered [FR, FL, HR, HL]. In polar form::

    rho_dot_i = a (mu - rho_i^2) rho_i
    phi_dot_i = omega_i + sum_j rho_j c_ij sin(phi_j - phi_i - Phi_ij)

with ``omega_i = omega_swing`` while ``sin(phi_i) > 0`` and ``omega_stance``
otherwise. ``Phi_ij`` is the desired phase of ``j`` minus the phase of ``i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

LEGS = ("FR", "FL", "HR", "HL")
N_LEGS = 4
TWO_PI = 2.0 * math.pi

DEFAULT_CONVERGENCE = 20.0
DEFAULT_MU = 1.0
DEFAULT_COUPLING = 1.0

# Leg phase offsets relative to FR; biases are pairwise differences of these.
_GAIT_OFFSETS = {
    "trot": (0.0, math.pi, math.pi, 0.0),
    "pronk": (0.0, 0.0, 0.0, 0.0),
}


class IntegrationDivergence(FloatingPointError):
    pass


class UnsupportedGait(ValueError):
    pass


@dataclass(frozen=True)
class CpgParams:
    """The five tunable gait parameters (lengths in m, frequencies in rad/s)."""

    clearance: float
    penetration: float
    step_length: float
    omega_swing: float
    omega_stance: float

    NAMES = ("clearance", "penetration", "step_length", "omega_swing", "omega_stance")

    def __post_init__(self):
        if not self.clearance > 0:
            raise ValueError(f"clearance must be > 0, got {self.clearance}")
        if self.penetration < 0 or self.step_length < 0:
            raise ValueError("penetration and step_length must be >= 0")
        if not (self.omega_swing > 0 and self.omega_stance > 0):
            raise ValueError("oscillator frequencies must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.NAMES])

    @classmethod
    def from_array(cls, values) -> "CpgParams":
        return cls(*(float(v) for v in values))

    def to_dict(self) -> dict:
        return {n: float(getattr(self, n)) for n in self.NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "CpgParams":
        return cls(**{n: float(d[n]) for n in cls.NAMES})

    @classmethod
    def from_durations(cls, swing: float, stance: float, clearance: float,
                       penetration: float, step_length: float) -> "CpgParams":
        return cls(clearance, penetration, step_length, math.pi / swing, math.pi / stance)


@dataclass(frozen=True)
class GaitSpec:
    name: str
    phase_biases: np.ndarray
    zero_step_length: bool


@dataclass
class OscillatorNetwork:
    rho: np.ndarray
    phi: np.ndarray
    couplings: np.ndarray
    phase_biases: np.ndarray
    mu: float = DEFAULT_MU
    a: float = DEFAULT_CONVERGENCE
    # last frequency selected for each oscillator by the integrator
    omega: np.ndarray = field(default_factory=lambda: np.zeros(N_LEGS))

    def copy(self) -> "OscillatorNetwork":
        return replace(self, rho=self.rho.copy(), phi=self.phi.copy(), omega=self.omega.copy())


def gait_spec(name: str) -> GaitSpec:
    try:
        offsets = np.asarray(_GAIT_OFFSETS[name])
    except KeyError:
        raise UnsupportedGait(f"unsupported gait {name!r}; expected one of {sorted(_GAIT_OFFSETS)}")
    biases = offsets[None, :] - offsets[:, None]
    return GaitSpec(name, biases, zero_step_length=(name == "pronk"))


def make_coupling(gait: GaitSpec | str, weight: float = DEFAULT_COUPLING):
    """Return ``(c_ij, Phi_ij)`` for a gait: uniform off-diagonal weights."""
    if isinstance(gait, str):
        gait = gait_spec(gait)
    if gait.name not in _GAIT_OFFSETS:
        raise UnsupportedGait(f"unsupported gait {gait.name!r}")
    if not weight > 0:
        raise ValueError("coupling weight must be positive")
    c = np.full((N_LEGS, N_LEGS), float(weight))
    np.fill_diagonal(c, 0.0)
    return c, np.array(gait.phase_biases, dtype=float)


def init_network(gait: GaitSpec | str, phase0: float = 0.0, weight: float = DEFAULT_COUPLING,
                 mu: float = DEFAULT_MU, a: float = DEFAULT_CONVERGENCE,
                 rng: np.random.Generator | None = None) -> OscillatorNetwork:
    """Network already on the limit cycle with phases matching the gait biases.

    Passing ``rng`` draws every phase independently instead (lock-in tests).
    """
    c, bias = make_coupling(gait, weight)
    if rng is None:
        phi = np.mod(phase0 + bias[0], TWO_PI)
    else:
        phi = rng.uniform(0.0, TWO_PI, N_LEGS)
    return OscillatorNetwork(np.full(N_LEGS, math.sqrt(mu)), phi, c, bias, mu, a)


@njit(cache=True)
def _select_omega(phi, w_swing, w_stance, out):
    for i in range(phi.shape[0]):
        out[i] = w_swing if math.sin(phi[i]) > 0.0 else w_stance


@njit(cache=True)
def _hopf_euler(rho, phi, omega, mu, a, c, bias, w_swing, w_stance, dt, n_steps):
    n = rho.shape[0]
    drho = np.empty(n)
    dphi = np.empty(n)
    for _ in range(n_steps):
        _select_omega(phi, w_swing, w_stance, omega)
        for i in range(n):
            drho[i] = a * (mu - rho[i] * rho[i]) * rho[i]
            s = omega[i]
            for j in range(n):
                if c[i, j] != 0.0:
                    s += rho[j] * c[i, j] * math.sin(phi[j] - phi[i] - bias[i, j])
            dphi[i] = s
        for i in range(n):
            r = rho[i] + dt * drho[i]
            # written so NaN propagates instead of being clamped away
            rho[i] = 0.0 if r < 0.0 else r
            p = phi[i] + dt * dphi[i]
            p = p - 2.0 * math.pi * math.floor(p / (2.0 * math.pi))
            phi[i] = 0.0 if p >= 2.0 * math.pi else p


def select_frequency(phi, params: CpgParams) -> np.ndarray:
    """Per-oscillator frequency: swing on the half-cycle with sin(phi) > 0."""
    out = np.empty(len(phi))
    _select_omega(np.asarray(phi, dtype=float), params.omega_swing, params.omega_stance, out)
    return out


def advance(net: OscillatorNetwork, params: CpgParams, dt: float, n_steps: int = 1) -> OscillatorNetwork:
    """Explicit-Euler integrate ``n_steps`` of size ``dt``; returns a new network."""
    if not 0.0 < dt <= 2e-3:
        raise ValueError(f"oscillator step must be in (0, 2 ms], got {dt}")
    _check_network(net)
    out = net.copy()
    _hopf_euler(out.rho, out.phi, out.omega, out.mu, out.a, out.couplings, out.phase_biases,
                params.omega_swing, params.omega_stance, dt, n_steps)
    _check_network(out)
    return out


def _check_network(net: OscillatorNetwork):
    bad = ~(np.isfinite(net.rho) & np.isfinite(net.phi))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise IntegrationDivergence(f"oscillator {i} ({LEGS[i]}) diverged")


def step_oscillators(net: OscillatorNetwork, params: CpgParams, dt: float) -> OscillatorNetwork:
    return advance(net, params, dt, 1)


def foot_targets(net: OscillatorNetwork, params: CpgParams) -> np.ndarray:
    """Desired (x, z) foot offsets per leg, shape (4, 2), about the neutral stance point.

    z is positive upward (clearance during swing, penetration during stance).
    """
    s = np.sin(net.phi)
    dz = np.where(s > 0.0, params.clearance, params.penetration)
    x = params.step_length * net.rho * np.cos(net.phi)
    z = dz * net.rho * s
    return np.stack([x, z], axis=1)


def duty_and_durations(params: CpgParams) -> tuple[float, float]:
    """Swing and stance durations in seconds (half a cycle of phase each)."""
    return math.pi / params.omega_swing, math.pi / params.omega_stance


def wrap_angle(x):
    """Wrap to [-pi, pi)."""
    return np.mod(np.asarray(x) + math.pi, TWO_PI) - math.pi
