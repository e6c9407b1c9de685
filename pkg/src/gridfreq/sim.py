"""Time-domain integration of the closed loop and trajectory metrics.

Deterministic runs integrate the linear deviation dynamics with classical
fourth-order Runge-Kutta steps; because the system is linear and inputs are
frozen over each step, the whole update collapses into two precomputed
matrices, which also makes stochastic runs reduce bit-for-bit to the
deterministic ones when every noise gain is zero.

Stochastic runs add Euler-Maruyama noise increments on top of the same
drift update: Gaussian increments of variance dt per channel for w1 and w2,
and the difference quotient of the same w2 path for the derivative channel
w3 (the only discrete reading consistent with w3 = d/dt w2).  The variance
injected through w3 grows like 1/dt; that is the mechanism behind the
unbounded norm of derivative feedback and is deliberately not suppressed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import InverterMode
from .dynamics import StateSpaceModel, SteadyState
from .errors import SimulationDiverged, ValidationError

__all__ = [
    "Disturbance",
    "Metrics",
    "SimConfig",
    "Trajectory",
    "compute_metrics",
    "simulate_deterministic",
    "simulate_stochastic",
]


@dataclass(frozen=True)
class Disturbance:
    """Step change of the power injection at one bus, applied from the first
    grid point at or after ``time`` (no event-time interpolation)."""

    time: float
    bus: int
    delta_p: float


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    horizon: float = 30.0
    disturbances: tuple[Disturbance, ...] = field(default_factory=tuple)
    seed: int | None = None
    noise_enabled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "disturbances", tuple(self.disturbances))
        if self.dt <= 0:
            raise ValidationError("dt must be > 0")
        if self.dt > self.horizon:
            raise ValidationError("dt must not exceed the horizon")
        for dist in self.disturbances:
            if not 0.0 <= dist.time <= self.horizon:
                raise ValidationError(
                    f"disturbance at t={dist.time} outside [0, {self.horizon}]"
                )


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled deviation traces.

    theta_dev/omega_dev/q_r_dev are relative to the pre-disturbance steady
    state; x holds the absolute dynamic-droop states (columns follow
    ``idroop_buses``).
    """

    times: np.ndarray
    theta_dev: np.ndarray
    omega_dev: np.ndarray
    q_r_dev: np.ndarray
    x: np.ndarray
    idroop_buses: tuple[int, ...]
    states: np.ndarray
    base_omega0: float


@dataclass(frozen=True)
class Metrics:
    """nadir: signed extremal frequency deviation; settling_frequency: mean
    deviation over the final 10% of the horizon; peak_inverter_power: max
    |q_r deviation|; empirical_output_variance: time average of sum(dw_i^2)
    over the final 50% (the stationary-variance estimator)."""

    nadir: float
    settling_frequency: float
    peak_inverter_power: float
    empirical_output_variance: float


def _rk4_propagators(a: np.ndarray, injection: np.ndarray, dt: float):
    """Exact per-step maps of classical RK4 applied to dz = (A z + F u) dt
    with u frozen over the step: z+ = phi @ z + psi @ u."""
    dim = a.shape[0]
    ident = np.eye(dim)
    a1 = a * dt
    a2 = a1 @ a1
    a3 = a2 @ a1
    a4 = a3 @ a1
    phi = ident + a1 + a2 / 2.0 + a3 / 6.0 + a4 / 24.0
    psi = (ident * dt + a1 * dt / 2.0 + a2 * dt / 6.0 + a3 * dt / 24.0) @ injection
    return phi, psi


def _input_schedule(config: SimConfig, n_buses: int, times: np.ndarray) -> np.ndarray:
    """Per-sample injection vector; events snap to the first grid point at or
    after their nominal time."""
    u = np.zeros((times.size, n_buses))
    dt = config.dt
    for dist in config.disturbances:
        if not 0 <= dist.bus < n_buses:
            raise ValidationError(f"disturbance bus {dist.bus} out of range")
        start = int(np.ceil(dist.time / dt - 1e-9))
        u[start:, dist.bus] += dist.delta_p
    return u


def _extract_trajectory(model: StateSpaceModel, times, states, u) -> Trajectory:
    n = model.n_buses
    theta = states[:, :n]
    omega = states[:, n : 2 * n]
    x_dev = states[:, 2 * n :]
    # drift part of the frequency derivative; used for the VI power trace
    omega_dot = states @ model.a[n : 2 * n].T + u @ model.injection[n : 2 * n].T

    q_r = np.zeros((times.size, n))
    x_col = {bus: k for k, bus in enumerate(model.idroop_buses)}
    for i, cfg in enumerate(model.configs):
        if cfg.mode is InverterMode.DC:
            q_r[:, i] = -omega[:, i] / cfg.r_r
        elif cfg.mode is InverterMode.VI:
            q_r[:, i] = -omega[:, i] / cfg.r_r - cfg.m_v * omega_dot[:, i]
        elif cfg.mode is InverterMode.IDROOP:
            q_r[:, i] = x_dev[:, x_col[i]]
    x_abs = x_dev + model.reference.x_star[None, :] if x_dev.shape[1] else x_dev
    return Trajectory(
        times=times,
        theta_dev=theta,
        omega_dev=omega,
        q_r_dev=q_r,
        x=x_abs,
        idroop_buses=model.idroop_buses,
        states=states,
        base_omega0=model.reference.omega0,
    )


def _march(model, config, initial_state, noise_increments=None) -> Trajectory:
    n_steps = int(round(config.horizon / config.dt))
    times = np.arange(n_steps + 1) * config.dt
    u = _input_schedule(config, model.n_buses, times)
    phi, psi = _rk4_propagators(model.a, model.injection, config.dt)

    dim = model.n_states
    z = np.zeros(dim) if initial_state is None else np.asarray(initial_state, dtype=float).copy()
    if z.shape != (dim,):
        raise ValidationError(f"initial state must have shape ({dim},)")
    states = np.empty((n_steps + 1, dim))
    states[0] = z
    for k in range(n_steps):
        z = phi @ z + psi @ u[k]
        if noise_increments is not None:
            z = z + noise_increments[k]
        if not np.all(np.isfinite(z)):
            raise SimulationDiverged(
                f"simulation diverged at t={times[k + 1]:.6g}", float(times[k]), states[k].copy()
            )
        states[k + 1] = z
    return _extract_trajectory(model, times, states, u)


def simulate_deterministic(model: StateSpaceModel, config: SimConfig,
                           initial_state=None) -> Trajectory:
    """Integrate the noise-free closed loop under scheduled injection steps."""
    if config.noise_enabled:
        raise ValidationError("deterministic run requires noise_enabled=False")
    return _march(model, config, initial_state)


def simulate_stochastic(model: StateSpaceModel, config: SimConfig,
                        initial_state=None) -> Trajectory:
    """Integrate the closed loop driven by unit-intensity white noise.

    Requires a seed; identical (seed, config) pairs reproduce the trajectory
    exactly.  The w3 channel is driven by (dW2_k - dW2_{k-1}), the difference
    quotient of the same w2 sample path, times its per-step weight.
    """
    if not config.noise_enabled:
        raise ValidationError("stochastic run requires noise_enabled=True")
    if config.seed is None:
        raise ValidationError("stochastic run requires a seed")
    n_steps = int(round(config.horizon / config.dt))
    n = model.n_buses
    rng = np.random.default_rng(config.seed)
    scale = np.sqrt(config.dt)
    dw1 = rng.standard_normal((n_steps, n)) * scale
    dw2 = rng.standard_normal((n_steps, n)) * scale
    dw3 = np.empty_like(dw2)
    dw3[0] = dw2[0]
    dw3[1:] = dw2[1:] - dw2[:-1]
    increments = dw1 @ model.b_w1.T + dw2 @ model.b_w2.T + (dw3 / config.dt) @ model.b_w3.T
    return _march(model, config, initial_state, noise_increments=increments)


def compute_metrics(trajectory: Trajectory, steady: SteadyState | None = None) -> Metrics:
    """Summarize a trajectory.

    The nadir is the frequency excursion in the direction of the disturbance
    (the post-event steady state, when supplied, fixes that direction;
    otherwise the settling mean does).
    """
    omega = trajectory.omega_dev
    n_samples = omega.shape[0]
    tail10 = omega[int(np.floor(0.9 * n_samples)) :]
    settling = float(tail10.mean()) if tail10.size else 0.0

    if steady is not None:
        direction = steady.omega0 - trajectory.base_omega0
    else:
        direction = settling
    if direction < 0:
        nadir = float(omega.min())
    elif direction > 0:
        nadir = float(omega.max())
    else:
        flat = omega.reshape(-1)
        nadir = float(flat[np.argmax(np.abs(flat))]) if flat.size else 0.0

    peak = float(np.abs(trajectory.q_r_dev).max()) if trajectory.q_r_dev.size else 0.0
    tail50 = omega[n_samples // 2 :]
    variance = float((tail50**2).sum(axis=1).mean()) if tail50.size else 0.0
    return Metrics(
        nadir=nadir,
        settling_frequency=settling,
        peak_inverter_power=peak,
        empirical_output_variance=variance,
    )
