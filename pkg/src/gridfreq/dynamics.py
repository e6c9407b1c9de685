"""Closed-loop LTI assembly, synchronous frequency, and steady states.

States are deviations about a synchronous steady state: per-bus angle and
frequency deviations, plus one internal state per dynamic-droop inverter.
The frequency-derivative feedback of VI and IDROOP units is eliminated by
substituting the swing equation, so the model stays in explicit standard
form (no descriptor mass matrix).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import InverterConfig, InverterMode, NoiseGains
from .errors import ValidationError
from .network import PowerNetwork, build_laplacian

__all__ = [
    "StateSpaceModel",
    "SteadyState",
    "assemble_closed_loop",
    "sync_frequency",
    "steady_state",
]


@dataclass(frozen=True)
class SteadyState:
    """Synchronous steady state of a fleet.

    theta_star is pinned so bus 0 sits at angle zero (the network only fixes
    angles up to a uniform shift).  x_star holds the dynamic-droop internal
    states (one per IDROOP bus, equal to -omega0/r_r).  The delta_q fields
    use the balance convention of the allocation problem: they are the power
    each resource absorbs from the imbalance
    delta_P = sum(p_in + q0) - sum(D_i * omega0), so
    delta_q_g_star = omega0 / r_g and sum(delta_q) = delta_P.  Note this is
    the negative of the change in injected power.
    """

    omega0: float
    theta_star: np.ndarray
    q_r_star: np.ndarray
    x_star: np.ndarray
    delta_q_g_star: np.ndarray
    delta_q_r_star: np.ndarray


@dataclass(frozen=True)
class StateSpaceModel:
    """Closed-loop model dz = A z dt + B w dt + F u dt, y = C z.

    z stacks (theta deviations, frequency deviations, idroop states); w
    stacks the three per-bus noise channels (w1 injection, w2 frequency
    measurement, w3 frequency-derivative measurement) and u is a per-bus
    power-injection disturbance.  ``derivative_noise_present`` is set when
    any bus couples k3 through a VI or IDROOP gain, in which case w3 is the
    derivative of w2 and the plain Gramian norm does not apply.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    injection: np.ndarray
    n_buses: int
    idroop_buses: tuple[int, ...]
    state_labels: tuple[str, ...]
    input_labels: tuple[str, ...]
    derivative_noise_present: bool
    configs: tuple[InverterConfig, ...]
    noise: tuple[NoiseGains, ...]
    reference: SteadyState

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def b_w1(self) -> np.ndarray:
        return self.b[:, : self.n_buses]

    @property
    def b_w2(self) -> np.ndarray:
        return self.b[:, self.n_buses : 2 * self.n_buses]

    @property
    def b_w3(self) -> np.ndarray:
        return self.b[:, 2 * self.n_buses :]

    @property
    def rotation_null_vector(self) -> np.ndarray:
        """Unit vector of the uniform-angle mode, always in the null space of A."""
        n = self.n_buses
        v = np.zeros(self.n_states)
        v[:n] = 1.0 / np.sqrt(n)
        return v


def _fleet_arrays(network: PowerNetwork, configs):
    if not network.all_generators:
        raise ValidationError(
            "dynamic analysis requires an all-generator network; Kron-reduce load buses first"
        )
    if len(configs) != network.n_buses:
        raise ValidationError(
            f"need one inverter config per bus: {len(configs)} configs for "
            f"{network.n_buses} buses"
        )
    m = np.array([b.inertia for b in network.buses], dtype=float)
    d = np.array([b.damping for b in network.buses], dtype=float)
    rg_inv = np.array([1.0 / b.governor_droop for b in network.buses], dtype=float)
    return m, d, rg_inv


def sync_frequency(network: PowerNetwork, configs) -> float:
    """Common steady-state frequency deviation reached after an imbalance.

    Equals the net injection (including inverter setpoints) divided by the
    total frequency response: load damping, governor droops, and the droop
    slopes of every frequency-responsive inverter (DC, VI and IDROOP alike;
    the dynamic droop settles to the same slope as the static one).
    """
    _, d, rg_inv = _fleet_arrays(network, configs)
    numerator = float(network.injections().sum() + sum(c.q0 for c in configs))
    denominator = float((d + rg_inv).sum())
    denominator += sum(1.0 / c.r_r for c in configs if c.droop_active)
    if denominator <= 0.0:
        raise ValidationError("zero total damping: no frequency-responsive element")
    return numerator / denominator


def steady_state(network: PowerNetwork, configs) -> SteadyState:
    """Full synchronous steady state (frequency, angles, inverter outputs)."""
    m, d, rg_inv = _fleet_arrays(network, configs)
    omega0 = sync_frequency(network, configs)
    rr_inv = np.array([1.0 / c.r_r if c.droop_active else 0.0 for c in configs])
    q0 = np.array([c.q0 for c in configs])

    q_r_star = q0 - rr_inv * omega0
    rhs = network.injections() + q_r_star - (d + rg_inv) * omega0
    lap = build_laplacian(network)
    theta, *_ = np.linalg.lstsq(lap, rhs, rcond=None)
    theta = theta - theta[0]

    x_star = np.array(
        [-omega0 / c.r_r for c in configs if c.mode is InverterMode.IDROOP]
    )
    return SteadyState(
        omega0=omega0,
        theta_star=theta,
        q_r_star=q_r_star,
        x_star=x_star,
        delta_q_g_star=omega0 * rg_inv,
        delta_q_r_star=omega0 * rr_inv,
    )


def assemble_closed_loop(network: PowerNetwork, configs,
                         noise=None) -> StateSpaceModel:
    """Build the deviation-coordinate closed loop for an arbitrary fleet mix.

    VI units fold their derivative feedback into an effective inertia
    m + m_v; IDROOP units contribute one extra state each, with the swing
    equation substituted into the state equation to eliminate the frequency
    derivative.  That substitution also routes the injection noise w1 into
    the IDROOP states (scaled by -nu/m), which is exactly how the controller
    sees the true frequency derivative.
    """
    m, d, rg_inv = _fleet_arrays(network, configs)
    n = network.n_buses
    configs = tuple(configs)
    if noise is None:
        noise = tuple(NoiseGains() for _ in range(n))
    else:
        noise = tuple(noise)
        if len(noise) != n:
            raise ValidationError(f"need one NoiseGains per bus, got {len(noise)}")

    modes = [c.mode for c in configs]
    static_rr_inv = np.array(
        [1.0 / c.r_r if c.mode in (InverterMode.DC, InverterMode.VI) else 0.0 for c in configs]
    )
    m_v = np.array([c.m_v if c.mode is InverterMode.VI else 0.0 for c in configs])
    m_hat = m + m_v
    d_hat = d + rg_inv + static_rr_inv

    idroop_buses = tuple(i for i, c in enumerate(configs) if c.mode is InverterMode.IDROOP)
    n_x = len(idroop_buses)
    delta = np.array([configs[i].delta for i in idroop_buses])
    nu = np.array([configs[i].nu for i in idroop_buses])
    rr_inv_id = np.array([1.0 / configs[i].r_r for i in idroop_buses])

    lap = build_laplacian(network)
    k1 = np.array([g.k1 for g in noise])
    k2 = np.array([g.k2 for g in noise])
    k3 = np.array([g.k3 for g in noise])

    dim = 2 * n + n_x
    a = np.zeros((dim, dim))
    a[:n, n : 2 * n] = np.eye(n)
    a[n : 2 * n, :n] = -lap / m_hat[:, None]
    a[n : 2 * n, n : 2 * n] = -np.diag(d_hat / m_hat)
    for j, i in enumerate(idroop_buses):
        a[n + i, 2 * n + j] = 1.0 / m_hat[i]
    for j, i in enumerate(idroop_buses):
        # x_dot = -delta*(omega/r_r + x) - nu*omega_dot, with omega_dot
        # replaced by the swing equation of bus i.
        a[2 * n + j, :n] = nu[j] * lap[i, :] / m_hat[i]
        a[2 * n + j, n + i] += -delta[j] * rr_inv_id[j] + nu[j] * d_hat[i] / m_hat[i]
        a[2 * n + j, 2 * n + j] += -delta[j]
        for k, i2 in enumerate(idroop_buses):
            a[2 * n + j, 2 * n + k] += -nu[j] * (1.0 if i2 == i else 0.0) / m_hat[i]

    injection = np.zeros((dim, n))
    injection[n : 2 * n, :] = np.diag(1.0 / m_hat)
    for j, i in enumerate(idroop_buses):
        injection[2 * n + j, i] = -nu[j] / m_hat[i]

    b = np.zeros((dim, 3 * n))
    b[:, :n] = injection * k1[None, :]
    for i in range(n):
        b[n + i, n + i] = -static_rr_inv[i] * k2[i] / m_hat[i]
        b[n + i, 2 * n + i] = -m_v[i] * k3[i] / m_hat[i]
    for j, i in enumerate(idroop_buses):
        b[2 * n + j, n + i] = -delta[j] * k2[i] * rr_inv_id[j]
        b[2 * n + j, 2 * n + i] = -nu[j] * k3[i]

    c = np.zeros((n, dim))
    c[:, n : 2 * n] = np.eye(n)

    derivative_noise = bool(np.any(m_v * k3 != 0.0)) or bool(
        np.any(nu * k3[list(idroop_buses)] != 0.0) if n_x else False
    )

    labels = (
        tuple(f"theta_dev_{i}" for i in range(n))
        + tuple(f"omega_dev_{i}" for i in range(n))
        + tuple(f"x_{i}" for i in idroop_buses)
    )
    input_labels = (
        tuple(f"w1_{i}" for i in range(n))
        + tuple(f"w2_{i}" for i in range(n))
        + tuple(f"w3_{i}" for i in range(n))
    )
    return StateSpaceModel(
        a=a,
        b=b,
        c=c,
        injection=injection,
        n_buses=n,
        idroop_buses=idroop_buses,
        state_labels=labels,
        input_labels=input_labels,
        derivative_noise_present=derivative_noise,
        configs=configs,
        noise=noise,
        reference=steady_state(network, configs),
    )
