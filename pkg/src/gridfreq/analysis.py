"""H2 performance, modal decomposition, and steady-state optimal allocation.

Two independent routes exist for the squared H2 norm: the observability
Gramian (valid only when no derivative-measurement noise couples into the
loop) and direct frequency-domain quadrature of the weighted transfer
function, which handles the correlated w3 = d/dt w2 channel by substituting
s * w2 for it.  A nonzero high-frequency feedthrough on the substituted
channel makes the norm infinite; the limiting gain is reported instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .control import InverterMode
from .dynamics import StateSpaceModel, steady_state
from .errors import NumericalError, ValidationError
from .network import PowerNetwork, build_laplacian

__all__ = [
    "H2Result",
    "ModalDecomposition",
    "ModeSystem",
    "OptimalAllocation",
    "OptimalityReport",
    "h2_closed_form",
    "h2_frequency_weighted",
    "h2_gramian",
    "modal_decompose",
    "mode_norms",
    "optimal_allocation",
    "solve_lyapunov",
    "verify_steady_state_optimality",
]

# Limiting gains below this are treated as roundoff, not true feedthrough.
FEEDTHROUGH_TOL = 1e-9
# Quadrature grid: points per decade, base decade range, and the relative
# contribution threshold that stops the decade extension.
QUAD_POINTS_PER_DECADE = 2000
QUAD_DECADE_LO = -4
QUAD_DECADE_HI = 4
QUAD_TAIL_REL = 1e-6
QUAD_MAX_EXTRA_DECADES = 10


@dataclass(frozen=True)
class H2Result:
    """Squared H2 norm: either a finite value or "infinite" with the
    high-frequency gain that certifies the divergence."""

    kind: str  # "finite" | "infinite"
    value: float | None = None
    feedthrough_gain: float | None = None

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"


def solve_lyapunov(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Solve A^T X + X A + Q = 0 as a dense vectorized (Kronecker) system.

    A must be Hurwitz; eigenvalues on or right of the imaginary axis are
    rejected (deflate structural zero modes before calling).  The state
    dimension stays small here, so the O(d^6) solve is acceptable and keeps
    the implementation independent of library Lyapunov routines.
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    d = a.shape[0]
    if a.shape != (d, d) or q.shape != (d, d):
        raise ValidationError(f"shape mismatch: A {a.shape}, Q {q.shape}")
    eigenvalues = np.linalg.eigvals(a)
    worst = float(eigenvalues.real.max()) if d else -np.inf
    if worst > 1e-12:
        raise NumericalError(
            f"state matrix has eigenvalues in the right half-plane (max Re = {worst:.3e})"
        )
    if d and worst > -1e-12:
        raise NumericalError(
            "state matrix has eigenvalues on the imaginary axis; "
            "project out the structural zero mode before solving"
        )
    ident = np.eye(d)
    system = np.kron(a.T, ident) + np.kron(ident, a.T)
    x = np.linalg.solve(system, -q.reshape(-1)).reshape(d, d)
    x = 0.5 * (x + x.T)
    residual = np.linalg.norm(a.T @ x + x @ a + q)
    bound = 1e-8 * max(np.linalg.norm(q), 1e-30)
    if residual > bound:
        raise NumericalError(
            f"Lyapunov residual {residual:.3e} exceeds {bound:.3e}; system too ill-conditioned"
        )
    return x


def _complement_basis(null_vectors: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the given rows."""
    rows = np.atleast_2d(np.asarray(null_vectors, dtype=float))
    return scipy.linalg.null_space(rows)


def _deflate(a, b, c, null_vectors):
    """Project the dynamics onto the complement of known right-null vectors.

    The projected-out directions must be A-invariant and unobservable (true
    for the uniform-angle mode), in which case the reduced triple realizes
    exactly the same transfer function with a Hurwitz state matrix.
    """
    if null_vectors is None:
        return a, b, c
    w = _complement_basis(null_vectors)
    return w.T @ a @ w, w.T @ b, c @ w


def _gramian_norm(a, b, c, null_vectors=None) -> float:
    at, bt, ct = _deflate(a, b, c, null_vectors)
    x = solve_lyapunov(at, ct.T @ ct)
    value = float(np.trace(bt.T @ x @ bt))
    return max(value, 0.0)


def h2_gramian(model: StateSpaceModel) -> H2Result:
    """Squared H2 norm via the observability Gramian (needs k3 decoupled).

    Refuses models with derivative-measurement noise in the loop, because
    w3 is then the derivative of w2 rather than an independent channel; use
    :func:`h2_frequency_weighted` for those.
    """
    if model.derivative_noise_present:
        raise ValidationError(
            "model couples frequency-derivative noise (k3 with m_v or nu); "
            "the Gramian formula assumes independent channels - use "
            "h2_frequency_weighted instead"
        )
    value = _gramian_norm(model.a, model.b, model.c, model.rotation_null_vector)
    return H2Result(kind="finite", value=value)


def h2_closed_form(kind: str, n: int, m: float, d: float, r_g: float,
                   r_r: float | None = None, k1: float = 0.0, k2: float = 0.0) -> float:
    """Squared H2 norm of a homogeneous fleet in closed form.

    kind "DC": droop-controlled inverters on every bus,
    n*(k1^2 + (k2/r_r)^2) / (2m*(d + 1/r_g + 1/r_r)).
    kind "SWING": no inverter response at all (1/r_r = k2 = 0),
    n*k1^2 / (2m*(d + 1/r_g)).
    """
    if m <= 0 or r_g <= 0:
        raise ValidationError("m and r_g must be > 0")
    if kind == "SWING":
        damping = d + 1.0 / r_g
        if damping <= 0:
            raise ValidationError("nonpositive total damping")
        return n * k1 * k1 / (2.0 * m * damping)
    if kind == "DC":
        if r_r is None or r_r <= 0:
            raise ValidationError("DC closed form needs r_r > 0")
        damping = d + 1.0 / r_g + 1.0 / r_r
        if damping <= 0:
            raise ValidationError("nonpositive total damping")
        return n * (k1 * k1 + (k2 / r_r) ** 2) / (2.0 * m * damping)
    raise ValidationError(f"unknown closed form kind {kind!r} (expected DC or SWING)")


class _Resolvent:
    """Fast evaluator of squared Frobenius norms ||C (iw I - A)^-1 B||_F^2.

    Uses an eigendecomposition of A when it is well conditioned, falling
    back to batched direct solves otherwise.
    """

    def __init__(self, a, b, c):
        self.a = a
        self.b = b
        self.c = c
        self._eig = None
        try:
            lam, vec = np.linalg.eig(a)
            if np.linalg.cond(vec) < 1e10:
                p = c @ vec
                q = np.linalg.solve(vec, b)
                weights = (p.conj().T @ p) * (q @ q.conj().T).T
                self._eig = (lam, weights)
        except np.linalg.LinAlgError:
            pass

    def frob_sq(self, omegas: np.ndarray) -> np.ndarray:
        if self._eig is not None:
            lam, weights = self._eig
            e = 1.0 / (1j * omegas[:, None] - lam[None, :])
            return np.einsum("fa,ab,fb->f", e.conj(), weights, e).real
        out = np.empty(omegas.size)
        dim = self.a.shape[0]
        chunk = max(1, int(2.0e6 / (dim * dim)))
        for start in range(0, omegas.size, chunk):
            w = omegas[start : start + chunk]
            systems = 1j * w[:, None, None] * np.eye(dim) - self.a
            sol = np.linalg.solve(systems, np.broadcast_to(self.b, (w.size, *self.b.shape)))
            g = self.c @ sol
            out[start : start + chunk] = np.sum(np.abs(g) ** 2, axis=(1, 2))
        return out


def _weighted_quadrature(a, b_eff, c) -> float:
    """(1/2pi) * integral over all real frequencies of ||G(iw)||_F^2.

    Trapezoid rule on a log grid (QUAD_POINTS_PER_DECADE per decade over
    10^QUAD_DECADE_LO..10^QUAD_DECADE_HI rad/s), extended decade by decade
    while the newest decade still contributes >= QUAD_TAIL_REL of the total.
    A flat strip below the grid and a 1/w^2 tail above it close the ends.
    By symmetry the two-sided integral is twice the one-sided one.
    """
    if not np.any(b_eff):
        return 0.0
    resolvent = _Resolvent(a, b_eff, c)

    def decade(dec):
        omegas = np.logspace(dec, dec + 1, QUAD_POINTS_PER_DECADE + 1)
        return float(np.trapezoid(resolvent.frob_sq(omegas), omegas))

    total = sum(decade(d) for d in range(QUAD_DECADE_LO, QUAD_DECADE_HI))
    hi = QUAD_DECADE_HI
    for _ in range(QUAD_MAX_EXTRA_DECADES):
        contribution = decade(hi)
        total += contribution
        hi += 1
        if contribution < QUAD_TAIL_REL * total:
            break
    else:
        tail = float(resolvent.frob_sq(np.array([10.0**hi]))[0]) * 10.0**hi
        raise NumericalError(
            "frequency quadrature did not converge: partial value "
            f"{total / np.pi:.6e}, tail bound {tail / np.pi:.3e}"
        )

    omega_lo = 10.0**QUAD_DECADE_LO
    strip = float(resolvent.frob_sq(np.array([omega_lo]))[0]) * omega_lo
    omega_hi = 10.0**hi
    tail = float(resolvent.frob_sq(np.array([omega_hi]))[0]) * omega_hi
    return (total + strip + tail) / np.pi


def h2_frequency_weighted(model: StateSpaceModel) -> H2Result:
    """Squared H2 norm with the derivative-noise channel folded into w2.

    Substituting w3(s) = s*w2(s) gives the effective transfer
    G(s) = C (sI - A)^-1 [B1 | B2 + s*B3]
         = [C (sI - A)^-1 B1 | C (sI - A)^-1 (B2 + A B3) + C B3].
    A nonzero direct term C B3 means the norm is infinite; its largest
    singular value is returned as the limiting gain (cross-checked against
    the transfer function evaluated at 1 MHz).  Otherwise the strictly
    proper effective system is integrated numerically.
    """
    feedthrough = model.c @ model.b_w3
    gain = float(np.linalg.norm(feedthrough, 2)) if feedthrough.size else 0.0

    at, bt, ct = _deflate(model.a, model.b, model.c, model.rotation_null_vector)
    n = model.n_buses
    b1, b2, b3 = bt[:, :n], bt[:, n : 2 * n], bt[:, 2 * n :]

    if gain > FEEDTHROUGH_TOL:
        omega_check = 2.0 * np.pi * 1e6
        g2 = np.linalg.solve(1j * omega_check * np.eye(at.shape[0]) - at,
                             b2 + 1j * omega_check * b3)
        numeric = float(np.linalg.norm(ct @ g2, 2))
        if abs(numeric - gain) > 1e-4 * (1.0 + gain):
            raise NumericalError(
                f"feedthrough cross-check failed: analytic {gain:.6e} vs "
                f"numeric {numeric:.6e} at 1 MHz"
            )
        return H2Result(kind="infinite", feedthrough_gain=gain)

    b_eff = np.hstack([b1, b2 + at @ b3])
    return H2Result(kind="finite", value=_weighted_quadrature(at, b_eff, ct))


@dataclass(frozen=True)
class ModeSystem:
    """One decoupled mode of a homogeneous fleet: 2 states for CP/DC/VI,
    3 for IDROOP.  ``null_vector`` marks the unobservable integrator of the
    zero network mode."""

    eigenvalue: float
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    null_vector: np.ndarray | None
    derivative_noise_present: bool


@dataclass(frozen=True)
class ModalDecomposition:
    """Orthonormal diagonalization of the network Laplacian plus the
    per-mode subsystems it decouples a homogeneous fleet into."""

    eigenvalues: np.ndarray
    transform: np.ndarray
    modes: tuple[ModeSystem, ...]


def _homogeneous_scalars(network: PowerNetwork, configs, noise):
    """Extract the shared per-bus parameters, rejecting heterogeneous fleets."""

    def uniform(values, label):
        values = np.asarray(values, dtype=float)
        if values.size and not np.allclose(values, values[0], rtol=1e-12, atol=1e-12):
            raise ValidationError(f"heterogeneous {label}: {values.tolist()}")
        return float(values[0])

    modes = {c.mode for c in configs}
    if len(modes) != 1:
        raise ValidationError(f"heterogeneous inverter modes: {sorted(m.value for m in modes)}")
    mode = modes.pop()
    out = {
        "mode": mode,
        "m": uniform([b.inertia for b in network.buses], "inertia"),
        "d": uniform([b.damping for b in network.buses], "damping"),
        "r_g": uniform([b.governor_droop for b in network.buses], "governor droop"),
        "k1": uniform([g.k1 for g in noise], "k1"),
        "k2": uniform([g.k2 for g in noise], "k2"),
        "k3": uniform([g.k3 for g in noise], "k3"),
    }
    if mode is not InverterMode.CP:
        out["r_r"] = uniform([c.r_r for c in configs], "r_r")
    if mode is InverterMode.VI:
        out["m_v"] = uniform([c.m_v for c in configs], "m_v")
    if mode is InverterMode.IDROOP:
        out["delta"] = uniform([c.delta for c in configs], "delta")
        out["nu"] = uniform([c.nu for c in configs], "nu")
    return out


def _mode_system(lam, p) -> ModeSystem:
    mode = p["mode"]
    m, d, r_g = p["m"], p["d"], p["r_g"]
    k1, k2, k3 = p["k1"], p["k2"], p["k3"]
    rg_inv = 1.0 / r_g
    if mode is InverterMode.IDROOP:
        rr_inv = 1.0 / p["r_r"]
        delta, nu = p["delta"], p["nu"]
        swing_damp = d + rg_inv
        a = np.array(
            [
                [0.0, 1.0, 0.0],
                [-lam / m, -swing_damp / m, 1.0 / m],
                [nu * lam / m, -delta * rr_inv + nu * swing_damp / m, -delta - nu / m],
            ]
        )
        b = np.array(
            [
                [0.0, 0.0, 0.0],
                [k1 / m, 0.0, 0.0],
                [-nu * k1 / m, -delta * k2 * rr_inv, -nu * k3],
            ]
        )
        c = np.array([[0.0, 1.0, 0.0]])
        null = np.array([1.0, 0.0, 0.0]) if abs(lam) < 1e-12 else None
        return ModeSystem(float(lam), a, b, c, null, nu * k3 != 0.0)

    rr_inv = 0.0 if mode is InverterMode.CP else 1.0 / p["r_r"]
    m_v = p.get("m_v", 0.0)
    m_hat = m + m_v
    d_hat = d + rg_inv + rr_inv
    a = np.array([[0.0, 1.0], [-lam / m_hat, -d_hat / m_hat]])
    b = np.array(
        [[0.0, 0.0, 0.0], [k1 / m_hat, -k2 * rr_inv / m_hat, -k3 * m_v / m_hat]]
    )
    c = np.array([[0.0, 1.0]])
    null = np.array([1.0, 0.0]) if abs(lam) < 1e-12 else None
    return ModeSystem(float(lam), a, b, c, null, m_v * k3 != 0.0)


def modal_decompose(network: PowerNetwork, configs, noise=None) -> ModalDecomposition:
    """Decouple a homogeneous fleet into independent per-mode subsystems.

    The orthonormal transform diagonalizes the susceptance Laplacian, with
    the first column fixed to the uniform vector (the zero mode).  Requires
    identical parameters on every bus; heterogeneous input is rejected.
    """
    from .control import NoiseGains

    if noise is None:
        noise = [NoiseGains() for _ in range(network.n_buses)]
    params = _homogeneous_scalars(network, configs, noise)
    lap = build_laplacian(network)
    eigenvalues, transform = np.linalg.eigh(lap)
    eigenvalues = eigenvalues.copy()
    if abs(eigenvalues[0]) > 1e-9:
        raise NumericalError(f"smallest Laplacian eigenvalue {eigenvalues[0]:.3e} not ~0")
    eigenvalues[0] = 0.0
    n = network.n_buses
    transform = transform.copy()
    transform[:, 0] = 1.0 / np.sqrt(n)
    modes = tuple(_mode_system(lam, params) for lam in eigenvalues)
    return ModalDecomposition(eigenvalues=eigenvalues, transform=transform, modes=modes)


def _mode_norm(mode: ModeSystem) -> H2Result:
    b3 = mode.b[:, 2:3]
    if mode.derivative_noise_present:
        gain = float(np.abs(mode.c @ b3).max())
        if gain > FEEDTHROUGH_TOL:
            return H2Result(kind="infinite", feedthrough_gain=gain)
        at, bt, ct = _deflate(mode.a, mode.b, mode.c, mode.null_vector)
        b_eff = np.hstack([bt[:, :1], bt[:, 1:2] + at @ bt[:, 2:3]])
        return H2Result(kind="finite", value=_weighted_quadrature(at, b_eff, ct))
    value = _gramian_norm(mode.a, mode.b, mode.c, mode.null_vector)
    return H2Result(kind="finite", value=value)


def mode_norms(decomposition: ModalDecomposition) -> list[H2Result]:
    """Squared H2 norm of each decoupled mode; their sum equals the
    full-model norm because the modal transform is orthonormal."""
    return [_mode_norm(mode) for mode in decomposition.modes]


@dataclass(frozen=True)
class OptimalAllocation:
    """Cost-minimizing split of an imbalance across resources: equal
    marginal cost alpha_i * dq_i = lambda_star on every participant."""

    delta_q_g: np.ndarray
    delta_q_r: np.ndarray
    lambda_star: float
    ss_cost: float


def optimal_allocation(delta_p: float, alpha_g, alpha_r) -> OptimalAllocation:
    """Minimize sum(alpha/2 * dq^2) subject to sum(dq) = delta_p.

    The stationarity conditions give dq_i = lambda / alpha_i with the
    multiplier lambda = delta_p / sum(1/alpha).
    """
    alpha_g = np.asarray(alpha_g, dtype=float)
    alpha_r = np.asarray(alpha_r, dtype=float)
    if alpha_g.size + alpha_r.size == 0:
        raise ValidationError("no participating resources")
    if np.any(alpha_g <= 0) or np.any(alpha_r <= 0):
        raise ValidationError("cost coefficients must be > 0")
    total_inverse = float((1.0 / alpha_g).sum() + (1.0 / alpha_r).sum())
    lam = delta_p / total_inverse
    dq_g = lam / alpha_g
    dq_r = lam / alpha_r
    cost = float(0.5 * (alpha_g @ dq_g**2) + 0.5 * (alpha_r @ dq_r**2))
    return OptimalAllocation(delta_q_g=dq_g, delta_q_r=dq_r, lambda_star=float(lam), ss_cost=cost)


@dataclass(frozen=True)
class OptimalityReport:
    """Comparison of the closed-loop steady state with the cost-optimal
    allocation (they coincide exactly when droops equal cost coefficients)."""

    passed: bool
    omega0: float
    lambda_star: float
    delta_p: float
    max_gap_g: float
    max_gap_r: float
    note: str = ""


def verify_steady_state_optimality(network: PowerNetwork, configs,
                                   alpha_g=None, alpha_r=None,
                                   tol: float = 1e-9) -> OptimalityReport:
    """Check that the fleet's steady-state response solves the dispatch problem.

    By default the cost coefficients are taken equal to the droops (the
    optimal tuning); passing different alphas exposes the gap.  The
    imbalance is delta_P = sum(p_in + q0) - sum(D_i*omega0), and optimal
    tuning makes the multiplier equal omega0.
    """
    ss = steady_state(network, configs)
    droop_ids = [i for i, c in enumerate(configs) if c.droop_active]
    if alpha_g is None:
        alpha_g = [b.governor_droop for b in network.buses]
    if alpha_r is None:
        alpha_r = [configs[i].r_r for i in droop_ids]
    alpha_g = np.asarray(alpha_g, dtype=float)
    alpha_r = np.asarray(alpha_r, dtype=float)
    if alpha_r.size != len(droop_ids):
        raise ValidationError(
            f"need one alpha_r per droop-active bus ({len(droop_ids)}), got {alpha_r.size}"
        )

    damping = np.array([b.damping for b in network.buses])
    delta_p = float(
        network.injections().sum() + sum(c.q0 for c in configs) - damping.sum() * ss.omega0
    )
    allocation = optimal_allocation(delta_p, alpha_g, alpha_r)
    gap_g = float(np.max(np.abs(allocation.delta_q_g - ss.delta_q_g_star), initial=0.0))
    gap_r = float(
        np.max(np.abs(allocation.delta_q_r - ss.delta_q_r_star[droop_ids]), initial=0.0)
    )
    passed = gap_g <= tol and gap_r <= tol
    note = "" if passed else "steady-state deviations do not match the optimal allocation"
    return OptimalityReport(
        passed=passed,
        omega0=ss.omega0,
        lambda_star=allocation.lambda_star,
        delta_p=delta_p,
        max_gap_g=gap_g,
        max_gap_r=gap_r,
        note=note,
    )
