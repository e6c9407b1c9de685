"""Transmission network model: buses, lines, susceptance Laplacian, Kron reduction.

The network is an undirected graph whose edges carry positive per-unit
susceptances.  All dynamic analysis in this package runs on a network where
every bus hosts a generator; load buses are eliminated beforehand with
:func:`kron_reduce` / :func:`kron_reduce_network`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "Bus",
    "Line",
    "PowerNetwork",
    "build_laplacian",
    "kron_reduce",
    "kron_reduce_network",
    "laplacian_violations",
    "validate_network",
]

GENERATOR = "generator"
LOAD = "load"

# Per-unit susceptances are O(1)-O(100), so an absolute row-sum tolerance
# of 1e-12 separates real violations from rounding.
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Bus:
    """A network bus, either a generator or a (reducible) load.

    Generator buses carry the swing-dynamics parameters: inertia (s^2*pu),
    damping (pu per rad/s), governor droop (rad/s per pu; its inverse enters
    the dynamics) and a constant power injection (pu).  Load buses carry an
    injection only and must be Kron-reduced away before dynamic analysis.
    """

    id: int
    kind: str = GENERATOR
    inertia: float | None = None
    damping: float = 0.0
    governor_droop: float | None = None
    injection: float = 0.0

    @property
    def is_generator(self) -> bool:
        return self.kind == GENERATOR


@dataclass(frozen=True)
class Line:
    """Transmission line between two buses with positive susceptance (pu).

    Conductances (losses) are outside the model; only the susceptance enters
    the DC power flow.
    """

    from_bus: int
    to_bus: int
    susceptance: float


@dataclass(frozen=True)
class PowerNetwork:
    """Immutable bus/line collection; bus ids must be contiguous 0..n-1."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]

    def __init__(self, buses, lines):
        object.__setattr__(self, "buses", tuple(buses))
        object.__setattr__(self, "lines", tuple(lines))

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def generator_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.is_generator)

    @property
    def all_generators(self) -> bool:
        return all(b.is_generator for b in self.buses)

    def injections(self) -> np.ndarray:
        return np.array([b.injection for b in self.buses], dtype=float)


def _components(n_buses, edges):
    """Connected components (as sorted id lists) of an undirected graph."""
    adjacency = {i: set() for i in range(n_buses)}
    for i, j in edges:
        adjacency[i].add(j)
        adjacency[j].add(i)
    seen = set()
    components = []
    for start in range(n_buses):
        if start in seen:
            continue
        stack = [start]
        component = []
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            component.append(node)
            stack.extend(adjacency[node] - seen)
        components.append(sorted(component))
    return components


def validate_network(network: PowerNetwork) -> list[str]:
    """Collect structural violations; returns an empty list iff valid.

    Never raises: callers that need a hard failure should use the returned
    diagnostics to do so (see :func:`build_laplacian`).
    """
    violations = []
    n = network.n_buses
    ids = [b.id for b in network.buses]
    if ids != list(range(n)):
        violations.append(f"bus ids must be contiguous 0..{n - 1}, got {ids}")
        return violations  # downstream checks index by id

    for bus in network.buses:
        if bus.kind not in (GENERATOR, LOAD):
            violations.append(f"bus {bus.id}: unknown kind {bus.kind!r}")
        if bus.damping < 0:
            violations.append(f"bus {bus.id}: damping must be >= 0, got {bus.damping}")
        if bus.is_generator:
            if bus.inertia is None or bus.inertia <= 0:
                violations.append(f"generator bus {bus.id}: inertia must be > 0")
            if bus.governor_droop is None or bus.governor_droop <= 0:
                violations.append(f"generator bus {bus.id}: governor droop must be > 0")
        else:
            if bus.inertia is not None or bus.governor_droop is not None:
                violations.append(
                    f"load bus {bus.id}: must not carry inertia/governor parameters"
                )

    seen_pairs = set()
    edges = []
    for line in network.lines:
        name = f"line {line.from_bus}-{line.to_bus}"
        if line.from_bus == line.to_bus:
            violations.append(f"{name}: self-loop")
            continue
        if not (0 <= line.from_bus < n and 0 <= line.to_bus < n):
            violations.append(f"{name}: references an unknown bus id")
            continue
        pair = frozenset((line.from_bus, line.to_bus))
        if pair in seen_pairs:
            violations.append(f"{name}: duplicate (parallel lines are not merged)")
        seen_pairs.add(pair)
        if line.susceptance <= 0:
            violations.append(f"{name}: susceptance must be > 0, got {line.susceptance}")
        edges.append((line.from_bus, line.to_bus))

    if n > 0:
        components = _components(n, edges)
        if len(components) > 1:
            violations.append(f"network is disconnected: components {components}")
    return violations


def _require_valid(network: PowerNetwork) -> None:
    violations = validate_network(network)
    if violations:
        raise ValidationError("invalid network: " + "; ".join(violations))


def build_laplacian(network: PowerNetwork) -> np.ndarray:
    """Susceptance-weighted graph Laplacian of a valid, connected network.

    Entry (i, j) is -b_ij for each line, the diagonal holds the sum of
    incident susceptances, and all other entries are zero.
    """
    _require_valid(network)
    n = network.n_buses
    lap = np.zeros((n, n))
    for line in network.lines:
        i, j, b = line.from_bus, line.to_bus, line.susceptance
        lap[i, j] -= b
        lap[j, i] -= b
        lap[i, i] += b
        lap[j, j] += b
    return lap


def laplacian_violations(matrix: np.ndarray, row_sum_tol: float = ROW_SUM_TOL) -> list[str]:
    """Check the structural invariants of a susceptance Laplacian.

    Returns human-readable violations: asymmetry, nonzero row sums (absolute
    tolerance ``row_sum_tol``), positive off-diagonals, or indefiniteness.
    """
    lap = np.asarray(matrix, dtype=float)
    violations = []
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        return [f"matrix is not square: shape {lap.shape}"]
    if not np.allclose(lap, lap.T, rtol=0.0, atol=1e-12):
        violations.append("matrix is not symmetric")
    row_sums = lap.sum(axis=1)
    bad_rows = np.flatnonzero(np.abs(row_sums) > row_sum_tol)
    if bad_rows.size:
        violations.append(f"rows {bad_rows.tolist()} do not sum to zero")
    off = lap - np.diag(np.diag(lap))
    if np.any(off > 1e-12):
        violations.append("positive off-diagonal entries present")
    eigenvalues = np.linalg.eigvalsh(0.5 * (lap + lap.T))
    if eigenvalues.size and eigenvalues[0] < -1e-9:
        violations.append(f"matrix is not positive semidefinite (min eig {eigenvalues[0]:.3e})")
    return violations


def kron_reduce(laplacian: np.ndarray, retained) -> np.ndarray:
    """Eliminate all buses not in ``retained`` via the Schur complement.

    Rows/columns of the result follow ``sorted(retained)``.  The eliminated
    block must be invertible, which holds whenever every eliminated bus
    connects (possibly indirectly) to a retained one.
    """
    lap = np.asarray(laplacian, dtype=float)
    n = lap.shape[0]
    retained = sorted(set(int(i) for i in retained))
    if not retained:
        raise ValidationError("Kron reduction needs a nonempty retained set")
    if retained[0] < 0 or retained[-1] >= n:
        raise ValidationError(f"retained ids {retained} out of range 0..{n - 1}")
    eliminated = sorted(set(range(n)) - set(retained))
    if not eliminated:
        return lap.copy()

    # A load island (eliminated component with no tie to a retained bus)
    # makes the eliminated block singular; report it by name instead of
    # failing inside the linear solve.
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if lap[i, j] != 0.0]
    sub_edges = [(i, j) for i, j in edges if i in eliminated and j in eliminated]
    index_of = {bus: k for k, bus in enumerate(eliminated)}
    for component in _components(len(eliminated), [(index_of[i], index_of[j]) for i, j in sub_edges]):
        members = [eliminated[k] for k in component]
        tied = any(
            lap[i, j] != 0.0 for i in members for j in retained
        )
        if not tied:
            raise ValidationError(
                f"eliminated buses {members} form an island with no connection "
                "to retained buses; the reduction is singular"
            )

    l_rr = lap[np.ix_(retained, retained)]
    l_re = lap[np.ix_(retained, eliminated)]
    l_ee = lap[np.ix_(eliminated, eliminated)]
    reduced = l_rr - l_re @ np.linalg.solve(l_ee, l_re.T)
    return 0.5 * (reduced + reduced.T)


def kron_reduce_network(network: PowerNetwork) -> tuple[PowerNetwork, dict[int, int]]:
    """Reduce a mixed network to its generator buses.

    Load-bus injections are redistributed onto the retained buses by the
    same Schur elimination that produces the reduced susceptances, so the
    reduced network is dynamically equivalent under the DC flow model.
    Returns the reduced network and a map from original generator ids to
    new contiguous ids.
    """
    _require_valid(network)
    gens = list(network.generator_ids)
    if not gens:
        raise ValidationError("network has no generator buses to retain")
    lap = build_laplacian(network)
    if len(gens) == network.n_buses:
        return network, {i: i for i in gens}

    eliminated = sorted(set(range(network.n_buses)) - set(gens))
    reduced = kron_reduce(lap, gens)
    l_re = lap[np.ix_(gens, eliminated)]
    l_ee = lap[np.ix_(eliminated, eliminated)]
    p = network.injections()
    p_reduced = p[gens] - l_re @ np.linalg.solve(l_ee, p[eliminated])

    id_map = {orig: new for new, orig in enumerate(gens)}
    buses = []
    for new, orig in enumerate(gens):
        bus = network.buses[orig]
        buses.append(
            Bus(
                id=new,
                kind=GENERATOR,
                inertia=bus.inertia,
                damping=bus.damping,
                governor_droop=bus.governor_droop,
                injection=float(p_reduced[new]),
            )
        )
    lines = []
    g = len(gens)
    for i in range(g):
        for j in range(i + 1, g):
            b_eff = -reduced[i, j]
            if b_eff > 1e-12:
                lines.append(Line(from_bus=i, to_bus=j, susceptance=float(b_eff)))
    return PowerNetwork(buses=buses, lines=lines), id_map
