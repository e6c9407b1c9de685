"""Network document ingestion and emission (versioned JSON schema).

A document carries buses, lines, per-generator inverter configs, per-bus
noise gains and optional scheduled injection steps.  Parsing and rendering
round-trip exactly: a document emitted by :func:`document_to_obj` re-parses
to an identical in-memory model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .control import InverterConfig, InverterMode, NoiseGains
from .errors import ValidationError
from .network import Bus, Line, PowerNetwork, kron_reduce_network, validate_network
from .sim import Disturbance

__all__ = [
    "NetworkDocument",
    "ReducedSystem",
    "SCHEMA_VERSION",
    "document_to_obj",
    "load_document",
    "parse_document",
    "reduce_document",
    "save_document",
]

SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class NetworkDocument:
    schema_version: str
    network: PowerNetwork
    inverters: tuple[InverterConfig, ...]  # aligned with generator buses, in id order
    noise: tuple[NoiseGains, ...]  # aligned with all buses, in id order
    disturbances: tuple[Disturbance, ...]
    comment: str | None = None


@dataclass(frozen=True)
class ReducedSystem:
    """Generator-only system ready for dynamic analysis, with the map from
    original bus ids to reduced indices."""

    network: PowerNetwork
    configs: tuple[InverterConfig, ...]
    noise: tuple[NoiseGains, ...]
    disturbances: tuple[Disturbance, ...]
    id_map: dict[int, int]


def _require(condition, message):
    if not condition:
        raise ValidationError(message)


def parse_document(obj: dict) -> NetworkDocument:
    """Build a document from a decoded JSON object, validating as we go."""
    _require(isinstance(obj, dict), "document root must be an object")
    version = obj.get("schema_version")
    _require(version == SCHEMA_VERSION, f"unsupported schema_version {version!r}")

    buses = []
    for entry in obj.get("buses", []):
        buses.append(
            Bus(
                id=int(entry["id"]),
                kind=entry.get("kind", "generator"),
                inertia=entry.get("inertia"),
                damping=float(entry.get("damping", 0.0)),
                governor_droop=entry.get("governor_droop"),
                injection=float(entry.get("injection", 0.0)),
            )
        )
    lines = []
    for entry in obj.get("lines", []):
        lines.append(
            Line(
                from_bus=int(entry["from"]),
                to_bus=int(entry["to"]),
                susceptance=float(entry["susceptance"]),
            )
        )
    network = PowerNetwork(buses=buses, lines=lines)
    violations = validate_network(network)
    _require(not violations, "invalid network: " + "; ".join(violations))

    generator_ids = set(network.generator_ids)
    by_bus: dict[int, InverterConfig] = {}
    for entry in obj.get("inverters", []):
        bus = int(entry["bus"])
        _require(bus in generator_ids, f"inverter entry references non-generator bus {bus}")
        _require(bus not in by_bus, f"duplicate inverter entry for bus {bus}")
        kwargs = {
            key: entry[key] for key in ("q0", "r_r", "m_v", "delta", "nu") if key in entry
        }
        by_bus[bus] = InverterConfig(mode=InverterMode(entry["mode"]), **kwargs)
    inverters = tuple(
        by_bus.get(bus_id, InverterConfig.constant_power(0.0))
        for bus_id in sorted(generator_ids)
    )

    noise_by_bus: dict[int, NoiseGains] = {}
    for entry in obj.get("noise", []):
        bus = int(entry["bus"])
        _require(0 <= bus < network.n_buses, f"noise entry references unknown bus {bus}")
        _require(bus not in noise_by_bus, f"duplicate noise entry for bus {bus}")
        noise_by_bus[bus] = NoiseGains(
            k1=float(entry.get("k1", 0.0)),
            k2=float(entry.get("k2", 0.0)),
            k3=float(entry.get("k3", 0.0)),
        )
    noise = tuple(noise_by_bus.get(i, NoiseGains()) for i in range(network.n_buses))

    disturbances = []
    for entry in obj.get("disturbances", []):
        bus = int(entry["bus"])
        _require(bus in generator_ids, f"disturbance targets non-generator bus {bus}")
        disturbances.append(
            Disturbance(time=float(entry["time"]), bus=bus, delta_p=float(entry["delta_p"]))
        )

    return NetworkDocument(
        schema_version=version,
        network=network,
        inverters=inverters,
        noise=noise,
        disturbances=tuple(disturbances),
        comment=obj.get("comment"),
    )


def document_to_obj(doc: NetworkDocument) -> dict:
    """Render a document back to a JSON-ready object with stable key order."""
    obj: dict = {"schema_version": doc.schema_version}
    if doc.comment is not None:
        obj["comment"] = doc.comment
    obj["buses"] = []
    for bus in doc.network.buses:
        entry: dict = {"id": bus.id, "kind": bus.kind}
        if bus.inertia is not None:
            entry["inertia"] = bus.inertia
        entry["damping"] = bus.damping
        if bus.governor_droop is not None:
            entry["governor_droop"] = bus.governor_droop
        entry["injection"] = bus.injection
        obj["buses"].append(entry)
    obj["lines"] = [
        {"from": ln.from_bus, "to": ln.to_bus, "susceptance": ln.susceptance}
        for ln in doc.network.lines
    ]
    obj["inverters"] = []
    for bus_id, cfg in zip(sorted(doc.network.generator_ids), doc.inverters):
        entry = {"bus": bus_id, "mode": cfg.mode.value, "q0": cfg.q0}
        for key in ("r_r", "m_v", "delta", "nu"):
            value = getattr(cfg, key)
            if value is not None:
                entry[key] = value
        obj["inverters"].append(entry)
    obj["noise"] = [
        {"bus": i, "k1": g.k1, "k2": g.k2, "k3": g.k3} for i, g in enumerate(doc.noise)
    ]
    if doc.disturbances:
        obj["disturbances"] = [
            {"time": d.time, "bus": d.bus, "delta_p": d.delta_p} for d in doc.disturbances
        ]
    return obj


def load_document(path) -> NetworkDocument:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return parse_document(obj)


def save_document(doc: NetworkDocument, path) -> None:
    Path(path).write_text(json.dumps(document_to_obj(doc), indent=2) + "\n")


def reduce_document(doc: NetworkDocument) -> ReducedSystem:
    """Kron-reduce a document's network and re-index everything to it."""
    reduced, id_map = kron_reduce_network(doc.network)
    noise = tuple(doc.noise[orig] for orig in sorted(id_map, key=id_map.get))
    disturbances = tuple(
        Disturbance(time=d.time, bus=id_map[d.bus], delta_p=d.delta_p)
        for d in doc.disturbances
    )
    return ReducedSystem(
        network=reduced,
        configs=doc.inverters,
        noise=noise,
        disturbances=disturbances,
        id_map=id_map,
    )
