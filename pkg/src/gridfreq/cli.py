"""Command-line driver: file ingestion, dispatch, machine-readable output.

Every command reads a network document (JSON), prints a JSON summary to
stdout, and optionally writes CSV/JSON artifacts under --out.  Exit codes:
0 success, 1 validation failure (including bad flags), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    h2_closed_form,
    h2_frequency_weighted,
    h2_gramian,
    mode_norms,
    modal_decompose,
    verify_steady_state_optimality,
    _homogeneous_scalars,
)
from .control import InverterMode, check_decentralized_stability
from .dynamics import assemble_closed_loop, steady_state
from .errors import GridFreqError, NumericalError, ValidationError
from .io import load_document, reduce_document
from .sim import SimConfig, compute_metrics, simulate_deterministic, simulate_stochastic
from .sweep import load_sweep_spec, run_sweep

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

TRAJECTORY_CSV = "trajectory.csv"
METRICS_JSON = "metrics.json"
SWEEP_CSV = "sweep.csv"


class _Parser(argparse.ArgumentParser):
    """argparse that exits with code 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _fmt(value) -> str:
    return repr(float(value))


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _load_reduced(path):
    return reduce_document(load_document(path))


def _steady_state_cmd(args) -> int:
    system = _load_reduced(args.network)
    ss = steady_state(system.network, system.configs)
    report = verify_steady_state_optimality(system.network, system.configs)
    _emit(
        {
            "omega0": ss.omega0,
            "theta_star": ss.theta_star.tolist(),
            "q_r_star": ss.q_r_star.tolist(),
            "x_star": ss.x_star.tolist(),
            "delta_q_g_star": ss.delta_q_g_star.tolist(),
            "delta_q_r_star": ss.delta_q_r_star.tolist(),
            "optimality": {
                "passed": report.passed,
                "lambda_star": report.lambda_star,
                "delta_p": report.delta_p,
                "max_gap_g": report.max_gap_g,
                "max_gap_r": report.max_gap_r,
                "note": report.note,
            },
        }
    )
    return EXIT_OK


def _write_trajectory_csv(path: Path, trajectory) -> None:
    n = trajectory.omega_dev.shape[1]
    header = (
        ["t"]
        + [f"theta_dev_{i}" for i in range(n)]
        + [f"omega_dev_{i}" for i in range(n)]
        + [f"q_r_dev_{i}" for i in range(n)]
        + [f"x_{i}" for i in trajectory.idroop_buses]
    )
    blocks = [
        trajectory.times[:, None],
        trajectory.theta_dev,
        trajectory.omega_dev,
        trajectory.q_r_dev,
    ]
    if trajectory.x.shape[1]:
        blocks.append(trajectory.x)
    table = np.hstack(blocks)
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _simulate_cmd(args) -> int:
    system = _load_reduced(args.network)
    if args.stochastic and args.seed is None:
        raise ValidationError("--stochastic requires --seed")
    horizon = args.horizon
    if horizon is None:
        horizon = 2000.0 if args.stochastic else 30.0
    config = SimConfig(
        dt=args.dt,
        horizon=horizon,
        disturbances=system.disturbances,
        seed=args.seed,
        noise_enabled=args.stochastic,
    )
    model = assemble_closed_loop(system.network, system.configs, system.noise)
    if args.stochastic:
        trajectory = simulate_stochastic(model, config)
    else:
        trajectory = simulate_deterministic(model, config)
    metrics = compute_metrics(trajectory)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_trajectory_csv(out_dir / TRAJECTORY_CSV, trajectory)
    summary = {
        "nadir": metrics.nadir,
        "settling_frequency": metrics.settling_frequency,
        "peak_inverter_power": metrics.peak_inverter_power,
        "empirical_output_variance": metrics.empirical_output_variance,
    }
    (out_dir / METRICS_JSON).write_text(json.dumps(summary, indent=2) + "\n")
    _emit(summary)
    return EXIT_OK


def _h2_cmd(args) -> int:
    system = _load_reduced(args.network)
    model = assemble_closed_loop(system.network, system.configs, system.noise)
    if model.derivative_noise_present:
        result = h2_frequency_weighted(model)
        method = "frequency_weighted"
    else:
        result = h2_gramian(model)
        method = "gramian"
    summary = {"kind": result.kind, "method": method}
    if result.is_finite:
        summary["value"] = result.value
    else:
        summary["feedthrough_gain"] = result.feedthrough_gain

    if args.closed_form:
        params = _homogeneous_scalars(system.network, system.configs, system.noise)
        mode = params["mode"]
        n = system.network.n_buses
        if mode is InverterMode.DC:
            reference = h2_closed_form("DC", n, params["m"], params["d"], params["r_g"],
                                       params["r_r"], params["k1"], params["k2"])
        elif mode is InverterMode.CP:
            reference = h2_closed_form("SWING", n, params["m"], params["d"], params["r_g"],
                                       k1=params["k1"])
        else:
            raise ValidationError(
                f"no closed form for an all-{mode.value} fleet (only DC and CP/swing)"
            )
        summary["closed_form"] = reference
        if result.is_finite:
            summary["closed_form_relative_gap"] = abs(result.value - reference) / max(
                reference, 1e-30
            )
    _emit(summary)
    return EXIT_OK


def _stability_cmd(args) -> int:
    system = _load_reduced(args.network)
    certificate = check_decentralized_stability(system.configs, system.network.buses)
    _emit(
        {
            "passed": certificate.passed,
            "conditions": [
                {
                    "bus": c.bus,
                    "applies": c.applies,
                    "condition1": c.condition1,
                    "condition2": c.condition2,
                    "t_value": c.t_value,
                    "passed": c.passed,
                    "note": c.note,
                }
                for c in certificate.conditions
            ],
        }
    )
    return EXIT_OK


def _modal_cmd(args) -> int:
    system = _load_reduced(args.network)
    decomposition = modal_decompose(system.network, system.configs, system.noise)
    norms = mode_norms(decomposition)
    model = assemble_closed_loop(system.network, system.configs, system.noise)
    if model.derivative_noise_present:
        full = h2_frequency_weighted(model)
    else:
        full = h2_gramian(model)
    finite = [r.value for r in norms if r.is_finite]
    _emit(
        {
            "eigenvalues": decomposition.eigenvalues.tolist(),
            "mode_norms": [
                {"eigenvalue": float(lam), "kind": r.kind,
                 **({"value": r.value} if r.is_finite else {"feedthrough_gain": r.feedthrough_gain})}
                for lam, r in zip(decomposition.eigenvalues, norms)
            ],
            "sum_of_modes": sum(finite) if len(finite) == len(norms) else None,
            "full_model": {"kind": full.kind,
                           **({"value": full.value} if full.is_finite
                              else {"feedthrough_gain": full.feedthrough_gain})},
        }
    )
    return EXIT_OK


def _sweep_cmd(args) -> int:
    system = _load_reduced(args.network)
    spec = load_sweep_spec(args.sweep)
    sim_config = None
    if spec.metric == "nadir":
        sim_config = SimConfig(
            dt=args.dt,
            horizon=args.horizon if args.horizon is not None else 30.0,
            disturbances=system.disturbances,
        )
    rows = run_sweep(system.network, system.configs, system.noise, spec, sim_config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / SWEEP_CSV
    with path.open("w") as fh:
        fh.write("axis1,axis2,metric\n")
        for first, second, value in rows:
            middle = "" if second is None else _fmt(second)
            fh.write(f"{_fmt(first)},{middle},{_fmt(value)}\n")
    _emit(
        {
            "axes": [
                {"name": ax.name, "min": ax.minimum, "max": ax.maximum,
                 "count": ax.count, "spacing": ax.spacing}
                for ax in spec.axes
            ],
            "metric": spec.metric,
            "points": len(rows),
            "min": min(v for *_, v in rows),
            "max": max(v for *_, v in rows),
            "csv": str(path),
        }
    )
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="gridfreq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--network", required=True, help="network document (JSON)")

    p = sub.add_parser("steady-state", help="synchronous frequency, angles, and optimality report")
    common(p)

    p = sub.add_parser("simulate", help="time-domain run; writes trajectory CSV + metrics JSON")
    common(p)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--horizon", type=float, default=None,
                   help="defaults to 30 s deterministic, 2000 s stochastic")
    p.add_argument("--stochastic", action="store_true")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("h2", help="squared H2 norm (Gramian or frequency-weighted, chosen automatically)")
    common(p)
    p.add_argument("--closed-form", action="store_true", dest="closed_form",
                   help="cross-check against the homogeneous closed form")

    p = sub.add_parser("stability", help="decentralized stability certificate table")
    common(p)

    p = sub.add_parser("modal", help="per-mode norms of a homogeneous fleet")
    common(p)

    p = sub.add_parser("sweep", help="metric grid over controller parameters; writes CSV")
    common(p)
    p.add_argument("--sweep", required=True, help="sweep spec (JSON)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--horizon", type=float, default=None)
    return parser


_COMMANDS = {
    "steady-state": _steady_state_cmd,
    "simulate": _simulate_cmd,
    "h2": _h2_cmd,
    "stability": _stability_cmd,
    "modal": _modal_cmd,
    "sweep": _sweep_cmd,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GridFreqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
