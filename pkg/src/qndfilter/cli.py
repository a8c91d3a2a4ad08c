"""Command-line interface: run ensembles, verify configs, list presets.

Exit codes: 0 success, 2 configuration or usage error, 3 I/O failure.
CSV bodies are reproducible byte for byte for a fixed config and seed; the
manifest carries a timestamp and is reproducible except for that field.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .analysis import EnsembleSummary, reduction_histogram, run_ensemble
from .config import (
    ExperimentConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .errors import ConfigError, QndFilterError
from .feedback import validate_assumptions
from .presets import PRESETS, preset_dict

OUTPUT_DIR_ENV = "QNDFILTER_OUT"

_COLUMNS = (
    "time",
    "trajectory_id",
    "fidelity_to_target",
    "bures_true",
    "bures_proj",
    "u",
    "V_reduction",
    "V_target",
    "xi_norm",
    "fidelity_mixed",
)


def _fmt(x) -> str:
    """17-significant-digit decimal, round-trip exact for doubles."""
    return format(float(x), ".17g")


def _write_trajectories(path, summary: EnsembleSummary):
    rec = summary.records
    lines = [",".join(_COLUMNS)]
    for i in range(summary.trajectory_count):
        for r, t in enumerate(rec.time):
            row = (
                _fmt(t),
                str(i),
                _fmt(rec.fidelity_to_target[i, r]),
                _fmt(rec.bures_true[i, r]),
                _fmt(rec.bures_proj[i, r]),
                _fmt(rec.u[i, r]),
                _fmt(rec.v_reduction[i, r]),
                _fmt(rec.v_target[i, r]),
                _fmt(rec.xi_norm[i, r]),
                _fmt(rec.fidelity_mixed[i, r]),
            )
            lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_summary(path, summary: EnsembleSummary):
    header = (
        "time,mean_fidelity,mean_lyapunov_V,mean_bures_true,"
        "mean_bures_proj,mean_xi_norm"
    )
    lines = [header]
    for r, t in enumerate(summary.time_grid):
        lines.append(
            ",".join(
                (
                    _fmt(t),
                    _fmt(summary.mean_fidelity[r]),
                    _fmt(summary.mean_lyapunov_V[r]),
                    _fmt(summary.mean_bures_true[r]),
                    _fmt(summary.mean_bures_proj[r]),
                    _fmt(summary.mean_xi_norm[r]),
                )
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _results_dict(summary: EnsembleSummary) -> dict:
    exps = summary.exponent_estimates
    finite = exps[np.isfinite(exps)]
    return {
        "trajectories": summary.trajectory_count,
        "convergence_fraction": summary.convergence_fraction,
        "reduction_histogram": [float(v) for v in reduction_histogram(summary)],
        "exponent_median": float(np.median(finite)) if finite.size else None,
        "max_xi_norm": summary.max_xi_norm,
        "final_mean_populations": [
            float(v) for v in summary.final_populations.mean(axis=0)
        ],
        "hygiene": {k: float(v) for k, v in summary.hygiene.items()},
        "blowups": summary.blowups,
    }


def _write_manifest(path, exp: ExperimentConfig, summary: EnsembleSummary):
    manifest = {
        "package_version": __version__,
        "config": config_to_dict(exp),
        "seed_scheme": "philox, seedsequence(base_seed, spawn_key=(trajectory_id,))",
        "results": _results_dict(summary),
        "written_utc": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_experiment(args) -> tuple[ExperimentConfig, dict]:
    if args.preset:
        raw = preset_dict(args.preset)
    elif args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    else:
        raise ConfigError("give a config file or --preset NAME")
    if args.set:
        raw = apply_overrides(raw, args.set)
    return config_from_dict(raw), raw


def cmd_run(args) -> int:
    exp, _ = _load_experiment(args)
    out_dir = os.environ.get(OUTPUT_DIR_ENV) or args.out or exp.outputs.directory
    summary = run_ensemble(exp)
    try:
        os.makedirs(out_dir, exist_ok=True)
        if exp.outputs.per_trajectory:
            _write_trajectories(os.path.join(out_dir, "trajectories.csv"), summary)
        _write_summary(os.path.join(out_dir, "summary.csv"), summary)
        _write_manifest(os.path.join(out_dir, "manifest.json"), exp, summary)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return 3
    res = _results_dict(summary)
    print(
        f"{summary.trajectory_count} trajectories, horizon {exp.integrator.horizon}, "
        f"mode {exp.mode.value}"
    )
    print(f"convergence fraction: {res['convergence_fraction']:.4f}")
    print(f"reduction histogram: {np.round(res['reduction_histogram'], 4).tolist()}")
    if res["blowups"]:
        print(f"warning: {len(res['blowups'])} trajectories aborted", file=sys.stderr)
    print(f"outputs written to {out_dir}")
    return 0


def cmd_verify(args) -> int:
    exp, _ = _load_experiment(args)
    model = exp.build_model()
    ctx = exp.build_family(model)
    print(
        f"system: {model.dim} levels, eta={model.eta}, omega={model.omega}; "
        f"mode {exp.mode.value}; companion {exp.companion_kind}"
    )
    print(
        f"integrator: dt={exp.integrator.dt}, horizon={exp.integrator.horizon}, "
        f"{exp.integrator.steps} steps"
    )
    print(f"family weights: {np.round(ctx.weights, 6).tolist()}")
    coupling_scale = float(np.abs(ctx.coupling).max())
    print(f"rotation overlap scale: {coupling_scale:.6g}")
    if coupling_scale == 0.0:
        print(
            "note: all rotation overlaps vanish on this family; "
            "overlap-based feedback laws are identically zero"
        )
    report = validate_assumptions(exp.controller, ctx)
    print(report.summary())
    return 0


def cmd_list_presets(_args) -> int:
    for name in sorted(PRESETS):
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qndfilter",
        description="Simulate dispersively measured spin ensembles with "
        "projection-filter feedback.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_selectors(p):
        p.add_argument("config", nargs="?", help="path to a JSON config")
        p.add_argument("--preset", help="name of a built-in configuration")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY.PATH=VALUE",
            help="override a config entry (repeatable)",
        )

    p_run = sub.add_parser("run", help="integrate an ensemble and write CSV outputs")
    add_selectors(p_run)
    p_run.add_argument("--out", help="output directory (overrides the config)")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="validate a config and audit its controller")
    add_selectors(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_list = sub.add_parser("list-presets", help="print available preset names")
    p_list.set_defaults(func=cmd_list_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except QndFilterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
