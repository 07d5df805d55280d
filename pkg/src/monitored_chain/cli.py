"""Command-line driver.

Exit status: 0 success, 1 some grid cells failed, 2 invalid configuration,
3 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import validate_state
from .experiments import (
    PRESETS,
    ConfigError,
    ExperimentConfig,
    fit_scalings,
    read_csv,
    run_preset,
    write_outcome,
)

log = logging.getLogger("monitored_chain")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="master seed")
    p.add_argument("--threads", type=int, default=d(None), help="trajectory batches run concurrently")
    p.add_argument("--out", default=d(None), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def _grid_options(p):
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--L", type=int, help="chain length")
    p.add_argument("--k", type=float, nargs="*", dest="k_values", help="measurement strengths")
    p.add_argument("--eta", type=float, nargs="*", dest="eta_values", help="readout efficiencies")
    p.add_argument("--n-traj", type=int, dest="n_traj", help="trajectories per cell")
    p.add_argument("--max-traj", type=int, dest="max_traj", help="desk-scale cap on trajectories per cell")
    p.add_argument("--sample-dt", type=float, dest="sample_dt", help="time between recorded samples")
    p.add_argument("--emit-states", action="store_true", default=None, dest="emit_states",
                   help="also save averaged and final states to states.npz")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monitored-chain",
        description="Trajectories of a monitored particle on a chain and their entanglement.",
        parents=[_global_options(False)],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[_global_options(True)], help="run a figure preset")
    run.add_argument("--preset", choices=PRESETS, required=True)
    run.add_argument("--paper-scale", action="store_true", default=None, dest="paper_scale",
                     help="full chain length (L=21) and uncapped trajectory counts")
    _grid_options(run)

    sweep = sub.add_parser("sweep", parents=[_global_options(True)],
                           help="custom (k, eta) grid with explicit dt and t_f")
    _grid_options(sweep)
    sweep.add_argument("--dt", type=float)
    sweep.add_argument("--t-final", type=float, dest="t_f")
    sweep.add_argument("--init-site", type=int, dest="init_site")

    fit = sub.add_parser("fit", parents=[_global_options(True)],
                         help="power-law / exponential fits of a max-coherence table")
    fit.add_argument("table", help="CSV with k, eta and cn_max columns")
    fit.add_argument("--k-min", type=float, default=1.0)
    fit.add_argument("--eta-max", type=float, default=0.5)

    val = sub.add_parser("validate", parents=[_global_options(True)],
                         help="physicality audit of stored states")
    val.add_argument("path", help="run directory or states.npz")
    return parser


def _make_config(args, preset) -> ExperimentConfig:
    fields = {
        "preset": preset,
        "k_values": args.k_values, "eta_values": args.eta_values, "L": args.L,
        "seed": args.seed, "output_dir": args.out, "emit_states": args.emit_states,
        "paper_scale": getattr(args, "paper_scale", None), "max_traj": args.max_traj,
        "threads": args.threads, "sample_dt": args.sample_dt, "n_traj": args.n_traj,
        "dt": getattr(args, "dt", None), "t_f": getattr(args, "t_f", None),
        "init_site": getattr(args, "init_site", None),
    }
    overrides = {k: v for k, v in fields.items() if v is not None}
    if args.config:
        return ExperimentConfig.from_json(args.config, **overrides)
    return ExperimentConfig(**overrides)


def _cmd_run(args, preset) -> int:
    config = _make_config(args, preset)
    outcome = run_preset(config)
    paths = write_outcome(outcome, config.output_dir)
    for p in paths:
        print(p)
    for f in outcome.failures:
        log.error("cell k=%g eta=%g failed: %s", f["k"], f["eta"], f["error"])
    return EXIT_PARTIAL if outcome.failures else EXIT_OK


def _cmd_fit(args) -> int:
    report = fit_scalings(read_csv(args.table), k_min=args.k_min, eta_max=args.eta_max)
    for f in report.power_law:
        print(f"power law   eta={f.group:<6g} a={f.slope:.6g} R2={f.r2:.6f} n={f.n} decreasing={f.monotone}")
    for f in report.exponential:
        print(f"exponential k={f.group:<6g} b={f.slope:.6g} R2={f.r2:.6f} n={f.n} increasing={f.monotone}")
    for n in report.notices:
        print(f"notice: {n}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "fit.json", "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def _cmd_validate(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / "states.npz"
    bad = total = 0
    with np.load(path) as data:
        for name in sorted(data.files):
            arr = data[name]
            mats = arr.reshape(-1, arr.shape[-2], arr.shape[-1])
            for i, rho in enumerate(mats):
                total += 1
                rep = validate_state(rho)
                if not rep.ok:
                    bad += 1
                    print(f"{name}[{i}]: " + "; ".join(rep.violations()))
    print(f"{total - bad}/{total} states physical")
    return EXIT_OK if bad == 0 else EXIT_PARTIAL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args, args.preset)
        if args.command == "sweep":
            return _cmd_run(args, "custom")
        if args.command == "fit":
            return _cmd_fit(args)
        return _cmd_validate(args)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
