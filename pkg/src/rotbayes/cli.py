"""Command line entry point: ``rotbayes {simulate,replay,bound,calibrate,xi}``.

Exit status is 0 on success, 2 when the input fails validation and 3 when a
run fails at runtime.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bounds, calibration, io
from .exceptions import ConfigError, RotbayesError
from .harness import run_campaign

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class ValidationError(Exception):
    pass


def _load_config(args, required=True):
    if args.config is None:
        if required:
            raise ValidationError("--config is required")
        return None
    config = io.parse_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.runs is not None:
        overrides["M"] = args.runs
    if args.budget is not None:
        overrides["N_max"] = args.budget
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    try:
        return dataclasses.replace(config, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_campaign(result, out: Path, command: str, extra=None):
    config = result.config
    io.write_curve_csv(result, out / "curve.csv")
    io.write_usage_csv(result, out / "usage.csv")
    (out / "failures.txt").write_text(result.failure_report())
    io.write_config(config, out / "config.resolved.yaml")
    n_grid = result.curve.n_center
    if len(n_grid):
        ref = bounds.reference_curves(n_grid, config.G, config.visibilities_for_bound(), config.s_values)
        ref.write_csv(out / "reference.csv")
    ledger_violations = sum(
        int(not np.array_equal(r.n, np.cumsum([rec.setting.s for rec in r.record.records])))
        for r in result.runs
    )
    info = {"runs": len(result.runs), "flagged_runs": len(result.failures),
            "ledger_violations": ledger_violations}
    info.update(extra or {})
    io.write_manifest(out / "manifest.json", command, config, config.seed, info)
    return result


def _save_runs(result, out: Path):
    rdir = out / "runs"
    rdir.mkdir(exist_ok=True)
    for r in result.runs:
        io.write_run_record(r.record, rdir / f"angle{r.angle_id:02d}_run{r.run_id:04d}.txt",
                            result.config.s_values)
    io.ReplayPool.from_runs(result.runs).to_csv(out / "pool.csv")


def cmd_simulate(args):
    config = _load_config(args)
    out = _outdir(args)
    result = run_campaign(config)
    _emit_campaign(result, out, "simulate")
    if args.save_runs:
        _save_runs(result, out)
    print(f"{len(result.curve)} windows, {len(result.failures)} flagged runs -> {out}")


def cmd_replay(args):
    config = _load_config(args)
    pool = io.ReplayPool.from_csv(args.pool)
    out = _outdir(args)
    result = run_campaign(config, pool=pool)
    _emit_campaign(result, out, "replay", {"pool": Path(args.pool).name})
    if args.save_runs:
        _save_runs(result, out)
    print(f"{len(result.curve)} windows, {len(result.failures)} flagged runs -> {out}")


def cmd_bound(args):
    config = _load_config(args, required=False)
    if config is None:
        G = io.parse_weight_matrix("theta")
        vis = calibration.load_si_table()[1]
        s_values, n_max, seed = calibration.S_VALUES, args.budget or 5000, None
    else:
        G, vis, s_values = config.G, config.visibilities_for_bound(), config.s_values
        n_max, seed = config.N_max, config.seed
    if n_max < 1:
        raise ValidationError("--budget must be positive")
    out = _outdir(args)
    ref = bounds.reference_curves(np.arange(1, n_max + 1), G, vis, s_values)
    ref.write_csv(out / "bound.csv")
    report = {
        "C_G": ref.spec.C_G,
        "xi": ref.spec.xi,
        "optimal_allocation": list(ref.spec.optimal_allocation),
        "G": list(G.diag),
        "visibilities": [float(v) for v in vis],
        "s_values": list(s_values),
    }
    (out / "bound_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    io.write_manifest(out / "manifest.json", "bound", config, seed, {"N_max": int(n_max)})
    print(f"C_G = {ref.spec.C_G:.10g}  xi = {ref.spec.xi:.4f}")


def cmd_calibrate(args):
    rows = calibration.read_frequency_csv(args.input)
    out = _outdir(args)
    with open(out / "visibilities.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["angle_id", "s", "V_hat", "clipped"])
        for angle_id, s, rec in rows:
            est = calibration.visibility_estimate(rec)
            wr.writerow([angle_id, s, repr(est.value), int(est.clipped)])
    io.write_manifest(out / "manifest.json", "calibrate", None, None, {"input": Path(args.input).name})
    print(f"{len(rows)} visibilities -> {out / 'visibilities.csv'}")


def cmd_xi(args):
    xi = bounds.xi_constant()
    lines = [f"{xi:.4f}"]
    if args.draws:
        seed = 0 if args.seed is None else args.seed
        mc = bounds.xi_constant("monte_carlo", draws=args.draws, seed=seed)
        lines.append(f"monte_carlo {mc:.6f} ({args.draws} draws, seed {seed})")
    print("\n".join(lines))
    if args.out:
        out = _outdir(args)
        (out / "xi.txt").write_text(f"closed_form {xi!r}\n" + "".join(f"{ln}\n" for ln in lines[1:]))
        io.write_manifest(out / "manifest.json", "xi", None, args.seed, {"draws": args.draws})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotbayes", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", type=Path)
        p.add_argument("--out", required=out_required)
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int, help="runs per angle (M)")
        p.add_argument("--budget", type=int, help="resource budget per run (N_max)")

    p = sub.add_parser("simulate", help="campaign against the simulator")
    common(p)
    p.add_argument("--workers", type=int)
    p.add_argument("--save-runs", action="store_true", help="also write run records and a replay pool")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="campaign against recorded outcomes")
    common(p)
    p.add_argument("--pool", required=True, help="CSV with angle_id,s,basis,outcome[,run_id]")
    p.add_argument("--workers", type=int)
    p.add_argument("--save-runs", action="store_true")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("bound", help="C_G and the reference curves")
    common(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("calibrate", help="visibilities from frequency data")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("xi", help="median of a squared standard normal")
    p.add_argument("--draws", type=int, default=0, help="also estimate by Monte Carlo")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_xi)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValidationError, ConfigError, io.RecordFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RotbayesError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
