"""Command-line front end.

Subcommands::

    simulate      synthetic logs (data.csv) and ground truth (truth.csv)
    fingerprint   per-cycle (R_dyn, R_W) identification (fingerprints.csv)
    train-soh     fit the SoH estimator (soh_model.json, train_metrics.csv)
    eval          channel-ablation metrics per lifespan category (eval_metrics.csv)
    map           monotone SoH curves and lookup tables (lookup_<cell>.json, curves.csv)
    query         interpolate a lookup table at one SoH value

Exit codes: 0 success, 2 usage or invalid input, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .benchmark import SohArm, format_soh
from .config import RunConfig, load_config
from .identify import (FIDELITY_MODELS, CycleFingerprint, IdentError, fit_model,
                       read_fingerprints, write_fingerprints)
from .ingest import IngestError, parse_cycle_log, prepare_cycles, write_cycle_logs
from .mapping import LookupTable, MappingError, curves_table, map_fingerprints, query_lookup
from .soh.features import build_features, feature_dataset
from .soh.model import CheckpointError, ShapeError, SohEstimator
from .soh.train import SPLIT_RULES, SplitError, TrainingError, evaluate_soh, split_dataset, train_soh
from .synth import (GenerationError, ScheduleRangeError, category_of, generate_cell,
                    merge_cells, preset, read_truth, write_truth)

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 2, 3


class UsageError(Exception):
    pass


def _pmap(fn, items, jobs: int):
    """Ordered map, in worker processes when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _out(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _read_logs(path: str, cfg: RunConfig):
    try:
        with open(path, encoding="utf-8") as fh:
            logs = parse_cycle_log(fh, cfg.ingest)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    if not logs:
        raise UsageError(f"{path}: no cycles found")
    return logs


def _read_truth(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return {(r.cell_id, r.cycle): r for r in read_truth(fh)}
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{path}: malformed truth file ({exc})") from None


def _load_estimator(path: str) -> SohEstimator:
    try:
        return SohEstimator.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


# --- simulate -------------------------------------------------------------

def _simulate_cell(job):
    return generate_cell(*job)


def cmd_simulate(args, cfg: RunConfig) -> int:
    s = cfg.synth
    names = args.profiles.split(",") if args.profiles else list(s.profiles)
    cells = s.cells if args.cells is None else args.cells
    cycles = s.cycles_per_cell if args.cycles is None else args.cycles
    noise = s.noise_sigma if args.noise is None else args.noise
    try:
        profiles = [preset(n.strip(), noise_sigma=noise, Q0=cfg.physics.Q_nominal)
                    for n in names]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if cells < 1 or cycles < 2:
        raise UsageError("--cells must be >= 1 and --cycles >= 2")
    jobs = [(p, i, cfg.seed, cycles, s.spread) for p in profiles for i in range(cells)]
    ds = merge_cells(_pmap(_simulate_cell, jobs, args.jobs))
    stamp = cfg.stamp()
    with open(_out(args, "data.csv"), "w", encoding="utf-8", newline="") as fh:
        write_cycle_logs(ds.logs, fh, stamp)
    with open(_out(args, "truth.csv"), "w", encoding="utf-8", newline="") as fh:
        write_truth(ds.truth, fh, stamp)
    print(f"wrote {len(ds.profiles)} cells, {len(ds.logs)} cycles to {args.out}")
    return EXIT_OK


# --- fingerprint ----------------------------------------------------------

def _fit_one(job):
    cycle, ident, model, soh = job
    fit = fit_model(cycle, model, ident)
    if fit.fingerprint is not None:
        fp = fit.fingerprint
    else:
        # baseline models have no tail element
        fp = CycleFingerprint(cycle.cycle_index, next(iter(fit.params.values())),
                              float("nan"), fit.eps, float("nan"), float("nan"),
                              tail_observed=False, rmse=fit.rmse,
                              cell_id=cycle.cell_id)
    return fp if soh is None else fp.with_soh(soh)


def cmd_fingerprint(args, cfg: RunConfig) -> int:
    cycles = prepare_cycles(_read_logs(args.data, cfg), cfg.ingest)
    ident = cfg.ident_config()
    Q0 = cfg.physics.Q_nominal
    keys = [(c.cell_id, c.cycle_index) for c in cycles]
    soh = dict.fromkeys(keys)
    capacity = dict.fromkeys(keys, Q0)
    source = "nominal capacity"
    if args.truth:
        truth = _read_truth(args.truth)
        for k in keys:
            if k in truth:
                capacity[k] = truth[k].Q_Ah
                soh[k] = truth[k].soh_true
        source = "capacity and soh_hat from truth"
    if args.checkpoint:
        est = _load_estimator(args.checkpoint)
        feats = [build_features(c, ident.theta.ocv, capacity_Ah=est.capacity_Ah,
                                n_channels=est.n_channels) for c in cycles]
        for k, s in zip(keys, est.predict(feats)):
            soh[k] = float(s)
            capacity[k] = float(s) * Q0
        source = "capacity and soh_hat from SoH estimator"
    jobs = [(c, ident.with_capacity(capacity[k]), args.model, soh[k])
            for c, k in zip(cycles, keys)]
    fps = _pmap(_fit_one, jobs, args.jobs)
    with open(_out(args, "fingerprints.csv"), "w", encoding="utf-8", newline="") as fh:
        write_fingerprints(fps, fh, f"{cfg.stamp()} model={args.model} ({source})")
    rmse = np.array([fp.rmse for fp in fps]) * 1e3
    print(f"{len(fps)} cycles fitted with {args.model}; "
          f"median RMSE {np.median(rmse):.3f} mV")
    return EXIT_OK


# --- train-soh / eval -----------------------------------------------------

def _labelled(args, cfg: RunConfig, channels: int):
    if not args.truth:
        raise UsageError("--truth is required for SoH labels")
    cycles = prepare_cycles(_read_logs(args.data, cfg), cfg.ingest)
    labels = {k: r.soh_true for k, r in _read_truth(args.truth).items()}
    samples = feature_dataset(cycles, labels, channels, cfg.physics.params().ocv,
                              cfg.physics.Q_nominal)
    if not samples:
        raise UsageError("no cycle in the data has a label in the truth file")
    return samples


def _metric_rows(est, samples, tcfg, channels):
    parts = dict(zip(("train", "val", "test"), split_dataset(samples, tcfg)))
    rows = []
    for part, sub in parts.items():
        for cat in sorted({category_of(f.cell_id) for f, _ in sub}) + ["all"]:
            sel = [s for s in sub if cat == "all" or category_of(s[0].cell_id) == cat]
            if sel:
                mae, rmse = evaluate_soh(est, sel)
                rows.append((part, cat, channels, len(sel), mae, rmse))
    return rows


def _write_metrics(path, rows, stamp):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {stamp}\n")
        fh.write("split,category,channels,n,MAE,RMSE\n")
        for part, cat, ch, n, mae, rmse in rows:
            fh.write(f"{part},{cat},{ch},{n},{mae!r},{rmse!r}\n")


def _train_config(args, cfg: RunConfig):
    tcfg = cfg.soh
    if args.epochs is not None:
        tcfg = replace(tcfg, epochs=args.epochs)
    if args.split is not None:
        tcfg = replace(tcfg, split=args.split)
    return tcfg


def cmd_train_soh(args, cfg: RunConfig) -> int:
    tcfg = _train_config(args, cfg)
    samples = _labelled(args, cfg, args.channels)
    est = train_soh(samples, tcfg, capacity_Ah=cfg.physics.Q_nominal)
    est.meta["stamp"] = cfg.stamp()
    est.save(_out(args, "soh_model.json"))
    rows = _metric_rows(est, samples, tcfg, args.channels)
    _write_metrics(_out(args, "train_metrics.csv"), rows, cfg.stamp())
    for part, cat, ch, n, mae, rmse in rows:
        if cat == "all":
            print(f"{part:5s} n={n:4d}  MAE {mae:.4f}  RMSE {rmse:.4f}")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    tcfg = _train_config(args, cfg)
    if args.checkpoint:
        est = _load_estimator(args.checkpoint)
        models = {est.n_channels: est}
    else:
        try:
            arms = sorted({int(c) for c in args.channels.split(",")})
        except ValueError:
            raise UsageError(f"--channels expects e.g. 1,4, got {args.channels!r}") from None
        if not set(arms) <= {1, 4}:
            raise UsageError("channel arms must be 1 and/or 4")
        models = dict.fromkeys(arms)
    rows, table = [], {}
    for ch in sorted(models):
        samples = _labelled(args, cfg, ch)
        est = models[ch] or train_soh(samples, tcfg, capacity_Ah=cfg.physics.Q_nominal)
        test = split_dataset(samples, tcfg)[2] or samples
        per_cat = {}
        for cat in sorted({category_of(f.cell_id) for f, _ in test}):
            sel = [s for s in test if category_of(s[0].cell_id) == cat]
            per_cat[cat] = evaluate_soh(est, sel)
            rows.append(("test", cat, ch, len(sel), *per_cat[cat]))
        overall = evaluate_soh(est, test)
        rows.append(("test", "all", ch, len(test), *overall))
        table[ch] = SohArm(ch, overall, per_cat, 0.0, est)
    _write_metrics(_out(args, "eval_metrics.csv"), rows, cfg.stamp())
    print(format_soh(table))
    return EXIT_OK


# --- map / query ----------------------------------------------------------

def cmd_map(args, cfg: RunConfig) -> int:
    try:
        with open(args.fingerprints, encoding="utf-8") as fh:
            fps = read_fingerprints(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {args.fingerprints}: {exc.strerror}") from None
    by_cell: dict[str, list] = {}
    for fp in fps:
        by_cell.setdefault(fp.cell_id, []).append(fp)
    cells = sorted(by_cell) if not args.cell else [args.cell]
    if not cells or any(c not in by_cell for c in cells):
        raise UsageError("no fingerprints for the requested cell(s)")
    curves = []
    for cell in cells:
        cd, cw, tbl = map_fingerprints(by_cell[cell], cfg.mapping, cell,
                                       {"tool": f"agingprint {__version__}",
                                        "run_config_hash": cfg.hash()})
        with open(_out(args, f"lookup_{cell}.json"), "w", encoding="utf-8") as fh:
            fh.write(tbl.dumps())
        curves.append((cell, cd, cw))
    grid = np.linspace(*cfg.mapping.soh_range, cfg.mapping.k)
    with open(_out(args, "curves.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {cfg.stamp()}\n")
        fh.write("cell_id,soh,R_dyn_ohm,R_W_ohm\n")
        for r in curves_table(curves, grid):
            fh.write(f"{r['cell_id']},{r['soh']!r},{r['R_dyn_ohm']!r},{r['R_W_ohm']!r}\n")
    print(f"wrote {len(cells)} lookup table(s) to {args.out}")
    return EXIT_OK


def cmd_query(args, cfg: RunConfig) -> int:
    if not 0.0 <= args.soh <= 1.0:
        raise UsageError(f"--soh must lie in [0, 1], got {args.soh}")
    try:
        with open(args.table, encoding="utf-8") as fh:
            tbl = LookupTable.loads(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read {args.table}: {exc.strerror}") from None
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{args.table}: not a lookup table ({exc})") from None
    r_dyn, r_w = query_lookup(tbl, args.soh)
    print(json.dumps({"soh": args.soh, "R_dyn_ohm": r_dyn, "R_W_ohm": r_w},
                     sort_keys=True))
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", help="JSON run configuration")
    g.add_argument("--seed", type=int, metavar="N", help="random seed (default 0)")
    g.add_argument("--out", metavar="DIR", default="out",
                   help="output directory (default ./out)")
    g.add_argument("--jobs", type=int, metavar="N", default=1,
                   help="worker processes for per-cell/per-cycle work; "
                        "never changes the output")

    parser = argparse.ArgumentParser(
        prog="agingprint", description=__doc__.split("\n\n")[0],
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Exit codes: 0 success, 2 usage or invalid input, 3 numeric failure.")
    parser.add_argument("--version", action="version",
                        version=f"agingprint {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", parents=[common],
                       help="generate synthetic cycle logs with ground truth")
    p.add_argument("--profiles", help="comma-separated presets: short,medium,long")
    p.add_argument("--cells", type=int, help="cells per preset")
    p.add_argument("--cycles", type=int, help="logged cycles per cell")
    p.add_argument("--noise", type=float, help="voltage noise sigma in volts")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fingerprint", parents=[common],
                       help="identify per-cycle resistances")
    p.add_argument("--data", default="out/data.csv", help="cycle log CSV")
    p.add_argument("--model", choices=FIDELITY_MODELS, default="foecm",
                   help="circuit model to fit (default foecm)")
    p.add_argument("--truth", help="truth.csv giving capacity and SoH per cycle")
    p.add_argument("--checkpoint", help="SoH estimator giving capacity and SoH")
    p.set_defaults(func=cmd_fingerprint)

    for name, func, helptext in (
            ("train-soh", cmd_train_soh, "train the SoH estimator"),
            ("eval", cmd_eval, "MAE/RMSE per lifespan category and channel arm")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--data", default="out/data.csv", help="cycle log CSV")
        p.add_argument("--truth", default="out/truth.csv", help="SoH labels")
        p.add_argument("--epochs", type=int, help="override the configured epochs")
        p.add_argument("--split", choices=SPLIT_RULES,
                       help="override the configured train/val/test split rule")
        if name == "train-soh":
            p.add_argument("--channels", type=int, choices=(1, 4), default=4)
        else:
            p.add_argument("--channels", default="1,4",
                           help="channel arms to compare (default 1,4)")
            p.add_argument("--checkpoint", help="evaluate this model instead of training")
        p.set_defaults(func=func)

    p = sub.add_parser("map", parents=[common],
                       help="build SoH-domain curves and lookup tables")
    p.add_argument("--fingerprints", default="out/fingerprints.csv")
    p.add_argument("--cell", help="only this cell id")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("query", parents=[common], help="look up (R_dyn, R_W) at a SoH")
    p.add_argument("--table", required=True, help="lookup table JSON")
    p.add_argument("--soh", type=float, required=True, help="state of health in [0, 1]")
    p.set_defaults(func=cmd_query)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = load_config(args.config, args.seed)
        return args.func(args, cfg)
    except (UsageError, IngestError, IdentError, MappingError, CheckpointError,
            ShapeError, SplitError, ScheduleRangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, GenerationError, FloatingPointError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
