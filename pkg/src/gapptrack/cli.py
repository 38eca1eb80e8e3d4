"""Command line: generate | track | evaluate | sweep.

Exit codes: 0 success, 2 configuration error, 3 data error. The worker
process count of ``sweep`` comes from ``GAPPTRACK_THREADS`` (default 1).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import TRACKERS, ConfigError, TrackerConfig, config_from_dict
from .estimates import point_estimates
from .io import (
    DataError,
    ResultsWriter,
    dumps,
    read_dataset,
    read_results,
    snapshots_from_records,
    step_record,
    write_dataset,
)
from .runner import evaluate, run_tracker, scene_config_for
from .world import GenParams, ScenarioDataset, generate_scenario, sample_default_params

THREADS_ENV = "GAPPTRACK_THREADS"
TABLE_COLUMNS = ("C", "A", "S", "P", "mR", "GOSPA", "s2", "gamma", "mu0", "mu_pos", "class")


def load_run_config(path, particles=None, tracker=None) -> tuple[TrackerConfig, dict]:
    """Tracker config plus the optional ``generator`` overrides of a config file."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    raw = dict(raw)
    generator = raw.pop("generator", {}) or {}
    if not isinstance(generator, dict):
        raise ConfigError("generator section must be an object")
    cfg = config_from_dict(raw)
    kw = {}
    if particles is not None:
        kw["particles"] = particles
    if tracker is not None:
        kw["tracker"] = tracker
    return (cfg.with_overrides(**kw) if kw else cfg), generator


def generator_params(overrides: dict, seed: int) -> GenParams:
    base = sample_default_params(seed).to_dict()
    unknown = set(overrides) - set(base)
    if unknown:
        raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
    base.update(overrides)
    try:
        return GenParams.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid generator parameters: {exc}") from exc


def make_dataset(cfg: TrackerConfig, generator: dict, seed: int) -> ScenarioDataset:
    return generate_scenario(cfg.scene, generator_params(generator, seed), seed)


def cmd_generate(args) -> int:
    cfg, generator = load_run_config(args.config)
    out = Path(args.out)
    single = args.count == 1 and out.suffix == ".json"
    if not single:
        out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seed = args.seed + i
        ds = make_dataset(cfg, generator, seed)
        write_dataset(ds, out if single else out / f"dataset_{seed}.json")
    return 0


def run_header(cfg: TrackerConfig, ds: ScenarioDataset, seed: int) -> dict:
    return {
        "tracker": cfg.tracker,
        "seed": seed,
        "config": cfg.to_dict(),
        "dataset": {"T": ds.step, "dims": ds.dims, "bounds": [list(b) for b in ds.bounds], "seed": ds.seed, "K": len(ds.frames)},
    }


def cmd_track(args) -> int:
    cfg, _ = load_run_config(args.config, args.particles, args.tracker)
    # the tracker only ever sees observations
    ds = read_dataset(args.dataset, with_truth=False)
    cfg = scene_config_for(cfg, ds)
    writer = ResultsWriter(args.out, run_header(cfg, ds, args.seed))
    reaction = cfg.revival_enabled

    def on_step(rec, snap):
        writer.step(step_record(snap, rec, rec.revival_events if reaction else None))

    result = run_tracker(ds, cfg, args.seed, on_step)
    writer.close(
        {
            "steps": len(result.steps),
            "seconds": result.seconds,
            "flagged": result.flagged,
            "resamples": result.resamples,
            "revival_events": len(result.revival_events),
        }
    )
    return 0


def cmd_evaluate(args) -> int:
    header, records, footer = read_results(args.results)
    ds = read_dataset(args.dataset)
    if not ds.has_truth and not ds.objects:
        raise DataError(f"dataset {args.dataset} has no ground truth")
    meta = header.get("dataset", {})
    if meta.get("dims") != ds.dims or meta.get("K", len(ds.frames)) != len(ds.frames):
        raise DataError("results and dataset do not match")
    n_classes = len(header["config"]["class_params"])
    steps = snapshots_from_records(records, ds.dims, n_classes)
    report = evaluate(ds, steps)
    report["tracker"] = header.get("tracker")
    report["time"] = footer.get("seconds") if footer else None
    text = dumps(report) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _table_row(report: dict) -> dict:
    row = {key: report["siap"][key] for key in ("C", "A", "S", "P", "mR")}
    row["GOSPA"] = report["gospa"]["mean"]
    row.update(report.get("armse", {}))
    return row


def plot_rows(ds: ScenarioDataset, steps) -> list[str]:
    """Columnar plot data: truths, point-estimate tracks and observations.

    ``marker`` is ``birth`` on a first point, ``death`` on the last point of
    a trajectory that ends before the final step, ``survive`` otherwise.
    """
    dims = ds.dims
    last_k = len(ds.frames) - 1
    cols = "\t".join(f"x{d}" for d in range(dims))
    rows = [f"kind\tid\tk\t{cols}\tmarker"]

    def emit(kind, tid, ks, pts):
        for n, (k, x) in enumerate(zip(ks, pts)):
            marker = ""
            if n == 0:
                marker = "birth"
            if n == len(ks) - 1:
                marker = "death" if k < last_k else ("survive" if n else "birth")
            rows.append("\t".join([kind, str(tid), str(k), *(repr(float(v)) for v in x), marker]))

    for o in ds.objects:
        ks = list(range(o.birth_step, o.birth_step + len(o.positions)))
        emit("truth", o.id, ks, o.positions)
    tracks: dict[int, tuple[list, list]] = {}
    for st in steps:
        for e in point_estimates(st):
            ks, pts = tracks.setdefault(e.id, ([], []))
            ks.append(st.k)
            pts.append(e.position)
    for tid in sorted(tracks):
        emit("track", tid, *tracks[tid])
    for f in ds.frames:
        for x in f.observations:
            rows.append("\t".join(["obs", "", str(f.k), *(repr(float(v)) for v in x), ""]))
    return rows


def _sweep_one(job):
    cfg, generator, seed, trackers, plot_dir = job
    ds = make_dataset(cfg, generator, seed)
    reports, timing = {}, {}
    for name in trackers:
        res = run_tracker(ds, cfg.with_overrides(tracker=name), seed)
        reports[name] = evaluate(ds, res.steps)
        timing[name] = res.seconds
        if plot_dir is not None:
            Path(plot_dir, f"plot_{seed}_{name}.tsv").write_text("\n".join(plot_rows(ds, res.steps)) + "\n")
    return seed, reports, timing


def _mean(vals):
    vals = [v for v in vals if v is not None and not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


def cmd_sweep(args) -> int:
    cfg, generator = load_run_config(args.config, args.particles)
    trackers = list(TRACKERS) if args.tracker in (None, "all") else [args.tracker]
    out = Path(args.out)
    plot_dir = out / "plots"
    plot_dir.mkdir(parents=True, exist_ok=True)
    seeds = [args.seed + i for i in range(args.count)]
    jobs = [(cfg, generator, s, trackers, plot_dir) for s in seeds]
    workers = max(1, int(os.environ.get(THREADS_ENV, "1") or 1))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]

    per_dataset = []
    lines = ["dataset\ttracker\t" + "\t".join(TABLE_COLUMNS)]
    for seed, reports, _ in results:
        for name in trackers:
            row = _table_row(reports[name])
            per_dataset.append({"seed": seed, "tracker": name, "row": row, "report": reports[name]})
            lines.append(f"{seed}\t{name}\t" + "\t".join(f"{row.get(c, math.nan):.6g}" for c in TABLE_COLUMNS))
    means = {}
    for name in trackers:
        rows = [d["row"] for d in per_dataset if d["tracker"] == name]
        means[name] = {c: _mean([r.get(c) for r in rows]) for c in TABLE_COLUMNS}
        lines.append(f"mean\t{name}\t" + "\t".join(f"{means[name][c]:.6g}" for c in TABLE_COLUMNS))
    report = {"master_seed": args.seed, "seeds": seeds, "trackers": trackers, "datasets": per_dataset, "mean": means}
    (out / "report.json").write_text(dumps(report) + "\n")
    (out / "table.tsv").write_text("\n".join(lines) + "\n")
    timing = {str(seed): t for seed, _, t in results}
    (out / "timing.json").write_text(dumps(timing) + "\n")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gapptrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write synthetic scenario datasets")
    gen.add_argument("--config")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--out", required=True, help="a .json file when count is 1, else a directory")
    gen.set_defaults(func=cmd_generate)

    trk = sub.add_parser("track", help="run a tracker over a dataset")
    trk.add_argument("dataset")
    trk.add_argument("--config")
    trk.add_argument("--seed", type=int, default=0)
    trk.add_argument("--particles", type=int)
    trk.add_argument("--tracker", choices=TRACKERS)
    trk.add_argument("--out", required=True)
    trk.set_defaults(func=cmd_track)

    ev = sub.add_parser("evaluate", help="score a results file against its dataset")
    ev.add_argument("results")
    ev.add_argument("dataset")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="generate, track and evaluate over consecutive seeds")
    sw.add_argument("--config")
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--count", type=int, default=20)
    sw.add_argument("--particles", type=int)
    sw.add_argument("--tracker", choices=(*TRACKERS, "all"), default="all")
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "count", 1) < 1:
            raise ConfigError("count must be >= 1")
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
