"""``dlrcast`` command line: data generation, training, evaluation, benchmarks,
forecasts and gradient checks.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Set ``DLRCAST_LOG_LEVEL`` (DEBUG, INFO, WARNING, ...) for progress logs on
standard error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import config as rc
from . import datagen as dg
from . import gradcheck
from . import graph as gc
from . import thermal
from .estimator import DLRForecaster
from .model import VARIANTS
from .plotting import band_chart

log = logging.getLogger("dlrcast")

TOPOLOGY, WEATHER, RATINGS, MANIFEST = "topology.json", "weather.csv", "ratings.csv", "manifest.json"


class UsageError(Exception):
    """Bad invocation or missing inputs (exit code 2)."""


# -- shared helpers -----------------------------------------------------------

def _out_dir(cfg, args) -> Path:
    out = Path(args.out_dir or cfg["io"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _conductor(cfg) -> thermal.ConductorParams:
    return thermal.ConductorParams(**cfg["thermal"])


def _portable_config(cfg) -> dict:
    """Config as stored inside artifacts: output locations are left out so
    identical runs written to different directories stay byte-identical."""
    return {k: v for k, v in cfg.items() if k != "io"}


def _build_topology(cfg):
    g = cfg["grid"]
    if g["source"] == "file":
        with open(g["path"]) as fh:
            doc = json.load(fh)
        buses = [gc.Bus(str(b["id"]), float(b["lat"]), float(b["lon"])) for b in doc["buses"]]
        lines = [gc.Line(str(l["id"]), str(l["from"]), str(l["to"]), float(l["length_km"]))
                 for l in doc["lines"]]
        return buses, lines
    return dg.synthetic_topology(g["n_buses"], g["n_lines"], g["n_parallel"], seed=cfg["seed"],
                                 center=tuple(g["center"]), span_deg=g["span_deg"])


class Dataset:
    """Everything downstream commands need, rebuilt from the gen-data files."""

    def __init__(self, cfg, data_dir: Path):
        missing = [name for name in (TOPOLOGY, WEATHER, RATINGS) if not (data_dir / name).exists()]
        if missing:
            raise UsageError(f"no dataset in {data_dir} (missing {', '.join(missing)}); "
                             f"run `dlrcast gen-data --out-dir {data_dir}` first")
        self.grid, self.raw_lines = dg.load_topology(data_dir / TOPOLOGY)
        self.field = dg.read_weather_csv(self.grid, data_dir / WEATHER)
        self.ratings = dg.read_ratings_csv(self.grid, data_dir / RATINGS)
        self.line_graph = gc.to_line_graph(self.grid)
        features, targets = dg.build_features(self.grid, self.field, self.ratings)
        self.train, self.test = dg.window_split(features, targets, cfg["eval"]["train_ratio"],
                                                cfg["eval"]["stride"])
        self.line_ids = [line.id for line in self.grid.lines]

    def target_timestamps(self, k: int) -> list[str]:
        # target row r is the rating at hour r + 1 of the weather timeline
        return [(self.field.start + timedelta(hours=r + 1)).strftime(dg.TIME_FORMAT)
                for r in self.test.target_rows(k)]


def _estimator(cfg, variant, line_graph) -> DLRForecaster:
    m, t = cfg["model"], cfg["train"]
    return DLRForecaster(
        line_graph, variant=variant, hidden=m["hidden"], head_hidden=m["head_hidden"],
        quantiles=tuple(m["quantiles"]), cell_activation=m["cell_activation"],
        shared_heads=m["shared_heads"], epochs=t["epochs"], learning_rate=t["learning_rate"],
        weight_decay=t["weight_decay"], batch_size=rc.batch_size_for(cfg, variant),
        clip_norm=t["clip_norm"], val_fraction=t["val_fraction"], random_state=cfg["seed"])


def _fit(cfg, variant, data: Dataset) -> DLRForecaster:
    est = _estimator(cfg, variant, data.line_graph)
    t0 = time.perf_counter()
    est.fit(data.train.x, data.train.y)
    log.info("%s trained in %.1f s (best epoch %d)", variant, time.perf_counter() - t0,
             est.history_["best_epoch"])
    return est


def _checkpoint_path(path) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".json", ".bin") else path


def _load_checkpoint(args, data: Dataset) -> DLRForecaster:
    if not args.checkpoint:
        raise UsageError(f"{args.command} needs --checkpoint PATH (create one with `dlrcast train`)")
    base = _checkpoint_path(args.checkpoint)
    if not base.with_suffix(".json").exists():
        raise UsageError(f"checkpoint {base.with_suffix('.json')} not found "
                         "(create one with `dlrcast train`)")
    est = DLRForecaster.load(base, line_graph=data.line_graph)
    if est.n_lines_ != data.grid.n_lines:
        raise UsageError(f"checkpoint has {est.n_lines_} lines, dataset has {data.grid.n_lines}")
    stats = est.manifest_.get("feature_mean")
    if stats is not None and not np.array_equal(np.array(stats), data.train.feature_mean):
        raise UsageError("checkpoint was trained on a different dataset (feature statistics differ)")
    if getattr(args, "variant", None) and args.variant != est.variant:
        raise UsageError(f"checkpoint holds variant {est.variant!r}, not {args.variant!r}")
    return est


def _write_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# -- commands -----------------------------------------------------------------

def cmd_gen_data(cfg, args) -> int:
    out = _out_dir(cfg, args)
    w = cfg["weather"]
    buses, lines = _build_topology(cfg)
    grid = gc.Grid(buses, dg.dedup_parallel_lines(lines))
    field = dg.generate_weather(grid, w["days"], seed=cfg["seed"], start=w["start"],
                                length_scale_km=w["length_scale_km"],
                                drift_hours_per_degree=w["drift_hours_per_degree"])
    conductor = _conductor(cfg)
    ratings = dg.compute_ratings(grid, field, conductor)

    dg.save_topology(buses, lines, out / TOPOLOGY)
    dg.write_weather_csv(grid, field, out / WEATHER)
    dg.write_ratings_csv(grid, field.start, ratings, out / RATINGS)
    # statistics are taken from the files just written, as every later command reads them
    field = dg.read_weather_csv(grid, out / WEATHER)
    ratings = dg.read_ratings_csv(grid, out / RATINGS)
    features, targets = dg.build_features(grid, field, ratings)
    try:
        train, test = dg.window_split(features, targets, cfg["eval"]["train_ratio"],
                                      cfg["eval"]["stride"])
    except ValueError as exc:
        log.warning("dataset too short to split: %s", exc)
        train = test = None
    manifest = dg.dataset_manifest(grid, len(lines), field, train, test, cfg["eval"]["stride"],
                                   cfg["eval"]["train_ratio"], conductor,
                                   extra={"config": _portable_config(cfg)})
    _write_json(manifest, out / MANIFEST)
    print(f"wrote {TOPOLOGY}, {WEATHER}, {RATINGS}, {MANIFEST} to {out} "
          f"({grid.n_buses} buses, {grid.n_lines} lines after dedup of {len(lines)})")
    return 0


def _write_loss_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "grad_norm"])
        for row in zip(history["epoch"], history["train_loss"], history["val_loss"],
                       history["grad_norm"]):
            w.writerow([row[0], *(repr(float(v)) for v in row[1:])])


def cmd_train(cfg, args) -> int:
    out = _out_dir(cfg, args)
    data = Dataset(cfg, Path(args.data_dir) if args.data_dir else out)
    variant = args.variant or "d-lgclstm"
    est = _fit(cfg, variant, data)
    base = _checkpoint_path(args.checkpoint) if args.checkpoint else out / "checkpoints" / variant
    base.parent.mkdir(parents=True, exist_ok=True)
    est.save(base, extra={"config": _portable_config(cfg), "line_ids": data.line_ids,
                          "feature_schema_hash": dg.schema_hash(),
                          "feature_mean": [float(v) for v in data.train.feature_mean],
                          "feature_std": [float(v) for v in data.train.feature_std]})
    _write_loss_csv(est.history_, out / f"loss_{variant}.csv")
    print(f"checkpoint {base.with_suffix('.json')} (best epoch {est.history_['best_epoch']}); "
          f"loss curve {out / f'loss_{variant}.csv'}")
    return 0


def cmd_eval(cfg, args) -> int:
    out = _out_dir(cfg, args)
    data = Dataset(cfg, Path(args.data_dir) if args.data_dir else out)
    est = _load_checkpoint(args, data)
    report = est.evaluate(data.test.x, data.test.y, line_ids=data.line_ids)
    stem = f"metrics_{est.variant}"
    report.write_json(out / f"{stem}.json")
    report.write_csv(out / f"{stem}.csv")
    print(f"{est.variant}: PICP {report.PICP:.2f}  ACE {report.ACE:.2f}  PINAW {report.PINAW:.2f}  "
          f"IS {report.IS:.2f}  QS {report.QS:.3f}  -> {out / (stem + '.json')}")
    return 0


BENCH_COLUMNS = ("variant", "ACE", "PINAW", "IS", "QS", "PICP", "crossing_rate",
                 "params_cell", "params_total", "best_epoch")


def cmd_bench(cfg, args) -> int:
    out = _out_dir(cfg, args)
    data = Dataset(cfg, Path(args.data_dir) if args.data_dir else out)
    rows = []
    for variant in VARIANTS:
        est = _fit(cfg, variant, data)
        rep = est.evaluate(data.test.x, data.test.y, line_ids=data.line_ids)
        counts = est.param_counts()
        rows.append([variant, *(repr(float(getattr(rep, k))) for k in BENCH_COLUMNS[1:7]),
                     counts["cells"], counts["total"], est.history_["best_epoch"]])
        print(f"{variant:<10} ACE {rep.ACE:6.2f}  PINAW {rep.PINAW:6.2f}  IS {rep.IS:6.2f}  "
              f"QS {rep.QS:6.3f}  params {counts['total']}")
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        w.writerows(rows)
    print(f"comparison table {out / 'bench.csv'}")
    return 0


def cmd_forecast(cfg, args) -> int:
    out = _out_dir(cfg, args)
    data = Dataset(cfg, Path(args.data_dir) if args.data_dir else out)
    if args.line not in data.line_ids:
        raise UsageError(f"unknown line {args.line!r}; known lines: "
                         f"{', '.join(data.line_ids[:10])}{' ...' if len(data.line_ids) > 10 else ''}")
    est = _load_checkpoint(args, data)
    days = range(len(data.test)) if args.day is None else [args.day]
    if args.day is not None and not 0 <= args.day < len(data.test):
        raise UsageError(f"--day must be in [0, {len(data.test) - 1}]")
    k = data.line_ids.index(args.line)
    lower, upper = est.predict_interval(data.test.x)
    header = ["timestamp", "hour", "y_true", "y_L", "y_U"] + (["y_robust"] if args.robust else [])
    series = {"y_true": [], "y_L": [], "y_U": []}
    path = out / f"forecast_{args.line}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for day in days:
            for h, ts in enumerate(data.target_timestamps(day)):
                vals = (data.test.y[day, k, h], lower[day, k, h], upper[day, k, h])
                for key, v in zip(series, vals):
                    series[key].append(v)
                row = [ts, h, *(repr(float(v)) for v in vals)]
                if args.robust:
                    row.append(row[3])  # robust DLR is the lower bound
                w.writerow(row)
    print(f"forecast for {args.line}: {len(series['y_true'])} rows -> {path}")
    if args.svg is not None:
        svg_path = Path(args.svg) if args.svg else out / f"forecast_{args.line}.svg"
        band_chart(series["y_true"], series["y_L"], series["y_U"], svg_path,
                   title=f"{est.variant} interval for line {args.line}")
        print(f"plot {svg_path}")
    return 0


def cmd_gradcheck(cfg, args) -> int:
    results = gradcheck.run_all(args.seed)
    print(gradcheck.format_report(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"gradcheck failed for: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench,
            "forecast": cmd_forecast, "gradcheck": cmd_gradcheck}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dlrcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, data=True):
        p.add_argument("--config", default="demo-20bus",
                       help=f"JSON config path or built-in name ({', '.join(rc.BUILTIN)})")
        p.add_argument("--out-dir", help="output directory (default: io.out_dir of the config)")
        if data:
            p.add_argument("--data-dir", help="gen-data output to read (default: --out-dir)")
        return p

    with_config(sub.add_parser("gen-data", help="synthesize topology, weather and ratings"), data=False)
    p = with_config(sub.add_parser("train", help="fit one variant and write a checkpoint"))
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--checkpoint", help="checkpoint base path (default: OUT/checkpoints/VARIANT)")
    p = with_config(sub.add_parser("eval", help="score a checkpoint on the test windows"))
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--checkpoint")
    with_config(sub.add_parser("bench", help="train and score every variant"))
    p = with_config(sub.add_parser("forecast", help="per-line interval forecast for the test days"))
    p.add_argument("--checkpoint")
    p.add_argument("--line", required=True)
    p.add_argument("--day", type=int, help="test-window index (default: every test day)")
    p.add_argument("--robust", action="store_true", help="add a y_robust column (the lower bound)")
    p.add_argument("--svg", nargs="?", const="", help="write a band chart (optional path)")
    p = sub.add_parser("gradcheck", help="finite-difference check of every backward rule")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _setup_logging():
    level = os.environ.get("DLRCAST_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = None
        if args.command != "gradcheck":
            cfg = rc.load_config(args.config)
            if cfg["weather"]["days"] < 8:
                raise rc.ConfigError(f"weather.days = {cfg['weather']['days']}: "
                                     "need ≥ 8 days of weather to form one window")
        return COMMANDS[args.command](cfg, args)
    except (rc.ConfigError, UsageError) as exc:
        print(f"dlrcast {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit code 1
        log.debug("traceback", exc_info=True)
        print(f"dlrcast {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
