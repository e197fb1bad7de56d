"""Command-line front end: ``lerconf generate | run | report``.

Exit codes: 0 success, 1 configuration error, 2 I/O error during
generation, 3 training failure, 4 report write failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import pipeline
from .estimation import TrainingError
from .pipeline import (
    CSV_COLUMNS,
    EDGES,
    METHODS,
    PRESETS,
    ConfigError,
    DatasetConfig,
    DatasetManifest,
    SplitSpec,
    TrainingSettings,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_TRAINING = 3
EXIT_REPORT = 4

log = logging.getLogger("lerconf")

TOP_KEYS = {"preset", "dataset", "split", "training", "alpha", "method", "seed", "out", "manifest", "jobs",
            "emit_plot_data"}
DATASET_KEYS = {f.name for f in fields(DatasetConfig)} - {"preset"}
SPLIT_KEYS = {f.name for f in fields(SplitSpec)}
TRAINING_KEYS = {f.name for f in fields(TrainingSettings)}

DEFAULTS = {
    "preset": "desk",
    "dataset": {},
    "split": {},
    "training": {},
    "alpha": 0.1,
    "method": "cp",
    "seed": 0,
    "out": None,
    "manifest": None,
    "jobs": 1,
    "emit_plot_data": False,
}


def _check_keys(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def load_config(path) -> dict:
    """Read a JSON config file and reject unknown keys at every level."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    _check_keys(doc, TOP_KEYS, "config")
    _check_keys(doc.get("dataset", {}), DATASET_KEYS, "dataset")
    _check_keys(doc.get("split", {}), SPLIT_KEYS, "split")
    _check_keys(doc.get("training", {}), TRAINING_KEYS, "training")
    return doc


def effective_config(args) -> dict:
    """Defaults, then the config file, then command-line overrides."""
    cfg = json.loads(json.dumps(DEFAULTS))
    if args.config:
        for k, v in load_config(args.config).items():
            cfg[k] = v
    for key in ("preset", "alpha", "method", "seed", "out", "jobs"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "manifest", None) is not None:
        cfg["manifest"] = args.manifest
    if getattr(args, "emit_plot_data", False):
        cfg["emit_plot_data"] = True
    if not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1:
        raise ConfigError(f"jobs: must be an integer >= 1, got {cfg['jobs']!r}")
    if cfg["preset"] not in PRESETS:
        raise ConfigError(f"preset: unknown preset {cfg['preset']!r}; choose from {sorted(PRESETS)}")
    if not isinstance(cfg["seed"], int):
        raise ConfigError(f"seed: must be an integer, got {cfg['seed']!r}")
    return cfg


def dataset_config(cfg: dict) -> DatasetConfig:
    ds = dict(cfg["dataset"])
    if "root_seed" not in ds:
        ds["root_seed"] = cfg["seed"]
    base = DatasetConfig.from_preset(cfg["preset"]).to_dict()
    base.update(ds)
    base["preset"] = cfg["preset"]
    try:
        return DatasetConfig.from_dict(base)
    except TypeError as exc:
        raise ConfigError(f"dataset: {exc}") from None


def split_spec(cfg: dict, manifest: DatasetManifest) -> SplitSpec:
    sp = dict(cfg["split"])
    if sp.get("holdout_xi") is None:
        preset = manifest.doc["config"].get("preset")
        sp["holdout_xi"] = PRESETS.get(preset, {}).get("holdout_xi")
    if sp["holdout_xi"] is not None:
        sp["holdout_xi"] = tuple(sp["holdout_xi"])
    sp.setdefault("seed", cfg["seed"])
    return SplitSpec(**sp)


# ------------------------------------------------------------------ commands


def cmd_generate(args) -> int:
    cfg = effective_config(args)
    if not cfg["out"]:
        raise ConfigError("out: an output directory is required (--out)")
    config = dataset_config(cfg)
    out = Path(cfg["out"])
    old = out / pipeline.MANIFEST_NAME
    previous = DatasetManifest.load(old, check_files=False).sha256() if old.exists() else None
    log.info("effective config: %s", json.dumps(cfg, sort_keys=True))
    try:
        m = pipeline.generate_dataset(config, out, jobs=cfg["jobs"])
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    digest = m.sha256()
    print(f"{len(m.examples)} examples, {len(m.groups)} groups")
    print(f"manifest {m.root / pipeline.MANIFEST_NAME} sha256 {digest}")
    if previous == digest:
        print("manifest hash unchanged")
    return EXIT_OK


def _emit_plot_data(exp, method, split, out: Path) -> None:
    for edge, series in exp.plot_data(method, split.calibration, split.test).items():
        np.savetxt(out / f"{method}_{edge}_width_error.dat", series["width_error"], fmt="%.9g",
                   header="width_nm abs_error_nm")
        np.savetxt(out / f"{method}_{edge}_dose_coverage.dat", series["dose_coverage"], fmt="%.9g",
                   header="dose coverage_pct")


def cmd_run(args) -> int:
    cfg = effective_config(args)
    if not cfg["manifest"]:
        raise ConfigError("manifest: a dataset manifest path is required (--manifest)")
    if not cfg["out"]:
        raise ConfigError("out: a report directory is required (--out)")
    methods = list(METHODS) if cfg["method"] == "all" else [cfg["method"]]
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"method: unknown method {m!r}; choose from {', '.join(METHODS)} or all")
    alpha = cfg["alpha"]
    if not isinstance(alpha, (int, float)) or not 0 < alpha < 0.5:
        raise ConfigError(f"alpha: must lie in (0, 0.5), got {alpha!r}")
    try:
        manifest = DatasetManifest.load(cfg["manifest"])
    except (FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"manifest: {exc}") from None
    spec = split_spec(cfg, manifest)
    settings = TrainingSettings(**cfg["training"])
    cfg_echo = dict(cfg, split=asdict(spec), training=asdict(settings))
    cfg_echo["split"]["holdout_xi"] = list(spec.holdout_xi) if spec.holdout_xi is not None else None
    log.info("effective config: %s", json.dumps(cfg_echo, sort_keys=True))

    split = pipeline.split_dataset(manifest, spec)
    data = pipeline.extract_data(manifest, jobs=cfg["jobs"])
    exp = pipeline.Experiment(data, split.train, alpha, cfg["seed"], settings)
    reports = []
    try:
        for m in methods:
            reports.append(exp.evaluate(m, split.calibration, split.test, spec.seed))
    except TrainingError as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING

    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        for r in reports:
            pipeline.write_csv(r.csv_rows(), out / f"{r.method}.csv")
        (out / "report.json").write_text(pipeline.report_json(reports))
        (out / "effective_config.json").write_text(json.dumps(cfg_echo, indent=1, sort_keys=True) + "\n")
        if cfg["emit_plot_data"]:
            for m in methods:
                _emit_plot_data(exp, m, split, out)
    except OSError as exc:
        print(f"error: could not write reports: {exc}", file=sys.stderr)
        return EXIT_REPORT
    for r in reports:
        for row in r.csv_rows():
            print(",".join(row[c] for c in CSV_COLUMNS))
    return EXIT_OK


def _rows_from_file(path: Path) -> list[dict]:
    """``method, edge, coverage_pct, avg_len_nm`` rows from a CSV or JSON report."""
    if path.suffix == ".csv":
        rows = pipeline.read_csv(path)
        out = []
        for r in rows:
            if r["edge"] not in EDGES:
                raise ValueError(f"{path}: unknown edge {r['edge']!r}")
            out.append({"method": r["method"], "edge": r["edge"],
                        "coverage_pct": float(r["coverage_pct"]), "avg_len_nm": float(r["avg_len_nm"])})
        return out
    doc = json.loads(path.read_text())
    out = []
    for rep in doc["reports"]:
        for edge in EDGES:
            e = rep["edges"][edge]
            out.append({"method": str(rep["method"]), "edge": edge,
                        "coverage_pct": float(e["coverage_pct"]), "avg_len_nm": float(e["avg_len_nm"])})
    return out


def render_table(entries) -> str:
    """Plain-text table of ``(run_id, row)`` pairs, grouped by edge."""
    header = f"{'run':<20} {'method':<10} {'edge':<6} {'coverage_%':>10} {'avg_len_nm':>10}"
    lines = [header, "-" * len(header)]
    for edge in EDGES:
        for run, r in entries:
            if r["edge"] == edge:
                lines.append(f"{run:<20} {r['method']:<10} {edge:<6} {r['coverage_pct']:>10.2f} {r['avg_len_nm']:>10.3f}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    entries = []
    for p in args.paths:
        path = Path(p)
        try:
            rows = _rows_from_file(path)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            print(f"error: malformed report file {path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if not rows:
            print(f"error: malformed report file {path}: no rows", file=sys.stderr)
            return EXIT_CONFIG
        entries.extend((path.stem, r) for r in rows)
    print(render_table(entries))
    return EXIT_OK


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lerconf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--jobs", type=int)

    g = sub.add_parser("generate", help="render a dataset and write its manifest")
    common(g)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="train, calibrate and evaluate interval methods")
    common(r)
    r.add_argument("--manifest", help="dataset directory or manifest.json")
    r.add_argument("--alpha", type=float)
    r.add_argument("--method", choices=[*METHODS, "all"])
    r.add_argument("--emit-plot-data", action="store_true")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="merge report files into a coverage/length table")
    rep.add_argument("paths", nargs="+")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
