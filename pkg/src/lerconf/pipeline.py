"""Dataset generation, manifests, group-aware splits and experiment orchestration."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import conformal, estimation
from .imaging import (
    STANDARD_DOSES,
    ImageGeometry,
    LineSpec,
    RenderStyle,
    apply_poisson,
    denoise,
    noise_image,
    read_semf,
    render_clean,
    round_edge_positions,
    write_semf,
)
from .roughness import HURST_GRID, SIGMA_GRID, XI_GRID, PalasantzasParams, compute_ler, synthesize_edge

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
METHODS = ("cp", "ncp", "cqr-2in", "cqr-3in")
CSV_COLUMNS = ("method", "edge", "alpha", "coverage_pct", "avg_len_nm", "n_test", "degenerate_count")
EDGES = ("left", "right")


class ConfigError(ValueError):
    pass


def stable_seed(*parts) -> int:
    """64-bit seed from a tuple of ints/strings, stable across processes and platforms."""
    h = hashlib.blake2b(repr(tuple(parts)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


# -------------------------------------------------------------------- config


PRESETS = {
    "paper": dict(
        sigmas=SIGMA_GRID, hursts=HURST_GRID, xis=XI_GRID, edges_per_combination=8, doses=STANDARD_DOSES,
        holdout_xi=(10, 20, 30, 40),
    ),
    "desk": dict(
        sigmas=(0.6, 1.4), hursts=(0.3, 0.7), xis=(10, 20, 30, 40), edges_per_combination=4,
        doses=(2, 5, 10, 50, 200), holdout_xi=None,
    ),
    "acceptance": dict(
        sigmas=(0.4, 0.8, 1.2, 1.6), hursts=(0.2, 0.5, 0.8), xis=(6, 10, 14, 18, 24, 30, 36, 40),
        edges_per_combination=10, doses=(2, 5, 10, 50, 200), holdout_xi=None,
    ),
}


@dataclass(frozen=True)
class DatasetConfig:
    """Parameter grid and rendering settings for one dataset.

    Each image carries two edges drawn with the same parameters, so a
    combination yields ``edges_per_combination // 2`` original images
    (groups), each rendered at every dose.
    """

    sigmas: tuple = PRESETS["desk"]["sigmas"]
    hursts: tuple = PRESETS["desk"]["hursts"]
    xis: tuple = PRESETS["desk"]["xis"]
    edges_per_combination: int = 4
    line_widths: tuple = (10.0, 15.0)
    doses: tuple = PRESETS["desk"]["doses"]
    root_seed: int = 0
    preset: str = "desk"
    geometry: ImageGeometry = field(default_factory=ImageGeometry)
    style: RenderStyle = field(default_factory=RenderStyle)

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "DatasetConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        p = {k: v for k, v in PRESETS[name].items() if k != "holdout_xi"}
        p.update(overrides)
        cfg = cls(preset=name, **p)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for key in ("sigmas", "hursts", "xis", "doses", "line_widths"):
            values = getattr(self, key)
            if len(values) == 0:
                raise ConfigError(f"{key}: must be a nonempty list")
        for s in self.sigmas:
            if not s > 0:
                raise ConfigError(f"sigmas: value {s} must be > 0")
        for h in self.hursts:
            if not 0 < h < 1:
                raise ConfigError(f"hursts: value {h} must lie in (0, 1)")
        for x in self.xis:
            if not x > 0:
                raise ConfigError(f"xis: value {x} must be > 0")
        for d in self.doses:
            if not d > 0:
                raise ConfigError(f"doses: value {d} must be > 0")
        for w in self.line_widths:
            if not 0 < w < self.geometry.width_nm - 2 * self.geometry.margin_nm:
                raise ConfigError(f"line_widths: value {w} does not fit the image")
        if self.edges_per_combination < 2 or self.edges_per_combination % 2:
            raise ConfigError("edges_per_combination: must be an even number >= 2")

    @property
    def images_per_combination(self) -> int:
        return self.edges_per_combination // 2

    @property
    def n_groups(self) -> int:
        return len(self.sigmas) * len(self.hursts) * len(self.xis) * self.images_per_combination

    @property
    def n_examples(self) -> int:
        return self.n_groups * len(self.doses)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        geom = ImageGeometry(**d.pop("geometry", {}))
        style = RenderStyle(**d.pop("style", {}))
        for k in ("sigmas", "hursts", "xis", "doses", "line_widths"):
            if k in d:
                d[k] = tuple(d[k])
        cfg = cls(geometry=geom, style=style, **d)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class SplitSpec:
    """Groups whose correlation length is in ``holdout_xi`` form the calibration/test
    pool, which is halved by group with ``seed``; all other groups train.

    ``holdout_xi=None`` means the upper half of the dataset's xi list.
    """

    holdout_xi: tuple | None = None
    seed: int = 0


# ------------------------------------------------------------------ manifest


@dataclass(eq=False)
class DatasetManifest:
    doc: dict
    root: Path

    @property
    def groups(self) -> list:
        return self.doc["groups"]

    @property
    def examples(self) -> list:
        return self.doc["examples"]

    @property
    def config(self) -> DatasetConfig:
        return DatasetConfig.from_dict(self.doc["config"])

    def path(self, rel: str) -> Path:
        return self.root / rel

    def to_bytes(self) -> bytes:
        return manifest_bytes(self.doc)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    @classmethod
    def load(cls, path, check_files: bool = True) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        if not path.exists():
            raise FileNotFoundError(f"manifest not found: {path}")
        doc = json.loads(path.read_text())
        if doc.get("manifest_version") != MANIFEST_VERSION:
            raise ValueError(f"{path}: unsupported manifest_version {doc.get('manifest_version')}")
        m = cls(doc, path.parent)
        if check_files:
            missing = [f for ex in m.examples for f in ex["files"].values() if not m.path(f).exists()]
            missing += [g["clean"] for g in m.groups if not m.path(g["clean"]).exists()]
            if missing:
                raise FileNotFoundError(f"{len(missing)} referenced files are missing, e.g. {missing[0]}")
        return m

    def write(self, path=None) -> Path:
        path = Path(path) if path is not None else self.root / MANIFEST_NAME
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(self.to_bytes())
        os.replace(tmp, path)
        return path


def manifest_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode()


# ---------------------------------------------------------------- generation


def _place_line(cfg: DatasetConfig, left, right, rng) -> tuple[float, float] | None:
    geom = cfg.geometry
    width = float(cfg.line_widths[rng.integers(len(cfg.line_widths))])
    gap = width + right.displacements - left.displacements
    if gap.min() < 3.0:
        return None
    lo = 2.0 - left.displacements.min() + 0.5 * width
    hi = min(geom.width_nm - 2.0 - right.displacements.max() - 0.5 * width,
             geom.width_nm - geom.margin_nm - 0.5 * width)
    if lo > hi:
        return None
    return float(rng.uniform(lo, hi)), width


def _make_group(task) -> tuple[dict, list]:
    cfg, out_root, gidx, si, hi, xi, k = task
    root = cfg.root_seed
    geom = cfg.geometry
    params = PalasantzasParams(cfg.sigmas[si], cfg.hursts[hi], cfg.xis[xi])
    for attempt in range(100):
        tag = () if attempt == 0 else (attempt,)
        left = synthesize_edge(params, geom.height_px, geom.px_h, stable_seed(root, si, hi, xi, 2 * k, *tag))
        right = synthesize_edge(params, geom.height_px, geom.px_h, stable_seed(root, si, hi, xi, 2 * k + 1, *tag))
        placed = _place_line(cfg, left, right, np.random.default_rng(stable_seed(root, "place", si, hi, xi, k, *tag)))
        if placed is not None:
            break
    else:
        raise RuntimeError(f"could not place a valid line for group {gidx}")
    center, width = placed
    spec = LineSpec(left, right, center, width)
    clean = render_clean(spec, geom, cfg.style, seed=stable_seed(root, "texture", si, hi, xi, k))

    gid = f"g{gidx:05d}"
    gdir = Path(out_root) / "images" / gid
    gdir.mkdir(parents=True, exist_ok=True)
    rel = Path("images") / gid
    write_semf(gdir / "clean.semf", clean)
    lpos, rpos = spec.positions()
    np.save(gdir / "edges_px.npy", np.stack([round_edge_positions(lpos, geom), round_edge_positions(rpos, geom)]))

    labels = {"left_ler_nm": compute_ler(left), "right_ler_nm": compute_ler(right)}
    group = {
        "group_id": gid,
        "indices": [si, hi, xi, k],
        "params": params.as_dict(),
        "line_width_nm": width,
        "center_offset_nm": center,
        "placement_attempts": attempt + 1,
        "clean": str(rel / "clean.semf"),
        "edges_px": str(rel / "edges_px.npy"),
        **labels,
    }
    examples = []
    for di, dose in enumerate(cfg.doses):
        seed = stable_seed(root, si, hi, xi, k, di)
        noisy = apply_poisson(clean, dose, seed=seed)
        den = denoise(noisy)
        noise = noise_image(noisy, den)
        files = {}
        for kind, img in (("noisy", noisy), ("denoised", den), ("noise", noise)):
            name = f"{kind}_d{di:02d}.semf"
            write_semf(gdir / name, img)
            files[kind] = str(rel / name)
        files["clean"] = group["clean"]
        examples.append({
            "example_id": f"{gid}-d{di:02d}",
            "group_id": gid,
            "dose": dose,
            "dose_index": di,
            "seed": seed,
            "gain": noisy.gain,
            "params": params.as_dict(),
            "files": files,
            **labels,
        })
    return group, examples


def _group_tasks(cfg: DatasetConfig, out_root: str):
    gidx = 0
    for si in range(len(cfg.sigmas)):
        for hi in range(len(cfg.hursts)):
            for xi in range(len(cfg.xis)):
                for k in range(cfg.images_per_combination):
                    yield (cfg, out_root, gidx, si, hi, xi, k)
                    gidx += 1


def generate_dataset(config: DatasetConfig, out, jobs: int = 1) -> DatasetManifest:
    """Render every group and dose variant under ``out`` and write the manifest last.

    A directory without ``manifest.json`` is an incomplete generation.
    """
    config.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    stale = out / MANIFEST_NAME
    if stale.exists():
        stale.unlink()
    tasks = list(_group_tasks(config, str(out)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_make_group, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_make_group(t) for t in tasks]
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "config": config.to_dict(),
        "groups": [g for g, _ in results],
        "examples": [e for _, exs in results for e in exs],
    }
    m = DatasetManifest(doc, out)
    m.write()
    log.info("generated %d examples in %d groups under %s", len(m.examples), len(m.groups), out)
    return m


# -------------------------------------------------------------------- splits


@dataclass(frozen=True)
class Split:
    train: tuple
    calibration: tuple
    test: tuple


def split_dataset(manifest: DatasetManifest, spec: SplitSpec = SplitSpec()) -> Split:
    """Partition example ids into proper-train, calibration and test, never splitting a group."""
    xis = sorted({g["params"]["xi"] for g in manifest.groups})
    if spec.holdout_xi is None:
        holdout = set(xis[len(xis) // 2:])
    else:
        holdout = set(float(x) for x in spec.holdout_xi)
        unknown = holdout - set(float(x) for x in xis)
        if unknown:
            raise ConfigError(f"holdout xi values not in the dataset: {sorted(unknown)}")
    pool = [g["group_id"] for g in manifest.groups if g["params"]["xi"] in holdout]
    rng = np.random.default_rng(stable_seed("split", spec.seed))
    perm = [pool[i] for i in rng.permutation(len(pool))]
    n_cal = len(perm) // 2
    cal_groups, test_groups = set(perm[:n_cal]), set(perm[n_cal:])
    if not cal_groups or not test_groups:
        raise ConfigError("calibration or test split is empty")
    train, cal, test = [], [], []
    for ex in manifest.examples:
        g = ex["group_id"]
        (cal if g in cal_groups else test if g in test_groups else train).append(ex["example_id"])
    return Split(tuple(train), tuple(cal), tuple(test))


# ------------------------------------------------------- feature extraction


@dataclass(eq=False)
class ExperimentData:
    """Per-example labels, base predictions and difficulty features."""

    ids: list
    group_ids: list
    dose: np.ndarray
    sigma: np.ndarray
    y: np.ndarray  # (n, 2) true LER, left/right
    yhat: np.ndarray  # (n, 2) base predictions
    features: np.ndarray
    seq_features: np.ndarray
    manifest_sha256: str

    def index(self, ids) -> np.ndarray:
        pos = {e: i for i, e in enumerate(self.ids)}
        return np.array([pos[e] for e in ids], dtype=np.int64)


def _extract_one(args):
    root, ex, geom = args
    root = Path(root)
    noisy = read_semf(root / ex["files"]["noisy"])
    noise = read_semf(root / ex["files"]["noise"])
    det = estimation.detect_edges(estimation.adaptive_smooth(noisy), geom)
    yhat = (compute_ler(det.left), compute_ler(det.right))
    return yhat, estimation.difficulty_features(noise, det, geom), estimation.sequence_features(det)


def extract_data(manifest: DatasetManifest, jobs: int = 1) -> ExperimentData:
    geom = manifest.config.geometry
    tasks = [(str(manifest.root), ex, geom) for ex in manifest.examples]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_extract_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        out = [_extract_one(t) for t in tasks]
    exs = manifest.examples
    return ExperimentData(
        ids=[e["example_id"] for e in exs],
        group_ids=[e["group_id"] for e in exs],
        dose=np.array([e["dose"] for e in exs], dtype=np.float64),
        sigma=np.array([e["params"]["sigma"] for e in exs], dtype=np.float64),
        y=np.array([[e["left_ler_nm"], e["right_ler_nm"]] for e in exs]),
        yhat=np.array([o[0] for o in out]),
        features=np.array([o[1] for o in out]),
        seq_features=np.array([o[2] for o in out]),
        manifest_sha256=manifest.sha256(),
    )


# ------------------------------------------------------------------- metrics


def coverage_and_length(lo, hi, y) -> tuple[float, float]:
    """Percent of labels with ``lo <= y <= hi`` and the mean width ``hi - lo``."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (lo.shape == hi.shape == y.shape):
        raise ValueError("intervals and labels differ in length")
    if y.size == 0:
        raise ValueError("no intervals to evaluate")
    covered = (lo <= y) & (y <= hi)
    return 100.0 * float(covered.mean()), float(np.mean(hi - lo))


def _pearson(a, b) -> float:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


@dataclass
class EdgeResult:
    coverage_pct: float
    avg_len_nm: float
    n_test: int
    degenerate_count: int = 0
    width_error_corr: float = float("nan")
    uncalibrated_coverage_pct: float | None = None
    uncalibrated_avg_len_nm: float | None = None
    calibration_constant: float = float("nan")
    by_dose: dict = field(default_factory=dict)
    by_sigma: dict = field(default_factory=dict)


@dataclass
class EvaluationReport:
    method: str
    alpha: float
    edges: dict
    manifest_sha256: str
    seeds: dict
    n_train: int
    n_calibration: int
    n_test: int

    def csv_rows(self) -> list[dict]:
        rows = []
        for edge in EDGES:
            r = self.edges[edge]
            rows.append({
                "method": self.method,
                "edge": edge,
                "alpha": f"{self.alpha:g}",
                "coverage_pct": f"{r.coverage_pct:.4f}",
                "avg_len_nm": f"{r.avg_len_nm:.6f}",
                "n_test": str(r.n_test),
                "degenerate_count": str(r.degenerate_count),
            })
        return rows

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d, default=float, allow_nan=True))

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        d = dict(d)
        d["edges"] = {k: EdgeResult(**v) for k, v in d["edges"].items()}
        return cls(**d)


def write_csv(rows, path) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(CSV_COLUMNS)}")
        return list(reader)


# ---------------------------------------------------------------- experiment


@dataclass(frozen=True)
class TrainingSettings:
    difficulty_epochs: int = 200
    difficulty_hidden: int = 16
    quantile_epochs: int = 300
    batch: int = 18
    lr: float = 1e-3


class Experiment:
    """Models trained once on the proper-train split, reusable across calibration/test splits."""

    def __init__(self, data: ExperimentData, train_ids, alpha: float = 0.1, seed: int = 0,
                 settings: TrainingSettings = TrainingSettings()):
        if not 0 < alpha < 0.5:
            raise ConfigError(f"alpha must lie in (0, 0.5), got {alpha}")
        self.data = data
        self.train = data.index(train_ids)
        self.alpha = alpha
        self.seed = seed
        self.settings = settings
        self.difficulty = {}  # (variant, edge) -> DifficultyModel
        self.quantile = {}  # (n_inputs, edge) -> QuantileNet
        self._phi = {}

    def _feature_view(self, variant: str) -> np.ndarray:
        return self.data.features if variant == "global" else self.data.seq_features

    def difficulty_model(self, variant: str, e: int) -> estimation.DifficultyModel:
        key = (variant, e)
        if key not in self.difficulty:
            d, tr = self.data, self.train
            targets = estimation.difficulty_targets(d.y[tr, e], d.yhat[tr, e])
            s = self.settings
            self.difficulty[key] = estimation.fit_difficulty(
                self._feature_view(variant)[tr], targets, seed=stable_seed(self.seed, "difficulty", variant, e),
                hidden=s.difficulty_hidden, epochs=s.difficulty_epochs, batch=s.batch, lr=s.lr,
            )
        return self.difficulty[key]

    def phi(self, variant: str, e: int) -> np.ndarray:
        key = (variant, e)
        if key not in self._phi:
            self._phi[key] = self.difficulty_model(variant, e).predict_phi(self._feature_view(variant))
        return self._phi[key]

    def quantile_inputs(self, n_inputs: int, e: int) -> np.ndarray:
        cols = [self.data.yhat[:, e], self.phi("global", e)]
        if n_inputs == 3:
            cols.append(self.phi("sequence", e))
        return np.column_stack(cols)

    def quantile_net(self, n_inputs: int, e: int) -> estimation.QuantileNet:
        key = (n_inputs, e)
        if key not in self.quantile:
            X = self.quantile_inputs(n_inputs, e)
            s = self.settings
            self.quantile[key] = estimation.fit_quantile_net(
                X[self.train], self.data.y[self.train, e], self.alpha,
                seed=stable_seed(self.seed, "quantile", n_inputs, e),
                epochs=s.quantile_epochs, batch=s.batch, lr=s.lr,
            )
        return self.quantile[key]

    def fit(self, method: str) -> None:
        for e in range(2):
            if method == "ncp":
                self.difficulty_model("global", e)
            elif method in ("cqr-2in", "cqr-3in"):
                self.quantile_net(3 if method == "cqr-3in" else 2, e)
            elif method != "cp":
                raise ConfigError(f"unknown method {method!r}")

    def intervals(self, method: str, e: int, cal: np.ndarray, test: np.ndarray, gamma_override=None):
        """Calibrate on ``cal`` and return test bounds, the model, degeneracy count and raw bounds."""
        d = self.data
        y, yhat = d.y[:, e], d.yhat[:, e]
        raw = None
        if method == "cp":
            model = conformal.calibrate_cp(conformal.residual_score(y[cal], yhat[cal]), self.alpha)
            lo, hi = conformal.bounds_cp(yhat[test], model)
            ndeg = 0
        elif method == "ncp":
            if gamma_override is None:
                gamma = estimation.predict_gamma(None, phi=self.phi("global", e))
            else:
                gamma = np.full(len(d.ids), float(gamma_override))
            model = conformal.calibrate_ncp(conformal.residual_score(y[cal], yhat[cal]), gamma[cal], self.alpha)
            lo, hi = conformal.bounds_ncp(yhat[test], gamma[test], model)
            ndeg = 0
        elif method in ("cqr-2in", "cqr-3in"):
            net = self.quantile_net(3 if method == "cqr-3in" else 2, e)
            qlo, qhi = estimation.predict_quantiles(net, self.quantile_inputs(net.shape[0], e))
            model = conformal.calibrate_cqr(y[cal], qlo[cal], qhi[cal], self.alpha)
            lo, hi, ndeg = conformal.bounds_cqr(qlo[test], qhi[test], model)
            raw = (qlo[test], qhi[test])
        else:
            raise ConfigError(f"unknown method {method!r}")
        return lo, hi, model, ndeg, raw

    def evaluate(self, method: str, cal_ids, test_ids, split_seed: int = 0, gamma_override=None) -> EvaluationReport:
        self.fit(method)
        d = self.data
        cal, test = d.index(cal_ids), d.index(test_ids)
        edges = {}
        for e, name in enumerate(EDGES):
            lo, hi, model, ndeg, raw = self.intervals(method, e, cal, test, gamma_override)
            yt = d.y[test, e]
            cov, length = coverage_and_length(lo, hi, yt)
            res = EdgeResult(cov, length, int(test.size), ndeg, calibration_constant=model.constant)
            res.width_error_corr = _pearson(hi - lo, np.abs(yt - d.yhat[test, e]))
            if raw is not None:
                res.uncalibrated_coverage_pct, res.uncalibrated_avg_len_nm = coverage_and_length(raw[0], raw[1], yt)
            for attr, values in (("by_dose", d.dose[test]), ("by_sigma", d.sigma[test])):
                table = {}
                for v in np.unique(values):
                    sel = values == v
                    c, ln = coverage_and_length(lo[sel], hi[sel], yt[sel])
                    table[f"{v:g}"] = {"coverage_pct": c, "avg_len_nm": ln, "n": int(sel.sum())}
                setattr(res, attr, table)
            edges[name] = res
        return EvaluationReport(
            method=method, alpha=self.alpha, edges=edges, manifest_sha256=d.manifest_sha256,
            seeds={"split_seed": split_seed, "train_seed": self.seed},
            n_train=int(self.train.size), n_calibration=int(cal.size), n_test=int(test.size),
        )

    def plot_data(self, method: str, cal_ids, test_ids) -> dict:
        """Per-edge ``(width, |error|)`` pairs and per-dose coverage series on the test split."""
        d = self.data
        cal, test = d.index(cal_ids), d.index(test_ids)
        out = {}
        for e, name in enumerate(EDGES):
            lo, hi, *_ = self.intervals(method, e, cal, test)
            err = np.abs(d.y[test, e] - d.yhat[test, e])
            doses = np.unique(d.dose[test])
            series = [(dv, coverage_and_length(lo[d.dose[test] == dv], hi[d.dose[test] == dv],
                                               d.y[test, e][d.dose[test] == dv])[0]) for dv in doses]
            out[name] = {"width_error": np.column_stack([hi - lo, err]), "dose_coverage": np.array(series)}
        return out


def run_experiment(manifest: DatasetManifest, spec: SplitSpec, method: str, alpha: float = 0.1, *,
                   seed: int = 0, jobs: int = 1, gamma_override=None, data: ExperimentData | None = None,
                   settings: TrainingSettings = TrainingSettings()) -> EvaluationReport:
    """Train on proper-train, calibrate on calibration, evaluate on test."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    split = split_dataset(manifest, spec)
    data = data or extract_data(manifest, jobs)
    exp = Experiment(data, split.train, alpha, seed, settings)
    return exp.evaluate(method, split.calibration, split.test, spec.seed, gamma_override)


def _nan_to_none(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def report_json(reports) -> str:
    docs = []
    for r in reports:
        d = r.to_dict()
        for e in d["edges"].values():
            for k, v in e.items():
                e[k] = _nan_to_none(v)
        docs.append(d)
    return json.dumps({"reports": docs}, indent=1, sort_keys=True) + "\n"


def load_reports(path) -> list[EvaluationReport]:
    doc = json.loads(Path(path).read_text())
    out = []
    for d in doc["reports"]:
        for e in d["edges"].values():
            for k in ("width_error_corr", "calibration_constant"):
                if e.get(k) is None:
                    e[k] = float("nan")
        out.append(EvaluationReport.from_dict(d))
    return out
