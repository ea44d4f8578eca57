"""End-to-end research design: split, tune by MCCV, refit, evaluate, interpret.

Sequence per run:

1. load or synthesize the firm table, log-transform the size variables;
2. hold out a test set;
3. per model, score every grid point by mean validation AUC over Monte
   Carlo splits of the training set, each sub-training part undersampled
   to balance, validation parts left untouched;
4. refit the best grid point on an undersampled copy of the whole training
   set and score it on the test set;
5. compute ALE curves with bootstrap bands for every feature and global
   Shapley values for the black-box models, all on the training set.

Every random draw takes its seed from ``derive_seed(cfg.seed, stage, ...)``,
never from execution order, so runs are reproducible with any ``n_jobs``.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
from scipy import stats

from . import __version__
from .dataset import (
    DISPLAY_NAMES,
    SIZE_FEATURES,
    REFERENCE_MOMENTS,
    ClassMoments,
    Dataset,
    LabelMechanism,
    apply_log_transform,
    load_csv,
    split_indices,
    synthesize_firms,
)
from .errors import ConfigError, CreditAleError, NumericalError
from .interpret import ShapleyConfig, ale_bootstrap, global_shapley
from .metrics import MetricsReport, auc, evaluate
from .models import (
    FAMILIES,
    FANNConfig,
    FittedModel,
    GBTConfig,
    LinearConfig,
    fit_fann,
    fit_gbt,
    fit_linear,
    model_from_dict,
    save_model,
)
from .models.linear import LINK_OF_FAMILY, XI_GRID
from .resampling import mccv_splits, undersample_indices
from .svg import ale_svg, shapley_svg

logger = logging.getLogger(__name__)

MODEL_LABELS = {
    "fann": "Feedforward Artificial Neural Network",
    "gbt": "Gradient Boosted Trees",
    "gev": "GEV-link regression",
    "lr": "Logistic Regression",
    "probit": "Probit Model",
}

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "fann": {"hidden_size": [16], "learning_rate": [0.01, 0.05, 0.2]},
    "gbt": {"max_depth": [2, 3], "learning_rate": [0.1, 0.3]},
    "gev": {"xi": list(XI_GRID)},
    "lr": {},
    "probit": {},
}

# where and how fast to run; never changes a result, so kept out of reports and hashes
_EXECUTION_KEYS = ("output_dir", "n_jobs")

# stage tags for seed derivation
_SPLIT, _MCCV, _UNDERSAMPLE, _FINAL, _FIT, _ALE, _SHAPLEY, _SYNTH = range(8)


def derive_seed(base: int, *path: int) -> int:
    """Stable 32-bit seed for a work unit identified by integer ``path``."""
    return int(np.random.SeedSequence([base % 2**32, *path]).generate_state(1)[0])


def expand_grid(grid: Mapping[str, list] | list[dict]) -> list[dict]:
    """Cartesian product of a ``{name: [values]}`` grid, keys in sorted order."""
    if isinstance(grid, list):
        return [dict(g) for g in grid] or [{}]
    keys = sorted(grid)
    for k in keys:
        if not isinstance(grid[k], (list, tuple)) or not grid[k]:
            raise ConfigError(f"grid entry {k!r} must be a nonempty list")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


@dataclass
class DataSource:
    csv: str | None = None
    decimal: str = "."
    thousands: str | None = None
    synthetic_n: int = 20_000
    synthetic_seed: int | None = None
    moments: Any = "reference"
    mechanism: dict = field(default_factory=dict)

    @property
    def is_synthetic(self) -> bool:
        return self.csv is None

    def to_dict(self) -> dict:
        if self.csv is not None:
            return {"csv": self.csv, "decimal": self.decimal, "thousands": self.thousands}
        moments = self.moments.to_dict() if isinstance(self.moments, ClassMoments) else self.moments
        return {
            "synthetic": {
                "n": self.synthetic_n,
                "seed": self.synthetic_seed,
                "moments": moments,
                "mechanism": self.mechanism,
            }
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DataSource":
        if "csv" in doc:
            return cls(csv=str(doc["csv"]), decimal=doc.get("decimal", "."), thousands=doc.get("thousands"))
        syn = doc.get("synthetic", doc)
        return cls(
            synthetic_n=int(syn.get("n", 20_000)),
            synthetic_seed=syn.get("seed"),
            moments=syn.get("moments", "reference"),
            mechanism=dict(syn.get("mechanism", {})),
        )

    def class_moments(self) -> ClassMoments:
        if isinstance(self.moments, ClassMoments):
            return self.moments
        if self.moments in (None, "reference"):
            return REFERENCE_MOMENTS
        if isinstance(self.moments, Mapping):
            return ClassMoments.from_dict(self.moments)
        return ClassMoments.from_json(self.moments)


@dataclass
class InterpretSettings:
    bins: int = 40
    bootstrap: int = 100
    band: tuple[float, float] = (0.05, 0.95)
    shapley_sample: int = 1000
    shapley_background: int = 100
    shapley_permutations: int = 1000
    shapley_models: tuple[str, ...] = ("fann", "gbt")
    features: tuple[str, ...] | None = None


@dataclass
class ExperimentConfig:
    data: DataSource = field(default_factory=DataSource)
    seed: int = 0
    train_fraction: float = 0.7
    mccv_iterations: int = 30
    validation_fraction: float = 0.3
    models: tuple[str, ...] = FAMILIES
    grids: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_GRIDS.items()})
    fixed: dict = field(default_factory=dict)
    log_features: tuple[str, ...] = SIZE_FEATURES
    interpret: InterpretSettings = field(default_factory=InterpretSettings)
    threshold: float = 0.5
    severity: tuple[float, float] = (2.0, 2.0)
    output_dir: str | None = None
    n_jobs: int = 1

    def validate(self) -> None:
        for name in ("train_fraction", "validation_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if not 0.0 < self.interpret.band[0] < self.interpret.band[1] < 1.0:
            raise ConfigError(f"invalid band {self.interpret.band}")
        unknown = [m for m in self.models if m not in FAMILIES]
        if unknown:
            raise ConfigError(f"unknown model(s): {', '.join(unknown)}")
        if len(set(self.models)) != len(self.models):
            raise ConfigError("models listed more than once")
        for m in self.models:
            if not expand_grid(self.grids.get(m, {})):
                raise ConfigError(f"empty hyperparameter grid for {m}")
        if self.mccv_iterations < 1:
            raise ConfigError("mccv_iterations must be >= 1")
        if self.severity[0] <= 0 or self.severity[1] <= 0:
            raise ConfigError("severity Beta parameters must be positive")

    def to_dict(self) -> dict:
        """Settings that determine results; execution-only keys are left out."""
        doc = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in _EXECUTION_KEYS}
        doc["data"] = self.data.to_dict()
        doc["interpret"] = asdict(self.interpret)
        return json.loads(json.dumps(doc, default=list))

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExperimentConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(extra))}")
        kw: dict[str, Any] = {}
        for k, v in doc.items():
            if k == "data":
                kw[k] = DataSource.from_dict(v)
            elif k == "interpret":
                iknown = {f.name for f in fields(InterpretSettings)}
                bad = set(v) - iknown
                if bad:
                    raise ConfigError(f"unknown interpret key(s): {', '.join(sorted(bad))}")
                iv = dict(v)
                for t in ("band", "shapley_models", "features"):
                    if iv.get(t) is not None:
                        iv[t] = tuple(iv[t])
                kw[k] = InterpretSettings(**iv)
            elif k == "grids":
                grids = {m: dict(g) for m, g in DEFAULT_GRIDS.items()}
                grids.update(v)
                kw[k] = grids
            elif k in ("models", "log_features", "severity"):
                kw[k] = tuple(v)
            else:
                kw[k] = v
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = cls.from_dict(doc)
        if cfg.data.csv is not None and not Path(cfg.data.csv).is_absolute():
            cfg.data.csv = str((path.parent / cfg.data.csv).resolve())
        return cfg

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


class IndexTracker:
    """Records which global row indices each stage received."""

    def __init__(self) -> None:
        self.seen: dict[str, set[int]] = {}

    def record(self, stage: str, indices: np.ndarray) -> None:
        self.seen.setdefault(stage, set()).update(np.asarray(indices).tolist())

    def touched(self) -> set[int]:
        return set().union(*self.seen.values()) if self.seen else set()


# --------------------------------------------------------------------------
# model construction


def fit_family(family: str, d: Dataset, params: Mapping, seed: int) -> FittedModel:
    params = dict(params)
    try:
        if family in LINK_OF_FAMILY:
            return fit_linear(d, LINK_OF_FAMILY[family], LinearConfig(**{"seed": seed, **params}))
        if family == "gbt":
            return fit_gbt(d, GBTConfig(**params))
        if family == "fann":
            return fit_fann(d, FANNConfig(**{"seed": seed, **params}))
    except TypeError as exc:
        raise ConfigError(f"bad hyperparameters for {family}: {exc}") from exc
    raise ConfigError(f"unknown model family {family!r}")


def _with_stage(exc: CreditAleError, stage: str) -> CreditAleError:
    msg = exc.args[0] if exc.args else ""
    exc.args = (f"[{stage}] {msg}", *exc.args[1:])
    return exc


@dataclass
class ModelResult:
    family: str
    model: FittedModel
    params: dict
    metrics: MetricsReport
    cv_trace: list[dict]
    cv_mean_auc: list[dict]

    def to_dict(self) -> dict:
        doc = {
            "label": MODEL_LABELS[self.family],
            "chosen_params": self.params,
            "metrics": self.metrics.to_dict(),
            "cv_mean_auc": self.cv_mean_auc,
            "cv_trace": self.cv_trace,
        }
        est = linear_estimates(self.model)
        if est is not None:
            doc["estimates"] = est
        return doc


def linear_estimates(model: FittedModel) -> list[dict] | None:
    """Coefficient table with odds ratios and Wald p-values for linear links."""
    if model.family not in LINK_OF_FAMILY:
        return None
    beta = model.coefficients
    se = model.std_errors if model.std_errors is not None else np.full(beta.size, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        pval = 2.0 * stats.norm.sf(np.abs(beta / se))
    names = ("(Intercept)", *model.feature_names)
    return [
        {"term": t, "estimate": float(b), "odds_ratio": float(np.exp(b)), "std_error": float(s), "p_value": float(q)}
        for t, b, s, q in zip(names, beta, se, pval)
    ]


@dataclass
class ExperimentReport:
    config: dict
    results: dict[str, ModelResult]
    ale: dict[str, list[dict]]
    shapley: dict[str, dict]
    provenance: dict
    leakage: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "models": {k: r.to_dict() for k, r in self.results.items()},
            "ale": self.ale,
            "shapley": self.shapley,
            "leakage": self.leakage,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


# --------------------------------------------------------------------------


def prepare_data(cfg: ExperimentConfig) -> Dataset:
    src = cfg.data
    if src.is_synthetic:
        seed = src.synthetic_seed if src.synthetic_seed is not None else derive_seed(cfg.seed, _SYNTH)
        mech = LabelMechanism.from_dict(src.mechanism) if src.mechanism else None
        d = synthesize_firms(src.class_moments(), src.synthetic_n, seed, mech)
    else:
        d, dropped = load_csv(src.csv, decimal=src.decimal, thousands=src.thousands)
        if dropped:
            logger.info("listwise deletion removed %d rows", dropped)
    return apply_log_transform(d, cfg.log_features)


def _tune(
    family: str,
    data: Dataset,
    train_idx: np.ndarray,
    cfg: ExperimentConfig,
    tracker: IndexTracker,
    pool: ThreadPoolExecutor | None,
) -> tuple[dict, list[dict], list[dict]]:
    grid = expand_grid(cfg.grids.get(family, {}))
    fixed = dict(cfg.fixed.get(family, {}))
    plan = mccv_splits(train_idx.size, cfg.mccv_iterations, cfg.validation_fraction, derive_seed(cfg.seed, _MCCV))
    fam_id = FAMILIES.index(family)

    units = []
    for it, (sub, val) in enumerate(plan):
        sub_g, val_g = train_idx[sub], train_idx[val]
        tracker.record("undersample", sub_g)
        tracker.record("validation", val_g)
        bal_g = sub_g[undersample_indices(data.labels[sub_g], derive_seed(cfg.seed, _UNDERSAMPLE, it))]
        for gi in range(len(grid)):
            units.append((gi, it, bal_g, val_g))

    def run(unit):
        gi, it, bal_g, val_g = unit
        params = {**fixed, **grid[gi]}
        try:
            model = fit_family(family, data.subset(bal_g), params, derive_seed(cfg.seed, _FIT, fam_id, gi, it))
            score = auc(model.predict_proba(data.features[val_g]), data.labels[val_g])
        except NumericalError as exc:
            logger.warning("%s grid point %d iteration %d failed: %s", family, gi, it, exc)
            score = float("nan")
        return {"grid_index": gi, "iteration": it, "params": grid[gi], "auc": score}

    trace = list(pool.map(run, units)) if pool else [run(u) for u in units]
    trace.sort(key=lambda r: (r["grid_index"], r["iteration"]))
    means = []
    for gi, params in enumerate(grid):
        scores = np.array([r["auc"] for r in trace if r["grid_index"] == gi])
        ok = np.isfinite(scores)
        means.append(
            {"grid_index": gi, "params": params, "mean_auc": float(scores[ok].mean()) if ok.any() else float("nan"),
             "failed": int((~ok).sum())}
        )
    finite = [m for m in means if np.isfinite(m["mean_auc"])]
    if not finite:
        raise NumericalError(f"every grid point failed for {family}")
    best = max(finite, key=lambda m: (m["mean_auc"], -m["grid_index"]))
    return {**fixed, **best["params"]}, trace, means


def run_experiment(
    cfg: ExperimentConfig,
    tracker: IndexTracker | None = None,
    data: Dataset | None = None,
) -> ExperimentReport:
    """Run the full design and return the in-memory report.

    ``data`` overrides the configured source (already log-transformed).
    """
    cfg.validate()
    started = datetime.now(timezone.utc).isoformat()
    tracker = tracker or IndexTracker()
    stage = "data"
    try:
        if data is None:
            data = prepare_data(cfg)
        train_idx, test_idx = split_indices(data.n, cfg.train_fraction, derive_seed(cfg.seed, _SPLIT))
        train = data.subset(train_idx)
        test = data.subset(test_idx)
        features = cfg.interpret.features or data.feature_names
        feat_idx = [data.index_of(f) for f in features]

        results: dict[str, ModelResult] = {}
        ale: dict[str, list[dict]] = {}
        shap: dict[str, dict] = {}
        pool = ThreadPoolExecutor(cfg.n_jobs) if cfg.n_jobs > 1 else None
        try:
            for family in FAMILIES:
                if family not in cfg.models:
                    continue
                fam_id = FAMILIES.index(family)
                stage = f"{family}: tuning"
                params, trace, means = _tune(family, data, train_idx, cfg, tracker, pool)

                stage = f"{family}: final fit"
                tracker.record("undersample", train_idx)
                bal_g = train_idx[undersample_indices(data.labels[train_idx], derive_seed(cfg.seed, _FINAL))]
                model = fit_family(family, data.subset(bal_g), params, derive_seed(cfg.seed, _FIT, fam_id, 10**6))
                metrics = evaluate(model.predict_proba(test.features), test.labels, cfg.threshold, cfg.severity)
                results[family] = ModelResult(family, model, params, metrics, trace, means)

                stage = f"{family}: ALE"
                s = cfg.interpret

                def one_curve(j: int) -> dict:
                    c = ale_bootstrap(model, train, j, s.bins, s.bootstrap, s.band, derive_seed(cfg.seed, _ALE, fam_id, j))
                    return c.to_dict()

                ale[family] = list(pool.map(one_curve, feat_idx)) if pool else [one_curve(j) for j in feat_idx]

                if family in s.shapley_models:
                    stage = f"{family}: Shapley"
                    scfg = ShapleyConfig(
                        permutations=s.shapley_permutations,
                        seed=derive_seed(cfg.seed, _SHAPLEY, fam_id),
                        sample_size=s.shapley_sample,
                        background_size=s.shapley_background,
                    )
                    shap[family] = global_shapley(model, train, scfg).to_dict()
        finally:
            if pool:
                pool.shutdown()
    except CreditAleError as exc:
        raise _with_stage(exc, stage) from None

    test_set = set(test_idx.tolist())
    leak = sorted(tracker.touched() & test_set)
    if leak:
        raise AssertionError(f"test rows reached tuning/undersampling: {leak[:10]}")
    provenance = {
        "package_version": __version__,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "data_fingerprint": data.fingerprint(),
        "n": data.n,
        "n_train": int(train_idx.size),
        "n_test": int(test_idx.size),
        "train_defaults": int(train.labels.sum()),
        "test_defaults": int(test.labels.sum()),
        "timestamps": {"started": started, "finished": datetime.now(timezone.utc).isoformat()},
    }
    leakage = {
        "test_rows": int(test_idx.size),
        "test_rows_seen_by_tuning": 0,
        "rows_seen_by_stage": {k: len(v) for k, v in sorted(tracker.seen.items())},
    }
    return ExperimentReport(cfg.to_dict(), results, ale, shap, provenance, leakage)


def strip_timestamps(doc: dict) -> dict:
    doc = json.loads(json.dumps(doc))
    doc.get("provenance", {}).pop("timestamps", None)
    return doc


# --------------------------------------------------------------------------
# outputs

METRIC_COLUMNS = ("model", "sensitivity", "specificity", "h_measure", "auc")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text.lower()).strip("_")


def emit_outputs(report: ExperimentReport, out_dir: str | Path, write_manifest: bool = True) -> list[dict]:
    """Write report.json, metrics.csv, ALE/Shapley SVGs and model documents.

    Returns the manifest: one ``{path, sha256, bytes}`` entry per file,
    paths relative to ``out_dir``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []

        p = out / "report.json"
        p.write_text(report.to_json())
        written.append(p)

        p = out / "metrics.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRIC_COLUMNS)
            for fam in FAMILIES:
                if fam in report.results:
                    m = report.results[fam].metrics
                    w.writerow([fam, repr(m.sensitivity), repr(m.specificity), repr(m.h_measure), repr(m.auc)])
        written.append(p)

        for fam, curves in report.ale.items():
            for c in curves:
                p = out / "ale" / f"{fam}_{_slug(c['feature'])}.svg"
                p.parent.mkdir(exist_ok=True)
                title = f"{MODEL_LABELS[fam]}: {DISPLAY_NAMES.get(c['feature'], c['feature'])}"
                p.write_text(ale_svg(c, title, antilog=c["log_scale"]))
                written.append(p)
        for fam, summary in report.shapley.items():
            p = out / "shapley" / f"{fam}.svg"
            p.parent.mkdir(exist_ok=True)
            p.write_text(shapley_svg(summary, f"Global Shapley values: {MODEL_LABELS[fam]}"))
            written.append(p)
        for fam, res in report.results.items():
            p = save_model(res.model, out / "models" / f"{fam}.json")
            written.append(p)

        manifest = [
            {"path": str(q.relative_to(out)), "sha256": _sha256(q), "bytes": q.stat().st_size} for q in written
        ]
        if write_manifest:
            (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write outputs to {out}: {exc}") from exc
    return manifest


def load_report_models(out_dir: str | Path) -> dict[str, FittedModel]:
    out = Path(out_dir) / "models"
    return {p.stem: model_from_dict(json.loads(p.read_text())) for p in sorted(out.glob("*.json"))}
