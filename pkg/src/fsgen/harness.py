"""Feature ingestion, episode sampling and benchmark orchestration."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .baselines import (DbCalibration, calibrate_db_regression, davies_bouldin_index,
                        loo_cross_validation, predict_accuracy_db)
from .core import FeatureSet, FewShotTask, canonical_labels, fit_class_means, ncm_predict
from .metrics import mape, mean_and_se, roc_curve
from .montecarlo import MonteCarloConfig, predict_accuracy
from .synthetic import (SyntheticSpec, classifier_true_error, generate_isotropic_task,
                        oracle_error)

METHODS = ("ours-unbiased", "ours-biased", "cv", "db", "oracle")
MIN_QUERY = 50
RECORD_FIELDS = ("task_id", "seed", "n", "k", "n_query", "truth_method", "low_confidence", "true_accuracy")
MAPE_FIELDS = ("k", "method", "mape", "se", "tasks")
ROC_FIELDS = ("k", "method", "fpr", "tpr", "threshold")


class FeatureFormatError(ValueError):
    pass


class EmptyFeatureFileError(FeatureFormatError):
    pass


class RaggedDimensionError(FeatureFormatError):
    pass


class UnknownFormatError(FeatureFormatError):
    pass


class InsufficientPoolError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureStore:
    pools: dict  # label -> (count, d), file order

    @property
    def classes(self) -> tuple:
        return canonical_labels(self.pools)

    @property
    def dim(self) -> int:
        return next(iter(self.pools.values())).shape[1]

    def __eq__(self, other):
        if not isinstance(other, FeatureStore) or self.classes != other.classes:
            return False
        return all(np.array_equal(self.pools[c], other.pools[c]) for c in self.classes)

    def as_reference_tasks(self, n: int, count: int, seed: int) -> list:
        """Random n-class subsets with their full pools."""
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1]))
        out = []
        for _ in range(count):
            picked = rng.choice(len(self.classes), size=n, replace=False)
            out.append({self.classes[i]: self.pools[self.classes[i]] for i in sorted(picked)})
        return out


def _normalize_labels(raw: list) -> list:
    text = [str(x) for x in raw]
    try:
        return [int(t) for t in text]
    except ValueError:
        return text


def _build_store(labels: list, rows: list) -> FeatureStore:
    if not rows:
        raise EmptyFeatureFileError("feature file contains no samples")
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        bad = next(i for i, r in enumerate(rows) if len(r) != len(rows[0]))
        raise RaggedDimensionError(
            f"ragged dimensions: row {bad} has {len(rows[bad])} features, row 0 has {len(rows[0])}")
    if 0 in dims:
        raise FeatureFormatError("rows carry no features")
    labels = _normalize_labels(labels)
    X = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(X)):
        raise FeatureFormatError("features contain NaN or Inf")
    lab = np.empty(len(labels), dtype=object)
    lab[:] = labels
    return FeatureStore({c: X[lab == c] for c in canonical_labels(labels)})


def _read_csv(text: str):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise EmptyFeatureFileError("feature file is empty")
    if not header or header[0].strip() != "label":
        raise FeatureFormatError("CSV header must start with 'label'")
    labels, rows = [], []
    for line_no, rec in enumerate(reader, start=2):
        if not rec:
            continue
        labels.append(rec[0])
        try:
            rows.append([float(v) for v in rec[1:]])
        except ValueError as exc:
            raise FeatureFormatError(f"line {line_no}: {exc}") from None
    return labels, rows


def _read_jsonl(text: str):
    labels, rows = [], []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            labels.append(obj["label"])
            rows.append([float(v) for v in obj["features"]])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FeatureFormatError(f"line {line_no}: {exc}") from None
    return labels, rows


def load_features(path, fmt: Optional[str] = None) -> FeatureStore:
    """Load a CSV (``label,f0,...``) or JSON-lines (``{"label", "features"}``)
    feature file. The format is taken from the suffix when not given."""
    path = Path(path)
    if fmt is None:
        fmt = {".csv": "csv", ".jsonl": "jsonl", ".ndjson": "jsonl"}.get(path.suffix.lower())
    if fmt not in ("csv", "jsonl"):
        raise UnknownFormatError(f"unknown feature format {fmt!r} for {path}")
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise EmptyFeatureFileError(f"{path} is empty")
    labels, rows = _read_csv(text) if fmt == "csv" else _read_jsonl(text)
    return _build_store(labels, rows)


def write_features(path, feature_set: FeatureSet, fmt: str = "csv") -> None:
    path = Path(path)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label"] + [f"f{i}" for i in range(feature_set.dim)])
        for lab, vec in zip(feature_set.labels, feature_set.vectors):
            w.writerow([lab] + [repr(float(v)) for v in vec])
        path.write_text(buf.getvalue(), encoding="utf-8")
    elif fmt == "jsonl":
        lines = [json.dumps({"label": lab.item() if isinstance(lab, np.generic) else lab,
                             "features": [float(v) for v in vec]})
                 for lab, vec in zip(feature_set.labels, feature_set.vectors)]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise UnknownFormatError(f"unknown feature format {fmt!r}")


def store_to_task(store: FeatureStore) -> FewShotTask:
    """Treat a whole store as the support set of one task."""
    return FewShotTask.from_blocks(store.pools)


def sample_episodes(store: FeatureStore, n: int, k: int, n_query: int, count: int, seed: int,
                    strict: bool = True) -> list:
    """Draw ``count`` episodes: n classes without replacement, then k + n_query
    samples per class without replacement.

    With ``strict=False`` a short pool keeps its k support samples and
    contributes whatever is left (at least one) as query.
    """
    classes = store.classes
    if len(classes) < n:
        raise InsufficientPoolError(f"store has {len(classes)} classes, {n} requested")
    episodes = []
    for e in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, e]))
        picked = [classes[i] for i in sorted(rng.choice(len(classes), size=n, replace=False))]
        support, query = {}, {}
        for c in picked:
            pool = store.pools[c]
            need = k + n_query
            if pool.shape[0] < need and (strict or pool.shape[0] <= k):
                raise InsufficientPoolError(
                    f"class {c!r} has {pool.shape[0]} samples, needs {need if strict else k + 1}")
            take = min(need, pool.shape[0])
            idx = rng.permutation(pool.shape[0])[:take]
            support[c] = pool[idx[:k]]
            if take > k:
                query[c] = pool[idx[k:]]
        episodes.append(FewShotTask.from_blocks(support, query or None))
    return episodes


def true_accuracy(task: FewShotTask) -> float:
    """Class-balanced accuracy on the query set of the NCM rule built from
    the support set."""
    if task.query is None:
        raise ValueError("task has no query set")
    means = fit_class_means(task)
    centers = np.stack([means[c] for c in task.classes])
    index = {c: i for i, c in enumerate(task.classes)}
    per_class = []
    for c, block in task.query.by_class().items():
        per_class.append(np.mean(ncm_predict(block, centers) == index[c]))
    return float(np.mean(per_class))


# --- benchmark ------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkConfig:
    n_ways: int = 5
    k_grid: tuple = (5,)
    methods: tuple = ("ours-unbiased",)
    n_tasks: int = 1000
    seed: int = 0
    n_query: int = MIN_QUERY
    mc_samples: int = 10_000
    variant: str = "auto"
    alpha: float = 0.05
    threshold: float = 0.85
    workers: int = 1
    truth_samples: int = 20_000


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    records: list
    mape: list = field(default_factory=list)
    auc: list = field(default_factory=list)
    roc_points: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        cfg = self.config
        return {
            "config": {
                "n_ways": cfg.n_ways, "k_grid": list(cfg.k_grid), "methods": list(cfg.methods),
                "n_tasks": cfg.n_tasks, "seed": cfg.seed, "n_query": cfg.n_query,
                "mc_samples": cfg.mc_samples, "variant": cfg.variant, "alpha": cfg.alpha,
                "threshold": cfg.threshold,
            },
            "records": self.records,
            "mape": self.mape,
            "auc": self.auc,
        }


def _clip_accuracy(acc: float, n: int) -> float:
    return float(np.clip(acc, 1.0 / n, 1.0))


def _evaluate(job) -> dict:
    task_id, seed, k, task, truth, oracle_p, cfg, calibration = job
    n = task.n_ways
    mc = MonteCarloConfig(cfg.mc_samples, seed=seed)
    rec = {"task_id": task_id, "seed": seed, "n": n, "k": k}
    if truth is None:
        rec["n_query"] = min(len(b) for b in task.query.by_class().values())
        rec["truth_method"] = "query"
        rec["true_accuracy"] = true_accuracy(task)
    else:
        rec["n_query"] = cfg.truth_samples
        rec["truth_method"] = "model"
        rec["true_accuracy"] = 1.0 - truth
    rec["low_confidence"] = rec["n_query"] < MIN_QUERY
    # methods never see the query set
    support_only = FewShotTask(task.support)
    for name in cfg.methods:
        try:
            if name == "ours-unbiased":
                acc = predict_accuracy(support_only, cfg.variant, True, mc, cfg.alpha).accuracy
            elif name == "ours-biased":
                acc = predict_accuracy(support_only, cfg.variant, False, mc, cfg.alpha).accuracy
            elif name == "cv":
                acc = loo_cross_validation(support_only).accuracy
            elif name == "db":
                acc = predict_accuracy_db(davies_bouldin_index(support_only), calibration, n)
            elif name == "oracle":
                if oracle_p is None:
                    raise ValueError("oracle needs generating parameters (synthetic source)")
                acc = 1.0 - oracle_p
            else:
                raise ValueError(f"unknown method {name!r}")
        except ValueError as exc:
            if "1-shot" not in str(exc) and "insufficient samples" not in str(exc):
                raise
            acc = float("nan")
        rec[name] = acc if math.isnan(acc) else _clip_accuracy(acc, n)
    return rec


def _task_seed(seed: int, k: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, k, index]).generate_state(1, np.uint64)[0])


def _jobs(source, cfg: BenchmarkConfig, calibration):
    for k in cfg.k_grid:
        if isinstance(source, FeatureStore):
            tasks = sample_episodes(source, cfg.n_ways, k, cfg.n_query, cfg.n_tasks,
                                    seed=_task_seed(cfg.seed, k, 0), strict=False)
            for i, task in enumerate(tasks):
                yield (f"k{k}-{i}", _task_seed(cfg.seed, k, i), k, task, None, None, cfg, calibration)
        else:
            for i in range(cfg.n_tasks):
                s = _task_seed(cfg.seed, k, i)
                spec = SyntheticSpec(cfg.n_ways, k, source.dim, source.snr_db, source.sigma, s, 0)
                st = generate_isotropic_task(spec)
                est = np.stack([b.mean(axis=0) for b in st.task.support_by_class.values()])
                truth = classifier_true_error(st.centers, st.sigma, est, cfg.truth_samples, s)
                oracle_p = None
                if "oracle" in cfg.methods:
                    oracle_p = oracle_error(st.centers, st.sigma, MonteCarloConfig(cfg.mc_samples, s))
                yield (f"k{k}-{i}", s, k, st.task, truth, oracle_p, cfg, calibration)


def run_benchmark(source: Union[FeatureStore, SyntheticSpec], cfg: BenchmarkConfig,
                  calibration: Optional[DbCalibration] = None, out_dir=None,
                  emit: str = "both") -> BenchmarkResult:
    """Evaluate every method on n_tasks episodes per shot count.

    ``source`` is either a feature store (truth from query samples) or a
    synthetic spec whose n_ways/k_shots/seed fields are ignored in favour
    of ``cfg`` (truth from the generating model).
    """
    if "db" in cfg.methods and calibration is None:
        raise ValueError("missing DB calibration: pass a calibration file or run calibrate-db")
    jobs = list(_jobs(source, cfg, calibration))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(_evaluate, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    else:
        records = [_evaluate(j) for j in jobs]

    result = BenchmarkResult(cfg, records)
    for k in cfg.k_grid:
        rows = [r for r in records if r["k"] == k]
        truth = np.array([r["true_accuracy"] for r in rows])
        for name in cfg.methods:
            pred = np.array([r[name] for r in rows])
            ok = ~np.isnan(pred)
            if ok.sum() == 0:
                result.mape.append({"k": k, "method": name, "mape": None, "se": None, "tasks": 0})
                continue
            vals = mape(1.0 - pred[ok], 1.0 - truth[ok]) if np.all(truth[ok] > 0) else None
            if vals is None:
                raise ValueError("undefined MAPE at zero accuracy")
            m, se = mean_and_se(np.atleast_1d(vals))
            result.mape.append({"k": k, "method": name, "mape": m,
                                "se": None if math.isnan(se) else se, "tasks": int(ok.sum())})
            try:
                roc = roc_curve(pred[ok], truth[ok], cfg.threshold)
            except ValueError as exc:
                result.auc.append({"k": k, "method": name, "auc": None, "note": str(exc)})
                continue
            result.auc.append({"k": k, "method": name, "auc": roc.auc, "note": ""})
            for f, t, th in zip(roc.fpr, roc.tpr, roc.thresholds):
                result.roc_points.append({"k": k, "method": name, "fpr": float(f),
                                          "tpr": float(t), "threshold": float(th)})
    if out_dir is not None:
        emit_benchmark(result, out_dir, emit)
    return result


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path, rows: Sequence[Mapping], fields: Sequence[str]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r.get(f)) for f in fields])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _json_safe(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def emit_benchmark(result: BenchmarkResult, out_dir, emit: str = "both") -> list:
    """Write records.csv, mape.csv, roc.csv and/or result.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if emit in ("csv", "both"):
        fields = RECORD_FIELDS + tuple(result.config.methods)
        write_csv(out / "records.csv", result.records, fields)
        write_csv(out / "mape.csv", result.mape, MAPE_FIELDS)
        write_csv(out / "roc.csv", result.roc_points, ROC_FIELDS)
        written += [out / "records.csv", out / "mape.csv", out / "roc.csv"]
    if emit in ("json", "both"):
        write_json(out / "result.json", result.to_json_dict())
        written.append(out / "result.json")
    return written


def read_records(path) -> list:
    """Read a records.csv back, converting numeric columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        rec = {}
        for key, val in r.items():
            if key in ("task_id", "truth_method"):
                rec[key] = val
            elif key in ("seed", "n", "k", "n_query", "low_confidence"):
                rec[key] = int(val)
            else:
                rec[key] = float(val) if val != "" else float("nan")
        out.append(rec)
    return out


def calibrate_db(source: Union[FeatureStore, SyntheticSpec], n_ways: int, k_grid: Sequence[int],
                 n_tasks: int, seed: int, n_query: int = MIN_QUERY,
                 truth_samples: int = 20_000) -> DbCalibration:
    """Fit the DB-index line on a calibration batch with known accuracies."""
    points = []
    cfg = BenchmarkConfig(n_ways=n_ways, k_grid=tuple(k_grid), methods=(), n_tasks=n_tasks,
                          seed=seed, n_query=n_query, truth_samples=truth_samples)
    for job in _jobs(source, cfg, None):
        task, truth = job[3], job[4]
        acc = true_accuracy(task) if truth is None else 1.0 - truth
        points.append((davies_bouldin_index(FewShotTask(task.support)), acc))
    return calibrate_db_regression(points)
