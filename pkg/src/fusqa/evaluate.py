"""Classification metrics, the phantom benchmark, and report files."""
from __future__ import annotations

import copy
import csv
import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .biometry import DatingModel, downstream_errors
from .cae import CaeDetector
from .degrade import make_variant_set
from .errors import DataError, FusqaError
from .phantom import generate_phantoms
from .qa import TOPOLOGIES, QualityClassifier
from .validation import stack_pairs

TEST_SEED_OFFSET = 500_000
SEEDS_PER_RUN = 1_000_000
VARIANT_SEED_OFFSET = 1_000_000_007

DEFAULT_CONFIG = {
    "phantom": {"n_train": 200, "n_test": 100, "image_size": 64, "spacing_mm": 1.0},
    "degrade": {"n_good": 4, "n_poor": 5, "test_good": 2, "test_poor": 2, "flip_random_class": False},
    "training": {
        "topologies": list(TOPOLOGIES),
        "epochs": 12,
        "learning_rate": 0.05,
        "momentum": 0.9,
        "batch_size": 16,
        "augment": True,
        "val_fraction": 0.1,
    },
    "cae": {"enabled": True, "epochs": 8, "learning_rate": 0.05, "momentum": 0.9, "batch_size": 16, "tau": 0.10},
    "dating": DatingModel().to_config(),
}


class StageError(FusqaError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = round(time.perf_counter() - start, 3)


@dataclass
class ConfusionCounts:
    """Confusion counts with "good" (label 1) as the positive class."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionCounts":
        t, p = np.asarray(y_true) == 1, np.asarray(y_pred) == 1
        return cls(int((t & p).sum()), int((~t & p).sum()), int((~t & ~p).sum()), int((t & ~p).sum()))


def metrics(counts: ConfusionCounts) -> dict:
    """Precision, recall, accuracy and F1; undefined ratios are reported as 0 and flagged."""
    if counts.total == 0:
        raise ValueError("cannot compute metrics on an empty confusion matrix")
    flags = []
    if counts.tp + counts.fp:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision = 0.0
        flags.append("precision_undefined")
    if counts.tp + counts.fn:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall = 0.0
        flags.append("recall_undefined")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append("f1_undefined")
    return {
        "precision": precision,
        "recall": recall,
        "accuracy": (counts.tp + counts.tn) / counts.total,
        "f1": f1,
        "flags": flags,
    }


@dataclass
class EvalReport:
    models: dict = field(default_factory=dict)
    downstream: dict = field(default_factory=dict)
    downstream_by_model: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def body(self) -> dict:
        """Everything except wall-clock timings; identical for identical (config, seed)."""
        d = self.to_dict()
        d.pop("runtime")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**{k: d.get(k, {}) for k in cls.__dataclass_fields__})


def merge_config(overrides: dict | None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    for section, values in (overrides or {}).items():
        if section not in cfg:
            raise DataError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise DataError(f"config section {section!r} must be an object")
        unknown = set(values) - set(cfg[section])
        if unknown:
            raise DataError(f"unknown keys in config section {section!r}: {sorted(unknown)}")
        cfg[section].update(values)
    return cfg


def load_config(path) -> dict:
    try:
        return merge_config(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc


def seed_ranges(seed: int, n_train: int, n_test: int) -> dict:
    """Disjoint phantom seed ranges for the training (A) and test (B) domains."""
    if n_train > TEST_SEED_OFFSET or n_test > SEEDS_PER_RUN - TEST_SEED_OFFSET:
        raise DataError("too many phantoms for the per-run seed partition")
    base = seed * SEEDS_PER_RUN
    return {
        "train": [base, base + n_train],
        "test": [base + TEST_SEED_OFFSET, base + TEST_SEED_OFFSET + n_test],
    }


def balanced_test_set(phantoms, seed: int, n_good: int, n_poor: int, degrade_cfg: dict):
    """``n_good`` good and ``n_poor`` poor variants drawn from each phantom's variant set."""
    rng = np.random.default_rng([seed, 4])
    out = []
    for p in phantoms:
        variants = make_variant_set(p, VARIANT_SEED_OFFSET + p.seed, degrade_cfg["n_good"],
                                    degrade_cfg["n_poor"], degrade_cfg["flip_random_class"])
        good = [v for v in variants if v.quality == 1]
        poor = [v for v in variants if v.quality == 0]
        if len(good) < n_good or len(poor) < n_poor:
            raise DataError("variant set too small for the requested test split")
        out += [good[i] for i in sorted(rng.choice(len(good), n_good, replace=False))]
        out += [poor[i] for i in sorted(rng.choice(len(poor), n_poor, replace=False))]
    return out


def _jsonify_groups(groups: dict) -> dict:
    return {k: asdict(v) for k, v in groups.items()}


def evaluate_model(model, samples, dating: DatingModel) -> tuple[dict, dict]:
    """Metrics row and downstream CRL/GA errors for one fitted model on labelled samples."""
    X = stack_pairs(samples)
    y = np.array([s.quality for s in samples])
    pred = model.predict(X)
    counts = ConfusionCounts.from_predictions(y, pred)
    row = {**metrics(counts), "counts": asdict(counts)}
    down = _jsonify_groups(downstream_errors(list(zip(samples, pred)), dating))
    return row, down


def run_benchmark(config: dict | None = None, seed: int = 42, verbose: bool = False) -> EvalReport:
    """Train on domain-A phantoms, evaluate every model on a balanced, shifted domain-B set."""
    cfg = merge_config(config)
    pcfg, dcfg, tcfg, ccfg = cfg["phantom"], cfg["degrade"], cfg["training"], cfg["cae"]
    timings: dict = {}
    t0 = time.perf_counter()
    seeds = seed_ranges(seed, pcfg["n_train"], pcfg["n_test"])
    report = EvalReport(config=cfg, seeds={"run": seed, "train_phantoms": seeds["train"],
                                           "test_phantoms": seeds["test"]})

    with _stage("dating", timings):
        dating = DatingModel.from_config(cfg["dating"])
    with _stage("phantoms", timings):
        train_ph = generate_phantoms(range(*seeds["train"]), "A", pcfg["image_size"], pcfg["spacing_mm"], dating)
        test_ph = generate_phantoms(range(*seeds["test"]), "B", pcfg["image_size"], pcfg["spacing_mm"], dating)
    with _stage("degrade", timings):
        train = [v for p in train_ph for v in make_variant_set(
            p, VARIANT_SEED_OFFSET + p.seed, dcfg["n_good"], dcfg["n_poor"], dcfg["flip_random_class"])]
        test = balanced_test_set(test_ph, seed, dcfg["test_good"], dcfg["test_poor"], dcfg)
    y_train = np.array([s.quality for s in train])
    y_test = np.array([s.quality for s in test])
    report.dataset = {
        "n_train_samples": len(train), "n_train_good": int(y_train.sum()),
        "n_test": len(test), "n_test_good": int(y_test.sum()), "n_test_poor": int((1 - y_test).sum()),
    }

    fitted = {}
    X_train = stack_pairs(train)
    groups = [s.source_id for s in train]
    for topo in tcfg["topologies"]:
        with _stage(f"train-{topo}", timings):
            model = QualityClassifier(
                topology=topo, epochs=tcfg["epochs"], learning_rate=tcfg["learning_rate"],
                momentum=tcfg["momentum"], batch_size=tcfg["batch_size"], augment=tcfg["augment"],
                val_fraction=tcfg["val_fraction"], random_state=seed, verbose=verbose,
            )
            fitted[topo] = model.fit(X_train, y_train, groups=groups)
    if ccfg["enabled"]:
        with _stage("train-cae", timings):
            good_masks = np.stack([s.mask.labels for s in train if s.quality == 1])
            fitted["cae"] = CaeDetector(
                tau=ccfg["tau"], epochs=ccfg["epochs"], learning_rate=ccfg["learning_rate"],
                momentum=ccfg["momentum"], batch_size=ccfg["batch_size"], random_state=seed, verbose=verbose,
            ).fit(good_masks)

    for name, model in fitted.items():
        with _stage(f"score-{name}", timings):
            row, down = evaluate_model(model, test, dating)
            if isinstance(model, QualityClassifier):
                row["best_epoch"] = model.best_epoch_
            report.models[name] = row
            report.downstream_by_model[name] = down

    qa_models = [m for m in report.models if m != "cae"]
    if qa_models:
        chosen = "single" if "single" in qa_models else max(qa_models, key=lambda m: report.models[m]["accuracy"])
        report.downstream = {"model": chosen, **report.downstream_by_model[chosen]}
    report.runtime = {"total_s": round(time.perf_counter() - t0, 3), "stages": timings}
    report.fitted_ = fitted
    return report


def write_report(report: EvalReport, path, fmt: str = "json") -> list[Path]:
    """Write ``report``; CSV output also produces ``<stem>_downstream.csv``. Returns the paths written."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        return [path]
    if fmt != "csv":
        raise ValueError(f"format must be 'json' or 'csv', got {fmt!r}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "precision", "recall", "accuracy", "f1"])
        for name, row in report.models.items():
            w.writerow([name] + [repr(float(row[k])) for k in ("precision", "recall", "accuracy", "f1")])
    down_path = path.with_name(path.stem + "_downstream.csv")
    with open(down_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "group", "n", "crl_err_mm", "ga_err_days", "undatable", "unmeasurable"])
        for name, groups in report.downstream_by_model.items():
            for g in ("good", "poor"):
                e = groups[g]
                w.writerow([name, g, e["n"],
                            "" if e["crl_err_mm"] is None else repr(e["crl_err_mm"]),
                            "" if e["ga_err_days"] is None else repr(e["ga_err_days"]),
                            e["undatable"], e["unmeasurable"]])
    return [path, down_path]


def read_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))
