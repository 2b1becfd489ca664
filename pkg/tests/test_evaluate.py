import csv
import json

import numpy as np
import pytest

from fusqa.errors import DataError
from fusqa.evaluate import (
    ConfusionCounts, EvalReport, StageError, merge_config, metrics, read_report, run_benchmark,
    seed_ranges, write_report,
)

TINY = {
    "phantom": {"n_train": 6, "n_test": 4},
    "training": {"epochs": 1, "topologies": ["single", "siamese"]},
    "cae": {"epochs": 1},
}


@pytest.fixture(scope="module")
def report():
    return run_benchmark(TINY, seed=3)


def test_metrics_f1_from_precision_and_recall():
    # precision 0.795, recall 1.0
    m = metrics(ConfusionCounts(tp=795, fp=205, tn=0, fn=0))
    assert m["precision"] == pytest.approx(0.795)
    assert m["f1"] == pytest.approx(1.59 / 1.795)
    assert round(m["f1"], 3) == 0.886


def test_metrics_perfect():
    m = metrics(ConfusionCounts(tp=50, tn=50))
    assert (m["precision"], m["recall"], m["accuracy"], m["f1"]) == (1.0, 1.0, 1.0, 1.0)
    assert m["flags"] == []


def test_metrics_degenerate_conventions():
    m = metrics(ConfusionCounts(tp=0, fp=0, fn=10, tn=10))
    assert (m["precision"], m["recall"], m["accuracy"], m["f1"]) == (0.0, 0.0, 0.5, 0.0)
    assert "precision_undefined" in m["flags"] and "f1_undefined" in m["flags"]


def test_metrics_errors():
    with pytest.raises(ValueError):
        metrics(ConfusionCounts())
    with pytest.raises(ValueError):
        ConfusionCounts(tp=-1)


def test_confusion_from_predictions():
    c = ConfusionCounts.from_predictions([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 1, 1)


def test_seed_ranges_are_disjoint():
    r = seed_ranges(42, 200, 100)
    train, test = set(range(*r["train"])), set(range(*r["test"]))
    assert len(train) == 200 and len(test) == 100 and train.isdisjoint(test)
    assert set(range(*seed_ranges(43, 200, 100)["train"])).isdisjoint(train | test)


def test_config_validation():
    with pytest.raises(DataError):
        merge_config({"bogus": {}})
    with pytest.raises(DataError):
        merge_config({"training": {"epoch": 3}})
    assert merge_config({"training": {"epochs": 3}})["training"]["epochs"] == 3


def test_benchmark_report_fields(report):
    assert set(report.models) == {"single", "siamese", "cae"}
    for row in report.models.values():
        assert {"precision", "recall", "accuracy", "f1", "counts"} <= set(row)
        assert sum(row["counts"].values()) == report.dataset["n_test"]
    assert report.dataset["n_test_good"] == report.dataset["n_test_poor"] == 8
    assert report.downstream["model"] == "single"
    assert set(report.downstream["good"]) >= {"crl_err_mm", "ga_err_days", "n", "undatable"}
    assert report.seeds["train_phantoms"] == [3_000_000, 3_000_006]


def test_benchmark_is_deterministic(report):
    again = run_benchmark(TINY, seed=3)
    assert json.dumps(again.body(), sort_keys=True) == json.dumps(report.body(), sort_keys=True)


def test_stage_errors_name_the_stage():
    with pytest.raises(StageError, match="dating"):
        run_benchmark({"dating": {"valid_lo_mm": 90, "valid_hi_mm": 20}})


def test_json_roundtrip(tmp_path, report):
    path = tmp_path / "r.json"
    write_report(report, path, "json")
    assert read_report(path).to_dict() == json.loads(json.dumps(report.to_dict()))


def test_csv_outputs(tmp_path, report):
    paths = write_report(report, tmp_path / "r.csv", "csv")
    rows = list(csv.DictReader(open(paths[0])))
    assert len(rows) == len(report.models)
    for r in rows:
        p, rc, f1 = float(r["precision"]), float(r["recall"]), float(r["f1"])
        expected = 2 * p * rc / (p + rc) if p + rc else 0.0
        assert abs(f1 - expected) < 1e-9
    down = list(csv.DictReader(open(paths[1])))
    assert len(down) == 2 * len(report.models)


def test_write_report_errors(tmp_path, report):
    with pytest.raises(ValueError):
        write_report(report, tmp_path / "r.txt", "xml")
    with pytest.raises(OSError):
        write_report(report, tmp_path / "missing" / "r.json", "json")


def test_report_from_dict_defaults():
    assert EvalReport.from_dict({}).models == {}
