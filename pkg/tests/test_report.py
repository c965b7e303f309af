import csv
import io
import os

import numpy as np
import pytest

from visualwords.config import RunConfig
from visualwords.pipeline import BenchRow, CvResult, CvRow, EvalReport
from visualwords.report import (
    accuracy_svg,
    bench_csv,
    confusion_csv,
    cv_csv,
    eval_csv,
    eval_text,
    failed_csv,
    write_eval_artifacts,
)


@pytest.fixture
def report():
    return EvalReport(
        classes=("a", "b"),
        confusion=np.array([[2, 0], [1, 1]], dtype=np.int64),
        evaluated=4,
        failed=[("img7.pgm", "no keypoints, giving up")],
        average_rate=75.0,
        per_class_recall={"a": 100.0, "b": 50.0},
        timings={"encode": 0.5, "kernel": 0.1, "predict": 0.0, "total": 0.6},
    )


class TestEvalTables:
    def test_eval_csv_rows(self, report):
        rows = list(csv.reader(io.StringIO(eval_csv(report))))
        assert rows[0] == ["metric", "class", "value"]
        assert rows[1] == ["average_rate", "", "75.0"]
        assert rows[2] == ["evaluated", "", "4"]
        assert rows[3] == ["failed", "", "1"]
        assert ["recall", "a", "100.0"] in rows
        assert ["recall", "b", "50.0"] in rows

    def test_recall_gap_left_empty(self, report):
        gapped = EvalReport(
            classes=report.classes,
            confusion=report.confusion,
            evaluated=report.evaluated,
            failed=[],
            average_rate=report.average_rate,
            per_class_recall={"a": 100.0, "b": None},
            timings={},
        )
        rows = list(csv.reader(io.StringIO(eval_csv(gapped))))
        assert ["recall", "b", ""] in rows
        assert "n/a" in eval_text(gapped)

    def test_confusion_csv(self, report):
        assert confusion_csv(report) == (
            "true\\predicted,a,b\na,2,0\nb,1,1\n"
        )

    def test_failed_csv_survives_commas(self, report):
        rows = list(csv.reader(io.StringIO(failed_csv(report))))
        assert rows[0] == ["image_id", "reason"]
        assert rows[1] == ["img7.pgm", "no keypoints, giving up"]

    def test_eval_text_summary(self, report):
        text = eval_text(report, heading="demo run")
        assert text.startswith("demo run\n")
        assert "average recognition rate: 75.00% (3/4)" in text
        assert "img7.pgm: no keypoints, giving up" in text
        assert "a  100.00%" in text
        assert text.endswith("\n")

    def test_no_timing_values_in_artifacts(self, report):
        for text in (eval_csv(report), confusion_csv(report),
                     failed_csv(report), eval_text(report)):
            assert "0.6" not in text
            assert "timing" not in text


class TestBenchAndCvTables:
    def test_bench_csv(self):
        row = BenchRow(
            config=RunConfig(mode="sbovw", vocab=16),
            timings={
                "detect": 0.1, "describe": 1.0, "cluster": 0.25,
                "encode": 0.0, "gram": 0.0125, "svm": 0.5, "total": 1.8625,
            },
        )
        lines = bench_csv([row]).splitlines()
        assert lines[0] == "config,detect,describe,cluster,encode,gram,svm,total"
        cells = lines[1].split(",")
        assert cells[0] == row.config.describe()
        order = ("detect", "describe", "cluster", "encode", "gram", "svm", "total")
        assert cells[1:] == [f"{row.timings[p]:.3f}" for p in order]

    def test_cv_csv_marks_best_and_failures(self):
        rows = [
            CvRow(
                config=RunConfig(mode="sbovw", vocab=16, c=1.0),
                fold_scores=[100.0, None],
                mean=100.0,
            ),
            CvRow(
                config=RunConfig(mode="sbovw", vocab=32, c=1.0),
                fold_scores=[None, None],
                mean=None,
            ),
        ]
        result = CvResult(rows=rows, best_index=0)
        parsed = list(csv.reader(io.StringIO(cv_csv(result))))
        assert parsed[0] == ["config", "mean", "fold_scores", "failed_folds", "best"]
        assert parsed[1][1] == "100.0"
        assert parsed[1][2] == "100.0;failed"
        assert parsed[1][3] == "1"
        assert parsed[1][4] == "1"
        assert parsed[2][1] == ""
        assert parsed[2][4] == "0"


class TestSvg:
    def test_bar_per_pair(self):
        svg = accuracy_svg([("a", 50.0), ("b", 100.0)], title="recall")
        assert svg.startswith("<svg ")
        assert svg.count("<rect") == 3  # background plus one bar each
        assert "recall" in svg
        assert "50.0%" in svg and "100.0%" in svg
        assert svg.endswith("</svg>\n")

    def test_deterministic(self):
        pairs = [("x", 12.5)]
        assert accuracy_svg(pairs) == accuracy_svg(pairs)

    def test_values_clamped_to_scale(self):
        svg = accuracy_svg([("over", 140.0), ("under", -3.0)])
        bar_widths = [
            float(tag.split('width="')[1].split('"')[0])
            for tag in svg.split("<rect")[1:]
            if "#4878a8" in tag
        ]
        assert len(bar_widths) == 2
        assert max(bar_widths) <= 400.0
        assert min(bar_widths) >= 0.0


class TestArtifactWriting:
    def test_writes_expected_files(self, report, tmp_path):
        out = str(tmp_path / "reports")
        paths = write_eval_artifacts(report, out, heading="h")
        names = sorted(os.path.basename(p) for p in paths)
        assert names == ["confusion.csv", "eval.csv", "eval.txt", "failed.csv"]
        for path in paths:
            assert os.path.getsize(path) > 0

    def test_svg_on_request(self, report, tmp_path):
        out = str(tmp_path / "reports")
        paths = write_eval_artifacts(report, out, svg=True)
        assert any(p.endswith("accuracy.svg") for p in paths)

    def test_rewrite_is_byte_identical(self, report, tmp_path):
        out = str(tmp_path / "reports")
        write_eval_artifacts(report, out, heading="h", svg=True)
        first = {
            name: open(os.path.join(out, name), "rb").read()
            for name in os.listdir(out)
        }
        write_eval_artifacts(report, out, heading="h", svg=True)
        for name, blob in first.items():
            with open(os.path.join(out, name), "rb") as fh:
                assert fh.read() == blob
