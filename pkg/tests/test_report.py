import pytest

from vidsev import DomainError, compute_metrics, emit_scatter_plot
from vidsev.report import (
    read_metrics_report,
    read_predictions,
    write_metrics_report,
    write_predictions,
    write_training_log,
)


class TestMetricsReportFile:
    def test_roundtrip(self, tmp_path):
        report = compute_metrics([1.0, 2.0, 3.5], [1.5, 2.5, 3.0])
        path = write_metrics_report(report, tmp_path / "metrics.tsv")
        loaded = read_metrics_report(path)
        assert loaded == report

    def test_roundtrip_undefined(self, tmp_path):
        report = compute_metrics([1.0, 2.0], [3.0, 3.0])
        loaded = read_metrics_report(write_metrics_report(report, tmp_path / "m.tsv"))
        assert loaded.pcc is None and loaded.ccc is None
        assert loaded.rmse == report.rmse

    def test_malformed_rejected(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("bogus\n")
        with pytest.raises(DomainError):
            read_metrics_report(path)


class TestPredictionsFile:
    def test_roundtrip(self, tmp_path):
        rows = [("a", 1.25, 2.0), ("b", -0.5, 0.0)]
        loaded = read_predictions(write_predictions(rows, tmp_path / "p.tsv"))
        assert loaded == rows


class TestTrainingLog:
    def test_columns_and_rows(self, tmp_path):
        records = [{"step": 0, "l_short": 1.5}, {"step": 1, "l_short": 1.25}]
        path = write_training_log(records, tmp_path / "log.tsv")
        lines = path.read_text().splitlines()
        assert lines[0] == "step\tl_short"
        assert lines[1].split("\t") == ["0", "1.5"]
        assert len(lines) == 3


class TestScatterPlot:
    def test_writes_decodable_png(self, tmp_path):
        path = emit_scatter_plot([1.0, 2.0, 3.0], [1.2, 1.9, 3.3], tmp_path / "s.png")
        data = path.read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 1000
        import matplotlib.image as mpimg

        img = mpimg.imread(path)
        assert img.ndim == 3 and img.shape[0] > 50

    def test_empty_refused(self, tmp_path):
        with pytest.raises(DomainError):
            emit_scatter_plot([], [], tmp_path / "s.png")

    def test_length_mismatch_refused(self, tmp_path):
        with pytest.raises(DomainError):
            emit_scatter_plot([1.0], [1.0, 2.0], tmp_path / "s.png")
