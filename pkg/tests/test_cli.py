import json
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from contamix.cli import EXIT_DATA, EXIT_FIT, EXIT_OK, EXIT_USAGE, RunConfig, main, run_sweep
from contamix.datagen import sample_gpcm, two_cluster_scenario
from contamix.exceptions import ConfigError, DataError
from contamix.io import ingest_csv
from contamix.plotting import emit_svg_scatter
from contamix.report import Report

SVG = "{http://www.w3.org/2000/svg}"


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def scenario_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "scenario.csv"
    sample_gpcm(two_cluster_scenario(0, size=40, noise_count=8)).to_csv(path)
    return path


class TestIngest:
    def test_plain_numeric(self, tmp_path):
        d = ingest_csv(write(tmp_path / "a.csv", "1,2\n3,4\n5,6\n"))
        assert d.values.shape == (3, 2) and d.row_ids == [1, 2, 3]
        assert d.columns == ["x1", "x2"]

    def test_header_and_names(self, tmp_path):
        d = ingest_csv(write(tmp_path / "a.csv", "a,b,c\n1,2,3\n4,5,6\n"), ["c", "a"])
        np.testing.assert_array_equal(d.values, [[3, 1], [6, 4]])
        assert d.columns == ["c", "a"]

    def test_indices(self, tmp_path):
        d = ingest_csv(write(tmp_path / "a.csv", "a,b,c\n1,2,3\n"), ["2"])
        assert d.values.tolist() == [[3.0]]

    def test_label_column(self, tmp_path):
        d = ingest_csv(write(tmp_path / "a.csv", "x,y,cls\n1,2,A\n3,4,B\n"), label_column="cls")
        assert d.labels == ["A", "B"] and d.p == 2

    def test_missing_names_row(self, tmp_path):
        with pytest.raises(DataError, match="row\\(s\\) 2"):
            ingest_csv(write(tmp_path / "a.csv", "a,b\n1,2\nNA,3\n4,5\n"))

    def test_non_numeric(self, tmp_path):
        with pytest.raises(DataError, match="row 1"):
            ingest_csv(write(tmp_path / "a.csv", "a,b\n1,x\n"))

    def test_unknown_column(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            ingest_csv(write(tmp_path / "a.csv", "a,b\n1,2\n"), ["z"])

    def test_empty_selection(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(write(tmp_path / "a.csv", "a,b\n1,2\n"), [])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(tmp_path / "nope.csv")

    def test_ragged(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(write(tmp_path / "a.csv", "1,2\n3\n"))


class TestScatter:
    def _points(self, path):
        tree = ET.parse(path)
        count = 0
        for g in tree.iter(SVG + "g"):
            if g.get("id", "").startswith("points"):
                count += sum(1 for _ in g.iter(SVG + "use"))
        return count

    def test_marker_count(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(120, 2))
        clusters = np.repeat([1, 2], 60)
        bad = np.zeros(120, bool)
        bad[rng.choice(120, 20, replace=False)] = True
        emit_svg_scatter(X, clusters, bad, tmp_path / "s.svg")
        assert self._points(tmp_path / "s.svg") == 120
        text = (tmp_path / "s.svg").read_text()
        assert "legend" in text

    def test_empty(self, tmp_path):
        emit_svg_scatter(np.empty((0, 2)), [], [], tmp_path / "e.svg")
        root = ET.parse(tmp_path / "e.svg").getroot()
        assert root.tag == SVG + "svg"
        assert self._points(tmp_path / "e.svg") == 0

    def test_deterministic(self, tmp_path):
        X = np.random.default_rng(1).normal(size=(30, 2))
        cl, bad = np.arange(30) % 3 + 1, np.arange(30) % 7 == 0
        emit_svg_scatter(X, cl, bad, tmp_path / "a.svg")
        emit_svg_scatter(X, cl, bad, tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_wrong_dimension(self, tmp_path):
        with pytest.raises(DataError):
            emit_svg_scatter(np.zeros((3, 3)), [1, 1, 1], [False] * 3, tmp_path / "x.svg")


class TestRunSweep:
    def test_single_model(self, scenario_csv):
        cfg = RunConfig(str(scenario_csv), columns=["x1", "x2"], structures=("VVV",), g_min=2, g_max=2,
                        restarts=2)
        report = run_sweep(cfg)
        assert len(report.ranking) == 1 and report.best.G == 2
        assert len(report.labels) == 88 and len(report.components) == 2

    def test_truth_gives_tables(self, scenario_csv):
        cfg = RunConfig(str(scenario_csv), columns=["x1", "x2"], label_column="true_component",
                        structures=("EEE",), g_min=3, g_max=3, restarts=2)
        report = run_sweep(cfg)
        merged, separate = report.confusion["merged"], report.confusion["separate"]
        assert np.array(merged["counts"]).shape == (3, 3)
        assert separate["columns"][-1] == "bad"
        assert np.sum(separate["counts"]) == 88
        assert set(report.misallocations) == {"merged", "good_only"}

    def test_report_round_trip(self, scenario_csv):
        cfg = RunConfig(str(scenario_csv), columns=["x1", "x2"], label_column="true_component",
                        structures=("EVE", "EII"), g_min=1, g_max=2, restarts=2)
        report = run_sweep(cfg)
        assert Report.from_json(report.to_json()) == report
        assert Report.from_json(report.to_json()).to_json() == report.to_json()

    def test_invalid_range(self, scenario_csv):
        with pytest.raises(ConfigError):
            run_sweep(RunConfig(str(scenario_csv), g_min=3, g_max=2))


class TestMain:
    def test_end_to_end(self, scenario_csv, tmp_path, capsys):
        out, plot, labels = tmp_path / "r.json", tmp_path / "r.svg", tmp_path / "l.csv"
        args = ["sweep", "--input", str(scenario_csv), "--columns", "x1,x2", "--structures", "EVE",
                "--g-min", "2", "--g-max", "2", "--restarts", "2", "--seed", "4",
                "--output", str(out), "--plot", str(plot), "--labels-csv", str(labels)]
        assert main(args) == EXIT_OK
        first = out.read_bytes()
        data = json.loads(first)
        assert data["best"]["structure"] == "EVE"
        assert plot.exists() and len(labels.read_text().splitlines()) == 89
        assert main(args) == EXIT_OK
        assert out.read_bytes() == first

    def test_stdout(self, scenario_csv, capsys):
        rc = main(["sweep", "--input", str(scenario_csv), "--columns", "0,1", "--structures", "EII",
                   "--g-min", "1", "--g-max", "1", "--restarts", "1"])
        assert rc == EXIT_OK
        assert json.loads(capsys.readouterr().out)["best"]["G"] == 1

    def _error(self, capsys):
        err = capsys.readouterr().err.strip().splitlines()[-1]
        return json.loads(err)["error"]

    def test_usage_error(self, capsys):
        assert main(["sweep"]) == EXIT_USAGE
        assert self._error(capsys)["exit_code"] == EXIT_USAGE

    def test_bad_structure(self, scenario_csv, capsys):
        assert main(["sweep", "--input", str(scenario_csv), "--structures", "XYZ"]) == EXIT_USAGE

    def test_bad_numeric_range(self, scenario_csv, capsys):
        assert main(["sweep", "--input", str(scenario_csv), "--eta-max", "0.5"]) == EXIT_USAGE

    def test_data_error(self, tmp_path, capsys):
        path = write(tmp_path / "a.csv", "a,b\n1,2\nNA,4\n")
        assert main(["sweep", "--input", str(path)]) == EXIT_DATA
        err = self._error(capsys)
        assert err["type"] == "DataError" and re.search(r"\b2\b", err["message"])

    def test_fit_failure(self, tmp_path, capsys):
        path = write(tmp_path / "a.csv", "a,b\n1,1\n1,1\n1,1\n1,1\n")
        assert main(["sweep", "--input", str(path), "--structures", "VVV", "--g-min", "2",
                     "--g-max", "2", "--restarts", "1"]) == EXIT_FIT

    def test_generate(self, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["generate", "--seed", "2", "--output", str(out)]) == EXIT_OK
        assert len(out.read_text().splitlines()) == 201

    def test_replicate_needs_input(self, capsys):
        assert main(["replicate", "crabs"]) == EXIT_USAGE

    def test_replicate_missing_file(self, tmp_path, capsys):
        assert main(["replicate", "wine", "--input", str(tmp_path / "none.csv")]) == EXIT_DATA
