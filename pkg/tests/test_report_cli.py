import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from convsim.cli import main
from convsim.harness import AgentMetrics, MetricsReport, PairedDifference, RankingSummary
from convsim.report import METRIC_COLUMNS, bar_chart_svg, emit_report


def small_report():
    return MetricsReport(
        agents=[
            AgentMetrics("random", 100, 0.5, 0.05, 0.2, 0.1, 0.15, 0.25),
            AgentMetrics("oracle <&>", 100, 0.7, 0.07, 0.3, 0.2, 0.25, 0.35),
        ],
        paired=[PairedDifference("oracle <&>", "random", 0.1, 0.05, 0.15)],
        ranking={"last_click_sales": RankingSummary(0.3, 90, 10), "discounted_sales": RankingSummary(-0.2, 100, 0)},
        metadata={"master_seed": 0},
    )


class TestReport:
    def test_csv_rows(self, tmp_path):
        emit_report(small_report(), tmp_path)
        with open(tmp_path / "metrics.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == list(METRIC_COLUMNS)
        assert len(rows) == 3
        assert rows[2][0] == "oracle <&>"

    def test_rerun_byte_identical(self, tmp_path):
        first = {p.name: p.read_bytes() for p in emit_report(small_report(), tmp_path / "a")}
        second = {p.name: p.read_bytes() for p in emit_report(small_report(), tmp_path / "b")}
        assert first == second
        assert set(first) == {"metrics.csv", "paired.csv", "ranking.csv", "ranking_tau.svg", "summary.json", "sales_per_user.svg"}

    def test_svg_well_formed(self, tmp_path):
        for path in emit_report(small_report(), tmp_path):
            if path.suffix == ".svg":
                root = ET.parse(path).getroot()
                assert root.tag.endswith("svg")

    def test_svg_edge_cases(self):
        for values in ([], [0.0, 0.0], [float("nan"), 1.0], [-1.0, 2.0]):
            ET.fromstring(bar_chart_svg("t", [str(i) for i in range(len(values))], values))

    def test_summary_json(self, tmp_path):
        emit_report(small_report(), tmp_path)
        data = json.loads((tmp_path / "summary.json").read_text())
        assert MetricsReport.from_dict(data).to_dict() == small_report().to_dict()

    def test_unwritable(self, tmp_path):
        (tmp_path / "file").write_text("")
        with pytest.raises(OSError, match="file"):
            emit_report(small_report(), tmp_path / "file" / "sub")


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({
        "n_train_users": 100, "n_eval_users": 50, "n_bootstrap": 100, "n_contexts": 20,
        "env": {"max_steps": 30},
    }))
    return path


class TestCli:
    def test_pipeline(self, tmp_path, config, capsys):
        out = tmp_path / "out"
        flags = ["--config", str(config), "--out", str(out), "--seed", "7"]
        for cmd in (["simulate"], ["train"], ["abtest", "--crn"], ["rank"], ["report"]):
            assert main(flags + cmd) == 0
        assert main(flags + ["probe", "--users", "20", "--horizon", "10"]) == 0
        assert (out / "logs.jsonl").stat().st_size > 0
        assert (out / "models" / "click_bandit.model").exists()
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["metadata"]["master_seed"] == 7
        assert metrics["metadata"]["common_random_numbers"] is True
        assert (out / "report" / "ranking.csv").exists()
        assert json.loads((out / "probe.json").read_text())["users"] == 20

    def test_flags_after_command(self, tmp_path, config):
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(config), "--out", str(out)]) == 0
        assert (out / "logs.jsonl").exists()

    def test_bad_config_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"n_train_users": 1, "n_eval_users": 1, "env": {"kappa": 1.5}}')
        assert main(["--config", str(bad), "--out", str(tmp_path), "simulate"]) == 1
        err = capsys.readouterr().err
        assert err.startswith("convsim: error:") and "kappa" in err

    def test_missing_log(self, tmp_path, capsys):
        assert main(["--out", str(tmp_path / "empty"), "train"]) == 1
        assert "logs.jsonl" in capsys.readouterr().err

    def test_bad_seed(self):
        with pytest.raises(SystemExit) as exc:
            main(["--seed", "-1", "simulate"])
        assert exc.value.code != 0

    def test_module_entry_point(self, tmp_path, config):
        ok = subprocess.run(
            [sys.executable, "-m", "convsim.cli", "--config", str(config), "--out", str(tmp_path), "simulate"],
            capture_output=True, text=True,
        )
        assert ok.returncode == 0, ok.stderr
        bad = subprocess.run([sys.executable, "-m", "convsim.cli", "--out", str(tmp_path), "abtest"], capture_output=True, text=True)
        assert bad.returncode != 0
        assert bad.stderr.strip().splitlines()[-1].startswith("convsim: error:")
