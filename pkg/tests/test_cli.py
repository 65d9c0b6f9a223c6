import csv
import io
import re
import textwrap

import numpy as np
import pytest

from neardgd.accounting import read_trace_csv
from neardgd.cli import main
from neardgd.experiment import (
    ConfigError,
    THRESHOLDS,
    emit_plot_data,
    parse_config,
    run_experiment,
    summarize,
)

BASE = """
[experiment]
max_iters = {iters}
output_dir = out

[problem]
type = quadratic
n = 6
p = 4
kappa = 50
seed = 3

[topology]
kind = cyclic_k
k = 2

[costs]
models = 1:10, 1:1, 10:1

[methods]
labels = {labels}
"""


def write_config(tmp_path, labels="DGD, DGD^2, NEAR-DGD+(1,1,k)", iters=40, extra=""):
    path = tmp_path / "exp.ini"
    path.write_text(textwrap.dedent(BASE.format(labels=labels, iters=iters)) + extra)
    return path


def strip_timestamp(text):
    return "\n".join(l for l in text.splitlines() if not l.startswith("# timestamp="))


class TestConfig:
    def test_defaults_and_labels(self, tmp_path):
        cfg = parse_config(write_config(tmp_path).read_text(), tmp_path)
        assert [m.label for m in cfg.methods] == ["DGD", "DGD^2", "NEAR-DGD+(1,1,k)"]
        assert all(m.max_iters == 40 for m in cfg.methods)
        assert [str(m) for m in cfg.cost_models] == ["1:10", "1:1", "10:1"]

    def test_default_iterations_by_family(self):
        quad = parse_config("[problem]\ntype=quadratic\n[methods]\nlabels=DGD\n")
        logi = parse_config("[problem]\ntype=logistic\n[methods]\nlabels=DGD\n")
        assert quad.max_iters == 5000 and logi.max_iters == 10000

    @pytest.mark.parametrize(
        "text, fragment",
        [
            ("[problem]\n[methods]\nlabels =\n", "at least one method"),
            ("[problem]\n[methods]\nlabels = DGD, DGD\n", "duplicate"),
            ("[problem]\ntype = cubic\n[methods]\nlabels = DGD\n", "problem.type"),
            ("[problem]\nn = ten\n[methods]\nlabels = DGD\n", "problem.n"),
            ("[problem]\ntype = logistic\ndataset = nope.txt\n[methods]\nlabels = DGD\n", "does not exist"),
            ("[problem]\n[topology]\nkind = cyclic_k\nk = 3\n[methods]\nlabels = DGD\n", "topology"),
            ("[problem]\n[costs]\nmodels = 1\n[methods]\nlabels = DGD\n", "costs.models"),
            ("[problem]\n[methods]\nlabels = FOO\n", "methods.labels"),
            ("[methods]\nlabels = DGD\n", "[problem]"),
            ("not an ini", "syntax"),
        ],
    )
    def test_errors(self, text, fragment):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert any(fragment in p for p in info.value.problems)

    def test_reports_every_field(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[problem]\nn = x\nkappa = y\n[methods]\nlabels =\n")
        assert len(info.value.problems) >= 3

    def test_method_override(self, tmp_path):
        extra = "\n[method:DGD]\nalpha = 0.001\n\n[method:NEAR-DGD+(1,1,k)]\ninit = 1 2 3 4\n"
        cfg = parse_config(write_config(tmp_path, extra=extra).read_text(), tmp_path)
        assert cfg.methods[0].alpha == 0.001
        assert cfg.methods[2].init == (1.0, 2.0, 3.0, 4.0)


class TestRunExperiment:
    def test_outputs(self, tmp_path):
        cfg = parse_config(write_config(tmp_path).read_text(), tmp_path)
        result = run_experiment(cfg)
        assert sorted(p.name for p in (tmp_path / "out").iterdir()) == [
            "DGD.csv", "DGD_2.csv", "NEAR-DGD+_1_1_k.csv", "summary.csv"]
        trace = read_trace_csv(result.paths["NEAR-DGD+(1,1,k)"])
        assert trace.manifest["problem_spec"] == "quadratic(n=6,p=4,kappa=50.0,seed=3)"
        assert trace.manifest["cost_models"] == "1:10,1:1,10:1"

    def test_replay_bytes(self, tmp_path):
        cfg = parse_config(write_config(tmp_path).read_text(), tmp_path)
        one = run_experiment(cfg, tmp_path / "a")
        two = run_experiment(cfg, tmp_path / "b")
        for label in one.paths:
            a, b = one.paths[label].read_text(), two.paths[label].read_text()
            assert "# timestamp=" in a
            assert strip_timestamp(a) == strip_timestamp(b)

    def test_shared_alpha(self, tmp_path):
        text = write_config(tmp_path).read_text().replace("output_dir = out", "output_dir = out\nshared_alpha = true")
        result = run_experiment(parse_config(text, tmp_path))
        alphas = {t.manifest["alpha"] for t in result.traces.values()}
        assert len(alphas) == 1

    def test_summary_recomputable(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, iters=300).read_text(), tmp_path)
        result = run_experiment(cfg)
        with open(result.summary_path) as fh:
            rows = {r["label"]: r for r in csv.DictReader(fh)}
        for label, path in result.paths.items():
            # independent recomputation straight from the CSV text
            lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
            data = list(csv.DictReader(lines))
            row = rows[label]
            assert float(row["final_rel_err"]) == float(data[-1]["rel_err"])
            for thr in THRESHOLDS:
                hit = next((d for d in data if float(d["rel_err"]) <= thr), None)
                tag = f"{thr:.0e}"
                if hit is None:
                    assert row[f"iters@{tag}"] == "not reached"
                else:
                    assert row[f"iters@{tag}"] == hit["k"]
                    assert row[f"comm@{tag}"] == hit["comm_rounds"]
                    assert float(row[f"cost[1:10]@{tag}"]) == float(hit["cost_cc1_cg10"])

    def test_divergence_is_not_fatal(self, tmp_path):
        extra = "\n[method:DGD]\nalpha = 50\n"
        cfg = parse_config(write_config(tmp_path, extra=extra).read_text(), tmp_path)
        result = run_experiment(cfg)
        assert result.diverged == ["DGD"] and not result.all_diverged
        rows = summarize(result.traces.values())
        assert rows[0]["status"].startswith("diverged@")
        assert rows[1]["status"] == "ok"

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NEARDGD_OUTPUT_DIR", str(tmp_path / "env"))
        run_experiment(parse_config(write_config(tmp_path, labels="DGD").read_text(), tmp_path))
        assert (tmp_path / "env" / "DGD.csv").exists()


class TestPlotData:
    def test_comm_axis_linear(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, iters=25).read_text(), tmp_path)
        result = run_experiment(cfg)
        text = emit_plot_data(result.traces.values(), "comm_rounds")
        rows = list(csv.DictReader(io.StringIO(text)))
        near = [int(r["x"]) for r in rows if r["label"] == "NEAR-DGD+(1,1,k)"]
        assert near == [k * (k + 1) // 2 for k in range(1, 26)]
        assert {r["label"] for r in rows} == set(result.traces)

    def test_cost_axis_uses_first_model(self, tmp_path):
        result = run_experiment(parse_config(write_config(tmp_path, labels="DGD^2", iters=5).read_text(), tmp_path))
        text = emit_plot_data([read_trace_csv(result.paths["DGD^2"])], "cost")
        xs = [float(r["x"]) for r in csv.DictReader(io.StringIO(text))]
        assert xs == [12.0 * k for k in range(1, 6)]
        again = emit_plot_data(result.traces.values(), "cost")
        assert [float(r["x"]) for r in csv.DictReader(io.StringIO(again))] == xs

    def test_empty_trace(self, tmp_path):
        from neardgd.accounting import TraceRecorder

        assert emit_plot_data([TraceRecorder().finish({"label": "e"})], "iterations") == "label,x,rel_err\n"

    def test_mixed_problems(self, tmp_path):
        from neardgd.accounting import TraceRecorder

        a = TraceRecorder().finish({"problem_spec": "one"})
        b = TraceRecorder().finish({"problem_spec": "two"})
        with pytest.raises(ValueError, match="different problems"):
            emit_plot_data([a, b], "iterations")

    def test_bad_axis(self):
        with pytest.raises(ValueError):
            emit_plot_data([], "time")


class TestMain:
    def test_run_ok(self, tmp_path, capsys):
        assert main(["run", str(write_config(tmp_path)), "--no-timestamp"]) == 0
        assert "summary" in capsys.readouterr().out
        assert "# timestamp" not in (tmp_path / "out" / "DGD.csv").read_text()

    def test_output_dir_flag(self, tmp_path):
        assert main(["run", str(write_config(tmp_path, labels="DGD")), "--output-dir", str(tmp_path / "o"),
                     "--max-iters", "3"]) == 0
        assert len(read_trace_csv(tmp_path / "o" / "DGD.csv")) == 3

    def test_config_error(self, tmp_path, capsys):
        assert main(["run", str(write_config(tmp_path, labels=""))]) == 1
        assert "config error" in capsys.readouterr().err
        assert main(["run", str(tmp_path / "missing.ini")]) == 1

    def test_dataset_error(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("1 1:1\n1 3:1 2:1\n")
        text = f"[problem]\ntype = logistic\ndataset = {bad}\nn = 2\np = 3\n[topology]\nkind = path\n[methods]\nlabels = DGD\n"
        cfg = tmp_path / "d.ini"
        cfg.write_text(text)
        assert main(["run", str(cfg)]) == 2

    def test_all_diverged(self, tmp_path):
        extra = "\n[method:DGD]\nalpha = 50\n"
        assert main(["run", str(write_config(tmp_path, labels="DGD", extra=extra))]) == 3

    def test_plotdata_and_summarize(self, tmp_path, capsys):
        main(["run", str(write_config(tmp_path, iters=10))])
        capsys.readouterr()
        traces = sorted(str(p) for p in (tmp_path / "out").glob("*.csv") if p.name != "summary.csv")
        assert main(["plotdata", *traces, "--axis", "grad_rounds"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("label,x,rel_err\n") and len(out.splitlines()) == 31
        assert main(["summarize", *traces, "-o", str(tmp_path / "s.csv")]) == 0
        assert (tmp_path / "s.csv").read_text().startswith("label,status")

    def test_spectrum(self, tmp_path, capsys):
        assert main(["spectrum", "path", "3", "--csv", str(tmp_path / "w.csv")]) == 0
        out = capsys.readouterr().out
        beta = float(re.search(r"beta\s+(\S+)", out).group(1))
        assert abs(beta - 2 / 3) <= 1e-12
        W = np.loadtxt(tmp_path / "w.csv", delimiter=",")
        np.testing.assert_allclose(W, [[2 / 3, 1 / 3, 0], [1 / 3, 1 / 3, 1 / 3], [0, 1 / 3, 2 / 3]], atol=1e-15)

    def test_spectrum_bad_args(self, capsys):
        assert main(["spectrum", "cyclic_k", "10", "-k", "3"]) == 1
