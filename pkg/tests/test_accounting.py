import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neardgd.accounting import (
    CostModel,
    TraceRecorder,
    consensus_error,
    cost_series,
    read_trace_csv,
    relative_error,
    write_trace_csv,
)
from neardgd.engine import method_from_label, run


def make_trace(comm_per_iter, k, grads_per_iter=1):
    rec = TraceRecorder()
    for j in range(1, k + 1):
        rec.record(j, comm_per_iter, j * comm_per_iter, j * grads_per_iter, j * grads_per_iter * 10, 0.5, 0.5)
    return rec.finish({"label": "fake"})


class TestCostModel:
    def test_parse_and_str(self):
        m = CostModel.parse("1:10")
        assert (m.c_c, m.c_g) == (1.0, 10.0)
        assert str(m) == "1:10" and m.column == "cost_cc1_cg10"
        assert CostModel.parse("0.5:2").column == "cost_cc0.5_cg2"

    @pytest.mark.parametrize("cc, cg", [(-1, 1), (1, -1), (0, 0)])
    def test_rejects(self, cc, cg):
        with pytest.raises(ValueError):
            CostModel(cc, cg)

    def test_rejects_bad_text(self):
        with pytest.raises(ValueError):
            CostModel.parse("10")


class TestCostSeries:
    def test_dgd_unit_costs(self):
        trace = make_trace(1, 7)
        np.testing.assert_array_equal(cost_series(trace, CostModel(1, 1)), 2 * np.arange(1, 8))

    def test_dgd5_comp_heavy(self):
        trace = make_trace(5, 7)
        np.testing.assert_array_equal(cost_series(trace, CostModel(1, 10)), 15 * np.arange(1, 8))

    def test_linear_schedule(self, ring, quad_1e2):
        prob, truth = quad_1e2
        trace = run(method_from_label("NEAR-DGD+(1,1,k)", max_iters=50), ring, prob, truth)
        k = trace.k
        np.testing.assert_array_equal(cost_series(trace, CostModel(1, 1)), k * (k + 1) // 2 + k)

    def test_empty(self):
        trace = TraceRecorder().finish({})
        assert cost_series(trace, CostModel()).size == 0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 40), st.floats(0.01, 100), st.floats(0.01, 100), st.floats(0.1, 10))
    def test_scaling_and_monotone(self, t, k, cc, cg, s):
        a, b = make_trace(t, k), make_trace(1, k, grads_per_iter=3)
        base = CostModel(cc, cg)
        scaled = CostModel(cc * s, cg * s)
        for tr in (a, b):
            c0, c1 = cost_series(tr, base), cost_series(tr, scaled)
            np.testing.assert_allclose(c1, s * c0, rtol=4e-16 * 4)
            assert (np.diff(c0) >= 0).all()
        order0 = np.sign(cost_series(a, base) - cost_series(b, base))
        order1 = np.sign(cost_series(a, scaled) - cost_series(b, scaled))
        assert np.array_equal(order0, order1)


class TestMetrics:
    def test_relative_error(self):
        x = np.array([3.0, -4.0])
        assert relative_error(x, x) == 0.0
        assert relative_error(np.zeros(2), x) == 1.0
        assert relative_error(2 * x, x) == 1.0

    def test_consensus_error(self):
        x = np.array([3.0, -4.0])
        assert consensus_error(np.tile(x, (4, 1)), x) == 0.0
        v = np.array([1.0, 1.0])
        assert consensus_error(np.tile(v, (3, 1)), x) == pytest.approx(relative_error(v, x), rel=1e-15)
        d = np.array([0.5, 2.0])
        assert consensus_error(np.stack([x + d, x - d]), x) == pytest.approx((d @ d) / (x @ x), rel=1e-15)

    def test_zero_optimum(self):
        with pytest.raises(ValueError):
            relative_error(np.ones(2), np.zeros(2))
        with pytest.raises(ValueError):
            consensus_error(np.ones((2, 2)), np.zeros(2))


class TestRecorder:
    def test_stride_keeps_last(self):
        rec = TraceRecorder(stride=3)
        for j in range(1, 11):
            rec.record(j, 1, j, j, j, 1.0, 1.0, force=j == 10)
        trace = rec.finish({})
        assert trace.k.tolist() == [3, 6, 9, 10]
        assert trace.manifest["stride"] == 3

    def test_rejects_bad_stride(self):
        with pytest.raises(ValueError):
            TraceRecorder(stride=0)

    def test_plateau(self):
        rec = TraceRecorder()
        for j in range(1, 21):
            rec.record(j, 1, j, j, j, float(j), 0.0)
        assert rec.finish({}).plateau() == pytest.approx(19.5)


class TestCsv:
    def test_roundtrip(self, tmp_path, ring, quad_1e2):
        prob, truth = quad_1e2
        trace = run(method_from_label("DGD^2", max_iters=30), ring, prob, truth)
        models = [CostModel(1, 10), CostModel(1, 1), CostModel(10, 1)]
        path = write_trace_csv(trace, tmp_path / "t.csv", models, timestamp="2020-01-01")
        back = read_trace_csv(path)
        for name in ("k", "t_k", "comm_rounds", "grad_rounds", "grad_evals", "rel_err", "cons_err"):
            assert np.array_equal(getattr(back, name), getattr(trace, name))
        assert back.manifest["label"] == "DGD^2"
        assert back.manifest["cost_models"] == "1:10,1:1,10:1"
        for m in models:
            assert np.array_equal(back.columns[m.column], cost_series(trace, m))
        assert np.array_equal(back.columns["cost"], cost_series(trace, models[0]))
        header = [l for l in path.read_text().splitlines() if not l.startswith("#")][0]
        assert header.startswith("k,t_k,comm_rounds,grad_rounds,rel_err,cons_err,cost")

    def test_header_only(self, tmp_path):
        path = write_trace_csv(TraceRecorder().finish({"label": "x"}), tmp_path / "e.csv")
        assert len(read_trace_csv(path)) == 0

    def test_rejects_foreign_csv(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_trace_csv(p)
