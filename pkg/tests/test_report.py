import pytest

from conftest import make_profile, make_space
from ktune.configspace import ParamDomain, ShapeKey
from ktune.errors import ReportError
from ktune.executor import SyntheticSession
from ktune.report import (
    BenchRow,
    BenchmarkTable,
    normalize,
    read_table,
    relative_cdf,
    transfer_analysis,
    write_normalized_csv,
)
from ktune.search import Exhaustive, SearchBudget, run_search


def row(impl, median, **dims):
    return BenchRow(impl=impl, shape=ShapeKey.from_dims(dims), median_ms=median)


def table(rows, group=("seq_len",), x="batch_size"):
    return BenchmarkTable(rows=rows, group_keys=tuple(group), x_key=x)


class TestNormalize:
    def test_paper_style_group(self):
        rows = [
            row("flash_attn", 2.0, seq_len=128, batch_size=1),
            row("flash_attn", 4.0, seq_len=128, batch_size=2),
            row("triton_tuned", 1.0, seq_len=128, batch_size=1),
            row("triton_tuned", 3.0, seq_len=128, batch_size=2),
        ]
        normalized = normalize(table(rows), "flash_attn")
        assert [r.normalized for r in normalized] == [1.0, 2.0, 0.5, 1.5]

    def test_baseline_leftmost_is_exactly_one_per_group(self):
        rows = [
            row("base", 3.0, seq_len=128, batch_size=4),
            row("base", 2.5, seq_len=128, batch_size=1),
            row("base", 7.0, seq_len=256, batch_size=1),
            row("cand", 9.0, seq_len=256, batch_size=1),
        ]
        normalized = normalize(table(rows), "base")
        by_key = {(r.shape.dims["seq_len"], r.impl, r.shape.dims["batch_size"]): r.normalized
                  for r in normalized}
        assert by_key[(128, "base", 1)] == 1.0
        assert by_key[(256, "base", 1)] == 1.0
        assert by_key[(128, "base", 4)] == 3.0 / 2.5

    def test_single_row_group(self):
        rows = [row("base", 5.0, seq_len=64, batch_size=1)]
        normalized = normalize(table(rows), "base")
        assert normalized[0].normalized == 1.0

    def test_missing_baseline_names_group(self):
        rows = [
            row("base", 1.0, seq_len=128, batch_size=1),
            row("cand", 2.0, seq_len=256, batch_size=1),
        ]
        with pytest.raises(ReportError) as exc:
            normalize(table(rows), "base")
        assert "seq_len=256" in str(exc.value)

    def test_within_group_ratios_preserved(self):
        rows = [
            row("base", 2.0, seq_len=128, batch_size=1),
            row("cand", 3.0, seq_len=128, batch_size=1),
            row("other", 5.0, seq_len=128, batch_size=2),
        ]
        normalized = normalize(table(rows), "base")
        for a in range(len(rows)):
            for b in range(len(rows)):
                assert normalized[a].normalized / normalized[b].normalized == pytest.approx(
                    rows[a].median_ms / rows[b].median_ms, rel=1e-12
                )

    def test_global_anchor(self):
        rows = [
            row("base", 2.0, seq_len=128, batch_size=1),
            row("base", 8.0, seq_len=256, batch_size=1),
        ]
        per_group = normalize(table(rows), "base", anchor="per-group")
        global_anchor = normalize(table(rows), "base", anchor="global")
        assert [r.normalized for r in per_group] == [1.0, 1.0]
        assert [r.normalized for r in global_anchor] == [1.0, 4.0]

    def test_duplicate_impl_shape_rejected(self):
        rows = [
            row("base", 2.0, seq_len=128, batch_size=1),
            row("base", 3.0, seq_len=128, batch_size=1),
        ]
        with pytest.raises(ReportError):
            table(rows)

    def test_csv_roundtrip_exact(self, tmp_path):
        rows = [
            row("base", 2.0, seq_len=128, batch_size=1),
            row("base", 4.0 / 3.0, seq_len=128, batch_size=2),
        ]
        normalized = normalize(table(rows), "base")
        path = tmp_path / "norm.csv"
        write_normalized_csv(normalized, path)
        back = read_table(path, "batch_size", ("seq_len",))
        # repr-formatted floats survive the trip bit-exactly
        assert [r.median_ms for r in back.rows] == [2.0, 4.0 / 3.0]


class TestRelativeCdf:
    def test_basic_ratios(self):
        base = [row("b", 2.0, seq_len=1), row("b", 3.0, seq_len=2)]
        cand = [row("c", 1.0, seq_len=1), row("c", 3.0, seq_len=2)]
        summary = relative_cdf(cand, base)
        assert summary.ratios == [1.0, 2.0]
        assert summary.frac_ge_1 == 1.0
        assert summary.mean == 1.5
        assert summary.min == 1.0 and summary.max == 2.0

    def test_identity(self):
        base = [row("b", 2.0, seq_len=i) for i in range(5)]
        cand = [row("c", 2.0, seq_len=i) for i in range(5)]
        summary = relative_cdf(cand, base)
        assert summary.ratios == [1.0] * 5

    def test_shape_mismatch_lists_shapes(self):
        base = [row("b", 2.0, seq_len=1), row("b", 2.0, seq_len=3)]
        cand = [row("c", 1.0, seq_len=1), row("c", 1.0, seq_len=7)]
        with pytest.raises(ReportError) as exc:
            relative_cdf(cand, base)
        msg = str(exc.value)
        assert "seq_len=7" in msg and "seq_len=3" in msg

    def test_scale_invariance(self):
        base = [row("b", 2.0, seq_len=1), row("b", 5.0, seq_len=2), row("b", 9.0, seq_len=3)]
        cand = [row("c", 1.5, seq_len=1), row("c", 6.0, seq_len=2), row("c", 4.5, seq_len=3)]
        ref = relative_cdf(cand, base).ratios
        scale = 37.5
        scaled = relative_cdf(
            [BenchRow(r.impl, r.shape, r.median_ms * scale) for r in cand],
            [BenchRow(r.impl, r.shape, r.median_ms * scale) for r in base],
        ).ratios
        assert scaled == pytest.approx(ref, rel=1e-12)

    def test_sorted_ascending(self):
        base = [row("b", float(9 - i), seq_len=i) for i in range(5)]
        cand = [row("c", 1.0, seq_len=i) for i in range(5)]
        summary = relative_cdf(cand, base)
        assert summary.ratios == sorted(summary.ratios)


class TestTransfer:
    def setup_platforms(self, rule_on_b=None):
        space = make_space([ParamDomain.pow2_range("BLOCK_M", 16, 256)])
        shape = ShapeKey.from_dims({"batch_size": 1, "seq_len": 64})
        profile_a = make_profile({"BLOCK_M": 128}, intercept=4.0)
        profile_b = make_profile(
            {"BLOCK_M": 32}, intercept=6.0, rules=[rule_on_b] if rule_on_b else []
        )
        budget = SearchBudget(max_evaluations=100)
        best_a = run_search(space, shape, Exhaustive(), budget, SyntheticSession(profile_a, space))
        session_b = SyntheticSession(profile_b, space)
        best_b = run_search(space, shape, Exhaustive(), budget, session_b)
        return space, shape, best_a, best_b, session_b

    def test_relative_perf_matches_formula(self):
        space, shape, best_a, best_b, session_b = self.setup_platforms()
        cells = transfer_analysis(best_a, space, [shape], session_b, best_b)
        assert len(cells) == 1
        # A's best is BLOCK_M=128; on B the penalty is 1 + 1.0*|log2(128/32)| = 3
        assert cells[0].relative_perf == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert not cells[0].is_invalid

    def test_self_transfer_is_identity(self):
        space, shape, _, best_b, session_b = self.setup_platforms()
        cells = transfer_analysis(best_b, space, [shape], session_b, best_b)
        assert cells[0].relative_perf == pytest.approx(1.0, rel=1e-12)

    def test_invalid_rule_produces_marker(self):
        space, shape, best_a, best_b, session_b = self.setup_platforms(
            rule_on_b="BLOCK_M > 64"
        )
        assert best_a.best.assignments["BLOCK_M"] == 128
        cells = transfer_analysis(best_a, space, [shape], session_b, best_b)
        assert cells[0].is_invalid
        assert cells[0].transferred_ms is None and cells[0].relative_perf is None
        assert "BLOCK_M > 64" in cells[0].invalid_reason

    def test_relative_perf_bounded_by_one_with_true_argmin(self):
        space, shape, best_a, best_b, session_b = self.setup_platforms()
        for s in [shape, ShapeKey.from_dims({"batch_size": 4, "seq_len": 256})]:
            cells = transfer_analysis(best_a, space, [s], session_b, best_b)
            assert cells[0].relative_perf <= 1.0 + 1e-12

    def test_space_digest_mismatch_rejected(self):
        space, shape, best_a, best_b, session_b = self.setup_platforms()
        other_space = make_space([ParamDomain.pow2_range("BLOCK_M", 16, 512)])
        with pytest.raises(ReportError):
            transfer_analysis(best_a, other_space, [shape], session_b, best_b)

    def test_shape_dependent_invalidity_splits_cells(self):
        space = make_space([ParamDomain.pow2_range("BLOCK_M", 16, 256)])
        profile_a = make_profile({"BLOCK_M": 256}, intercept=4.0)
        profile_b = make_profile(
            {"BLOCK_M": 16}, weights={"BLOCK_M": 2.0},
            rules=["BLOCK_M * seq_len > 16384"], intercept=6.0,
        )
        shapes = [
            ShapeKey.from_dims({"seq_len": 32}),
            ShapeKey.from_dims({"seq_len": 128}),
        ]
        budget = SearchBudget(max_evaluations=100)
        best_a = run_search(space, shapes[0], Exhaustive(), budget,
                            SyntheticSession(profile_a, space))
        session_b = SyntheticSession(profile_b, space)
        best_b = run_search(space, shapes[0], Exhaustive(), budget, session_b)
        cells = transfer_analysis(best_a, space, shapes, session_b, best_b)
        # 256*32 = 8192 runs (slowly); 256*128 = 32768 is invalid on B
        assert not cells[0].is_invalid and cells[0].relative_perf < 0.2
        assert cells[1].is_invalid
