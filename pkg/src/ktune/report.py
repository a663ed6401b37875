"""Benchmark presentation: baseline normalization, relative-performance
CDFs, and cross-platform configuration transfer.

Conventions, fixed once so every table reads the same way:

- Normalized latency: each row is divided by the baseline
  implementation's median at the anchor point of its group (default: the
  smallest x value in the group), so the baseline's leftmost point is
  exactly 1.0.
- Relative performance: baseline_median / candidate_median. Values above
  1 mean the candidate is faster.
- Transferred configs that are invalid on the target platform stay in the
  output as explicit invalid cells; a missing value is information.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .configspace import ConfigSpace, ShapeKey
from .errors import ReportError
from .executor import DEFAULT_PLAN, EvaluationPlan
from .search import TuningResult


@dataclass(frozen=True)
class BenchRow:
    impl: str
    shape: ShapeKey
    median_ms: float


@dataclass
class BenchmarkTable:
    """(impl, shape, median) records plus the axis that plots use.

    x_key may be None when the table is only keyed by whole shapes
    (the CDF path); normalization requires it.
    """

    rows: list[BenchRow]
    group_keys: tuple[str, ...]
    x_key: str | None

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            key = (row.impl, row.shape.digest)
            if key in seen:
                raise ReportError(f"duplicate (impl, shape) row: {row.impl} @ {row.shape}")
            seen.add(key)
            if row.median_ms <= 0:
                raise ReportError(f"median must be positive: {row.impl} @ {row.shape}")
            if self.x_key is not None and self.x_key not in row.shape.dims:
                raise ReportError(f"row {row.impl} @ {row.shape} has no x dimension {self.x_key!r}")
            for g in self.group_keys:
                if g not in row.shape.dims:
                    raise ReportError(f"row {row.impl} @ {row.shape} has no group dimension {g!r}")

    def group_of(self, row: BenchRow) -> tuple:
        return tuple(row.shape.dims[g] for g in self.group_keys)

    def groups(self) -> list[tuple]:
        out = []
        for row in self.rows:
            g = self.group_of(row)
            if g not in out:
                out.append(g)
        return out


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_table(path, x_key: str | None, group_keys: tuple[str, ...] = ()) -> BenchmarkTable:
    """CSV with columns `impl`, `median_ms`, and one column per shape dim."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "impl" not in reader.fieldnames or "median_ms" not in reader.fieldnames:
            raise ReportError(f"{path}: need columns 'impl' and 'median_ms'")
        dim_cols = [c for c in reader.fieldnames if c not in ("impl", "median_ms")]
        if not dim_cols:
            raise ReportError(f"{path}: no shape dimension columns")
        rows = []
        for rec in reader:
            dims = {c: _parse_cell(rec[c]) for c in dim_cols}
            rows.append(
                BenchRow(
                    impl=rec["impl"],
                    shape=ShapeKey.from_dims(dims),
                    median_ms=float(rec["median_ms"]),
                )
            )
    return BenchmarkTable(rows=rows, group_keys=tuple(group_keys), x_key=x_key)


# ---------------------------------------------------------------------------
# Normalization (latency plots)


@dataclass(frozen=True)
class NormalizedRow:
    impl: str
    shape: ShapeKey
    median_ms: float
    normalized: float


def normalize(
    table: BenchmarkTable, baseline_impl: str, anchor: str = "per-group"
) -> list[NormalizedRow]:
    """Divide every row by the baseline's median at the anchor point.

    anchor="per-group": the anchor is the baseline row at the smallest x
    within each group (each group then has its own 1.0). anchor="global":
    one anchor for the whole table, the baseline row at the overall
    smallest x.
    """
    if anchor not in ("per-group", "global"):
        raise ReportError(f"unknown anchor {anchor!r}")
    if table.x_key is None:
        raise ReportError("normalization needs an x-axis dimension")
    if not table.rows:
        return []

    def anchor_for(rows: list[BenchRow], label: str) -> float:
        candidates = [r for r in rows if r.impl == baseline_impl]
        if not candidates:
            raise ReportError(f"baseline {baseline_impl!r} missing in group {label}")
        return min(candidates, key=lambda r: r.shape.dims[table.x_key]).median_ms

    anchors: dict[tuple, float] = {}
    if anchor == "global":
        value = anchor_for(table.rows, "<all>")
        for g in table.groups():
            anchors[g] = value
    else:
        for g in table.groups():
            members = [r for r in table.rows if table.group_of(r) == g]
            label = ",".join(f"{k}={v}" for k, v in zip(table.group_keys, g)) or "<all>"
            anchors[g] = anchor_for(members, label)

    return [
        NormalizedRow(
            impl=row.impl,
            shape=row.shape,
            median_ms=row.median_ms,
            normalized=row.median_ms / anchors[table.group_of(row)],
        )
        for row in table.rows
    ]


def write_normalized_csv(rows: list[NormalizedRow], path):
    dim_cols = list(rows[0].shape.dims) if rows else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["impl", *dim_cols, "median_ms", "normalized"])
        for r in rows:
            w.writerow([r.impl, *(r.shape.dims[c] for c in dim_cols), repr(r.median_ms), repr(r.normalized)])


# ---------------------------------------------------------------------------
# Relative-performance CDF


@dataclass
class CdfSummary:
    ratios: list[float]  # ascending
    mean: float
    min: float
    max: float
    frac_ge_1: float

    def to_json_dict(self) -> dict:
        return {
            "ratios": self.ratios,
            "mean": self.mean,
            "min": self.min,
            "max": self.max,
            "frac_ge_1": self.frac_ge_1,
        }


def relative_cdf(candidate_rows: list[BenchRow], baseline_rows: list[BenchRow]) -> CdfSummary:
    """Per-shape ratio baseline/candidate, sorted ascending, plus summary.

    Shapes must align one-to-one; anything unmatched on either side is an
    error that names the offending shapes.
    """
    def keyed(rows, label):
        out = {}
        for r in rows:
            if r.shape.digest in out:
                raise ReportError(f"duplicate shape in {label} rows: {r.shape}")
            out[r.shape.digest] = r
        return out

    cand = keyed(candidate_rows, "candidate")
    base = keyed(baseline_rows, "baseline")
    only_cand = [str(cand[d].shape) for d in cand.keys() - base.keys()]
    only_base = [str(base[d].shape) for d in base.keys() - cand.keys()]
    if only_cand or only_base:
        parts = []
        if only_cand:
            parts.append(f"only in candidate: {sorted(only_cand)}")
        if only_base:
            parts.append(f"only in baseline: {sorted(only_base)}")
        raise ReportError("shape mismatch; " + "; ".join(parts))
    ratios = sorted(base[d].median_ms / cand[d].median_ms for d in cand)
    if not ratios:
        raise ReportError("no shapes to compare")
    return CdfSummary(
        ratios=ratios,
        mean=sum(ratios) / len(ratios),
        min=ratios[0],
        max=ratios[-1],
        frac_ge_1=sum(1 for r in ratios if r >= 1.0) / len(ratios),
    )


def write_cdf_csv(summary: CdfSummary, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "ratio", "cumulative_fraction"])
        n = len(summary.ratios)
        for i, ratio in enumerate(summary.ratios, start=1):
            w.writerow([i, repr(ratio), repr(i / n)])


# ---------------------------------------------------------------------------
# Cross-platform configuration transfer


@dataclass(frozen=True)
class TransferCell:
    source_platform: str  # fingerprint digest
    target_platform: str
    shape: ShapeKey
    native_best_ms: float
    transferred_ms: float | None
    relative_perf: float | None
    invalid_reason: str | None = None

    @property
    def is_invalid(self) -> bool:
        return self.invalid_reason is not None

    def to_json_dict(self) -> dict:
        return {
            "source_platform": self.source_platform,
            "target_platform": self.target_platform,
            "shape": self.shape.dims,
            "native_best_ms": self.native_best_ms,
            "transferred_ms": self.transferred_ms,
            "relative_perf": self.relative_perf,
            "invalid_reason": self.invalid_reason,
        }


def transfer_analysis(
    best_a: TuningResult,
    space: ConfigSpace,
    shapes: list[ShapeKey],
    session_b,
    best_b: TuningResult,
    plan: EvaluationPlan = DEFAULT_PLAN,
) -> list[TransferCell]:
    """Measure platform A's best config on platform B across `shapes`.

    Each cell compares the transferred config against B's own best config
    re-measured at the same shape; configs B's platform rejects become
    explicit invalid cells rather than disappearing.
    """
    for result, name in ((best_a, "source"), (best_b, "target")):
        if result.space_digest != space.digest:
            raise ReportError(f"{name} result was tuned on a different space")
        if result.best is None:
            raise ReportError(f"{name} result has no viable best config")
    source = best_a.fingerprint.digest()
    target = session_b.fingerprint().digest()
    cells = []
    for shape in shapes:
        native_out, _ = session_b.evaluate(best_b.best, shape, plan)
        if not native_out.is_ok:
            raise ReportError(
                f"target's own best config did not measure Ok at {shape}: "
                f"{native_out.status} ({native_out.reason})"
            )
        native_ms = native_out.measurement.median_ms
        trans_out, _ = session_b.evaluate(best_a.best, shape, plan)
        if trans_out.status == "invalid":
            cells.append(
                TransferCell(source, target, shape, native_ms, None, None, trans_out.reason)
            )
        elif trans_out.is_ok:
            t = trans_out.measurement.median_ms
            cells.append(TransferCell(source, target, shape, native_ms, t, native_ms / t))
        else:
            raise ReportError(f"evaluator failed at {shape}: {trans_out.reason}")
    return cells


def write_transfer_csv(cells: list[TransferCell], path):
    dim_cols = list(cells[0].shape.dims) if cells else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["source_platform", "target_platform", *dim_cols,
             "native_best_ms", "transferred_ms", "relative_perf", "invalid_reason"]
        )
        for c in cells:
            w.writerow(
                [
                    c.source_platform[:12],
                    c.target_platform[:12],
                    *(c.shape.dims[d] for d in dim_cols),
                    repr(c.native_best_ms),
                    "" if c.transferred_ms is None else repr(c.transferred_ms),
                    "" if c.relative_perf is None else repr(c.relative_perf),
                    c.invalid_reason or "",
                ]
            )


def write_json(obj, path):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)
