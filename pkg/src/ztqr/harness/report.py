"""Turn a bench CSV into per-figure aggregate tables and boxplot PNGs.

Three groupings, one per comparison:

    payload_size     (mode, key_bits, relay_id)  -> payload_bytes
    operation_times  (mode, op_kind, key_bits)   -> duration_ms
    cpu_usage        (mode, op_kind, key_bits)   -> cpu_pct
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..errors import ReportParseError  # noqa: E402
from ..metrics import BENCH_COLUMNS, OP_KINDS, BenchRecord  # noqa: E402
from .drivers import mode_of, percentile  # noqa: E402

FIGURES = {
    "payload_size": (("mode", "key_bits", "relay_id"), "payload_bytes", "Payload size (bytes)"),
    "operation_times": (("mode", "op_kind", "key_bits"), "duration_ms", "Operation time (ms)"),
    "cpu_usage": (("mode", "op_kind", "key_bits"), "cpu_pct", "CPU usage (%)"),
}
STAT_COLUMNS = ("n", "mean", "median", "p95", "min", "max")


def read_bench_csv(path: Path) -> list[BenchRecord]:
    """Parse a bench CSV; ``#`` lines are comments.  Bad rows raise with their line number."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ReportParseError(f"cannot read {path}: {exc}") from exc
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip() and not ln.startswith("#")]
    if not lines:
        return []
    header_no, header_line = lines[0]
    header = next(csv.reader([header_line]))
    if tuple(header) != BENCH_COLUMNS:
        raise ReportParseError(f"line {header_no}: header must be {','.join(BENCH_COLUMNS)}")
    out = []
    for lineno, ln in lines[1:]:
        row = next(csv.reader([ln]))
        if len(row) != len(BENCH_COLUMNS):
            raise ReportParseError(f"line {lineno}: expected {len(BENCH_COLUMNS)} fields, got {len(row)}")
        rec = dict(zip(BENCH_COLUMNS, row))
        if rec["op_kind"] not in OP_KINDS:
            raise ReportParseError(f"line {lineno}: unknown op_kind {rec['op_kind']!r}")
        try:
            out.append(BenchRecord(rec["relay_id"], rec["op_kind"], int(rec["key_bits"]),
                                   float(rec["duration_ms"]), float(rec["cpu_pct"]),
                                   int(rec["payload_bytes"]), rec["exchange_id"]))
        except ValueError as exc:
            raise ReportParseError(f"line {lineno}: {exc}") from exc
    return out


def _key(rec: BenchRecord, fields: tuple[str, ...]) -> tuple:
    return tuple(mode_of(rec.op_kind) if f == "mode" else getattr(rec, f) for f in fields)


def aggregate(records: list[BenchRecord], figure: str) -> list[dict[str, object]]:
    fields, value, _ = FIGURES[figure]
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault(_key(r, fields), []).append(float(getattr(r, value)))
    rows = []
    for key, vals in sorted(groups.items()):
        row: dict[str, object] = dict(zip(fields, key))
        row.update(n=len(vals), mean=statistics.fmean(vals), median=statistics.median(vals),
                   p95=percentile(vals, 95), min=min(vals), max=max(vals))
        rows.append(row)
    return rows


@dataclass
class ReportOutput:
    tables: dict[str, Path]
    figures: dict[str, Path]
    rows: dict[str, list[dict[str, object]]]


def _write_table(rows: list[dict[str, object]], fields: tuple[str, ...], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields) + list(STAT_COLUMNS))
        w.writeheader()
        w.writerows(rows)


def _plot(records: list[BenchRecord], figure: str, path: Path) -> None:
    fields, value, ylabel = FIGURES[figure]
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault(_key(r, fields), []).append(float(getattr(r, value)))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.5 * len(groups) + 2), 4.0))
    if groups:
        labels = ["\n".join(str(k) for k in key) for key in sorted(groups)]
        ax.boxplot([groups[k] for k in sorted(groups)], showfliers=False)
        ax.set_xticks(range(1, len(labels) + 1), labels, fontsize=7)
        if figure == "operation_times":
            ax.set_yscale("log")
    else:
        ax.text(0.5, 0.5, "no data", ha="center", va="center", transform=ax.transAxes)
    ax.set_ylabel(ylabel)
    ax.set_title(figure.replace("_", " "))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def report(csv_path: Path, out_dir: Path) -> ReportOutput:
    records = read_bench_csv(csv_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables, figures, all_rows = {}, {}, {}
    for name, (fields, _, _) in FIGURES.items():
        rows = aggregate(records, name)
        tables[name] = out_dir / f"{name}.csv"
        _write_table(rows, fields, tables[name])
        figures[name] = out_dir / f"{name}.png"
        _plot(records, name, figures[name])
        all_rows[name] = rows
    return ReportOutput(tables, figures, all_rows)


def format_tables(out: ReportOutput) -> str:
    parts = []
    for name, rows in out.rows.items():
        fields = FIGURES[name][0]
        parts.append(f"== {name} ({len(rows)} groups)")
        if not rows:
            parts.append("(empty)")
            continue
        parts.append("  ".join(f"{c:>14}" for c in fields + STAT_COLUMNS))
        for r in rows:
            cells = [f"{r[c]:>14}" for c in fields]
            cells += [f"{r['n']:>14}"] + [f"{float(r[c]):>14.3f}" for c in STAT_COLUMNS[1:]]
            parts.append("  ".join(cells))
    return "\n".join(parts)
