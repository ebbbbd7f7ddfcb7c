"""CSV artifacts for runs, comparisons and sweeps.

Schemas are fixed::

    flows.csv    flow_id,src,dst,class,start_s,fct_s,bytes,retransmissions
    ports.csv    port_id,drops,marks,mean_q_bytes,max_q_bytes
    summary.csv  metric,value

Floats are written with 9 significant digits; an unfinished flow has an
empty ``fct_s``.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

from . import config as cfgmod
from .metrics import MetricsRecord

FLOWS_HEADER = ["flow_id", "src", "dst", "class", "start_s", "fct_s", "bytes", "retransmissions"]
PORTS_HEADER = ["port_id", "drops", "marks", "mean_q_bytes", "max_q_bytes"]
SUMMARY_HEADER = ["metric", "value"]


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".9g")
    return str(value)


def _write(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_run(rec: MetricsRecord, resolved: dict, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "flows": out / "flows.csv",
        "ports": out / "ports.csv",
        "summary": out / "summary.csv",
        "config": out / "resolved_config.json",
    }
    _write(paths["flows"], FLOWS_HEADER,
           ([f.flow_id, f.src, f.dst, f.cls, f.start, f.fct, f.delivered, f.retransmissions]
            for f in rec.flows))
    _write(paths["ports"], PORTS_HEADER,
           ([p.port_id, p.drops, p.marks, p.mean_q, p.max_q] for p in rec.ports))
    _write(paths["summary"], SUMMARY_HEADER, rec.summary.items())
    paths["config"].write_text(cfgmod.dumps(resolved))
    return paths


def read_summary(path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["metric"]: row["value"] for row in csv.DictReader(fh)}


def _ratio(a: float, b: float) -> float:
    if a == b or (math.isnan(a) and math.isnan(b)):
        return 1.0
    if b == 0:
        return 1.0 if a == 0 else float("inf")
    return a / b


COMPARE_METRICS = [
    "total_drops", "mice_fct_avg_s", "mice_fct_std_s", "mice_fct_max_s", "mice_fct_p99_s",
    "elephant_goodput_bps", "elephant_goodput_outside_incast_bps", "bottleneck_mean_q_bytes",
]


def comparison_rows(labels, summaries) -> tuple[list[str], list[list]]:
    """Side-by-side rows; relative columns are against the first entry."""
    base = summaries[0]
    header = ["label", "aqm", "sender"] + COMPARE_METRICS + [
        "drops_ratio", "drop_reduction_pct", "fct_avg_ratio", "fct_std_ratio", "fct_max_ratio",
        "goodput_ratio",
    ]
    rows = []
    for label, s in zip(labels, summaries):
        vals = [float(s[m]) for m in COMPARE_METRICS]
        b = {m: float(base[m]) for m in COMPARE_METRICS}
        drops_ratio = _ratio(float(s["total_drops"]), b["total_drops"])
        rows.append([label, s["aqm"], s["sender"], *vals,
                     drops_ratio, 100.0 * (1.0 - drops_ratio),
                     _ratio(float(s["mice_fct_avg_s"]), b["mice_fct_avg_s"]),
                     _ratio(float(s["mice_fct_std_s"]), b["mice_fct_std_s"]),
                     _ratio(float(s["mice_fct_max_s"]), b["mice_fct_max_s"]),
                     _ratio(float(s["elephant_goodput_bps"]), b["elephant_goodput_bps"])])
    return header, rows


def write_comparison(labels, summaries, out_dir) -> Path:
    header, rows = comparison_rows(labels, summaries)
    path = Path(out_dir) / "comparison.csv"
    _write(path, header, rows)
    return path


def write_table(path, header, rows) -> Path:
    _write(Path(path), header, rows)
    return Path(path)
