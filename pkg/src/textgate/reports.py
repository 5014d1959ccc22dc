"""Evaluation records and their CSV / SVG serializations.

Output bytes are a pure function of the records: no timestamps, no
environment leakage, so identical runs diff clean.
"""

import csv
import math
from dataclasses import dataclass

CSV_FIELDS = ("arm", "noise_kind", "noise_level", "seq_accuracy",
              "mean_norm_edit_dist", "gate_strong_mean", "gate_weak_mean",
              "n", "seed")


@dataclass
class EvalRecord:
    arm: str
    noise_kind: str = "none"
    noise_level: float = 0.0
    seq_accuracy: float = 0.0
    mean_norm_edit_dist: float = 0.0
    gate_strong_mean: float = math.nan
    gate_weak_mean: float = math.nan
    n: int = 0
    seed: int = 0

    def row(self):
        return [self.arm, self.noise_kind, repr(float(self.noise_level)),
                repr(float(self.seq_accuracy)), repr(float(self.mean_norm_edit_dist)),
                repr(float(self.gate_strong_mean)), repr(float(self.gate_weak_mean)),
                str(self.n), str(self.seed)]


def write_records_csv(path, records):
    """RFC-4180 CSV, one EvalRecord per row, fixed header."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(CSV_FIELDS)
        for r in records:
            writer.writerow(r.row())


def read_records_csv(path):
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames) != CSV_FIELDS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        for row in reader:
            out.append(EvalRecord(
                arm=row["arm"], noise_kind=row["noise_kind"],
                noise_level=float(row["noise_level"]),
                seq_accuracy=float(row["seq_accuracy"]),
                mean_norm_edit_dist=float(row["mean_norm_edit_dist"]),
                gate_strong_mean=float(row["gate_strong_mean"]),
                gate_weak_mean=float(row["gate_weak_mean"]),
                n=int(row["n"]), seed=int(row["seed"])))
    return out


def svg_line_chart(path, title, xlabel, ylabel, series, width=640, height=420):
    """Minimal standalone SVG line chart.

    ``series`` maps a label to (xs, ys) lists; y is clamped to [0, 1]
    padding aside (the charts plot accuracies).
    """
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")
    ml, mr, mt, mb = 60, 20, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs_all = [x for xs, _ in series.values() for x in xs]
    if not xs_all:
        raise ValueError("no data to chart")
    x_lo, x_hi = min(xs_all), max(xs_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    y_lo, y_hi = 0.0, 1.0

    def px(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return mt + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
             f'font-family="sans-serif" font-size="14">{title}</text>']
    # axes and ticks
    parts.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>')
    parts.append(f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" '
                 f'stroke="black"/>')
    for i in range(6):
        y = y_lo + (y_hi - y_lo) * i / 5
        parts.append(f'<line x1="{ml - 4}" y1="{py(y):.1f}" x2="{ml}" y2="{py(y):.1f}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{py(y) + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{y:.1f}</text>')
    ticks = sorted(set(xs_all))
    if len(ticks) > 8:
        step = (len(ticks) + 7) // 8
        ticks = ticks[::step]
    for x in ticks:
        parts.append(f'<line x1="{px(x):.1f}" y1="{mt + ph}" x2="{px(x):.1f}" '
                     f'y2="{mt + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{px(x):.1f}" y="{mt + ph + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{x:g}</text>')
    parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">{xlabel}</text>')
    parts.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>')
    # series
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = colors[i % len(colors)]
        points = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" '
                     f'stroke-width="2"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" '
                         f'fill="{color}"/>')
        ly = mt + 16 + 16 * i
        parts.append(f'<line x1="{ml + pw - 120}" y1="{ly}" x2="{ml + pw - 96}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw - 90}" y="{ly + 4}" font-family="sans-serif" '
                     f'font-size="12">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts))
        f.write("\n")
