"""Convergence logging and report emission (CSV / JSON / SVG).

The CSV is the golden artifact: byte-identical across repeated runs of the
same configuration.  Wall-clock times are therefore written as 0 in the CSV
and preserved, in milliseconds, only in the JSON sidecar.  The SVG chart is
a hand-rolled log-log plot (error vs dofs) so the package stays free of
plotting dependencies.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

CSV_HEADER = "iter,dofs,elements,eta,eta_star,qoi,qoi_rel_err,marked,wall_ms"

# okabe-ito palette: distinguishable and print-safe
_COLORS = ("#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00", "#56b4e9")


@dataclass
class IterationRecord:
    iteration: int
    dofs: int
    elements: int
    eta: float
    eta_star: float
    qoi: float
    qoi_rel_err: float
    marked: int
    wall_ms: float


@dataclass
class ConvergenceLog:
    label: str = "run"
    config: dict = field(default_factory=dict)
    records: list[IterationRecord] = field(default_factory=list)

    def append(self, rec: IterationRecord) -> None:
        if self.records and rec.dofs <= self.records[-1].dofs:
            raise RuntimeError(
                f"iteration {rec.iteration}: dof count {rec.dofs} did not "
                f"grow past {self.records[-1].dofs} — refinement is stuck"
            )
        self.records.append(rec)

    @property
    def final(self) -> IterationRecord:
        if not self.records:
            raise ValueError("empty convergence log")
        return self.records[-1]


def _fmt(x: float) -> str:
    """Stable shortest-ish decimal for golden files."""
    return f"{x:.12g}"


def log_to_csv(log: ConvergenceLog) -> str:
    lines = [CSV_HEADER]
    for r in log.records:
        lines.append(
            f"{r.iteration},{r.dofs},{r.elements},{_fmt(r.eta)},"
            f"{_fmt(r.eta_star)},{_fmt(r.qoi)},{_fmt(r.qoi_rel_err)},"
            f"{r.marked},0"
        )
    return "\n".join(lines) + "\n"


def log_to_json(log: ConvergenceLog) -> str:
    payload = {
        "label": log.label,
        "config": log.config,
        "iterations": [asdict(r) for r in log.records],
    }
    return json.dumps(payload, indent=2) + "\n"


def read_csv_log(path) -> ConvergenceLog:
    path = Path(path)
    log = ConvergenceLog(label=path.stem)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER.split(","):
            raise ValueError(f"{path}: not a convergence csv "
                             f"(expected header '{CSV_HEADER}')")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    for row in rows:
        log.records.append(IterationRecord(
            iteration=int(row["iter"]),
            dofs=int(row["dofs"]),
            elements=int(row["elements"]),
            eta=float(row["eta"]),
            eta_star=float(row["eta_star"]),
            qoi=float(row["qoi"]),
            qoi_rel_err=float(row["qoi_rel_err"]),
            marked=int(row["marked"]),
            wall_ms=float(row["wall_ms"]),
        ))
    return log


# -- SVG chart ---------------------------------------------------------------


def _decades(lo: float, hi: float):
    return range(math.ceil(lo - 1e-9), math.floor(hi + 1e-9) + 1)


def render_svg(logs: list[ConvergenceLog], title: str = "QoI error vs dofs") -> str:
    """Log-log chart of qoi_rel_err (fallback: eta) against dof count."""
    series = []
    for k, log in enumerate(logs):
        pts = [(r.dofs, r.qoi_rel_err) for r in log.records
               if r.dofs > 0 and r.qoi_rel_err > 0.0]
        if not pts:
            pts = [(r.dofs, r.eta) for r in log.records
                   if r.dofs > 0 and r.eta > 0.0]
        if pts:
            series.append((log.label, _COLORS[k % len(_COLORS)], pts))
    if not series:
        raise ValueError("nothing to plot: no positive error values in any log")

    wpx, hpx, ml, mr, mt, mb = 640, 460, 70, 20, 40, 50
    xs = [math.log10(x) for _, _, pts in series for x, _ in pts]
    ys = [math.log10(y) for _, _, pts in series for _, y in pts]
    x0, x1 = min(xs) - 0.05, max(xs) + 0.05
    y0, y1 = min(ys) - 0.1, max(ys) + 0.1
    if x1 - x0 < 0.5:
        x0, x1 = x0 - 0.25, x1 + 0.25
    if y1 - y0 < 0.5:
        y0, y1 = y0 - 0.25, y1 + 0.25

    def px(x):
        return ml + (math.log10(x) - x0) / (x1 - x0) * (wpx - ml - mr)

    def py(y):
        return hpx - mb - (math.log10(y) - y0) / (y1 - y0) * (hpx - mt - mb)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{wpx}" height="{hpx}" '
        f'viewBox="0 0 {wpx} {hpx}" font-family="sans-serif" font-size="12">',
        f'<rect width="{wpx}" height="{hpx}" fill="white"/>',
        f'<text x="{wpx / 2:.0f}" y="20" text-anchor="middle" '
        f'font-size="14">{title}</text>',
        f'<rect x="{ml}" y="{mt}" width="{wpx - ml - mr}" '
        f'height="{hpx - mt - mb}" fill="none" stroke="#444"/>',
    ]
    for d in _decades(x0, x1):
        gx = px(10.0 ** d)
        out.append(f'<line x1="{gx:.1f}" y1="{mt}" x2="{gx:.1f}" '
                   f'y2="{hpx - mb}" stroke="#ddd"/>')
        out.append(f'<text x="{gx:.1f}" y="{hpx - mb + 16}" '
                   f'text-anchor="middle">1e{d}</text>')
    for d in _decades(y0, y1):
        gy = py(10.0 ** d)
        out.append(f'<line x1="{ml}" y1="{gy:.1f}" x2="{wpx - mr}" '
                   f'y2="{gy:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{ml - 6}" y="{gy + 4:.1f}" '
                   f'text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{wpx / 2:.0f}" y="{hpx - 12}" '
               f'text-anchor="middle">degrees of freedom</text>')
    for label, color, pts in series:
        path = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        out.append(f'<polyline points="{path}" fill="none" '
                   f'stroke="{color}" stroke-width="1.8"/>')
        for x, y in pts:
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" '
                       f'r="2.6" fill="{color}"/>')
    for k, (label, color, _) in enumerate(series):
        ly = mt + 14 + 16 * k
        out.append(f'<line x1="{ml + 10}" y1="{ly - 4}" x2="{ml + 34}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + 40}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(log: ConvergenceLog, output_dir) -> dict[str, Path]:
    """Write convergence.csv / .json / .svg; returns the paths."""
    if not log.records:
        raise ValueError("refusing to emit a report for an empty log")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / "convergence.csv",
        "json": out / "convergence.json",
        "svg": out / "convergence.svg",
    }
    paths["csv"].write_text(log_to_csv(log))
    paths["json"].write_text(log_to_json(log))
    paths["svg"].write_text(render_svg([log]))
    return paths


# -- run comparison ----------------------------------------------------------


def nearest_dof_pairs(base: ConvergenceLog, other: ConvergenceLog):
    """For each record of `other`, the base record with the closest dofs."""
    pairs = []
    for r in other.records:
        best = min(base.records, key=lambda b: (abs(b.dofs - r.dofs), b.dofs))
        pairs.append((best, r))
    return pairs


def compare_logs(paths, output_dir) -> dict[str, Path]:
    """Merge runs into one chart plus a nearest-dof comparison table.

    The first log is the baseline; every other run's iterates are matched
    to the baseline record with the nearest dof count.
    """
    logs = [read_csv_log(p) for p in paths]
    if len(logs) < 2:
        raise ValueError("compare needs at least two csv logs")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    svg_path = out / "compare.svg"
    svg_path.write_text(render_svg(logs, title="runs compared"))

    base = logs[0]
    lines = ["run,dofs,qoi_rel_err,base_dofs,base_qoi_rel_err,ratio"]
    for other in logs[1:]:
        for b, r in nearest_dof_pairs(base, other):
            ratio = r.qoi_rel_err / b.qoi_rel_err if b.qoi_rel_err > 0 else math.inf
            lines.append(
                f"{other.label},{r.dofs},{_fmt(r.qoi_rel_err)},"
                f"{b.dofs},{_fmt(b.qoi_rel_err)},{_fmt(ratio)}"
            )
    csv_path = out / "compare.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    return {"svg": svg_path, "csv": csv_path}
