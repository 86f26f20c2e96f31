"""Serialization of audit, calibration and probe results (JSON, CSV, minimal SVG).

All writers go through :func:`write_atomic`, so an interrupted run never
leaves a truncated file behind.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Sequence
from xml.etree import ElementTree as ET
from xml.sax.saxutils import escape, quoteattr

from .audit import AuditReport
from .calibration import CSV_COLUMNS as CALIBRATION_COLUMNS
from .calibration import CalibrationCurve

SPLIT_COLUMNS = ("attribute", "macro_f1", "accuracy", "chance_f1")


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def write_atomic(path: str | Path, text: str) -> Path:
    """Write via a sibling temp file and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.chmod(tmp, 0o666 & ~_umask())  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _finite(obj):
    """Replace NaN/inf by None so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):  # numpy scalars
        return _finite(obj.item())
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline.

    ``dumps(json.loads(dumps(x))) == dumps(x)`` because floats use their
    shortest round-tripping repr.
    """
    return json.dumps(_finite(obj), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return str(v)


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


# --------------------------------------------------------------------------
# audit


def report_columns(families: Sequence[str]) -> list[str]:
    return (["attribute", "utility_ami", "utility_mi_nats", "utility_ci_low", "utility_ci_high"]
            + [f"detectability_{f}" for f in families]
            + ["detectability_ensemble", "n_used", "mode", "warnings"])


def report_csv(report: AuditReport) -> str:
    families = report.config["models"]
    rows = []
    for a in report.attributes:
        u = a.utility
        ci = a.utility_ci or (None, None)
        det = [a.detectability[f].ami if f in a.detectability else None for f in families]
        rows.append([a.attribute, u.ami if u else None, u.mi if u else None, ci[0], ci[1], *det,
                     a.detectability_ensemble, a.n_used, a.mode, " | ".join(a.warnings)])
    return csv_text(report_columns(families), rows)


def write_audit(report: AuditReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    return {
        "json": write_atomic(out / "report.json", dumps(report.to_dict())),
        "csv": write_atomic(out / "report.csv", report_csv(report)),
        "svg": write_atomic(out / "scatter.svg", scatter_svg(report)),
    }


def load_report_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def utilities_from_report(doc: dict) -> list[tuple[str, float]]:
    out = []
    for a in doc.get("attributes", []):
        u = a.get("utility")
        if u and u.get("ami") is not None:
            out.append((a["attribute"], float(u["ami"])))
    return out


# --------------------------------------------------------------------------
# SVG


class _Axes:
    def __init__(self, xlim, ylim, width=640, height=480, margin=(60, 30, 30, 60)):
        self.xlim, self.ylim = xlim, ylim
        self.width, self.height = width, height
        self.left, self.top, self.right, self.bottom = margin

    def x(self, v: float) -> float:
        lo, hi = self.xlim
        return round(self.left + (v - lo) / (hi - lo) * (self.width - self.left - self.right), 2)

    def y(self, v: float) -> float:
        lo, hi = self.ylim
        return round(self.height - self.bottom - (v - lo) / (hi - lo) * (self.height - self.top - self.bottom), 2)

    def frame(self, xlabel: str, ylabel: str, title: str) -> list[str]:
        x0, x1 = self.x(self.xlim[0]), self.x(self.xlim[1])
        y0, y1 = self.y(self.ylim[0]), self.y(self.ylim[1])
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="11">',
            f'<title>{escape(title)}</title>',
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
            f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
            f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        ]
        for i in range(6):
            tx = self.xlim[0] + i * (self.xlim[1] - self.xlim[0]) / 5
            ty = self.ylim[0] + i * (self.ylim[1] - self.ylim[0]) / 5
            parts.append(f'<text x="{self.x(tx)}" y="{y0 + 15}" text-anchor="middle">{tx:.2f}</text>')
            parts.append(f'<text x="{x0 - 6}" y="{self.y(ty) + 4}" text-anchor="end">{ty:.2f}</text>')
        parts.append(f'<text x="{(x0 + x1) / 2}" y="{self.height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
        parts.append(f'<text x="14" y="{(y0 + y1) / 2}" text-anchor="middle" '
                     f'transform="rotate(-90 14 {(y0 + y1) / 2})">{escape(ylabel)}</text>')
        return parts


def _limits(values, lo=0.0, hi=1.0) -> tuple[float, float]:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    lo = min([lo, *vals])
    hi = max([hi, *vals])
    return (lo, hi) if hi > lo else (lo, lo + 1.0)


def scatter_svg(report: AuditReport) -> str:
    """Utility (x) against ensemble detectability (y), one labelled point per attribute."""
    pts = []
    for a in report.attributes:
        det = a.detectability_ensemble
        if a.utility is None or det is None:
            continue
        uci = a.utility_ci or (a.utility.ami, a.utility.ami)
        dci = a.detectability_ci.get(a.ensemble_family, (det, det))
        pts.append((a.attribute, a.utility.ami, det, uci, dci))
    xs = [v for p in pts for v in (p[1], *p[3])]
    ys = [v for p in pts for v in (p[2], *p[4])]
    ax = _Axes(_limits(xs), _limits(ys))
    parts = ax.frame("utility (AMI of attribute and label)", "detectability (ensemble AMI)",
                     "Detectability vs utility")
    for name, u, d, uci, dci in pts:
        cx, cy = ax.x(u), ax.y(d)
        parts.append(f'<g class="point" data-attribute={quoteattr(name)} data-utility="{u!r}" '
                     f'data-detectability="{d!r}">')
        parts.append(f'<line class="whisker-x" x1="{ax.x(uci[0])}" y1="{cy}" x2="{ax.x(uci[1])}" y2="{cy}" '
                     f'stroke="gray"/>')
        parts.append(f'<line class="whisker-y" x1="{cx}" y1="{ax.y(dci[0])}" x2="{cx}" y2="{ax.y(dci[1])}" '
                     f'stroke="gray"/>')
        parts.append(f'<circle cx="{cx}" cy="{cy}" r="4" fill="steelblue"/>')
        parts.append(f'<text x="{cx + 6}" y="{cy - 6}">{escape(name)}</text>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_points(svg: str) -> dict[str, tuple[float, float]]:
    """Pixel centres of the points in a scatter produced by :func:`scatter_svg`."""
    ns = {"s": "http://www.w3.org/2000/svg"}
    root = ET.fromstring(svg)
    out = {}
    for g in root.findall("s:g", ns):
        c = g.find("s:circle", ns)
        out[g.get("data-attribute")] = (float(c.get("cx")), float(c.get("cy")))
    return out


def calibration_svg(curve: CalibrationCurve, markers: Sequence[tuple[str, float]] = ()) -> str:
    """AUC drop against realized utility; ``markers`` draw vertical lines at observed utilities."""
    rows = [r for r in curve.rows if r.error is None]
    xs = [r.utility_ami for r in rows] + [m[1] for m in markers]
    ys = [v for r in rows for v in (r.auc_drop, *r.ci_drop)]
    ax = _Axes(_limits(xs), _limits(ys))
    parts = ax.frame("utility of planted artifact (AMI)", "AUC drop (correlated - counterfactual)",
                     "Worst-case AUC drop vs utility")
    pts = sorted(rows, key=lambda r: r.utility_ami)
    if pts:
        path = " ".join(f"{ax.x(r.utility_ami)},{ax.y(r.auc_drop)}" for r in pts)
        parts.append(f'<polyline class="curve" points="{path}" fill="none" stroke="steelblue"/>')
    for r in pts:
        cx, cy = ax.x(r.utility_ami), ax.y(r.auc_drop)
        parts.append(f'<g class="point" data-flip-fraction="{r.flip_fraction!r}">')
        if all(math.isfinite(v) for v in r.ci_drop):
            parts.append(f'<line class="whisker-y" x1="{cx}" y1="{ax.y(r.ci_drop[0])}" x2="{cx}" '
                         f'y2="{ax.y(r.ci_drop[1])}" stroke="gray"/>')
        parts.append(f'<circle cx="{cx}" cy="{cy}" r="3.5" fill="steelblue"/>')
        parts.append("</g>")
    y0, y1 = ax.y(ax.ylim[0]), ax.y(ax.ylim[1])
    for name, u in markers:
        x = ax.x(u)
        parts.append(f'<line class="marker" data-attribute={quoteattr(name)} data-utility="{u!r}" '
                     f'x1="{x}" y1="{y0}" x2="{x}" y2="{y1}" stroke="firebrick" stroke-dasharray="4 3"/>')
        parts.append(f'<text x="{x + 3}" y="{y1 + 12}" fill="firebrick">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --------------------------------------------------------------------------
# calibration and probes


def calibration_csv(curve: CalibrationCurve) -> str:
    return csv_text(CALIBRATION_COLUMNS, [r.csv_row() for r in curve.rows])


def write_calibration(curve: CalibrationCurve, out_dir: str | Path,
                      markers: Sequence[tuple[str, float]] = ()) -> dict[str, Path]:
    out = Path(out_dir)
    doc = curve.to_dict()
    doc["markers"] = [{"attribute": n, "utility": u} for n, u in markers]
    return {
        "csv": write_atomic(out / "calibration.csv", calibration_csv(curve)),
        "json": write_atomic(out / "calibration.json", dumps(doc)),
        "svg": write_atomic(out / "calibration.svg", calibration_svg(curve, markers)),
    }


def split_csv(probes, rho: float | None = None) -> str:
    rows = [[p.attribute, p.macro_f1, p.accuracy, p.chance_f1] for p in probes]
    if rho is not None:
        rows.append(["spearman_rho", rho, None, None])
    return csv_text(SPLIT_COLUMNS, rows)


def write_split(probes, out_dir: str | Path, rho: float | None = None, extra: dict | None = None) -> dict[str, Path]:
    out = Path(out_dir)
    doc = {"probes": [p.to_dict() for p in probes], "spearman_rho": rho, **(extra or {})}
    return {
        "csv": write_atomic(out / "split.csv", split_csv(probes, rho)),
        "json": write_atomic(out / "split.json", dumps(doc)),
    }
