"""Export curves, envelopes and summaries of a results log."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .metrics import CurvePoint, compute_asr, curve, envelope, group_by_attack, records_only

CSV_COLUMNS = ("attack", "psnr_bin_lo", "psnr_bin_hi", "asr", "n")


def _rows(label: str, points: list[CurvePoint]):
    for p in points:
        yield (label, f"{p.lo:g}", f"{p.hi:g}", f"{p.asr:.6f}", str(p.n))


def curves_csv(grouped: dict, alpha: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for name in sorted(grouped):
        w.writerows(_rows(name, curve(grouped[name], alpha)))
    return buf.getvalue()


def envelope_csv(grouped: dict, alpha: float, scenario: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(_rows(f"envelope:{scenario}", envelope(grouped, alpha)))
    return buf.getvalue()


def summary(header: dict, events: list[dict]) -> dict:
    cfg = header["config"]
    alpha = float(cfg["alpha"])
    recs = records_only(events)
    grouped = group_by_attack(recs)
    attacks = {}
    for name, rs in grouped.items():
        psnrs = [float(r["psnr"]) for r in rs]
        attacks[name] = {
            "asr": compute_asr(rs, alpha),
            "n": len(rs),
            "mean_psnr": _finite(sum(psnrs) / len(psnrs)),
            "mean_queries": sum(int(r["queries"]) for r in rs) / len(rs),
        }
    return {
        "config_hash": header["config_hash"],
        "scenario": cfg["scenario"],
        "detector": cfg["detector"],
        "alpha": alpha,
        "attacks": attacks,
        "embedding_failures": sorted(e["image"] for e in events if e.get("event") == "embedding_failure"),
        "sidecar_failures": sorted(e["image"] for e in events if e.get("event") == "sidecar_failure"),
    }


def _finite(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _svg(title: str, series: dict[str, list[CurvePoint]], width=640, height=400) -> str:
    """Minimal line plot of ASR against bin centre."""
    left, right, top, bottom = 56, 170, 30, 44
    pw, ph = width - left - right, height - top - bottom
    x0, x1 = 20.0, 60.0

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (1 - v) * ph

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
           f'<text x="{left}" y="18" font-size="13">{_esc(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for t in range(20, 61, 10):
        out.append(f'<text x="{sx(t):.1f}" y="{top + ph + 16}" text-anchor="middle">{t}</text>')
    for t in (0.0, 0.5, 1.0):
        out.append(f'<text x="{left - 6}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">PSNR vs watermarked (dB)</text>')
    out.append(f'<text x="14" y="{top + ph / 2}" transform="rotate(-90 14 {top + ph / 2})" text-anchor="middle">ASR</text>')
    for i, (name, pts) in enumerate(series.items()):
        col = palette[i % len(palette)]
        coords = " ".join(f"{sx((p.lo + p.hi) / 2):.1f},{sy(p.asr):.1f}" for p in pts)
        if coords:
            dash = ' stroke-dasharray="5,3"' if name.startswith("envelope") else ""
            out.append(f'<polyline points="{coords}" fill="none" stroke="{col}" stroke-width="1.6"{dash}/>')
        out.append(f'<text x="{left + pw + 10}" y="{top + 14 * (i + 1)}" fill="{col}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_report(header: dict, events: list[dict], out_dir, svg: bool = True) -> dict[str, Path]:
    """Write curves.csv, envelope.csv, summary.json (and plot.svg) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = header["config"]
    alpha = float(cfg["alpha"])
    grouped = group_by_attack(records_only(events))
    files = {
        "curves": out / "curves.csv",
        "envelope": out / "envelope.csv",
        "summary": out / "summary.json",
    }
    files["curves"].write_text(curves_csv(grouped, alpha), encoding="utf-8")
    files["envelope"].write_text(envelope_csv(grouped, alpha, cfg["scenario"]), encoding="utf-8")
    files["summary"].write_text(json.dumps(summary(header, events), indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
    if svg:
        series = {name: curve(rs, alpha) for name, rs in grouped.items()}
        series[f"envelope:{cfg['scenario']}"] = envelope(grouped, alpha)
        files["svg"] = out / "plot.svg"
        files["svg"].write_text(_svg(f"{cfg['scenario']} / {cfg['detector']}", series), encoding="utf-8")
    return files
