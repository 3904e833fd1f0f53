"""ASR, per-attack PSNR curves, worst-case envelopes and false-alarm calibration."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from ..records import AttackRecord

BIN_WIDTH = 2.0
BIN_RANGE = (20.0, 60.0)


def _log10p(r) -> float:
    if isinstance(r, AttackRecord):
        return float(r.final_pvalue.log10_value)
    return float(r["log10_pvalue"])


def _psnr(r) -> float:
    if isinstance(r, AttackRecord):
        return float(r.psnr_vs_watermarked)
    return float(r["psnr"])


def _attack(r) -> str:
    return r.attack_name if isinstance(r, AttackRecord) else r["attack"]


def records_only(events) -> list:
    """Drop header and failure events from a parsed log."""
    return [e for e in events if isinstance(e, AttackRecord) or e.get("event", "record") == "record"]


def compute_asr(records, alpha: float) -> float:
    """Fraction of records whose p-value exceeds ``alpha``, recomputed from the
    stored p-values rather than the success flags."""
    records = list(records)
    if not records:
        raise ValueError("compute_asr needs at least one record")
    la = math.log10(alpha)
    return sum(_log10p(r) > la for r in records) / len(records)


@dataclass(frozen=True)
class CurvePoint:
    lo: float
    hi: float
    asr: float
    n: int

    @property
    def successes(self) -> int:
        return round(self.asr * self.n)


def default_bins(width: float = BIN_WIDTH, span=BIN_RANGE) -> np.ndarray:
    n = int(round((span[1] - span[0]) / width))
    return span[0] + width * np.arange(n + 1)


def _bin_index(value: float, edges: np.ndarray) -> int | None:
    if not (edges[0] <= value <= edges[-1]):
        return None
    return min(int(np.searchsorted(edges, value, side="right")) - 1, edges.size - 2)


def curve(records, alpha: float, edges=None) -> list[CurvePoint]:
    """ASR per PSNR bin for one attack; empty bins are left out."""
    edges = default_bins() if edges is None else np.asarray(edges, dtype=float)
    la = math.log10(alpha)
    hits = defaultdict(lambda: [0, 0])
    for r in records:
        b = _bin_index(_psnr(r), edges)
        if b is None:
            continue
        hits[b][0] += _log10p(r) > la
        hits[b][1] += 1
    return [CurvePoint(float(edges[b]), float(edges[b + 1]), s / n, n)
            for b, (s, n) in sorted(hits.items())]


def group_by_attack(records) -> dict[str, list]:
    groups = defaultdict(list)
    for r in records:
        groups[_attack(r)].append(r)
    return dict(sorted(groups.items()))


def envelope(grouped: dict[str, list], alpha: float, edges=None) -> list[CurvePoint]:
    """Per bin, the largest ASR among the attacks with samples in that bin."""
    best: dict[float, CurvePoint] = {}
    for name in sorted(grouped):
        for pt in curve(grouped[name], alpha, edges):
            cur = best.get(pt.lo)
            if cur is None or pt.asr > cur.asr:
                best[pt.lo] = pt
    return [best[k] for k in sorted(best)]


# --- calibration ---------------------------------------------------------------

def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class CalibrationRow:
    alpha: float
    n: int
    count: int
    rate: float
    ci_lo: float
    ci_hi: float
    resolvable: bool  # N * alpha >= 1

    @property
    def note(self) -> str:
        return "" if self.resolvable else "below measurable resolution"

    def consistent(self, sigmas: float = 3.0) -> bool:
        """Empirical rate within ``sigmas`` binomial standard deviations of alpha."""
        sd = math.sqrt(self.alpha * (1 - self.alpha) / self.n)
        return abs(self.rate - self.alpha) <= sigmas * sd


def calibration_table(log10_pvalues, alphas) -> list[CalibrationRow]:
    """Empirical P(p <= alpha) for each alpha, from p-values under H0."""
    lp = np.asarray(log10_pvalues, dtype=float)
    n = lp.size
    if n == 0:
        raise ValueError("no p-values")
    rows = []
    for a in alphas:
        k = int(np.sum(lp <= math.log10(a)))
        lo, hi = wilson_interval(k, n)
        rows.append(CalibrationRow(float(a), n, k, k / n, lo, hi, n * a >= 1))
    return rows
