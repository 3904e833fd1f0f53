"""Outcome of one attack run, shared by attacks, schemes and the harness."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .hypercone import PValue


@dataclass
class AttackRecord:
    attacked: np.ndarray
    psnr_vs_watermarked: float
    queries_used: int
    success: bool
    final_pvalue: PValue
    attack_name: str
    extras: dict = field(default_factory=dict)

    def log_entry(self, image_id: str, seed: int) -> dict:
        """JSON-safe summary (the image itself is not logged)."""
        entry = {
            "attack": self.attack_name,
            "image": image_id,
            "psnr": _finite_or_str(self.psnr_vs_watermarked),
            "queries": int(self.queries_used),
            "pvalue": self.final_pvalue.value,
            "log10_pvalue": _finite_or_str(self.final_pvalue.log10_value),
            "success": bool(self.success),
            "seed": int(seed),
        }
        for k, v in sorted(self.extras.items()):
            if isinstance(v, (bool, int, float, str)) or v is None:
                entry[k] = _finite_or_str(v) if isinstance(v, float) else v
        return entry

    def to_json(self, image_id: str, seed: int) -> str:
        return json.dumps(self.log_entry(image_id, seed), sort_keys=True)


def _finite_or_str(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else "-inf"
    return x
