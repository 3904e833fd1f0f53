"""Query-counted access to a detector."""
from __future__ import annotations

import numpy as np

from ..errors import ZbwmError
from ..hypercone import PValue
from ..imagecore import psnr
from ..records import AttackRecord

DEFAULT_ALPHA = 1e-6


class BudgetExceeded(ZbwmError):
    """An attack asked for more detector queries than it was given."""


class GradientUnavailable(ZbwmError):
    pass


class DetectorHandle:
    """Wraps a detector (``detect``, optional ``gradient``) and counts every call.

    ``verify`` gives the harness an uncounted p-value for post-hoc success checks;
    attacks must not use it to steer.
    """

    def __init__(self, detector, alpha: float = DEFAULT_ALPHA, budget: int | None = None,
                 detect_cost: int = 1, gradient_cost: int = 1, white_box: bool = True):
        self.detector = detector
        self.alpha = float(alpha)
        self.budget = budget
        self.detect_cost = detect_cost
        self.gradient_cost = gradient_cost
        self.white_box = white_box and hasattr(detector, "gradient")
        self.queries = 0

    def _charge(self, cost: int) -> None:
        if self.budget is not None and self.queries + cost > self.budget:
            raise BudgetExceeded(f"query budget {self.budget} exhausted")
        self.queries += cost

    def remaining(self) -> float:
        return float("inf") if self.budget is None else self.budget - self.queries

    def detect(self, img) -> PValue:
        self._charge(self.detect_cost)
        return self.detector.detect(img)

    def is_detected(self, img) -> bool:
        return self.detect(img).detected(self.alpha)

    @property
    def has_gradient(self) -> bool:
        return self.white_box

    def gradient(self, img) -> tuple[PValue, np.ndarray]:
        """p-value and pixel gradient of the watermark score, as one query."""
        if not self.white_box:
            raise GradientUnavailable("detector exposes no gradient")
        self._charge(self.gradient_cost)
        return self.detector.detect(img), self.detector.gradient(img)

    def verify(self, img) -> PValue:
        return self.detector.detect(img)


def finish(name: str, handle: DetectorHandle, img_wm: np.ndarray, attacked: np.ndarray,
           pvalue: PValue | None = None, **extras) -> AttackRecord:
    """Build the record, re-checking the outcome against the detector."""
    p = handle.verify(attacked) if pvalue is None else pvalue
    return AttackRecord(
        attacked=attacked,
        psnr_vs_watermarked=psnr(img_wm, attacked),
        queries_used=handle.queries,
        success=not p.detected(handle.alpha),
        final_pvalue=p,
        attack_name=name,
        extras=extras,
    )
