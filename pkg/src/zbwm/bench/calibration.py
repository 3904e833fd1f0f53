"""False-alarm calibration on unwatermarked content."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..hypercone import pfa_from_cosine
from .config import ScenarioConfig
from .corpus import Corpus
from .metrics import CalibrationRow, calibration_table
from .schemes import Scheme, fit_split

DEFAULT_ALPHAS = (1e-1, 1e-2, 1e-3, 1e-6)


@dataclass
class CalibrationReport:
    source: str
    m: int
    rows: list[CalibrationRow]

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "m": self.m,
            "rows": [
                {"alpha": r.alpha, "n": r.n, "count": r.count, "rate": r.rate, "ci_lo": r.ci_lo,
                 "ci_hi": r.ci_hi, "resolvable": r.resolvable, "note": r.note}
                for r in self.rows
            ],
        }


def synthetic_pvalues(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """log10 p-values of ``n`` isotropic Gaussian vectors against a random axis."""
    axis = rng.standard_normal(m)
    axis /= np.linalg.norm(axis)
    x = rng.standard_normal((n, m))
    cos = np.abs(x @ axis) / np.linalg.norm(x, axis=1)
    return np.array([pfa_from_cosine(min(float(c), 1.0), m).log10_value for c in cos])


def calibrate_synthetic(m: int, n: int, alphas=DEFAULT_ALPHAS, seed: int = 0) -> CalibrationReport:
    rng = np.random.default_rng(seed)
    return CalibrationReport("synthetic", m, calibration_table(synthetic_pvalues(m, n, rng), alphas))


def corpus_pvalues(cfg: ScenarioConfig, keys_per_image: int, corpus: Corpus | None = None) -> np.ndarray:
    """log10 p-values of unwatermarked corpus images, each tested with
    ``keys_per_image`` independent keys. Decoder-based detectors are scored on
    the half of the corpus not used to fit their whitener."""
    corpus = corpus or Corpus.from_dir(cfg.corpus, cfg.size, cfg.limit)
    scheme = Scheme(cfg, corpus)
    held_out = range(len(corpus)) if cfg.detector == "broken_arrows" else fit_split(len(corpus))[1]
    out = []
    try:
        for i in held_out:
            img = corpus.load(i)
            for k in range(keys_per_image):
                det = scheme.detector(i * keys_per_image + k)
                out.append(det.detect(img).log10_value)
    finally:
        scheme.close()
    return np.asarray(out)


def calibrate(cfg: ScenarioConfig, alphas=DEFAULT_ALPHAS, keys_per_image: int = 10,
              corpus: Corpus | None = None) -> CalibrationReport:
    lp = corpus_pvalues(cfg, keys_per_image, corpus)
    m = Scheme(cfg).m if cfg.m is None else cfg.m
    return CalibrationReport(f"corpus:{cfg.detector}", m, calibration_table(lp, alphas))
