"""Hypercone detection statistic and its exact false-alarm probability.

Under H0 the extracted vector is isotropic in R^M, so the squared cosine with
any fixed axis follows Beta(1/2, (M-1)/2). The two-sided cone ``|cos| >= c``
therefore has false-alarm probability ``1 - I_{c^2}(1/2, (M-1)/2)``, which we
evaluate as ``I_{1-c^2}((M-1)/2, 1/2)`` to keep full relative precision in
the far tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericalError

_CF_MAX_ITER = 10_000
_CF_EPS = 1e-16
_TINY = 1e-300


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_cf(x: float, a: float, b: float) -> float:
    """Continued fraction for I_x(a,b) (modified Lentz). Converges for x < (a+1)/(a+b+2)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise NumericalError(f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})")


def _log_front(x: float, y: float, a: float, b: float) -> float:
    # log of x^a (1-x)^b / (a B(a,b)); y = 1 - x supplied separately for precision
    return a * math.log(x) + b * math.log(y) - _log_beta(a, b) - math.log(a)


def _check(x: float, a: float, b: float) -> None:
    if not (a > 0 and b > 0):
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0) or math.isnan(x):
        raise ValueError(f"x must lie in [0, 1], got {x}")


def log_reg_inc_beta(x: float, a: float, b: float, y: float | None = None) -> float:
    """Natural log of I_x(a,b). ``y`` optionally gives 1-x computed without cancellation."""
    _check(x, a, b)
    if y is None:
        y = 1.0 - x
    if x == 0.0:
        return -math.inf
    if y == 0.0:
        return 0.0
    if x < (a + 1.0) / (a + b + 2.0):
        return _log_front(x, y, a, b) + math.log(_beta_cf(x, a, b))
    comp = math.exp(_log_front(y, x, b, a)) * _beta_cf(y, b, a)
    return math.log1p(-comp)


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    _check(x, a, b)
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(_log_front(x, 1.0 - x, a, b)) * _beta_cf(x, a, b)
    return 1.0 - math.exp(_log_front(1.0 - x, x, b, a)) * _beta_cf(1.0 - x, b, a)


_LN10 = math.log(10.0)


@dataclass(frozen=True)
class PValue:
    """A probability kept alongside its base-10 log, which survives underflow."""

    value: float
    log10_value: float

    @classmethod
    def from_log10(cls, log10_value: float) -> "PValue":
        log10_value = min(0.0, float(log10_value))
        return cls(10.0 ** log10_value, log10_value)

    @classmethod
    def from_value(cls, value: float) -> "PValue":
        value = min(1.0, max(0.0, float(value)))
        return cls(value, math.log10(value) if value > 0 else -math.inf)

    def __float__(self) -> float:
        return self.value

    def detected(self, alpha: float) -> bool:
        return self.log10_value <= math.log10(alpha)


@dataclass(frozen=True)
class ConeStatistic:
    cosine: float
    subspace_dim: int
    cone_count: int = 1

    def __post_init__(self):
        if not (0.0 <= self.cosine <= 1.0):
            raise ValueError(f"cosine must lie in [0, 1], got {self.cosine}")
        if self.subspace_dim < 2 or self.cone_count < 1:
            raise ValueError("need M >= 2 and N_c >= 1")

    def pvalue(self) -> PValue:
        return union_bound(pfa_from_cosine(self.cosine, self.subspace_dim), self.cone_count)


def abs_cosine(r: np.ndarray, axis: np.ndarray) -> float:
    """|r . k| / (|r| |k|); zero for a degenerate r."""
    nr = float(np.linalg.norm(r))
    if nr == 0.0:
        return 0.0
    c = abs(float(np.dot(r, axis))) / (nr * float(np.linalg.norm(axis)))
    return min(1.0, c)


def pfa_from_cosine(cos_theta: float, m: int) -> PValue:
    """False-alarm probability of the double cone ``|cos| >= cos_theta`` in R^m."""
    if m < 2:
        raise ValueError(f"M must be >= 2, got {m}")
    c = float(cos_theta)
    if not (0.0 <= c <= 1.0):
        raise ValueError(f"cosine must lie in [0, 1], got {c}")
    if c == 0.0:
        return PValue(1.0, 0.0)
    if c == 1.0:
        return PValue(0.0, -math.inf)
    a = (m - 1) / 2.0
    y = (1.0 - c) * (1.0 + c)
    ln_p = log_reg_inc_beta(y, a, 0.5, y=c * c)
    return PValue.from_log10(ln_p / _LN10)


def union_bound(p: PValue, n_cones: int) -> PValue:
    if n_cones == 1:
        return p
    return PValue.from_log10(p.log10_value + math.log10(n_cones))


def cosine_from_pfa(target, m: int, max_steps: int = 200) -> float:
    """Cosine threshold whose false-alarm probability equals ``target``."""
    t = float(target.value if isinstance(target, PValue) else target)
    if not (0.0 < t < 1.0):
        raise ValueError(f"target probability must lie in (0, 1), got {t}")
    log_t = math.log10(t)
    # relative tolerance 1e-3 on p, expressed in log10 units
    tol = math.log10(1.0 + 1e-3)
    lo, hi = 0.0, 1.0
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            # bracket is down to adjacent doubles: return the closer end
            e_lo = abs(pfa_from_cosine(lo, m).log10_value - log_t)
            e_hi = abs(pfa_from_cosine(hi, m).log10_value - log_t)
            return lo if e_lo <= e_hi else hi
        err = pfa_from_cosine(mid, m).log10_value - log_t
        if abs(err) <= tol:
            return mid
        if err > 0:
            lo = mid
        else:
            hi = mid
    raise NumericalError(f"cosine_from_pfa did not converge for target={t}, M={m}")


def winning_cone(cosines: Sequence[float]) -> int:
    """Index of the largest cosine; ties go to the lowest index."""
    if len(cosines) == 0:
        raise ValueError("need at least one cone")
    return int(np.argmax(np.asarray(cosines, dtype=np.float64)))


def multi_cone_pvalue(cosines: Sequence[float], m: int) -> PValue:
    """Union-bound p-value of an N_c-cone detector: min(1, N_c * P_FA(max cosine))."""
    cos = np.asarray(cosines, dtype=np.float64)
    if cos.size == 0:
        raise ValueError("need at least one cone")
    return union_bound(pfa_from_cosine(float(cos[winning_cone(cos)]), m), cos.size)
