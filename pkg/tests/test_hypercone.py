import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from zbwm.hypercone import (ConeStatistic, PValue, abs_cosine, cosine_from_pfa, log_reg_inc_beta,
                            multi_cone_pvalue, pfa_from_cosine, reg_inc_beta, union_bound,
                            winning_cone)


@pytest.mark.parametrize("x,a,b", [(0.25, 0.5, 0.5), (0.1, 2.0, 3.0), (0.9, 63.5, 0.5), (0.5, 127.5, 0.5),
                                   (1e-4, 0.5, 10.0), (0.999, 5.0, 0.5)])
def test_inc_beta_matches_scipy(x, a, b):
    assert reg_inc_beta(x, a, b) == pytest.approx(special.betainc(a, b, x), rel=1e-10, abs=1e-300)
    assert math.exp(log_reg_inc_beta(x, a, b)) == pytest.approx(special.betainc(a, b, x), rel=1e-10)


def test_inc_beta_examples():
    assert reg_inc_beta(0.25, 0.5, 0.5) == pytest.approx(1 / 3, rel=1e-12)
    assert reg_inc_beta(0.0, 2, 3) == 0.0 and reg_inc_beta(1.0, 2, 3) == 1.0
    with pytest.raises(ValueError):
        reg_inc_beta(1.5, 1, 1)
    with pytest.raises(ValueError):
        reg_inc_beta(0.5, 0, 1)


@given(st.floats(0.01, 0.99), st.floats(0.1, 50), st.floats(0.1, 50))
def test_inc_beta_reflection(x, a, b):
    assert reg_inc_beta(x, a, b) + reg_inc_beta(1 - x, b, a) == pytest.approx(1.0, abs=1e-9)


@given(st.floats(0.0, 1.0), st.sampled_from([2, 3, 16, 128, 256]))
def test_pfa_matches_scipy_oracle(c, m):
    p = pfa_from_cosine(c, m)
    ref = special.betainc((m - 1) / 2, 0.5, 1 - c * c) if c < 1 else 0.0
    assert p.value == pytest.approx(ref, rel=1e-8, abs=1e-300)


def test_pfa_m2_closed_form():
    for c in np.linspace(0.0, 0.99, 12):
        theta = math.acos(c)
        assert pfa_from_cosine(c, 2).value == pytest.approx(2 * theta / math.pi, rel=1e-9)


def test_pfa_boundaries():
    assert pfa_from_cosine(0.0, 128).value == 1.0
    assert pfa_from_cosine(1.0, 128).log10_value == -math.inf
    with pytest.raises(ValueError):
        pfa_from_cosine(0.5, 1)
    with pytest.raises(ValueError):
        pfa_from_cosine(1.2, 8)


def test_far_tail_keeps_log_precision():
    # the value underflows double precision but its log does not; mpmath is the oracle
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50
    for c, m in [(0.99, 256), (0.9, 128), (0.6, 256), (0.999, 1024)]:
        p = pfa_from_cosine(c, m)
        ref = mpmath.betainc((m - 1) / mpmath.mpf(2), 0.5, 0, 1 - mpmath.mpf(c) ** 2, regularized=True)
        assert p.log10_value == pytest.approx(float(mpmath.log10(ref)), rel=1e-9)
    assert pfa_from_cosine(0.999, 1024).value == 0.0


# thresholds frozen from scipy.special.betaincinv
@pytest.mark.parametrize("p,m,c", [(1e-6, 256, 0.29956), (2e-8, 128, 0.46945), (2e-7, 128, 0.43863)])
def test_threshold_examples(p, m, c):
    assert cosine_from_pfa(p, m) == pytest.approx(c, abs=2e-4)
    ref = math.sqrt(1 - special.betaincinv((m - 1) / 2, 0.5, p))
    assert cosine_from_pfa(p, m) == pytest.approx(ref, abs=1e-4)


@given(st.floats(1e-12, 0.9), st.sampled_from([2, 16, 128, 256]))
def test_threshold_roundtrip(p, m):
    c = cosine_from_pfa(p, m)
    assert cosine_from_pfa(PValue.from_value(p), m) == c
    if m == 2 and p < 1e-6:
        # cos(theta) for theta ~ p is 1 - O(p^2), closer to 1 than a double can resolve:
        # the answer is the nearest representable cosine
        lo, hi = np.nextafter(c, 0.0), min(1.0, np.nextafter(c, 2.0))
        assert pfa_from_cosine(hi, m).value <= p * 1.001 and pfa_from_cosine(lo, m).value >= p / 1.001
        return
    assert pfa_from_cosine(c, m).value == pytest.approx(p, rel=2e-3)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.sampled_from([2, 16, 128]))
def test_pfa_monotone(c1, c2, m):
    lo, hi = sorted((c1, c2))
    assert pfa_from_cosine(hi, m).log10_value <= pfa_from_cosine(lo, m).log10_value


def test_union_bound():
    p = PValue.from_value(1e-8)
    assert union_bound(p, 50).value == pytest.approx(5e-7, rel=1e-9)
    assert union_bound(p, 1) is p
    assert union_bound(PValue.from_value(0.1), 50).value == 1.0
    assert ConeStatistic(pfa_cos := cosine_from_pfa(1e-8, 128), 128, 50).pvalue().value == pytest.approx(5e-7, rel=2e-3)
    assert 0 < pfa_cos < 1


def test_multi_cone_and_ties():
    cos = [0.1, 0.4, 0.4, 0.2]
    assert winning_cone(cos) == 1
    p = multi_cone_pvalue(cos, 128)
    assert p.log10_value == pytest.approx(pfa_from_cosine(0.4, 128).log10_value + math.log10(4))
    with pytest.raises(ValueError):
        winning_cone([])


@given(st.floats(1e-3, 1e3), st.integers(0, 2 ** 32 - 1))
def test_cosine_scale_invariant(s, seed):
    rng = np.random.default_rng(seed)
    r, k = rng.standard_normal((2, 16))
    assert abs_cosine(s * r, k) == pytest.approx(abs_cosine(r, k), rel=1e-12)
    assert abs_cosine(-r, k) == pytest.approx(abs_cosine(r, k), rel=1e-12)


def test_zero_vector_cosine():
    assert abs_cosine(np.zeros(8), np.ones(8)) == 0.0


def test_pvalue_detected_compares_logs():
    p = PValue.from_log10(-400.0)
    assert p.value == 0.0 and p.detected(1e-300)
    assert not PValue.from_value(1e-5).detected(1e-6)
    assert PValue.from_value(1e-6).detected(1e-6)
    assert PValue.from_log10(3.0).log10_value == 0.0


def test_empirical_calibration_small():
    rng = np.random.default_rng(7)
    m, n, alpha = 16, 20_000, 0.05
    c = cosine_from_pfa(alpha, m)
    x = rng.standard_normal((n, m))
    rate = np.mean(np.abs(x[:, 0]) / np.linalg.norm(x, axis=1) >= c)
    assert abs(rate - alpha) < 3 * math.sqrt(alpha * (1 - alpha) / n)
