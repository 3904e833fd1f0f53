"""Broken-Arrows style zero-bit watermarking in the wavelet domain.

The green channel goes through a 3-level DWT; the first ``n_f`` detail
coefficients (approximation band skipped) are projected onto ``m`` secret
orthonormal directions. ``n_c`` secret axes in that subspace each define a
double hypercone and detection uses the best one with a union bound.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, NotDetectedError, NumericalError
from .hypercone import PValue, cosine_from_pfa, multi_cone_pvalue, winning_cone
from .imagecore import as_image, clamp, embed_at_psnr, perturbation_norm_for_psnr, psnr
from .records import AttackRecord
from .transforms.wavelet import detail_count, detail_prefix, detail_prefix_adjoint

LEVELS = 3
EMBED_CHANNEL = 1  # green
DEFAULT_M = 128
DEFAULT_NF = 60492
DEFAULT_NC = 50
DEFAULT_ALPHA = 1e-6

KEY_MAGIC = b"ZBBA"
KEY_VERSION = 1
_KEY_STRUCT = struct.Struct("<4sHQIII")
_MAX_QR_RETRIES = 8


@dataclass(frozen=True)
class BAKey:
    seed: int
    m: int
    n_f: int
    n_c: int
    basis: np.ndarray = field(repr=False, compare=False)
    cone_axes: np.ndarray = field(repr=False, compare=False)

    def to_bytes(self) -> bytes:
        return _KEY_STRUCT.pack(KEY_MAGIC, KEY_VERSION, self.seed, self.m, self.n_f, self.n_c)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "BAKey":
        if len(buf) != _KEY_STRUCT.size:
            raise ValueError(f"key record must be {_KEY_STRUCT.size} bytes, got {len(buf)}")
        magic, version, seed, m, n_f, n_c = _KEY_STRUCT.unpack(buf)
        if magic != KEY_MAGIC:
            raise ValueError("not a Broken-Arrows key record")
        if version != KEY_VERSION:
            raise ValueError(f"unsupported key version {version}")
        return ba_keygen(seed, m, n_f, n_c)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "BAKey":
        return cls.from_bytes(Path(path).read_bytes())


def ba_keygen(seed: int, m: int = DEFAULT_M, n_f: int = DEFAULT_NF, n_c: int = DEFAULT_NC) -> BAKey:
    if m < 2 or n_f < m or n_c < 1:
        raise ValueError(f"need M >= 2, N_f >= M, N_c >= 1 (got {m}, {n_f}, {n_c})")
    if not (0 <= seed < 2 ** 64):
        raise ValueError("seed must be an unsigned 64-bit integer")
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_QR_RETRIES):
        g = rng.standard_normal((n_f, m))
        q, r = np.linalg.qr(g)
        diag = np.abs(np.diag(r))
        if diag.min() > 1e-10 * diag.max():
            break
    else:
        raise NumericalError("could not draw a full-rank projection")
    axes = rng.standard_normal((n_c, m))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    basis = np.ascontiguousarray(q.T)
    basis.setflags(write=False)
    axes.setflags(write=False)
    return BAKey(int(seed), m, n_f, n_c, basis, axes)


def _embed_plane(img: np.ndarray) -> np.ndarray:
    return img[:, :, EMBED_CHANNEL] if img.shape[2] == 3 else img[:, :, 0]


def _check_size(shape, key: BAKey) -> None:
    if key.n_f > detail_count(shape, LEVELS):
        raise DimensionError(f"N_f={key.n_f} exceeds the {detail_count(shape, LEVELS)} detail coefficients of {shape[:2]}")


def ba_project(img: np.ndarray, key: BAKey) -> np.ndarray:
    img = as_image(img)
    _check_size(img.shape, key)
    coeffs = detail_prefix(_embed_plane(img), LEVELS, key.n_f)
    return key.basis @ coeffs


def ba_back_project(w: np.ndarray, key: BAKey, shape) -> np.ndarray:
    """Pixel-domain image whose projection is ``w`` (and which is orthogonal to the rest)."""
    plane = detail_prefix_adjoint(key.basis.T @ w, shape[:2], LEVELS)
    out = np.zeros(shape)
    out[:, :, EMBED_CHANNEL if shape[2] == 3 else 0] = plane
    return out


def cone_cosines(r: np.ndarray, key: BAKey) -> np.ndarray:
    nr = float(np.linalg.norm(r))
    if nr == 0.0:
        return np.zeros(key.n_c)
    return np.minimum(1.0, np.abs(key.cone_axes @ r) / nr)


def ba_detect(img: np.ndarray, key: BAKey) -> PValue:
    img = as_image(img)
    r = ba_project(img, key)
    # a projection at rounding level (e.g. a constant image) carries no direction
    if float(np.linalg.norm(r)) <= 1e-12 * float(np.linalg.norm(_embed_plane(img))):
        return PValue(1.0, 0.0)
    return multi_cone_pvalue(cone_cosines(r, key), key.m)


def _plane_frame(r: np.ndarray, axis: np.ndarray):
    """Oriented axis a (a.r >= 0), in-plane unit u orthogonal to a, and the coordinates of r."""
    a = axis if float(axis @ r) >= 0 else -axis
    par = float(a @ r)
    perp = r - par * a
    q = float(np.linalg.norm(perp))
    if q > 1e-12 * max(1.0, abs(par)):
        u = perp / q
    else:
        # r sits on the axis: any orthogonal direction spans a valid plane
        e = np.zeros_like(a)
        e[int(np.argmin(np.abs(a)))] = 1.0
        u = e - (e @ a) * a
        u /= np.linalg.norm(u)
        q = 0.0
    return a, u, par, q


def max_cosine_perturbation(r: np.ndarray, axis: np.ndarray, rho: float) -> np.ndarray:
    """The ``w`` with ``|w| = rho`` maximizing ``|cos(r + w, axis)|``."""
    nr = float(np.linalg.norm(r))
    if nr == 0.0:
        return rho * axis
    a, u, par, q = _plane_frame(r, axis)
    if rho >= q:
        # enough budget to land on the axis; spend the rest along it
        return -q * u + math.sqrt(rho * rho - q * q) * a
    phi = math.atan2(q, par)
    phi_new = phi - math.asin(rho / nr)
    length = math.sqrt(nr * nr - rho * rho)
    return length * (math.cos(phi_new) * a + math.sin(phi_new) * u) - r


def _place(img: np.ndarray, r: np.ndarray, w: np.ndarray, key: BAKey, iters: int) -> np.ndarray:
    """Add ``w`` in the key subspace, then push back what clamping removed from it."""
    goal = r + w
    out = clamp(img + ba_back_project(w, key, img.shape))
    for _ in range(iters):
        out = clamp(out + ba_back_project(goal - ba_project(out, key), key, img.shape))
    return out


def ba_embed(img: np.ndarray, key: BAKey, target_psnr: float = 42.0, tol: float = 1e-3,
             clamp_iters: int = 4) -> np.ndarray:
    img = as_image(img)
    r = ba_project(img, key)
    axis = key.cone_axes[winning_cone(cone_cosines(r, key))]
    rho = perturbation_norm_for_psnr(img.size, target_psnr)
    # pin the clamped PSNR by growing the subspace budget; rescaling the pixel
    # difference instead would overshoot the axis once the budget saturates
    for _ in range(30):
        out = _place(img, r, max_cosine_perturbation(r, axis, rho), key, clamp_iters)
        err = psnr(img, out) - target_psnr
        if abs(err) <= tol:
            break
        rho *= 10.0 ** (err / 20.0)
    return embed_at_psnr(img, out, target_psnr)


def boundary_projection(r: np.ndarray, axis: np.ndarray, cos_target: float) -> np.ndarray:
    """Minimal-norm ``w`` putting ``r + w`` on the cone ``|cos(., axis)| = cos_target``."""
    a, u, par, q = _plane_frame(r, axis)
    nr = float(np.linalg.norm(r))
    phi = math.atan2(q, par)
    theta = math.acos(cos_target)
    if phi >= theta:
        return np.zeros_like(r)
    length = nr * math.cos(theta - phi)
    return length * (math.cos(theta) * a + math.sin(theta) * u) - r


def attack_cosine(key: BAKey, alpha: float = DEFAULT_ALPHA, margin: float | None = None) -> float:
    """Per-cone cosine the optimal attack aims for.

    With ``margin=None`` the target sits where the union-bound p-value equals
    ``10 * alpha``; otherwise ``margin`` radians are added to the threshold angle.
    """
    if margin is None:
        return cosine_from_pfa(min(0.5, 10.0 * alpha / key.n_c), key.m)
    if margin <= 0:
        raise ValueError("margin must be positive")
    theta = math.acos(cosine_from_pfa(alpha / key.n_c, key.m)) + margin
    return math.cos(min(theta, math.pi / 2))


def ba_optimal_attack(img_wm: np.ndarray, key: BAKey, margin: float | None = None,
                      alpha: float = DEFAULT_ALPHA) -> AttackRecord:
    img_wm = as_image(img_wm)
    r = ba_project(img_wm, key)
    p0 = multi_cone_pvalue(cone_cosines(r, key), key.m)
    if not p0.detected(alpha):
        raise NotDetectedError(f"input is not detected (p={p0.value:.3g})")
    c_t = attack_cosine(key, alpha, margin)
    total = np.zeros_like(r)
    # the winning cone nearly always suffices; others are handled in turn if
    # the move happens to leave them above the target
    for _ in range(key.n_c):
        cur = r + total
        cos = cone_cosines(cur, key)
        c = winning_cone(cos)
        if cos[c] <= c_t * (1 + 1e-12):
            break
        total += boundary_projection(cur, key.cone_axes[c], c_t)
    attacked = clamp(img_wm + ba_back_project(total, key, img_wm.shape))
    p = ba_detect(attacked, key)
    return AttackRecord(
        attacked=attacked,
        psnr_vs_watermarked=psnr(img_wm, attacked),
        queries_used=0,
        success=not p.detected(alpha),
        final_pvalue=p,
        attack_name="ba_optimal",
        extras={"subspace_norm": float(np.linalg.norm(total))},
    )


class BrokenArrows:
    """Detector object wrapping a key: statistic, p-value and pixel gradient."""

    name = "broken_arrows"

    def __init__(self, key: BAKey):
        self.key = key

    @property
    def m(self) -> int:
        return self.key.m

    def project(self, img) -> np.ndarray:
        return ba_project(img, self.key)

    def score(self, img) -> float:
        """Largest absolute cone cosine."""
        return float(cone_cosines(self.project(img), self.key).max())

    def detect(self, img) -> PValue:
        return ba_detect(img, self.key)

    def embed(self, img, target_psnr: float = 42.0) -> np.ndarray:
        return ba_embed(img, self.key, target_psnr)

    def gradient(self, img) -> np.ndarray:
        """Pixel gradient of the winning-cone absolute cosine."""
        img = as_image(img)
        r = self.project(img)
        nr = float(np.linalg.norm(r))
        if nr == 0.0:
            return np.zeros_like(img)
        cos = cone_cosines(r, self.key)
        a = self.key.cone_axes[winning_cone(cos)]
        s = 1.0 if float(a @ r) >= 0 else -1.0
        g = s * a / nr - cos.max() * r / (nr * nr)
        return ba_back_project(g, self.key, img.shape)
