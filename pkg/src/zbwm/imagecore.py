"""Image container helpers, raster I/O, PSNR and fixed-power scaling.

Images are plain ``numpy`` arrays of shape ``(height, width, channels)`` with
float64 intensities in ``[0, 1]``. Channels is 1 (gray) or 3 (RGB).
"""
from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .errors import DimensionError, ImageFormatError

RAW_HEADER = struct.Struct("<III")
SUPPORTED_SUFFIXES = {".png", ".ppm", ".pgm", ".pnm"}


def as_image(arr) -> np.ndarray:
    """Validate and return ``arr`` as an (H, W, C) float64 array."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise DimensionError(f"expected (H, W, 1|3) image, got shape {a.shape}")
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise DimensionError("zero-sized image")
    return a


def clamp(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def load_image(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ImageFormatError(f"no such file: {path}")
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ImageFormatError(f"unsupported raster format: {path.suffix}")
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode in ("L", "LA", "1"):
                data = np.asarray(im.convert("L"))
            elif im.mode in ("RGB", "RGBA", "P"):
                data = np.asarray(im.convert("RGB"))
            else:
                raise ImageFormatError(f"unsupported pixel mode {im.mode} in {path}")
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if data.dtype != np.uint8:
        raise ImageFormatError(f"only 8-bit images are supported ({path})")
    if data.size == 0:
        raise ImageFormatError(f"zero-sized image: {path}")
    return as_image(data.astype(np.float64) / 255.0)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(clamp(as_image(img)) * 255.0).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    """Write an 8-bit PNG or binary PGM/PPM, chosen by file suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in SUPPORTED_SUFFIXES:
        raise ImageFormatError(f"unsupported raster format: {suffix}")
    q = to_uint8(img)
    pil = PILImage.fromarray(q[:, :, 0] if q.shape[2] == 1 else q)
    if suffix == ".png":
        pil.save(path, format="PNG")
    else:
        pil.save(path, format="PPM")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak-1 PSNR in dB; ``inf`` for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def perturbation_norm_for_psnr(size: int, target_db: float) -> float:
    """L2 norm of a perturbation over ``size`` samples giving PSNR ``target_db``."""
    return math.sqrt(size) * 10.0 ** (-target_db / 20.0)


def scale_to_target_psnr(host, stego, target: float, clip: bool = True) -> np.ndarray:
    """Rescale the embedded signal ``stego - host`` so that PSNR equals ``target``."""
    host = np.asarray(host, dtype=np.float64)
    stego = np.asarray(stego, dtype=np.float64)
    if host.shape != stego.shape:
        raise DimensionError(f"shape mismatch {host.shape} vs {stego.shape}")
    s = stego - host
    norm = float(np.linalg.norm(s))
    if norm == 0.0:
        raise ValueError("zero watermark signal cannot be scaled")
    out = host + s * (perturbation_norm_for_psnr(s.size, target) / norm)
    return clamp(out) if clip else out


def embed_at_psnr(host, stego, target: float, tol: float = 1e-3, max_iter: int = 30) -> np.ndarray:
    """Like ``scale_to_target_psnr`` but pins the PSNR measured after clamping.

    Clamping removes part of the signal near 0 and 1, so the pre-clamp
    scaling undershoots the distortion; the gain is raised until the clamped
    result sits within ``tol`` dB of ``target``.
    """
    host = np.asarray(host, dtype=np.float64)
    base = scale_to_target_psnr(host, stego, target, clip=False) - host
    gain = 1.0
    out = clamp(host + base)
    for _ in range(max_iter):
        err = psnr(host, out) - target
        if abs(err) <= tol:
            break
        # distortion scales roughly linearly with gain: PSNR shifts by 20 log10
        gain *= 10.0 ** (err / 20.0)
        out = clamp(host + gain * base)
    return out


def encode_raw_tensor(img: np.ndarray) -> bytes:
    """Serialize to the sidecar raw format: (h, w, c) u32 header, planar float32."""
    img = as_image(img)
    h, w, c = img.shape
    planar = np.ascontiguousarray(img.transpose(2, 0, 1), dtype="<f4")
    return RAW_HEADER.pack(h, w, c) + planar.tobytes()


def decode_raw_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < RAW_HEADER.size:
        raise ImageFormatError("raw tensor shorter than its header")
    h, w, c = RAW_HEADER.unpack_from(buf)
    expected = RAW_HEADER.size + 4 * h * w * c
    if len(buf) != expected:
        raise ImageFormatError(f"raw tensor length {len(buf)} != {expected}")
    planar = np.frombuffer(buf, dtype="<f4", offset=RAW_HEADER.size).reshape(c, h, w)
    return as_image(planar.transpose(1, 2, 0).astype(np.float64))
