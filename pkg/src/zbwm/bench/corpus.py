"""Image corpus: directory listing and the fixed crop/resize preprocessing."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ImageFormatError
from ..imagecore import SUPPORTED_SUFFIXES, as_image, clamp, load_image
from ..transforms.resample import resize

DEFAULT_SIZE = 1024


def center_square(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    s = min(h, w)
    top = (h - s) // 2
    left = (w - s) // 2
    return img[top:top + s, left:left + s]


def prepare(img: np.ndarray, size: int = DEFAULT_SIZE) -> np.ndarray:
    """Center-crop to a square, bilinear resize to ``size``, expand gray to RGB."""
    img = as_image(img)
    sq = center_square(img)
    if sq.shape[0] != size:
        sq = clamp(resize(sq, (size, size), method="bilinear"))
    if sq.shape[2] == 1:
        sq = np.repeat(sq, 3, axis=2)
    return sq


@dataclass
class Corpus:
    paths: list[Path]
    size: int = DEFAULT_SIZE

    @classmethod
    def from_dir(cls, directory, size: int = DEFAULT_SIZE, limit: int | None = None) -> "Corpus":
        d = Path(directory)
        if not d.is_dir():
            raise ImageFormatError(f"corpus directory not found: {d}")
        paths = sorted(p for p in d.iterdir() if p.suffix.lower() in SUPPORTED_SUFFIXES)
        if limit is not None:
            paths = paths[:limit]
        if not paths:
            raise ImageFormatError(f"no supported images in {d}")
        return cls(paths, size)

    def __len__(self) -> int:
        return len(self.paths)

    def image_id(self, idx: int) -> str:
        return self.paths[idx].stem

    def load(self, idx: int) -> np.ndarray:
        return prepare(load_image(self.paths[idx]), self.size)

    def __iter__(self):
        for i in range(len(self)):
            yield self.image_id(i), self.load(i)
