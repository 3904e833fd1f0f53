"""Resolve the detector and purifier named in a scenario config."""
from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from ..attacks.oracle import Purifier, default_purifier, identity_purifier, resample_purifier
from ..broken_arrows import DEFAULT_M as BA_M, DEFAULT_NC, DEFAULT_NF, BrokenArrows, ba_keygen
from ..errors import SidecarError
from ..sidecar import ENV_COMMAND, ExternalDecoder, ExternalPurifier
from ..zerobit import (DEFAULT_M as ZB_M, MessageKey, SurrogateDecoder, Whitener, ZeroBitDetector,
                       augmented_decodes, fit_whitener, pixel_augmented_decodes)
from .config import FULL_SIZE, ScenarioConfig
from .corpus import Corpus

WHITENER_SAMPLES_PER_DIM = 10


def fit_split(n: int) -> tuple[list[int], list[int]]:
    """Corpus indices used to fit the whitener (even) and held out (odd)."""
    idx = list(range(n))
    return idx[0::2], idx[1::2] or idx[0::2]
_WHITENER_SALT = 0x5717


def scaled_nf(size: int) -> int:
    """Host length scaled with the pixel count (60492 at 1024², 3780 at 256²)."""
    return int(DEFAULT_NF * (size / FULL_SIZE) ** 2)


def image_seed(run_seed: int, idx: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(run_seed), int(idx)])


def sidecar_command(cfg: ScenarioConfig) -> str:
    cmd = cfg.sidecar or os.environ.get(ENV_COMMAND)
    if not cmd:
        raise SidecarError(f"no sidecar command: set 'sidecar' or ${ENV_COMMAND}")
    return cmd


def make_purifier(spec: str) -> Purifier:
    if spec in ("bicubic2x", "default"):
        return default_purifier()
    if spec == "identity":
        return identity_purifier()
    if spec.endswith("x") and spec[:-2] in ("bicubic", "bilinear") and spec[-2].isdigit():
        return resample_purifier(int(spec[-2]), spec[:-2])
    if spec == "sidecar" or spec.startswith("sidecar:"):
        cmd = spec.split(":", 1)[1] if ":" in spec else os.environ.get(ENV_COMMAND)
        if not cmd:
            raise SidecarError(f"purifier sidecar needs a command or ${ENV_COMMAND}")
        return ExternalPurifier(command=cmd).as_purifier()
    raise ValueError(f"unknown purifier {spec!r}")


def _corpus_fingerprint(corpus: Corpus) -> str:
    h = hashlib.sha256()
    for p in corpus.paths:
        h.update(p.name.encode())
        h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()[:16]


def default_cache_dir() -> Path:
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "zbwm"


class Scheme:
    """Per-run detector factory: shared decoder and whitener, fresh key per image."""

    def __init__(self, cfg: ScenarioConfig, corpus: Corpus | None = None):
        self.cfg = cfg
        self.corpus = corpus
        self.shape = (cfg.size, cfg.size, 3)
        self._decoder = None
        self._whitener = None
        self._purifier = None

    @property
    def m(self) -> int:
        if self.cfg.m is not None:
            return self.cfg.m
        return BA_M if self.cfg.detector == "broken_arrows" else ZB_M

    @property
    def embeds(self) -> bool:
        """External decoders come without an embedder: corpus images are taken
        as already watermarked with the configured message."""
        return self.cfg.detector != "external"

    def decoder(self):
        if self._decoder is None:
            if self.cfg.detector == "surrogate":
                self._decoder = SurrogateDecoder(seed=self.cfg.decoder_seed, m=self.m, shape=self.shape)
            else:
                self._decoder = ExternalDecoder(command=sidecar_command(self.cfg),
                                                expected_m=self.cfg.m)
        return self._decoder

    def whitener(self) -> Whitener:
        if self._whitener is None:
            self._whitener = self._load_or_fit_whitener()
        return self._whitener

    def _load_or_fit_whitener(self) -> Whitener:
        if self.cfg.whitener:
            return Whitener.load(self.cfg.whitener)
        if self.corpus is None:
            raise ValueError("fitting a whitener needs a corpus")
        dec = self.decoder()
        tag = f"{self.cfg.detector}-{self.cfg.decoder_seed}-{dec.m}-{self.cfg.size}-{_corpus_fingerprint(self.corpus)}"
        cache = Path(self.cfg.cache_dir) if self.cfg.cache_dir else default_cache_dir()
        path = cache / f"whitener-{tag}.npz"
        if path.exists() and self.cfg.detector == "surrogate":
            return Whitener.load(path)
        rng = np.random.default_rng([self.cfg.decoder_seed, _WHITENER_SALT])
        images = [self.corpus.load(i) for i in fit_split(len(self.corpus))[0]]
        count = WHITENER_SAMPLES_PER_DIM * dec.m
        if isinstance(dec, SurrogateDecoder):
            samples = augmented_decodes(dec, images, count, rng)
        else:
            samples = pixel_augmented_decodes(dec.decode, images, count, rng)
        w = fit_whitener(samples)
        if self.cfg.detector == "surrogate":
            try:
                cache.mkdir(parents=True, exist_ok=True)
                tmp = path.with_name(path.stem + f".{os.getpid()}.tmp.npz")
                w.save(tmp)
                os.replace(tmp, path)
            except OSError:
                pass  # caching is best effort
        return w

    def detector(self, idx: int):
        """Detector with the key drawn for image ``idx``."""
        ss = image_seed(self.cfg.seed, idx)
        if self.cfg.detector == "broken_arrows":
            key_seed = int(ss.generate_state(1, np.uint64)[0])
            n_f = self.cfg.n_f or scaled_nf(self.cfg.size)
            key = ba_keygen(key_seed, m=self.m, n_f=n_f, n_c=self.cfg.n_c or DEFAULT_NC)
            return BrokenArrows(key)
        if self.cfg.message:
            key = MessageKey(np.array([int(b) for b in self.cfg.message], dtype=np.uint8))
        else:
            key = MessageKey.random(np.random.default_rng(ss), self.decoder().m)
        return ZeroBitDetector(self.decoder(), self.whitener(), key)

    def purifier(self) -> Purifier:
        if self._purifier is None:
            self._purifier = make_purifier(self.cfg.purifier)
        return self._purifier

    def close(self) -> None:
        if isinstance(self._decoder, ExternalDecoder):
            self._decoder.close()
        if self._purifier is not None and isinstance(self._purifier.apply, ExternalPurifier):
            self._purifier.apply.close()
