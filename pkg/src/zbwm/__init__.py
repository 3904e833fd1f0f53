"""Zero-bit image watermark detection, attacks and a benchmark harness."""
__version__ = "0.1.0"

from .broken_arrows import BAKey, BrokenArrows, ba_detect, ba_embed, ba_keygen, ba_optimal_attack
from .hypercone import PValue, cosine_from_pfa, pfa_from_cosine
from .imagecore import load_image, psnr, save_image
from .records import AttackRecord
from .zerobit import MessageKey, SurrogateDecoder, Whitener, ZeroBitDetector, fit_whitener

__all__ = [
    "AttackRecord", "BAKey", "BrokenArrows", "MessageKey", "PValue", "SurrogateDecoder", "Whitener",
    "ZeroBitDetector", "ba_detect", "ba_embed", "ba_keygen", "ba_optimal_attack", "cosine_from_pfa",
    "fit_whitener", "load_image", "pfa_from_cosine", "psnr", "save_image",
]
