from .dct import FrequencyMask, build_lowfreq_mask, dct2d, idct2d, zigzag_order
from .jpeg import jpeg_approx, quant_table
from .resample import gaussian3x3, gaussian_blur, resize
from .wavelet import (
    WaveletPyramid,
    detail_count,
    detail_prefix,
    detail_prefix_adjoint,
    dwt_forward,
    dwt_inverse,
)

__all__ = [
    "FrequencyMask",
    "WaveletPyramid",
    "build_lowfreq_mask",
    "dct2d",
    "detail_count",
    "detail_prefix",
    "detail_prefix_adjoint",
    "dwt_forward",
    "dwt_inverse",
    "gaussian3x3",
    "gaussian_blur",
    "idct2d",
    "jpeg_approx",
    "quant_table",
    "resize",
    "zigzag_order",
]
