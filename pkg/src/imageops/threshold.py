"""Histograms over the normalized 0-255 range, Otsu thresholding and histogram matching."""
from fractions import Fraction
from typing import Optional

import numpy as np

from src.utility.errors import DegenerateInputError
from src.volumecore.volume import MaskLike, Slice, Volume, as_bool

N_BINS = 256


def bin_index(values: np.ndarray) -> np.ndarray:
    """Maps intensities on the 0-255 scale to integer bins 0..255."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64)), 0, N_BINS - 1).astype(np.int64)


def histogram(pixels: np.ndarray, roi: Optional[MaskLike] = None) -> np.ndarray:
    """
    Counts pixels (optionally restricted to a ROI) in 256 unit-width bins over [0, 255].

    Returns:
        np.ndarray: int64 counts, length 256.
    """
    values = np.asarray(pixels, dtype=np.float64)
    if roi is not None:
        values = values[as_bool(roi)]
    return np.bincount(bin_index(values.ravel()), minlength=N_BINS).astype(np.int64)


def otsu_threshold(pixels: np.ndarray, roi: Optional[MaskLike] = None) -> int:
    """
    Otsu threshold over the 256-bin histogram of the ROI pixels.

    Candidate t splits bins into {0..t} and {t+1..255}; the candidate maximizing the
    between-class variance is returned, the lowest one on ties. Class statistics are
    compared in exact rational arithmetic so ties are resolved deterministically.
    Pixels strictly above the threshold form the upper class.

    Args:
        pixels (np.ndarray): Intensities on the 0-255 scale.
        roi (MaskLike, optional): Pixels taking part in the histogram.

    Returns:
        int: Threshold bin in 0..254.

    Raises:
        DegenerateInputError: If the ROI holds fewer than two distinct bins.
    """
    counts = histogram(pixels, roi)
    if np.count_nonzero(counts) < 2:
        raise DegenerateInputError("Otsu threshold needs at least two distinct intensities in the ROI")

    counts_list = [int(c) for c in counts]
    total = sum(counts_list)
    total_sum = sum(i * c for i, c in enumerate(counts_list))

    best_t = 0
    best_score: Optional[Fraction] = None
    n0 = 0
    s0 = 0
    for t in range(N_BINS - 1):
        n0 += counts_list[t]
        s0 += t * counts_list[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            score = Fraction(0)
        else:
            # proportional to w0 * w1 * (mu0 - mu1)^2
            score = Fraction((total * s0 - n0 * total_sum) ** 2, n0 * n1)
        if best_score is None or score > best_score:
            best_score = score
            best_t = t
    return best_t


def _cdf(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise DegenerateInputError("histogram is empty")
    return np.cumsum(counts) / total


def matching_lut(src_hist: np.ndarray, ref_hist: np.ndarray) -> np.ndarray:
    """
    Monotone bin-to-bin lookup table mapping the source CDF onto the reference CDF.

    Each source bin maps to the smallest reference bin whose CDF reaches the source CDF.
    """
    src_cdf = _cdf(src_hist)
    ref_cdf = _cdf(ref_hist)
    lut = np.searchsorted(ref_cdf, src_cdf - 1e-12, side='left')
    return np.clip(lut, 0, N_BINS - 1).astype(np.float64)


def histogram_match(src: Slice, ref_hist: np.ndarray, roi: Optional[MaskLike] = None) -> Slice:
    """
    Matches the histogram of a slice (within an optional ROI) to a reference histogram.

    Pixels are quantized to their bin and mapped through the CDF lookup table; pixels
    outside the ROI are left unchanged.

    Args:
        src (Slice): Slice on the 0-255 scale.
        ref_hist (np.ndarray): 256-bin reference histogram.
        roi (MaskLike, optional): Region whose histogram is matched.

    Returns:
        Slice: The matched slice.

    Raises:
        DegenerateInputError: If the ROI or the reference histogram is empty.
    """
    region = np.ones(src.pixels.shape, dtype=bool) if roi is None else as_bool(roi)
    if not region.any():
        raise DegenerateInputError(f"slice {src.z_index}: histogram matching ROI is empty")
    lut = matching_lut(histogram(src.pixels, region), ref_hist)
    pixels = np.array(src.pixels, copy=True)
    pixels[region] = lut[bin_index(src.pixels[region])]
    return Slice(pixels, z_index=src.z_index)


def match_volume_histogram(src: Volume, ref: Volume) -> Volume:
    """Matches the global 256-bin histogram of one normalized volume to another."""
    lut = matching_lut(histogram(src.voxels), histogram(ref.voxels))
    return src.with_voxels(lut[bin_index(src.voxels)])
