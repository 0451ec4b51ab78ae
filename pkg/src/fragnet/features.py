"""Hand-crafted block descriptors.

Fourteen global statistics per block (compressibility, byte-value
moments, set-bit density, run length, ASCII band frequencies, entropy)
plus the byte co-occurrence matrix with 2x2 average-pool downsampling.
These power the feature-based baseline classifiers and the feature-cost
benchmark; all functions are pure and safe to call from parallel
workers.
"""

from __future__ import annotations

import bz2
import csv
import time
import zlib
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

COMPRESSORS = ("deflate", "bwt")

FEATURE_NAMES = (
    "kolmogorov_proxy",
    "arithmetic_mean",
    "geometric_mean",
    "harmonic_mean",
    "std_dev",
    "mean_abs_dev",
    "hamming_weight",
    "kurtosis",
    "skewness",
    "longest_streak",
    "low_ascii_freq",
    "med_ascii_freq",
    "high_ascii_freq",
    "shannon_entropy",
)


@dataclass(frozen=True)
class FeatureVector:
    """The 14 global block statistics, in fixed CSV column order."""

    kolmogorov_proxy: float
    arithmetic_mean: float
    geometric_mean: float
    harmonic_mean: float
    std_dev: float
    mean_abs_dev: float
    hamming_weight: float
    kurtosis: float
    skewness: float
    longest_streak: float
    low_ascii_freq: float
    med_ascii_freq: float
    high_ascii_freq: float
    shannon_entropy: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)],
                        dtype=np.float64)


@dataclass(frozen=True)
class CoMatrix:
    """Byte bigram counts (256x256) and their 2x2 average-pooled map."""

    counts: np.ndarray  # [256, 256] int64, sums to len(block) - 1
    pooled: np.ndarray  # [128, 128] float64


def _bytes_view(block: bytes) -> np.ndarray:
    arr = np.frombuffer(block, dtype=np.uint8)
    if arr.size == 0:
        raise ValueError("block is empty")
    return arr


def kolmogorov_proxy(block: bytes, compressor: str = "deflate") -> float:
    """Length reduction under a general-purpose compressor, in [-1, 1].

    ``1 - compressed/original``; negative when container overhead beats
    the achievable compression (tiny or incompressible blocks).
    """
    _bytes_view(block)
    if compressor == "deflate":
        compressed = zlib.compress(bytes(block))
    elif compressor == "bwt":
        compressed = bz2.compress(bytes(block))
    else:
        raise ValueError(f"unknown compressor {compressor!r}; use one of {COMPRESSORS}")
    ratio = 1.0 - len(compressed) / len(block)
    return float(min(1.0, max(-1.0, ratio)))


def arithmetic_mean(block: bytes) -> float:
    return float(_bytes_view(block).mean())


def geometric_mean(block: bytes) -> float:
    """Geometric mean of raw byte values; 0 when any byte is 0."""
    arr = _bytes_view(block)
    if (arr == 0).any():
        return 0.0
    return float(np.exp(np.log(arr.astype(np.float64)).mean()))


def harmonic_mean(block: bytes) -> float:
    """Harmonic mean of raw byte values; 0 when any byte is 0."""
    arr = _bytes_view(block)
    if (arr == 0).any():
        return 0.0
    return float(arr.size / (1.0 / arr.astype(np.float64)).sum())


def std_dev(block: bytes) -> float:
    return float(_bytes_view(block).astype(np.float64).std())


def mean_abs_dev(block: bytes) -> float:
    arr = _bytes_view(block).astype(np.float64)
    return float(np.abs(arr - arr.mean()).mean())


def hamming_weight(block: bytes) -> float:
    """Mean fraction of set bits, in [0, 1] regardless of block size."""
    return float(np.unpackbits(_bytes_view(block)).mean())


def _central_moments(arr: np.ndarray) -> tuple[float, float, float]:
    x = arr.astype(np.float64)
    d = x - x.mean()
    return float((d * d).mean()), float((d ** 3).mean()), float((d ** 4).mean())


def kurtosis(block: bytes) -> float:
    """Excess kurtosis with population moments; 0 for constant blocks."""
    m2, _, m4 = _central_moments(_bytes_view(block))
    if m2 == 0.0:
        return 0.0
    return m4 / (m2 * m2) - 3.0


def skewness(block: bytes) -> float:
    """Population third standardized moment; 0 for constant blocks."""
    m2, m3, _ = _central_moments(_bytes_view(block))
    if m2 == 0.0:
        return 0.0
    return m3 / m2 ** 1.5


def longest_streak(block: bytes) -> int:
    """Maximum run length of identical consecutive bytes."""
    arr = _bytes_view(block)
    if arr.size == 1:
        return 1
    boundaries = np.flatnonzero(arr[1:] != arr[:-1])
    edges = np.concatenate(([-1], boundaries, [arr.size - 1]))
    return int(np.diff(edges).max())


def ascii_freqs(block: bytes) -> tuple[float, float, float]:
    """Byte fractions in the low (0x00-0x1F), printable (0x20-0x7F) and
    high (0x80-0xFF) ranges; the three sum to 1."""
    arr = _bytes_view(block)
    counts = np.bincount(arr, minlength=256)
    n = arr.size
    return (float(counts[:0x20].sum() / n),
            float(counts[0x20:0x80].sum() / n),
            float(counts[0x80:].sum() / n))


def shannon_entropy(block: bytes) -> float:
    """Entropy of the empirical byte histogram in bits per byte, in [0, 8];
    absent byte values contribute nothing."""
    arr = _bytes_view(block)
    counts = np.bincount(arr, minlength=256)
    p = counts[counts > 0] / arr.size
    return float(-(p * np.log2(p)).sum()) + 0.0  # normalize -0.0


def global_features(block: bytes, compressor: str = "deflate") -> FeatureVector:
    """All 14 global statistics of a nonempty block."""
    low, med, high = ascii_freqs(block)
    return FeatureVector(
        kolmogorov_proxy=kolmogorov_proxy(block, compressor),
        arithmetic_mean=arithmetic_mean(block),
        geometric_mean=geometric_mean(block),
        harmonic_mean=harmonic_mean(block),
        std_dev=std_dev(block),
        mean_abs_dev=mean_abs_dev(block),
        hamming_weight=hamming_weight(block),
        kurtosis=kurtosis(block),
        skewness=skewness(block),
        longest_streak=float(longest_streak(block)),
        low_ascii_freq=low,
        med_ascii_freq=med,
        high_ascii_freq=high,
        shannon_entropy=shannon_entropy(block),
    )


def cooccurrence(block: bytes) -> CoMatrix:
    """Consecutive-pair counts and their 128x128 average-pooled map.

    ``counts[i, j]`` is how often byte value ``j`` follows value ``i``;
    ``pooled[a, b]`` is the mean of the 2x2 cell ``counts[2a:2a+2, 2b:2b+2]``.
    """
    arr = _bytes_view(block)
    if arr.size < 2:
        raise ValueError("co-occurrence needs at least 2 bytes")
    pair_ids = arr[:-1].astype(np.int64) * 256 + arr[1:]
    counts = np.bincount(pair_ids, minlength=65536).reshape(256, 256)
    pooled = counts.reshape(128, 2, 128, 2).mean(axis=(1, 3))
    return CoMatrix(counts=counts, pooled=pooled)


def feature_matrix(blocks: Sequence[bytes], compressor: str = "deflate") -> np.ndarray:
    """Stacked feature vectors, one row per block."""
    return np.stack([global_features(b, compressor).as_array() for b in blocks])


def write_feature_csv(path, blocks: Iterable[bytes], labels: Iterable[int],
                      compressor: str = "deflate") -> None:
    """Feature dump: block index and label columns, then the 14 features."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("block_index", "label") + FEATURE_NAMES)
        for i, (block, label) in enumerate(zip(blocks, labels)):
            vec = global_features(block, compressor).as_array()
            writer.writerow([i, int(label)] + [repr(float(v)) for v in vec])


def feature_timings(blocks: Sequence[bytes],
                    compressor: str = "deflate") -> list[tuple[str, float]]:
    """Mean extraction time in ms/block for each feature plus the bigram
    matrix, measured independently per feature."""
    single = {
        "kolmogorov_proxy": lambda b: kolmogorov_proxy(b, compressor),
        "arithmetic_mean": arithmetic_mean,
        "geometric_mean": geometric_mean,
        "harmonic_mean": harmonic_mean,
        "std_dev": std_dev,
        "mean_abs_dev": mean_abs_dev,
        "hamming_weight": hamming_weight,
        "kurtosis": kurtosis,
        "skewness": skewness,
        "longest_streak": longest_streak,
        "low_ascii_freq": lambda b: ascii_freqs(b)[0],
        "med_ascii_freq": lambda b: ascii_freqs(b)[1],
        "high_ascii_freq": lambda b: ascii_freqs(b)[2],
        "shannon_entropy": shannon_entropy,
        "bigram_matrix": cooccurrence,
    }
    out = []
    for name, fn in single.items():
        start = time.perf_counter()
        for block in blocks:
            fn(block)
        elapsed = time.perf_counter() - start
        out.append((name, elapsed * 1000.0 / max(1, len(blocks))))
    return out
