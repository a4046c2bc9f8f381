"""Grey-level quantisation and segmentation with 1-D Gaussian mixtures.

Pixel intensities are dejittered with Uniform(-0.5, 0.5) noise before EM:
8-bit data are discrete and a component sitting on a single grey level
would otherwise have zero variance. A side effect worth knowing: the
differential entropy of the jittered intensities equals the discrete
entropy of the histogram, so the mixture entropy is directly comparable to
the empirical one.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .entropy import entropy_gmm
from .mixture import CovarianceFamily, FitConfig, MixtureModel, fit_em

log = logging.getLogger(__name__)

K1_SSIM, K2_SSIM = 0.01, 0.03
SSIM_WINDOW = 8


class PGMError(ValueError):
    pass


class UnsupportedFormat(PGMError):
    pass


class TooFewLevels(ValueError):
    """More components requested than distinct grey levels in the image."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("image must be a non-empty 2-D array")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or np.any(px != np.round(px)):
                raise ValueError("intensities must be integers in [0, 255]")
            px = px.astype(np.uint8)
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if not m:
            raise PGMError("malformed PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def read_pgm(data: bytes) -> GrayImage:
    """Parse a binary (P5) or ASCII (P2) PGM with maxval <= 255."""
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise UnsupportedFormat(f"unsupported image format {magic!r}; expected P5 or P2")
    tokens, pos = _header_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PGMError("malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise PGMError("PGM dimensions must be positive")
    if not 0 < maxval <= 255:
        raise PGMError(f"maxval {maxval} not supported (must be 1..255)")
    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates header and raster
        raster = data[pos + 1 : pos + 1 + count]
        if len(raster) < count:
            raise PGMError(f"truncated PGM payload: {len(raster)} of {count} bytes")
        px = np.frombuffer(raster, dtype=np.uint8)
    else:
        values = data[pos:].split()
        if len(values) < count:
            raise PGMError(f"truncated PGM payload: {len(values)} of {count} values")
        try:
            px = np.array([int(v) for v in values[:count]])
        except ValueError as exc:
            raise PGMError("non-integer value in PGM raster") from exc
    if px.max(initial=0) > maxval or px.min(initial=0) < 0:
        raise PGMError("pixel value exceeds maxval")
    return GrayImage(px.reshape(height, width).astype(np.uint8))


def write_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def empirical_entropy(img: GrayImage) -> float:
    """Shannon entropy (nats) of the 256-bin grey-level histogram."""
    counts = np.bincount(img.pixels.ravel(), minlength=256)
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def _box_sum(a: np.ndarray, w: int) -> np.ndarray:
    c = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    c[1:, 1:] = np.cumsum(np.cumsum(a, axis=0), axis=1)
    return c[w:, w:] - c[:-w, w:] - c[w:, :-w] + c[:-w, :-w]


def ssim(a: GrayImage, b: GrayImage, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all ``window x window`` windows (stride 1, uniform weights).

    Local statistics use population (1/N) moments. C1 = (0.01 * 255)^2 and
    C2 = (0.03 * 255)^2.
    """
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    if min(a.pixels.shape) < window:
        raise ValueError(f"images must be at least {window}x{window}")
    x = a.pixels.astype(float)
    y = b.pixels.astype(float)
    npx = float(window * window)
    mx = _box_sum(x, window) / npx
    my = _box_sum(y, window) / npx
    sxx = _box_sum(x * x, window) / npx - mx * mx
    syy = _box_sum(y * y, window) / npx - my * my
    sxy = _box_sum(x * y, window) / npx - mx * my
    c1 = (K1_SSIM * 255) ** 2
    c2 = (K2_SSIM * 255) ** 2
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def compression_stats(original: GrayImage, k: int) -> tuple[float, float]:
    """Size of the palette-encoded segmentation (kilobits) and compression rate.

    Each pixel stores ``ceil(log2 K)`` bits of label, plus a K-entry 8-bit
    palette. The original costs 8 bits per pixel.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    npx = original.width * original.height
    bits = npx * math.ceil(math.log2(k)) + 8 * k
    return bits / 1024.0, (npx * 8) / bits


@dataclass
class SegmentationResult:
    k: int
    labels: np.ndarray
    component_means: np.ndarray
    segmented: GrayImage
    gmm_entropy: float
    empirical_entropy: float
    ssim_vs_original: float
    size_kb: float
    compression_rate: float
    model: MixtureModel

    def report(self) -> dict:
        return {
            "k": self.k,
            "component_means": self.component_means.tolist(),
            "palette": sorted(set(int(v) for v in np.unique(self.segmented.pixels))),
            "gmm_entropy": self.gmm_entropy,
            "empirical_entropy": self.empirical_entropy,
            "ssim": self.ssim_vs_original,
            "size_kb": self.size_kb,
            "compression_rate": self.compression_rate,
        }


def image_fit_config(config: FitConfig | None) -> FitConfig:
    return config or FitConfig(n_init=1)


def quantize(img: GrayImage, k: int, config: FitConfig | None = None) -> SegmentationResult:
    """Fit a K-component unequal-variance mixture to the grey levels and segment.

    Each pixel gets the label of its most probable component and is
    replaced by that component's rounded mean.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    config = image_fit_config(config)
    levels = np.unique(img.pixels)
    if k > levels.size:
        raise TooFewLevels(f"K={k} exceeds the {levels.size} distinct grey levels")
    values = img.pixels.ravel().astype(float)
    jitter = make_rng(config.seed, "jitter").uniform(-0.5, 0.5, size=values.size)
    data = (values + jitter)[:, None]
    model = fit_em(data, k, CovarianceFamily.FULL_VARYING, config)
    # label per grey level, then broadcast: identical levels share a label
    level_labels = np.argmax(model.component_log_prob(levels[:, None].astype(float)), axis=1)
    lut = np.zeros(256, dtype=int)
    lut[levels] = level_labels
    labels = lut[img.pixels]
    means = model.means[:, 0]
    palette = np.clip(np.rint(means), 0, 255).astype(np.uint8)
    segmented = GrayImage(palette[labels])
    size_kb, cr = compression_stats(img, k)
    return SegmentationResult(
        k=k,
        labels=labels,
        component_means=means,
        segmented=segmented,
        gmm_entropy=entropy_gmm(data, model).value,
        empirical_entropy=empirical_entropy(img),
        ssim_vs_original=ssim(img, segmented) if min(img.pixels.shape) >= SSIM_WINDOW else float("nan"),
        size_kb=size_kb,
        compression_rate=cr,
        model=model,
    )


def find_minima(values) -> tuple[int | None, int | None]:
    """Indices of the first local minimum and the global minimum.

    NaN entries are gaps and are skipped. An interior point is a local
    minimum when it is strictly below both valid neighbours; if there is no
    such point the global minimum is returned for both.
    """
    v = np.asarray(values, dtype=float)
    valid = np.flatnonzero(np.isfinite(v))
    if valid.size == 0:
        return None, None
    glob = int(valid[np.argmin(v[valid])])
    for a, b, c in zip(valid, valid[1:], valid[2:]):
        if v[b] < v[a] and v[b] < v[c]:
            return int(b), glob
    return glob, glob


@dataclass
class EntropyCurve:
    ks: list[int]
    entropies: list[float]
    empirical_entropy: float
    first_local_min: int | None
    global_min: int | None
    errors: dict[int, str]

    def to_dict(self) -> dict:
        return {
            "k": self.ks,
            "gmm_entropy": [None if math.isnan(e) else e for e in self.entropies],
            "empirical_entropy": self.empirical_entropy,
            "first_local_min_k": self.first_local_min,
            "global_min_k": self.global_min,
            "gaps": {str(k): v for k, v in self.errors.items()},
        }


def entropy_curve(img: GrayImage, k_max: int, config: FitConfig | None = None) -> EntropyCurve:
    """Mixture entropy for K = 1..k_max, with the first local and global minima (as K)."""
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    ks = list(range(1, k_max + 1))
    ents, errors = [], {}
    emp = empirical_entropy(img)
    for k in ks:
        try:
            ents.append(quantize(img, k, config).gmm_entropy)
        except Exception as exc:
            log.info("K=%d skipped: %s", k, exc)
            errors[k] = f"{type(exc).__name__}: {exc}"
            ents.append(float("nan"))
    finite = [e for e in ents if not math.isnan(e)]
    if finite and min(finite) < emp - 0.5:
        log.warning("entropy curve dips more than 0.5 nats below the empirical entropy")
    first, glob = find_minima(ents)
    return EntropyCurve(
        ks=ks,
        entropies=ents,
        empirical_entropy=emp,
        first_local_min=None if first is None else ks[first],
        global_min=None if glob is None else ks[glob],
        errors=errors,
    )
