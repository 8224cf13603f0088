"""Synthetic binary images and the three noise models used for denoising.

Random numbers come from a fixed, documented stream so other
implementations can reproduce it bit for bit:

* generator: Philox4x64-10 with key ``(seed, stream)`` and counter starting at
  zero, emitting 64-bit words in order (``numpy.random.Philox(key=...)``'s raw
  output);
* uniform on [0, 1): ``(word >> 11) * 2**-53``;
* standard normal: Box-Muller cosine branch from two successive uniforms
  ``u1, u2``: ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``.

Pixels are visited row-major.  Flip noise uses one uniform per pixel,
Gaussian noise one normal (two uniforms), bimodal noise one uniform for the
component choice followed by one normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BIMODAL_DEFAULT = (
    ((0.08, 0.03, 0.5), (0.46, 0.03, 0.5)),
    ((0.55, 0.02, 0.5), (0.42, 0.10, 0.5)),
)

BASE_KINDS = ("halves", "stripes", "checker-blocks", "disk")


@dataclass(frozen=True)
class GridImage:
    height: int
    width: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float).reshape(self.height, self.width)
        object.__setattr__(self, "pixels", px)

    @property
    def flat(self) -> np.ndarray:
        return self.pixels.ravel()

    def is_binary(self) -> bool:
        return bool(np.all((self.pixels == 0) | (self.pixels == 1)))

    def labels(self) -> np.ndarray:
        if not self.is_binary():
            raise ValueError("image is not binary")
        return self.pixels.astype(np.intp)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "flip"
    prob: float = 0.2
    sigma: float = 0.3
    mixtures: tuple = BIMODAL_DEFAULT

    def __post_init__(self):
        if self.kind not in ("flip", "gaussian", "bimodal"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0 <= self.prob <= 1:
            raise ValueError("flip probability must lie in [0, 1]")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian sigma must be positive")
        if self.kind == "bimodal":
            _check_mixtures(self.mixtures)


def _check_mixtures(mixtures):
    if len(mixtures) != 2:
        raise ValueError("bimodal noise needs one mixture per class")
    for comps in mixtures:
        if not comps:
            raise ValueError("empty mixture")
        for mean, sd, weight in comps:
            if not sd > 0 or weight < 0 or not math.isfinite(mean):
                raise ValueError("mixture components need sd > 0 and weight >= 0")
        if abs(sum(c[2] for c in comps) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")


class Stream:
    """Uniform and normal variates from the documented Philox stream."""

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        self._bits = np.random.Philox(key=[int(seed), int(stream)])

    def uniform(self, n: int) -> np.ndarray:
        raw = self._bits.random_raw(int(n)).astype(np.uint64)
        return (raw >> np.uint64(11)).astype(float) * 2.0 ** -53

    def normal(self, n: int) -> np.ndarray:
        u = self.uniform(2 * n).reshape(n, 2)
        return np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])


def _binary(img: GridImage) -> np.ndarray:
    if not img.is_binary():
        raise ValueError("noise models expect a binary image")
    return img.pixels


def flip_noise(img: GridImage, prob: float, seed: int, stream: int = 0) -> GridImage:
    px = _binary(img)
    if not 0 <= prob <= 1:
        raise ValueError("flip probability must lie in [0, 1]")
    u = Stream(seed, stream).uniform(px.size).reshape(px.shape)
    return GridImage(img.height, img.width, np.where(u < prob, 1.0 - px, px))


def gaussian_noise(img: GridImage, sigma: float, seed: int, stream: int = 0) -> GridImage:
    """``label + N(0, sigma^2)``, left unclamped."""
    px = _binary(img)
    if not sigma > 0:
        raise ValueError("gaussian sigma must be positive")
    z = Stream(seed, stream).normal(px.size).reshape(px.shape)
    return GridImage(img.height, img.width, px + sigma * z)


def bimodal_noise(img: GridImage, mixtures=BIMODAL_DEFAULT, seed: int = 0,
                  stream: int = 0) -> GridImage:
    """Replace every pixel by a draw from its class's Gaussian mixture."""
    px = _binary(img).ravel().astype(np.intp)
    _check_mixtures(mixtures)
    rng = Stream(seed, stream)
    u = rng.uniform(3 * px.size).reshape(px.size, 3)
    pick = u[:, 0]
    z = np.sqrt(-2.0 * np.log1p(-u[:, 1])) * np.cos(2.0 * np.pi * u[:, 2])
    out = np.empty(px.size)
    for cls, comps in enumerate(mixtures):
        sel = px == cls
        edges = np.cumsum([c[2] for c in comps])
        comp = np.minimum(np.searchsorted(edges, pick[sel], side="right"), len(comps) - 1)
        means = np.array([c[0] for c in comps])[comp]
        sds = np.array([c[1] for c in comps])[comp]
        out[sel] = means + sds * z[sel]
    return GridImage(img.height, img.width, out.reshape(img.height, img.width))


def apply_noise(img: GridImage, spec: NoiseSpec, seed: int, stream: int = 0) -> GridImage:
    if spec.kind == "flip":
        return flip_noise(img, spec.prob, seed, stream)
    if spec.kind == "gaussian":
        return gaussian_noise(img, spec.sigma, seed, stream)
    return bimodal_noise(img, spec.mixtures, seed, stream)


def make_base_image(kind: str, height: int, width: int, period: int = 4) -> GridImage:
    """Deterministic binary patterns.

    ``halves``: left half 0, right half 1.  ``stripes``: vertical
    stripes, ``period // 2`` columns of 0 then of 1.  ``checker-blocks``: a
    4x4 block checkerboard.  ``disk``: 1 inside a centred disk whose radius is
    a third of the smaller side.
    """
    if height < 1 or width < 1:
        raise ValueError("image dimensions must be positive")
    r, c = np.mgrid[0:height, 0:width]
    if kind == "halves":
        px = c >= width // 2
    elif kind == "stripes":
        if period < 2 or period % 2:
            raise ValueError("stripe period must be an even number >= 2")
        px = (c % period) >= period // 2
    elif kind == "checker-blocks":
        px = ((r // 4) + (c // 4)) % 2 == 1
    elif kind == "disk":
        cy, cx = (height - 1) / 2, (width - 1) / 2
        rad = min(height, width) / 3
        px = (r - cy) ** 2 + (c - cx) ** 2 <= rad ** 2
    else:
        raise ValueError(f"unknown base image kind {kind!r}; choose from {BASE_KINDS}")
    return GridImage(height, width, px.astype(float))


@dataclass
class Dataset:
    truth: list = field(default_factory=list)
    observed: list = field(default_factory=list)

    def __len__(self):
        return len(self.truth)

    def labels(self) -> np.ndarray:
        return np.stack([t.labels().ravel() for t in self.truth])

    def observations(self) -> np.ndarray:
        return np.stack([o.flat for o in self.observed])


def make_dataset(base: GridImage, noise: NoiseSpec, count: int, seed: int,
                 first_stream: int = 0) -> Dataset:
    """``count`` noisy copies of ``base``; copy ``i`` uses stream ``first_stream + i``."""
    if count < 1:
        raise ValueError("dataset size must be at least 1")
    ds = Dataset()
    for i in range(count):
        ds.truth.append(base)
        ds.observed.append(apply_noise(base, noise, seed, first_stream + i))
    return ds


# --- text grid files -------------------------------------------------------------

def _fmt(x: float) -> str:
    x = float(x)
    # integers print without a decimal point; -0.0 keeps its sign via repr
    if x.is_integer() and abs(x) < 2 ** 53 and (x != 0 or math.copysign(1.0, x) > 0):
        return str(int(x))
    return repr(x)


def write_grid(path, img: GridImage) -> None:
    """``h w`` on the first line, then ``h`` rows of ``w`` values."""
    lines = [f"{img.height} {img.width}"]
    lines.extend(" ".join(_fmt(x) for x in row) for row in img.pixels)
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid(path) -> GridImage:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise ValueError(f"{path}: first line must be 'h w'")
    h, w = int(rows[0][0]), int(rows[0][1])
    if h < 1 or w < 1 or len(rows) - 1 != h or any(len(r) != w for r in rows[1:]):
        raise ValueError(f"{path}: expected {h} rows of {w} values")
    return GridImage(h, w, np.array([[float(x) for x in r] for r in rows[1:]]))
