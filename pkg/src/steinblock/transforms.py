"""2D periodic wavelet transforms (decimated and undecimated) with Symmlet-6.

Subband convention: ``(j, 0)`` is the low-pass band of the coarsest level, and
at decomposition level ``i`` (1 = finest) the detail bands are ``(J - i, l)``
with J = log2 of the smaller image side and

* ``l = 1``: high-pass along axis 1 (columns), low-pass along axis 0
* ``l = 2``: low-pass along axis 1, high-pass along axis 0
* ``l = 3``: high-pass along both axes (diagonal, "HH")

The decimated transform (``dwt2``) is orthonormal.  The undecimated one
(``udwt2``, a trous) scales the filters by 1/sqrt(2) at every level, which
makes it a Parseval tight frame whose inverse is its adjoint.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .core_model import APPROX, CoefficientSet
from .errors import InvalidParameterError, LayoutError

SYM6_SHA256 = "5854c58c101f8efb3a6ca1b66239970c9898916ccf77b6a49324cb076f9a3ef7"
KINDS = ("dwt2", "udwt2")


@lru_cache(maxsize=None)
def symmlet6() -> tuple[float, ...]:
    """Symmlet-6 low-pass filter (12 taps, unit norm, sum sqrt(2))."""
    raw = resources.files("steinblock").joinpath("data/sym6.txt").read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != SYM6_SHA256:
        raise RuntimeError(f"sym6.txt checksum mismatch: {digest}")
    return tuple(float(line) for line in raw.decode().split())


def quadrature_mirror(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    return ((-1.0) ** np.arange(h.size)) * h[::-1]


@dataclass(frozen=True)
class TransformHandle:
    kind: str
    levels: int
    filter: tuple[float, ...] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"transform kind must be one of {KINDS}, got {self.kind!r}")
        if self.levels < 1:
            raise InvalidParameterError(f"levels must be >= 1, got {self.levels}")
        if self.filter is None:
            object.__setattr__(self, "filter", symmlet6())
        norm = math.fsum(v * v for v in self.filter)
        if abs(norm - 1.0) > 1e-12:
            raise InvalidParameterError(f"filter must have unit norm, got {norm}")

    @property
    def lowpass(self) -> np.ndarray:
        return np.asarray(self.filter)

    @property
    def highpass(self) -> np.ndarray:
        return quadrature_mirror(self.filter)


def default_levels(shape) -> int:
    """5 levels for 512-pixel images, 4 for 256, scaled by log2 of the smaller side."""
    return max(1, int(math.log2(min(shape))) - 4)


# -- 1D periodic filtering along one axis ------------------------------------

def _slc(ndim, axis, sl):
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def _down(x, f, axis):
    """a[k] = sum_m f[m] x[(2k + m) mod N]"""
    out = 0.0
    for m, c in enumerate(f):
        out = out + c * np.roll(x, -m, axis=axis)[_slc(x.ndim, axis, slice(None, None, 2))]
    return out


def _up(a, f, axis):
    """Adjoint of _down."""
    shape = list(a.shape)
    shape[axis] *= 2
    z = np.zeros(shape)
    z[_slc(a.ndim, axis, slice(None, None, 2))] = a
    out = 0.0
    for m, c in enumerate(f):
        out = out + c * np.roll(z, m, axis=axis)
    return out


def _atrous(x, f, step, axis):
    """a[k] = sum_m f[m] x[(k + step m) mod N]"""
    out = 0.0
    for m, c in enumerate(f):
        out = out + c * np.roll(x, -step * m, axis=axis)
    return out


def _atrous_adj(a, f, step, axis):
    out = 0.0
    for m, c in enumerate(f):
        out = out + c * np.roll(a, step * m, axis=axis)
    return out


# -- layouts ------------------------------------------------------------------

def _check_image(img, t: TransformHandle) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise InvalidParameterError(f"expected a 2D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise InvalidParameterError("image contains non-finite values")
    H, W = img.shape
    if t.kind == "dwt2" and (H & (H - 1) or W & (W - 1)):
        raise InvalidParameterError(f"dwt2 needs power-of-two extents, got {img.shape}")
    if t.levels > int(math.floor(math.log2(min(H, W)))):
        raise InvalidParameterError(f"{t.levels} levels too deep for extent {img.shape}")
    return img


def layout_for(t: TransformHandle, shape) -> dict[tuple[int, int], tuple[int, int]]:
    H, W = shape
    J = int(math.floor(math.log2(min(H, W))))
    out = {}
    for i in range(1, t.levels + 1):
        ext = (H >> i, W >> i) if t.kind == "dwt2" else (H, W)
        for l in (1, 2, 3):
            out[(J - i, l)] = ext
    out[(J - t.levels, APPROX)] = (H >> t.levels, W >> t.levels) if t.kind == "dwt2" else (H, W)
    return out


def image_shape(c: CoefficientSet, t: TransformHandle) -> tuple[int, int]:
    """Recover the image extent from the finest detail subbands and check the layout."""
    details = [j for j, l in c if l != APPROX]
    if not details:
        raise LayoutError("no detail subbands")
    finest = c.layout.get((max(details), 3))
    if finest is None:
        raise LayoutError("finest diagonal subband missing")
    shape = (2 * finest[0], 2 * finest[1]) if t.kind == "dwt2" else tuple(finest)
    if c.layout != layout_for(t, shape):
        raise LayoutError(f"coefficient layout does not match a {t.kind} with {t.levels} levels")
    return shape


# -- transforms -------------------------------------------------------------

def forward(img, t: TransformHandle) -> CoefficientSet:
    img = _check_image(img, t)
    H, W = img.shape
    J = int(math.floor(math.log2(min(H, W))))
    h, g = t.lowpass, t.highpass
    bands = {}
    a = img
    for i in range(1, t.levels + 1):
        if t.kind == "dwt2":
            lo = _down(a, h, 0)
            hi = _down(a, g, 0)
            ll, l1 = _down(lo, h, 1), _down(lo, g, 1)
            l2, l3 = _down(hi, h, 1), _down(hi, g, 1)
        else:
            step = 2 ** (i - 1)
            hs, gs = h / math.sqrt(2), g / math.sqrt(2)
            lo = _atrous(a, hs, step, 0)
            hi = _atrous(a, gs, step, 0)
            ll, l1 = _atrous(lo, hs, step, 1), _atrous(lo, gs, step, 1)
            l2, l3 = _atrous(hi, hs, step, 1), _atrous(hi, gs, step, 1)
        bands[(J - i, 1)], bands[(J - i, 2)], bands[(J - i, 3)] = l1, l2, l3
        a = ll
    bands[(J - t.levels, APPROX)] = a
    return CoefficientSet(bands)


def inverse(c: CoefficientSet, t: TransformHandle) -> np.ndarray:
    H, W = image_shape(c, t)
    J = int(math.floor(math.log2(min(H, W))))
    h, g = t.lowpass, t.highpass
    a = np.asarray(c[(J - t.levels, APPROX)])
    for i in range(t.levels, 0, -1):
        l1, l2, l3 = (np.asarray(c[(J - i, l)]) for l in (1, 2, 3))
        if t.kind == "dwt2":
            lo = _up(a, h, 1) + _up(l1, g, 1)
            hi = _up(l2, h, 1) + _up(l3, g, 1)
            a = _up(lo, h, 0) + _up(hi, g, 0)
        else:
            step = 2 ** (i - 1)
            hs, gs = h / math.sqrt(2), g / math.sqrt(2)
            lo = _atrous_adj(a, hs, step, 1) + _atrous_adj(l1, gs, step, 1)
            hi = _atrous_adj(l2, hs, step, 1) + _atrous_adj(l3, gs, step, 1)
            a = _atrous_adj(lo, hs, step, 0) + _atrous_adj(hi, gs, step, 0)
    return a


# -- noise --------------------------------------------------------------------

def noise_scales(t: TransformHandle, shape) -> dict[tuple[int, int], float]:
    """Exact per-subband noise std for unit-variance white noise.

    Every row of the orthonormal transform has unit norm; the undecimated rows
    are the same atoms scaled by 2^(-i) at level i.
    """
    H, W = shape
    J = int(math.floor(math.log2(min(H, W))))
    out = {}
    for (j, l) in layout_for(t, shape):
        level = t.levels if l == APPROX else J - j
        out[(j, l)] = 1.0 if t.kind == "dwt2" else 2.0 ** (-level)
    return out


def calibrate_noise(t: TransformHandle, extent, sigma: float, seed: int = 0,
                    reps: int = 4) -> dict[tuple[int, int], float]:
    """Monte Carlo per-subband std of transformed white noise of std ``sigma``.

    Returns zeros for ``sigma == 0``; callers must reject that case.
    """
    if reps < 1:
        raise InvalidParameterError(f"reps must be >= 1, got {reps}")
    rng = np.random.default_rng(seed)
    acc: dict = {}
    count: dict = {}
    for _ in range(reps):
        noise = sigma * rng.standard_normal(tuple(extent))
        for key, arr in forward(noise, t).items():
            acc[key] = acc.get(key, 0.0) + float(np.sum(arr * arr))
            count[key] = count.get(key, 0) + arr.size
    return {key: math.sqrt(acc[key] / count[key]) for key in acc}


def estimate_sigma_mad(c: CoefficientSet) -> float:
    """median(|HH1|) / 0.6745 on the finest diagonal subband."""
    diag = [j for j, l in c if l == 3]
    if not diag:
        raise LayoutError("no diagonal (l=3) subband to estimate noise from")
    hh = np.abs(c[(max(diag), 3)])
    if hh.size == 0:
        raise LayoutError("finest diagonal subband is empty")
    return float(np.median(hh) / 0.6745)
