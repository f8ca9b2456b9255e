"""Stein (James-Stein) block shrinkage of transform coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .core_model import (APPROX, BlockPartition, CoefficientSet, DenoiseConfig, FrameSpec,
                         build_partition, scale_bounds, theoretical_block_size)
from .errors import InvalidParameterError, LayoutError, MissingNoiseScaleError


@dataclass(frozen=True)
class ShrinkReport:
    blocks_total: int = 0
    blocks_killed: int = 0
    blocks_shrunk: int = 0
    # number of subbands passed through untouched (coarse scales and low-pass)
    blocks_kept_raw: int = 0
    tail_zeroed: int = 0


@lru_cache(maxsize=None)
def solve_lambda_star() -> float:
    """Root of x - ln(x) = 3 above 1 (about 4.50524)."""
    return brentq(lambda x: x - math.log(x) - 3.0, 3.0, 10.0, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def lambda_correlated(Q3: float, Q4: float) -> float:
    """Threshold for correlated Gaussian noise with fourth-moment bound Q3 and
    block-variance bound Q4: 4 (sqrt(2 Q4) + Q3^(1/4))^2."""
    if not (Q3 > 0 and Q4 > 0):
        raise InvalidParameterError(f"Q3 and Q4 must be positive, got {Q3}, {Q4}")
    return 4.0 * (math.sqrt(2.0 * Q4) + Q3 ** 0.25) ** 2


def shrink_block(values, sigma2: float, lam: float, two_pow_delta_j: float = 1.0) -> np.ndarray:
    """Shrink one block by max(0, 1 - lam * sigma2 * 2^(delta j) / mean(values^2))."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InvalidParameterError("empty block")
    if not sigma2 > 0:
        raise InvalidParameterError(f"sigma2 must be positive, got {sigma2}")
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    m = float(np.mean(values ** 2))
    if m == 0.0:
        return np.zeros_like(values)
    g = max(0.0, 1.0 - lam * sigma2 * two_pow_delta_j / m)
    return values * g


def shrink_subband(arr: np.ndarray, partition: BlockPartition, threshold: float):
    """Vectorised block shrinkage of a whole subband.

    ``threshold`` is lam * sigma^2 * 2^(delta j).  Returns the shrunk array and
    the per-block gains (shape ``partition.shape``).
    """
    sums = arr * arr
    for axis in range(arr.ndim):
        sums = np.add.reduceat(sums, partition.starts(axis), axis=axis)
    counts = np.ones((1,) * arr.ndim)
    for axis in range(arr.ndim):
        shape = [1] * arr.ndim
        shape[axis] = -1
        counts = counts * partition.lengths(axis).reshape(shape)
    mean = sums / counts
    ratio = np.divide(threshold, mean, out=np.full_like(mean, np.inf), where=mean > 0)
    gain = np.maximum(0.0, 1.0 - ratio)
    full = gain
    for axis in range(arr.ndim):
        full = np.repeat(full, partition.lengths(axis), axis=axis)
    return arr * full, gain


def config_for(spec: FrameSpec, n: int, noise_scale: Mapping, L: int | None = None,
               lam: float | None = None, block_energy: str = "mean") -> DenoiseConfig:
    """DenoiseConfig with the theoretical block size and threshold unless overridden."""
    if L is None:
        L = theoretical_block_size(n, spec.d, spec.r)
    if lam is None:
        lam = solve_lambda_star()
    j0, J_star = scale_bounds(spec, n, L)
    return DenoiseConfig(L=L, lam=lam, j0=j0, J_star=J_star, noise_scale=noise_scale,
                         block_energy=block_energy)


def blockjs_estimate(y: CoefficientSet, spec: FrameSpec, config: DenoiseConfig):
    """Block James-Stein estimate of ``y``.

    Scales below ``config.j0`` and the low-pass subband are copied, every
    detail subband with j0 <= j <= J* is shrunk block by block, and scales
    above J* are set to zero.  Returns ``(estimate, ShrinkReport)``.
    """
    if len(y) == 0:
        raise LayoutError("empty coefficient set")
    out = {}
    total = killed = shrunk = raw = tail = 0
    for (j, l), arr in y.items():
        if l == APPROX or j < config.j0:
            out[(j, l)] = arr
            raw += 1
        elif j > config.J_star:
            out[(j, l)] = np.zeros_like(arr)
            tail += arr.size
        else:
            try:
                s = config.noise_scale[(j, l)]
            except KeyError:
                raise MissingNoiseScaleError(f"no noise scale for subband {(j, l)}") from None
            partition = build_partition(arr.shape, config.L)
            threshold = config.lam * s * s * 2.0 ** (spec.delta * j)
            if config.block_energy == "side":
                threshold /= config.L ** (arr.ndim - 1)
            out[(j, l)], gain = shrink_subband(arr, partition, threshold)
            total += gain.size
            killed += int(np.count_nonzero(gain == 0.0))
            shrunk += int(np.count_nonzero((gain > 0.0) & (gain < 1.0)))
    report = ShrinkReport(blocks_total=total, blocks_killed=killed, blocks_shrunk=shrunk,
                          blocks_kept_raw=raw, tail_zeroed=tail)
    return CoefficientSet(out, kind="estimate"), report


def blockjs_1d(y, n: int, lam: float | None = None, L: int | None = None) -> np.ndarray:
    """One-dimensional BlockJS on a flat dyadic layout.

    ``y[0]`` is the scaling coefficient (kept), and ``y[2**j:2**(j+1)]`` holds
    scale j.  Noise variance is 1/n, L = max(1, floor(log2 n)) and scales
    above floor(log2 n) are zeroed.
    """
    y = np.asarray(y, dtype=float)
    N = y.size
    if y.ndim != 1 or N < 2 or N & (N - 1):
        raise LayoutError(f"length must be a power of two >= 2, got {N}")
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    lam = solve_lambda_star() if lam is None else lam
    J = int(math.floor(math.log2(n) + 1e-12))
    L = max(1, J) if L is None else L
    j0 = min(int(math.floor(math.log2(L) + 1e-12)), J)
    thresh = lam / n
    out = np.zeros_like(y)
    out[0] = y[0]
    for j in range(int(math.log2(N))):
        seg = y[2 ** j:2 ** (j + 1)]
        if j < j0:
            out[2 ** j:2 ** (j + 1)] = seg
            continue
        if j > J:
            continue
        nb = max(1, seg.size // L)
        cut = (nb - 1) * L
        head = seg[:cut].reshape(nb - 1, L) if cut else np.empty((0, L))
        last = seg[cut:]
        res = []
        for block in (*head, last):
            m = np.mean(block ** 2)
            res.append(block * (max(0.0, 1.0 - thresh / m) if m > 0 else 0.0))
        out[2 ** j:2 ** (j + 1)] = np.concatenate(res)
    return out


def term_threshold(y: CoefficientSet, k: float, noise_scale: Mapping, rule: str = "hard",
                   j0: int = 0, finest_k: float | None = None) -> CoefficientSet:
    """Hard-threshold each detail coefficient at k * noise_scale[(j, l)].

    Coefficients at scales below ``j0`` and the low-pass subband are kept.
    ``finest_k`` replaces ``k`` on every subband of the finest scale present.
    """
    if rule != "hard":
        raise InvalidParameterError(f"only the hard rule is supported, got {rule!r}")
    if not k > 0:
        raise InvalidParameterError(f"k must be positive, got {k}")
    detail = [j for j, l in y if l != APPROX]
    finest = max(detail) if detail else None
    out = {}
    for (j, l), arr in y.items():
        if l == APPROX or j < j0:
            out[(j, l)] = arr
            continue
        try:
            s = noise_scale[(j, l)]
        except KeyError:
            raise MissingNoiseScaleError(f"no noise scale for subband {(j, l)}") from None
        kk = finest_k if (finest_k is not None and j == finest) else k
        out[(j, l)] = np.where(np.abs(arr) > kk * s, arr, 0.0)
    return CoefficientSet(out, kind="estimate")


def coefficients_1d(y: Sequence[float]) -> CoefficientSet:
    """Split a flat dyadic 1D layout into a CoefficientSet (scaling coefficient at (0, 0))."""
    y = np.asarray(y, dtype=float)
    N = y.size
    if y.ndim != 1 or N < 2 or N & (N - 1):
        raise LayoutError(f"length must be a power of two >= 2, got {N}")
    bands = {(0, APPROX): y[:1]}
    for j in range(int(math.log2(N))):
        bands[(j, 1)] = y[2 ** j:2 ** (j + 1)]
    return CoefficientSet(bands)


def flatten_1d(c: CoefficientSet) -> np.ndarray:
    scales = sorted(j for j, l in c if l != APPROX)
    return np.concatenate([c[(0, APPROX)]] + [c[(j, 1)] for j in scales])
