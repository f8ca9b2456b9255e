"""Image denoising pipeline, PSNR and the parameter-sweep experiments."""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import transforms as tr
from .core_model import APPROX, CoefficientSet, FrameSpec, wavelet_2d
from .errors import InvalidParameterError
from .shrinkage import blockjs_estimate, config_for, term_threshold

DEFAULT_BLOCK_SIZES = (1, 2, 4, 8, 16)
DEFAULT_LAMBDAS = (2.0, 3.0, 4.0, 4.5, 5.0, 6.0)
DEFAULT_SIGMAS = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)

# Block energy normalisation used for images.  "side" divides a full L x L
# block's energy by L; with it, lambda = 4.505 and L = 4 are where the output
# PSNR peaks on natural images.  "mean" (divide by L^2) is the textbook rule.
IMAGE_BLOCK_ENERGY = "side"


def thread_count(default: int | None = None) -> int:
    """Worker cap from STEINBLOCK_THREADS (falls back to the CPU count)."""
    env = os.environ.get("STEINBLOCK_THREADS")
    if env:
        return max(1, int(env))
    return default or os.cpu_count() or 1


def add_noise(img, sigma: float, seed: int) -> np.ndarray:
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    img = np.asarray(img, dtype=float)
    rng = np.random.default_rng(seed)
    return img + sigma * rng.standard_normal(img.shape)


def psnr(reference, estimate) -> float:
    """20 log10(n ||f||_inf / ||f_hat - f||_2) with n = sqrt(pixel count).

    Returns ``inf`` when the estimate equals the reference exactly.
    """
    f = np.asarray(reference, dtype=float)
    g = np.asarray(estimate, dtype=float)
    if f.shape != g.shape:
        raise InvalidParameterError(f"extent mismatch: {f.shape} vs {g.shape}")
    peak = np.max(np.abs(f))
    if peak == 0:
        raise InvalidParameterError("reference image is identically zero")
    err = np.sqrt(np.sum((g - f) ** 2))
    if err == 0:
        return math.inf
    return 20.0 * math.log10(math.sqrt(f.size) * peak / err)


@dataclass
class RunRecord:
    image: str
    transform: str
    L: int
    lam: float
    sigma: float
    seed: int | None
    psnr_out: float
    wall_time: float = field(default=0.0, compare=False)

    @property
    def is_exact(self) -> bool:
        return math.isinf(self.psnr_out)


def grid_size(shape) -> int:
    return int(round(math.sqrt(shape[0] * shape[1])))


def unit_noise_scales(t: tr.TransformHandle, shape, method: str = "exact", seed: int = 0,
                      reps: int = 8) -> dict:
    """Per-subband noise std for unit pixel noise, exact or Monte Carlo."""
    if method == "exact":
        return tr.noise_scales(t, shape)
    if method == "monte-carlo":
        return tr.calibrate_noise(t, shape, 1.0, seed=seed, reps=reps)
    raise InvalidParameterError(f"unknown noise calibration {method!r}")


def estimate_pixel_sigma(c: CoefficientSet, t: tr.TransformHandle, shape) -> float:
    """MAD estimate of the pixel-domain noise std from the finest diagonal subband."""
    finest = max(j for j, l in c if l == 3)
    return tr.estimate_sigma_mad(c) / tr.noise_scales(t, shape)[(finest, 3)]


def denoise_coefficients(c: CoefficientSet, spec: FrameSpec, n: int, sigma: float,
                         unit_scales: dict, L: int | None = None, lam: float | None = None,
                         block_energy: str = IMAGE_BLOCK_ENERGY):
    """Block shrinkage with noise std ``sigma * unit_scales[key]`` per subband.

    Returns ``((estimate, report), config)``.
    """
    scales = {key: sigma * s for key, s in unit_scales.items() if key[1] != APPROX}
    config = config_for(spec, n, scales, L=L, lam=lam, block_energy=block_energy)
    return blockjs_estimate(c, spec, config), config


def denoise_image(img, t: tr.TransformHandle, spec: FrameSpec | None = None, L: int | None = None,
                  lam: float | None = None, sigma: float | None = None, reference=None,
                  image_id: str = "image", seed: int | None = None, noise: str = "exact",
                  block_energy: str = IMAGE_BLOCK_ENERGY):
    """forward -> block shrinkage -> inverse.

    L and lambda default to the theoretical values, sigma to the MAD estimate.
    ``reference`` (the clean image) is only used to fill ``psnr_out``.
    Returns ``(estimate, RunRecord)``.
    """
    start = time.perf_counter()
    spec = spec or wavelet_2d()
    img = np.asarray(img, dtype=float)
    c = tr.forward(img, t)
    if sigma is None:
        sigma = estimate_pixel_sigma(c, t, img.shape)
        # round-off in the detail bands of a noiseless image is not noise
        if sigma <= 1e-9 * max(1.0, float(np.abs(img).max())):
            sigma = 0.0
    if not sigma > 0:
        raise InvalidParameterError(f"degenerate noise level sigma={sigma}")
    unit = unit_noise_scales(t, img.shape, noise)
    (est, _), config = denoise_coefficients(c, spec, grid_size(img.shape), sigma, unit, L, lam,
                                            block_energy)
    out = tr.inverse(est, t)
    score = psnr(reference, out) if reference is not None else math.nan
    record = RunRecord(image=image_id, transform=t.kind, L=config.L, lam=config.lam, sigma=sigma,
                       seed=seed, psnr_out=score, wall_time=time.perf_counter() - start)
    return out, record


def term_denoise_image(img, t: tr.TransformHandle, sigma: float, k: float = 3.0,
                       finest_k: float | None = None) -> np.ndarray:
    """Hard term-by-term thresholding at k sigma (``finest_k`` on the finest scale)."""
    img = np.asarray(img, dtype=float)
    c = tr.forward(img, t)
    scales = {key: sigma * s for key, s in tr.noise_scales(t, img.shape).items()}
    return tr.inverse(term_threshold(c, k, scales, finest_k=finest_k), t)


def term_rule(kind: str) -> dict:
    """3 sigma everywhere for the DWT; redundant transforms use 4 sigma at the finest scale."""
    return {"k": 3.0, "finest_k": None if kind == "dwt2" else 4.0}


# -- CSV ---------------------------------------------------------------------

def fmt(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.9g}"
    return "" if value is None else str(value)


def write_csv(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


# -- sweeps ------------------------------------------------------------------

@dataclass(frozen=True)
class SweepGrid:
    sigmas: tuple[float, ...] = DEFAULT_SIGMAS
    block_sizes: tuple[int, ...] = DEFAULT_BLOCK_SIZES
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    seeds: tuple[int, ...] = tuple(range(10))
    transforms: tuple[str, ...] = ("dwt2",)
    levels: int | None = None
    block_energy: str = IMAGE_BLOCK_ENERGY

    def __post_init__(self):
        for name in ("sigmas", "block_sizes", "lambdas", "seeds", "transforms"):
            value = tuple(getattr(self, name))
            if not value:
                raise InvalidParameterError(f"SweepGrid.{name} must be non-empty")
            object.__setattr__(self, name, value)
        if any(not s > 0 for s in self.sigmas):
            raise InvalidParameterError("sigmas must be positive")
        if any(L < 1 for L in self.block_sizes) or any(not v > 0 for v in self.lambdas):
            raise InvalidParameterError("block sizes and lambdas must be positive")
        bad = set(self.transforms) - set(tr.KINDS)
        if bad:
            raise InvalidParameterError(f"image sweeps support {tr.KINDS}, got {sorted(bad)}")

    def __len__(self):
        return (len(self.sigmas) * len(self.block_sizes) * len(self.lambdas)
                * len(self.seeds) * len(self.transforms))


SWEEP_HEADER = ("image", "transform", "sigma", "L", "lambda", "seed", "psnr_out")


def _sweep_group(img, kind, levels, sigma, seed, grid, spec, image_id):
    t = tr.TransformHandle(kind, levels)
    n = grid_size(img.shape)
    unit = tr.noise_scales(t, img.shape)
    c = tr.forward(add_noise(img, sigma, seed), t)
    out = []
    for L in grid.block_sizes:
        for lam in grid.lambdas:
            start = time.perf_counter()
            (est, _), _ = denoise_coefficients(c, spec, n, sigma, unit, L=L, lam=lam,
                                               block_energy=grid.block_energy)
            score = psnr(img, tr.inverse(est, t))
            out.append(RunRecord(image_id, kind, L, lam, sigma, seed, score,
                                 time.perf_counter() - start))
    return out


def sweep_records(img, grid: SweepGrid, spec: FrameSpec | None = None, image_id: str = "image",
                  threads: int | None = None) -> list[RunRecord]:
    img = np.asarray(img, dtype=float)
    spec = spec or wavelet_2d()
    levels = grid.levels or tr.default_levels(img.shape)
    jobs = [(kind, sigma, seed) for kind in grid.transforms for sigma in grid.sigmas
            for seed in grid.seeds]
    with ThreadPoolExecutor(max_workers=threads or thread_count()) as pool:
        results = pool.map(lambda job: _sweep_group(img, job[0], levels, job[1], job[2], grid,
                                                    spec, image_id), jobs)
        records = [r for group in results for r in group]
    records.sort(key=lambda r: (r.transform, r.sigma, r.L, r.lam, r.seed))
    return records


def aggregate(records: Sequence[RunRecord]) -> list[tuple]:
    """Mean PSNR over seeds per (image, transform, sigma, L, lambda)."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.image, r.transform, r.sigma, r.L, r.lam), []).append(r.psnr_out)
    return [(*key, float(np.mean(v)), len(v)) for key, v in sorted(groups.items())]


def run_sweep(img, grid: SweepGrid, out_path, spec: FrameSpec | None = None,
              image_id: str = "image", threads: int | None = None, timing: bool = False):
    """PSNR for every (transform, sigma, L, lambda, seed) cell.

    Writes one row per cell to ``out_path`` and the seed average to
    ``<stem>_mean.csv`` next to it.  Rows are in canonical order so output does
    not depend on scheduling; wall times are only written with ``timing``.
    """
    records = sweep_records(img, grid, spec, image_id, threads)
    header = SWEEP_HEADER + (("wall_time",) if timing else ())
    rows = [(r.image, r.transform, r.sigma, r.L, r.lam, r.seed, r.psnr_out)
            + ((r.wall_time,) if timing else ()) for r in records]
    out_path = Path(out_path)
    write_csv(out_path, header, rows)
    mean_path = out_path.with_name(out_path.stem + "_mean" + (out_path.suffix or ".csv"))
    write_csv(mean_path, ("image", "transform", "sigma", "L", "lambda", "psnr_mean", "count"),
              aggregate(records))
    return records, out_path, mean_path


COMPARE_HEADER = ("image", "transform", "method", "sigma", "psnr_mean", "improvement_db")


def block_vs_term_rows(img, sigmas, seeds, levels: int | None = None, image_id: str = "image",
                       transforms: Sequence[str] = tr.KINDS, threads: int | None = None,
                       block_energy: str = IMAGE_BLOCK_ENERGY):
    """Mean PSNR per (transform, method, sigma) and its gain over DWT term-by-term."""
    img = np.asarray(img, dtype=float)
    levels = levels or tr.default_levels(img.shape)
    spec = wavelet_2d()
    n = grid_size(img.shape)

    def cell(job):
        kind, sigma, seed = job
        t = tr.TransformHandle(kind, levels)
        unit = tr.noise_scales(t, img.shape)
        c = tr.forward(add_noise(img, sigma, seed), t)
        (est, _), _ = denoise_coefficients(c, spec, n, sigma, unit, block_energy=block_energy)
        scales = {key: sigma * s for key, s in unit.items()}
        term = term_threshold(c, noise_scale=scales, **term_rule(kind))
        return job, psnr(img, tr.inverse(est, t)), psnr(img, tr.inverse(term, t))

    kinds = list(dict.fromkeys(("dwt2", *transforms)))
    jobs = [(k, s, seed) for k in kinds for s in sigmas for seed in seeds]
    with ThreadPoolExecutor(max_workers=threads or thread_count()) as pool:
        results = list(pool.map(cell, jobs))
    means: dict = {}
    for (kind, sigma, _), block, term in results:
        means.setdefault((kind, "block", sigma), []).append(block)
        means.setdefault((kind, "term", sigma), []).append(term)
    means = {key: float(np.mean(v)) for key, v in means.items()}
    rows = []
    for kind in transforms:
        for method in ("block", "term"):
            for sigma in sigmas:
                m = means[(kind, method, sigma)]
                rows.append((image_id, kind, method, sigma, m, m - means[("dwt2", "term", sigma)]))
    return rows


def run_block_vs_term(img, sigmas, seeds, out_path, levels: int | None = None,
                      image_id: str = "image", threads: int | None = None,
                      block_energy: str = IMAGE_BLOCK_ENERGY):
    """Block vs hard term-by-term thresholding for DWT and UDWT; writes the CSV."""
    rows = block_vs_term_rows(img, sigmas, seeds, levels, image_id, threads=threads,
                              block_energy=block_energy)
    return rows, write_csv(out_path, COMPARE_HEADER, rows)

