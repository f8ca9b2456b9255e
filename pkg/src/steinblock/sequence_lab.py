"""Numerical checks of the block shrinkage oracle inequalities and minimax rates.

Randomness is reproducible per (seed, index): every replication draws from
its own ``SeedSequence(seed, spawn_key=index)`` substream, so results do not
depend on the order in which replications run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core_model import CoefficientSet, FrameSpec
from .denoise import write_csv
from .errors import InvalidParameterError
from .shrinkage import blockjs_estimate, config_for


def substream(seed: int, *index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(index)))


# -- deterministic oracle inequality -----------------------------------------

@dataclass(frozen=True)
class OracleInstance:
    v: np.ndarray
    w: np.ndarray
    lam: float
    gamma: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if v.shape != w.shape or v.ndim != 1:
            raise InvalidParameterError(f"v and w must be vectors of equal length, got {v.shape}, {w.shape}")
        if not self.lam > 0:
            raise InvalidParameterError(f"lambda must be positive, got {self.lam}")
        if self.gamma is not None and not self.gamma > 1:
            raise InvalidParameterError(f"gamma must exceed 1, got {self.gamma}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    @property
    def m(self) -> int:
        return self.v.size


def _mal_terms(v, w, lam):
    """Row-wise lhs/rhs of the deterministic inequality for batches (k, m)."""
    u = v + w
    su = np.sum(u * u, axis=-1, keepdims=True)
    lam2 = np.asarray(lam, dtype=float).reshape(-1, 1) ** 2
    factor = np.where(su > 0, np.maximum(0.0, 1.0 - np.divide(lam2, su, out=np.zeros_like(su),
                                                              where=su > 0)), 0.0)
    lhs = np.sum((u * factor - v) ** 2, axis=-1)
    sw = np.sum(w * w, axis=-1)
    lam1 = lam2[:, 0]
    rhs = 10.0 * sw * (np.sqrt(sw) > np.sqrt(lam1) / 2) + 10.0 * np.minimum(np.sum(v * v, axis=-1), lam1 / 4)
    return lhs, rhs


def check_lemma_mal(inst: OracleInstance) -> tuple[float, float, bool]:
    """lhs = sum (u~ - v)^2 and its bound 10 sum w^2 1{|w| > lam/2} + 10 min(|v|^2, lam^2/4).

    u = v + w and u~ = u (1 - lam^2 / |u|^2)_+ (zero when u = 0).
    """
    lhs, rhs = _mal_terms(inst.v[None, :], inst.w[None, :], [inst.lam])
    lhs, rhs = float(lhs[0]), float(rhs[0])
    return lhs, rhs, lhs <= rhs + 1e-12 * (1 + rhs)


@dataclass
class FuzzResult:
    count: int
    violations: int
    worst_ratio: float
    worst: OracleInstance | None = None


def fuzz_lemma_mal(count: int = 100_000, seed: int = 0, m_max: int = 64, span: float = 10.0,
                   lam_max: float = 20.0, batch: int = 5000) -> FuzzResult:
    """Check the deterministic inequality on ``count`` random instances.

    Components are uniform in [-span, span] and lambda in (0, lam_max]; a tenth
    of the instances each get v = 0, w = 0, or a noise vector scaled down to
    sit near the lam/2 indicator boundary.
    """
    violations, worst_ratio, worst = 0, 0.0, None
    for b, start in enumerate(range(0, count, batch)):
        rng = substream(seed, b)
        k = min(batch, count - start)
        m = int(rng.integers(1, m_max + 1))
        v = rng.uniform(-span, span, (k, m))
        w = rng.uniform(-span, span, (k, m))
        lam = lam_max * (1.0 - rng.random(k))
        mode = rng.integers(0, 10, k)
        v[mode == 0] = 0.0
        w[mode == 1] = 0.0
        near = mode == 2
        wn = np.linalg.norm(w[near], axis=1, keepdims=True)
        w[near] *= (lam[near, None] / 2) * rng.uniform(0.9, 1.1, (near.sum(), 1)) / np.where(wn > 0, wn, 1)
        lhs, rhs = _mal_terms(v, w, lam)
        bad = lhs > rhs + 1e-12 * (1 + rhs)
        violations += int(bad.sum())
        ratio = np.divide(lhs, rhs, out=np.where(lhs > 0, np.inf, 0.0), where=rhs > 0)
        i = int(np.argmax(ratio))
        if ratio[i] > worst_ratio:
            worst_ratio = float(ratio[i])
            worst = OracleInstance(v[i], w[i], float(lam[i]))
    return FuzzResult(count, violations, worst_ratio, worst)


# -- expected risk bound -------------------------------------------------------

@dataclass(frozen=True)
class BpResult:
    estimate: float
    ci_halfwidth: float
    bound: float
    holds: bool


def lemma_bp_bound(m: int, gamma: float, sigma: float, v) -> float:
    v = np.asarray(v, dtype=float)
    tail = (2 * sigma ** 2 / math.sqrt(math.pi) / (gamma - 1) / math.sqrt(m)
            * math.exp(-(m / 2) * (gamma - math.log(gamma) - 1)))
    return tail + gamma * min(float(np.sum(v * v)), sigma ** 2 * m)


def check_lemma_bp(m: int, gamma: float, sigma: float, v, trials: int = 100_000,
                   seed: int = 0) -> BpResult:
    """Monte Carlo risk of u (1 - gamma m sigma^2 / |u|^2)_+ with u = v + sigma w.

    ``ci_halfwidth`` is the 95% normal half-width; the bound holds when
    estimate - 3 * ci_halfwidth <= bound.
    """
    if trials < 10_000:
        raise InvalidParameterError(f"need at least 10^4 trials, got {trials}")
    if not gamma > 1:
        raise InvalidParameterError(f"gamma must exceed 1, got {gamma}")
    if sigma == 0:
        raise InvalidParameterError("sigma must be nonzero")
    v = np.broadcast_to(np.asarray(v, dtype=float), (m,))
    rng = substream(seed, m)
    losses = np.empty(trials)
    chunk = max(1, 2_000_000 // m)
    for start in range(0, trials, chunk):
        k = min(chunk, trials - start)
        u = v + sigma * rng.standard_normal((k, m))
        su = np.sum(u * u, axis=1, keepdims=True)
        g = np.maximum(0.0, 1.0 - np.divide(gamma * m * sigma ** 2, su,
                                            out=np.full_like(su, np.inf), where=su > 0))
        losses[start:start + k] = np.sum((u * g - v) ** 2, axis=1)
    est = float(losses.mean())
    half = 1.96 * float(losses.std(ddof=1)) / math.sqrt(trials)
    bound = lemma_bp_bound(m, gamma, sigma, v)
    return BpResult(est, half, bound, est - 3 * half <= bound)


BP_GRID_M = (1, 8, 32)
BP_GRID_GAMMA = (1.5, 2.5, 4.505241495792884)
BP_GRID_SIGNAL = (0.0, 1.0, 10.0)


def bp_grid(trials: int = 100_000, seed: int = 0, sigma: float = 1.0):
    """27 settings: m x gamma x |v| (|v| = ratio * sigma * sqrt(m), spread evenly)."""
    out = []
    for i, m in enumerate(BP_GRID_M):
        for g in BP_GRID_GAMMA:
            for ratio in BP_GRID_SIGNAL:
                v = np.full(m, ratio * sigma)
                out.append(((m, g, ratio), check_lemma_bp(m, g, sigma, v, trials, seed + i)))
    return out


# -- smoothness balls and rates ----------------------------------------------

@dataclass(frozen=True)
class SmoothnessBall:
    s: float
    p: float
    q: float
    M: float
    spec: FrameSpec

    def __post_init__(self):
        if not self.s > 0 or not self.p > 0 or not self.q > 0 or self.M < 0:
            raise InvalidParameterError("need s, p, q > 0 and M >= 0")


def ball_norm(theta: CoefficientSet, ball: SmoothnessBall) -> float:
    """(sum_j sum_l (2^{j(s + d*/2 - d*/p)} |theta_jl|_p)^q)^(1/q), max forms for infinite p, q."""
    ds = ball.spec.d_star
    terms = []
    for (j, _), arr in theta.items():
        a = np.abs(arr).ravel()
        if math.isinf(ball.p):
            lp, expo = float(a.max()), ball.s + ds / 2
        else:
            lp, expo = float(np.sum(a ** ball.p) ** (1 / ball.p)), ball.s + ds / 2 - ds / ball.p
        terms.append(2.0 ** (j * expo) * lp)
    terms = np.asarray(terms)
    if math.isinf(ball.q):
        return float(terms.max()) if terms.size else 0.0
    return float(np.sum(terms ** ball.q) ** (1 / ball.q))


def sample_ball(ball: SmoothnessBall, J: int, seed: int = 0) -> CoefficientSet:
    """Random coefficients for scales 0..J inside the ball.

    Gaussian entries with per-scale std 2^{-j(s + d*/2)}, rescaled so the
    ball norm is M u with u uniform in [0.5, 1).
    """
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    spec = ball.spec
    decay = ball.s + spec.d_star / 2
    bands = {}
    for j in range(J + 1):
        for l in range(1, spec.subband_count(j) + 1):
            bands[(j, l)] = 2.0 ** (-j * decay) * rng.standard_normal(spec.extent(j))
    theta = CoefficientSet(bands, kind="truth")
    norm = ball_norm(theta, ball)
    u = rng.uniform(0.5, 1.0)
    if ball.M == 0 or norm == 0:
        return theta * 0.0
    return theta * (ball.M * u / norm)


@dataclass
class RateFit:
    ns: tuple
    mises: tuple
    slope: float
    intercept: float
    r2: float
    per_rep: tuple = field(default=(), repr=False)


def fit_rate(ns: Sequence[float], mises: Sequence[float]) -> RateFit:
    """Least-squares line through (log n, log MISE)."""
    if len(ns) != len(mises):
        raise InvalidParameterError("ns and mises differ in length")
    if len(ns) < 3:
        raise InvalidParameterError(f"need at least 3 points, got {len(ns)}")
    x = np.log(np.asarray(ns, dtype=float))
    y = np.asarray(mises, dtype=float)
    if np.any(y <= 0) or np.any(~np.isfinite(x)):
        raise InvalidParameterError("ns and mises must be positive")
    y = np.log(y)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, intercept])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float(np.sum(resid ** 2)) / ss_tot)
    return RateFit(tuple(ns), tuple(float(v) for v in np.exp(y)), float(slope), float(intercept), r2)


def observe(theta: CoefficientSet, n: int, r: float, rng: np.random.Generator) -> CoefficientSet:
    """y = theta + n^{-r/2} z with i.i.d. standard normal z."""
    eps = n ** (-r / 2)
    return theta.map(lambda key, a: a + eps * rng.standard_normal(a.shape), kind="observation")


def squared_error(theta: CoefficientSet, y: CoefficientSet, spec: FrameSpec, n: int,
                  L: int | None = None, lam: float | None = None) -> float:
    eps = n ** (-spec.r / 2)
    config = config_for(spec, n, {key: eps for key in y}, L=L, lam=lam)
    est, _ = blockjs_estimate(y, spec, config)
    return (est - theta).energy()


def simulate_mise(ball: SmoothnessBall, n_list: Sequence[int], reps: int = 20, seed: int = 0,
                  L: int | None = None, lam: float | None = None, J: int | None = None) -> RateFit:
    """Monte Carlo MISE of block shrinkage over ``n_list`` and its log-log slope.

    Each replication draws one theta (scales up to ``J``, default
    floor(log2 max n)) and reuses it for every n, with fresh noise per n.
    L, lambda, j0 and J* follow the theoretical choices unless overridden.
    """
    n_list = [int(n) for n in n_list]
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 64:
        raise InvalidParameterError("n_list must be strictly increasing with every n >= 64")
    if reps < 5:
        raise InvalidParameterError(f"need at least 5 replications, got {reps}")
    J = int(math.floor(math.log2(n_list[-1]))) if J is None else J
    losses = np.zeros((len(n_list), reps))
    for rep in range(reps):
        theta = sample_ball(ball, J, substream(seed, rep, 0))
        for i, n in enumerate(n_list):
            y = observe(theta, n, ball.spec.r, substream(seed, rep, i + 1))
            losses[i, rep] = squared_error(theta, y, ball.spec, n, L, lam)
    fit = fit_rate(n_list, losses.mean(axis=1))
    fit.per_rep = tuple((n, rep, float(losses[i, rep])) for i, n in enumerate(n_list)
                        for rep in range(reps))
    return fit


def write_rate_csv(fit: RateFit, path, summary_path=None):
    """Per-replication rows (n, rep, mise) and a one-row slope/intercept/r2 summary."""
    path = write_csv(path, ("n", "rep", "mise"), fit.per_rep)
    summary_path = summary_path or path.with_name(path.stem + "_summary.csv")
    write_csv(summary_path, ("slope", "intercept", "r2"), [(fit.slope, fit.intercept, fit.r2)])
    return path, summary_path
