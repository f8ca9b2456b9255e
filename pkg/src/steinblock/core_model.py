"""Sequence-model geometry: frame parameters, coefficient containers and blocks.

Coefficients are indexed by a scale ``j``, a subband ``l`` and a d-dimensional
position ``k``.  A :class:`CoefficientSet` keeps one numpy array per ``(j, l)``
whose shape is the rectangular extent of that subband.  Subband ``l = 0`` is
reserved for the low-pass (approximation) band of a transform; it is not part
of the detail subband count and shrinkage leaves it untouched.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import InvalidParameterError, LayoutError

KINDS = ("observation", "truth", "estimate")
BLOCK_ENERGY = ("mean", "side")
APPROX = 0

Key = tuple[int, int]


@dataclass(frozen=True)
class FrameSpec:
    """Sequence-model parameters of a transform.

    d: data dimension, r: noise exponent (noise std n^(-r/2)), upsilon and
    c_star: subband count floor(c_star * 2^(upsilon j)) per scale, mu:
    anisotropy exponents (extent of axis i at scale j is 2^(mu_i j)), delta:
    threshold inflation exponent (0 for denoising).

    Construction does not validate; call :func:`validate_frame_spec` or
    :meth:`check`.
    """

    d: int
    r: float
    upsilon: float
    c_star: float
    mu: tuple[float, ...]
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))

    @property
    def d_star(self) -> float:
        return float(sum(self.mu))

    def subband_count(self, j: int) -> int:
        return int(math.floor(self.c_star * 2.0 ** (self.upsilon * j) + 1e-12))

    def extent(self, j: int) -> tuple[int, ...]:
        return tuple(max(1, int(math.floor(2.0 ** (m * j) + 1e-12))) for m in self.mu)

    def check(self) -> "FrameSpec":
        problems = validate_frame_spec(self)
        if problems:
            raise InvalidParameterError("invalid FrameSpec: " + "; ".join(problems))
        return self

    def replace(self, **changes) -> "FrameSpec":
        fields = dict(d=self.d, r=self.r, upsilon=self.upsilon, c_star=self.c_star,
                      mu=self.mu, delta=self.delta)
        fields.update(changes)
        return FrameSpec(**fields)


def validate_frame_spec(spec: FrameSpec) -> list[str]:
    """Return every violated FrameSpec invariant (empty when valid)."""
    problems = []
    if not isinstance(spec.d, (int, np.integer)) or spec.d < 1:
        problems.append("d must be a positive integer")
    if len(spec.mu) != spec.d:
        problems.append(f"mu must have d={spec.d} entries, got {len(spec.mu)}")
    if not 1 <= spec.r <= spec.d:
        problems.append("r must lie in [1, d]")
    if not 0 <= spec.upsilon <= 1:
        problems.append("upsilon must lie in [0, 1]")
    if not spec.c_star >= 1:
        problems.append("c_star must be >= 1")
    if any(not m > 0 for m in spec.mu):
        problems.append("μᵢ must be positive")
    if not spec.delta >= 0:
        problems.append("delta must be >= 0")
    if not all(math.isfinite(v) for v in (spec.r, spec.upsilon, spec.c_star, spec.delta, *spec.mu)):
        problems.append("parameters must be finite")
    return problems


def wavelet_2d(delta: float = 0.0) -> FrameSpec:
    """Separable 2D wavelets: three isotropic detail subbands per scale."""
    return FrameSpec(d=2, r=2.0, upsilon=0.0, c_star=3.0, mu=(1.0, 1.0), delta=delta)


def curvelet_2d(delta: float = 0.0, c_star: float = 8.0) -> FrameSpec:
    """Second-generation curvelets (parabolic scaling)."""
    return FrameSpec(d=2, r=2.0, upsilon=0.5, c_star=c_star, mu=(1.0, 0.5), delta=delta)


def wavelet_1d() -> FrameSpec:
    return FrameSpec(d=1, r=1.0, upsilon=0.0, c_star=1.0, mu=(1.0,), delta=0.0)


PRESETS = {"wavelet": wavelet_2d, "curvelet": curvelet_2d, "wavelet1d": wavelet_1d}


class CoefficientSet:
    """Immutable map ``(j, l) -> ndarray`` of transform coefficients.

    Arrays are copied and made read-only on construction.  ``kind`` is one of
    ``observation``, ``truth`` or ``estimate``.
    """

    __slots__ = ("_bands", "kind")

    def __init__(self, bands: Mapping[Key, np.ndarray], kind: str = "observation"):
        if kind not in KINDS:
            raise InvalidParameterError(f"kind must be one of {KINDS}, got {kind!r}")
        frozen = {}
        for key in sorted(bands):
            j, l = (int(key[0]), int(key[1]))
            arr = np.array(bands[key], dtype=float, copy=True)
            if arr.ndim == 0 or arr.size == 0:
                raise LayoutError(f"subband {(j, l)} must be a non-empty array")
            arr.setflags(write=False)
            frozen[(j, l)] = arr
        self._bands = MappingProxyType(frozen)
        self.kind = kind

    @property
    def bands(self) -> Mapping[Key, np.ndarray]:
        return self._bands

    @property
    def layout(self) -> dict[Key, tuple[int, ...]]:
        return {key: arr.shape for key, arr in self._bands.items()}

    def __getitem__(self, key: Key) -> np.ndarray:
        return self._bands[key]

    def __contains__(self, key) -> bool:
        return key in self._bands

    def __iter__(self) -> Iterator[Key]:
        return iter(self._bands)

    def __len__(self) -> int:
        return len(self._bands)

    def items(self):
        return self._bands.items()

    def keys(self):
        return self._bands.keys()

    def scales(self) -> list[int]:
        return sorted({j for j, _ in self._bands})

    @property
    def size(self) -> int:
        return sum(arr.size for arr in self._bands.values())

    def energy(self, scales: Sequence[int] | None = None) -> float:
        keep = None if scales is None else set(scales)
        return float(sum(np.sum(arr ** 2) for (j, _), arr in self._bands.items()
                         if keep is None or j in keep))

    def flat(self) -> np.ndarray:
        return np.concatenate([arr.ravel() for arr in self._bands.values()])

    def map(self, fn, kind: str | None = None) -> "CoefficientSet":
        return CoefficientSet({key: fn(key, arr) for key, arr in self._bands.items()},
                              kind or self.kind)

    def with_kind(self, kind: str) -> "CoefficientSet":
        return CoefficientSet(self._bands, kind)

    def same_layout(self, other: "CoefficientSet") -> bool:
        return self.layout == other.layout

    def _combine(self, other, op):
        if isinstance(other, CoefficientSet):
            if not self.same_layout(other):
                raise LayoutError("coefficient layouts differ")
            return CoefficientSet({k: op(a, other[k]) for k, a in self._bands.items()}, self.kind)
        return CoefficientSet({k: op(a, other) for k, a in self._bands.items()}, self.kind)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        return self._combine(float(scalar), np.multiply)

    __rmul__ = __mul__

    def __repr__(self):
        return f"CoefficientSet(kind={self.kind!r}, subbands={len(self)}, size={self.size})"

    def check_against(self, spec: FrameSpec) -> list[str]:
        """Violations of the subband-count bound implied by ``spec``."""
        problems = []
        per_scale: dict[int, int] = {}
        for (j, l), arr in self._bands.items():
            if arr.ndim != spec.d:
                problems.append(f"subband {(j, l)} has {arr.ndim} axes, expected {spec.d}")
            if l != APPROX:
                per_scale[j] = per_scale.get(j, 0) + 1
        for j, count in sorted(per_scale.items()):
            if count > spec.subband_count(j):
                problems.append(f"scale {j} has {count} subbands, more than {spec.subband_count(j)}")
        return problems


@dataclass(frozen=True)
class BlockPartition:
    """Non-overlapping blocks of one subband.

    Each axis is cut into segments of length L; a remainder shorter than L is
    merged into the last segment of its axis, and an axis shorter than L is a
    single segment.  Blocks are the Cartesian products of segments.
    """

    L: int
    extent: tuple[int, ...]
    segments: tuple[tuple[tuple[int, int], ...], ...] = field(repr=False)

    def starts(self, axis: int) -> np.ndarray:
        return np.array([a for a, _ in self.segments[axis]], dtype=np.intp)

    def lengths(self, axis: int) -> np.ndarray:
        return np.array([b - a for a, b in self.segments[axis]], dtype=np.intp)

    @property
    def shape(self) -> tuple[int, ...]:
        """Number of blocks along each axis."""
        return tuple(len(s) for s in self.segments)

    def __len__(self) -> int:
        return int(np.prod(self.shape))

    def is_full(self, K: tuple[int, ...]) -> bool:
        return all(b - a == self.L for (a, b) in (self.segments[i][K[i]] for i in range(len(K))))

    @property
    def blocks(self) -> list[tuple[tuple[int, ...], np.ndarray]]:
        """``(K, positions)`` pairs; positions is an (m, d) integer array."""
        out = []
        for K in itertools.product(*(range(len(s)) for s in self.segments)):
            ranges = [range(*self.segments[i][K[i]]) for i in range(len(K))]
            pos = np.array(list(itertools.product(*ranges)), dtype=np.intp).reshape(-1, len(K))
            out.append((K, pos))
        return out


def theoretical_block_size(n: int, d: int, r: float, base: float = 2.0) -> int:
    """max(1, floor((r log n)^(1/d))), log in ``base`` (2 by default)."""
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if d < 1:
        raise InvalidParameterError(f"d must be >= 1, got {d}")
    if not 1 <= r <= d:
        raise InvalidParameterError(f"r must lie in [1, d={d}], got {r}")
    target = r * math.log(n, base)
    L = int(math.floor(target ** (1.0 / d)))
    # integer root correction against floating point error in the d-th root
    while (L + 1) ** d <= target * (1 + 1e-12):
        L += 1
    while L > 0 and L ** d > target * (1 + 1e-12):
        L -= 1
    return max(1, L)


def scale_bounds(spec: FrameSpec, n: int, L: int) -> tuple[int, int]:
    """Coarsest shrunk scale j0 and finest kept scale J*.

    j0 = floor(log2(L) / min(mu)), J* = floor(r log2(n) / (d* + delta + upsilon)),
    with j0 clamped to [0, J*].
    """
    spec.check()
    if L < 1:
        raise InvalidParameterError(f"L must be >= 1, got {L}")
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    denom = spec.d_star + spec.delta + spec.upsilon
    if denom <= 0:
        raise InvalidParameterError("d* + delta + upsilon must be positive")
    J_star = int(math.floor(spec.r / denom * math.log2(n) + 1e-9))
    j0 = int(math.floor(math.log2(L) / min(spec.mu) + 1e-9))
    return min(max(j0, 0), J_star), J_star


def build_partition(extent: Sequence[int], L: int) -> BlockPartition:
    extent = tuple(int(e) for e in extent)
    if L < 1 or any(e < 1 for e in extent):
        raise InvalidParameterError(f"need L >= 1 and positive extents, got L={L}, extent={extent}")
    segments = []
    for e in extent:
        count = max(1, e // L)
        bounds = [(i * L, (i + 1) * L) for i in range(count)]
        bounds[-1] = (bounds[-1][0], e)
        segments.append(tuple(bounds))
    return BlockPartition(L=L, extent=extent, segments=tuple(segments))


@dataclass(frozen=True)
class DenoiseConfig:
    """Block size, threshold, processed scale range and per-subband noise std.

    ``block_energy`` selects how a block's energy is normalised before it is
    compared with lam * sigma^2: ``"mean"`` divides the sum of squares by the
    block cardinality (L^d for full blocks), ``"side"`` by cardinality / L^(d-1)
    (L for full blocks).  The two agree in one dimension.
    """

    L: int
    lam: float
    j0: int
    J_star: int
    noise_scale: Mapping[Key, float]
    block_energy: str = "mean"

    def __post_init__(self):
        if self.L < 1:
            raise InvalidParameterError(f"L must be >= 1, got {self.L}")
        if not self.lam > 0:
            raise InvalidParameterError(f"lambda must be positive, got {self.lam}")
        if not 0 <= self.j0 <= self.J_star:
            raise InvalidParameterError(f"need 0 <= j0 <= J*, got j0={self.j0}, J*={self.J_star}")
        if self.block_energy not in BLOCK_ENERGY:
            raise InvalidParameterError(f"block_energy must be one of {BLOCK_ENERGY}")
        scales = {(int(j), int(l)): float(s) for (j, l), s in self.noise_scale.items()}
        bad = [key for key, s in scales.items() if not (s > 0 and math.isfinite(s))]
        if bad:
            raise InvalidParameterError(f"noise scales must be positive, bad subbands: {bad}")
        object.__setattr__(self, "noise_scale", MappingProxyType(scales))
