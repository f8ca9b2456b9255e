"""Image files and the SBC1 binary coefficient format.

SBC1 layout (all integers little-endian u32, values little-endian float64)::

    b"SBC1"
    ndim
    nscales
    repeated nscales times:
        j, nsub
        repeated nsub times:
            l, extent[0], ..., extent[ndim - 1]
    subband values, row-major, in header order

Header record ``i`` is the i-th subband descriptor; data record ``i`` holds
that subband's values.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .core_model import CoefficientSet, FrameSpec
from .errors import ExtentMismatchError, FormatError

MAGIC = b"SBC1"


def read_image(path) -> np.ndarray:
    """Grayscale image as float64 (8/16-bit PGM, or anything Pillow reads)."""
    with Image.open(path) as im:
        if im.mode in ("RGB", "RGBA", "P", "LA"):
            im = im.convert("L")
        return np.asarray(im, dtype=float)


def write_image(path, pixels) -> None:
    """Save clipped to [0, 255] as 8-bit; the format follows the file suffix."""
    arr = np.clip(np.rint(np.asarray(pixels, dtype=float)), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def save_coefficients(path, c: CoefficientSet) -> None:
    ndim = {arr.ndim for _, arr in c.items()}
    if len(ndim) != 1:
        raise FormatError("all subbands must have the same number of axes")
    (ndim,) = ndim
    scales: dict[int, list[int]] = {}
    for j, l in c:
        scales.setdefault(j, []).append(l)
    parts = [MAGIC, struct.pack("<II", ndim, len(scales))]
    order = []
    for j in sorted(scales):
        parts.append(struct.pack("<II", j, len(scales[j])))
        for l in sorted(scales[j]):
            parts.append(struct.pack(f"<{1 + ndim}I", l, *c[(j, l)].shape))
            order.append((j, l))
    for key in order:
        parts.append(np.ascontiguousarray(c[key], dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_coefficients(path, spec: FrameSpec | None = None, kind: str = "observation") -> CoefficientSet:
    """Parse an SBC1 file; if ``spec`` is given the layout is checked against it."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError("bad magic, expected b'SBC1'", offset=0)
    pos = 4

    def u32(count, record):
        nonlocal pos
        end = pos + 4 * count
        if end > len(raw):
            raise FormatError("truncated header", record=record, offset=pos)
        vals = struct.unpack_from(f"<{count}I", raw, pos)
        pos = end
        return vals

    ndim, nscales = u32(2, None)
    if ndim < 1:
        raise FormatError("ndim must be >= 1", offset=4)
    header = []
    for _ in range(nscales):
        j, nsub = u32(2, len(header))
        for _ in range(nsub):
            l, *extent = u32(1 + ndim, len(header))
            if any(e < 1 for e in extent):
                raise FormatError(f"subband {(j, l)} has a zero extent", record=len(header))
            header.append(((j, l), tuple(extent)))
    if len({key for key, _ in header}) != len(header):
        raise FormatError("duplicate subband in header")
    bands = {}
    for i, (key, extent) in enumerate(header):
        nbytes = 8 * int(np.prod(extent))
        if pos + nbytes > len(raw):
            raise ExtentMismatchError(
                f"subband {key} needs {nbytes} bytes, only {len(raw) - pos} left",
                record=i, offset=pos)
        bands[key] = np.frombuffer(raw, dtype="<f8", count=nbytes // 8, offset=pos).reshape(extent)
        pos += nbytes
    if pos != len(raw):
        raise ExtentMismatchError(
            f"{len(raw) - pos} bytes of data beyond the {len(header)} declared subbands",
            record=len(header), offset=pos)
    c = CoefficientSet(bands, kind=kind)
    if spec is not None:
        problems = c.check_against(spec)
        if problems:
            raise ExtentMismatchError("; ".join(problems))
    return c


def load_external_coefficients(path, spec: FrameSpec) -> CoefficientSet:
    """SBC1 coefficients computed by another tool, checked against ``spec``."""
    return load_coefficients(path, spec)
