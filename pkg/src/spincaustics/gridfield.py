"""Sampled fields over rectangular grids and their text serialization.

Format `caustics-grid v1`: '#'-prefixed header lines carry the version
tag, sorted metadata key=value pairs and one line per axis; data rows
follow in row-major order, floats at 17 significant digits (lossless for
float64), complex values as two columns.  parse(emit(f)) == f exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

FORMAT_TAG = "caustics-grid v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    size: int

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.size)

    def __post_init__(self):
        if self.size < 0:
            raise ValueError("axis size must be non-negative")
        if self.size > 1 and not (self.lo < self.hi):
            raise ValueError(f"axis {self.name!r} must be strictly increasing")


@dataclass(frozen=True)
class GridField:
    """A real- or complex-valued field sampled on a rectangular grid."""

    axes: tuple[Axis, ...]
    values: np.ndarray
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(ax.size for ax in self.axes)
        if tuple(self.values.shape) != shape:
            raise ValueError(f"values shape {self.values.shape} != axes shape {shape}")

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridField):
            return NotImplemented
        return (self.axes == other.axes and self.meta == other.meta
                and self.values.shape == other.values.shape
                and np.array_equal(self.values, other.values))


def emit_grid(fieldobj: GridField, path=None) -> str:
    """Serialize a GridField; writes to `path` when given, returns the text."""
    buf = io.StringIO()
    buf.write(f"# {FORMAT_TAG}\n")
    for k in sorted(fieldobj.meta):
        buf.write(f"# meta {k}={fieldobj.meta[k]}\n")
    for ax in fieldobj.axes:
        buf.write(f"# axis {ax.name} {_fmt(ax.lo)} {_fmt(ax.hi)} {ax.size}\n")
    kind = "complex" if fieldobj.is_complex else "real"
    buf.write(f"# values {kind}\n")
    vals = fieldobj.values.reshape(-1)
    ncols = fieldobj.axes[-1].size if fieldobj.axes else 0
    if vals.size:
        rows = vals.reshape(-1, ncols) if ncols else vals.reshape(1, -1)
        for row in rows:
            if kind == "complex":
                cells = [f"{_fmt(v.real)} {_fmt(v.imag)}" for v in row]
            else:
                cells = [_fmt(v) for v in row]
            buf.write(" ".join(cells) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def parse_grid(source) -> GridField:
    """Inverse of emit_grid; `source` is a path or the serialized text."""
    if isinstance(source, str) and "\n" in source:
        lines = source.splitlines()
    else:
        with open(source) as fh:
            lines = fh.read().splitlines()
    if not lines or lines[0] != f"# {FORMAT_TAG}":
        raise ValueError("not a caustics-grid v1 file")
    meta: dict[str, str] = {}
    axes: list[Axis] = []
    kind = "real"
    data_lines: list[str] = []
    for ln in lines[1:]:
        if ln.startswith("# meta "):
            k, _, v = ln[len("# meta "):].partition("=")
            meta[k] = v
        elif ln.startswith("# axis "):
            name, lo, hi, size = ln[len("# axis "):].split()
            axes.append(Axis(name, float(lo), float(hi), int(size)))
        elif ln.startswith("# values "):
            kind = ln[len("# values "):].strip()
        elif ln.startswith("#"):
            continue
        elif ln.strip():
            data_lines.append(ln)
    shape = tuple(ax.size for ax in axes)
    numbers = [float(tok) for ln in data_lines for tok in ln.split()]
    if kind == "complex":
        arr = np.asarray(numbers).reshape(-1, 2)
        vals = (arr[:, 0] + 1j * arr[:, 1]).reshape(shape)
    else:
        vals = np.asarray(numbers).reshape(shape)
    return GridField(axes=tuple(axes), values=vals, meta=meta)
