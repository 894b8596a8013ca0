"""Heterogeneous conductivity fields and their per-edge penalty weights.

Fields are piecewise constant per fine cell.  Besides explicit
rectangle specs, two seeded generators produce the study fields used
throughout: a channels-and-inclusions field for the flow experiments
and a horizontally layered field for the wave experiments.

Raster file format (.kfld): 16-byte header = magic "KFLD", uint32-LE
nx, uint32-LE ny, 4 reserved zero bytes; then nx*ny float64-LE cell
values, row-major.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RasterFormatError

_MAGIC = b"KFLD"
_HEADER = struct.Struct("<4sIII")


class PermField:
    """Per-fine-cell positive conductivity, flat row-major storage."""

    def __init__(self, values, nx, ny):
        values = np.ascontiguousarray(values, dtype=np.float64).ravel()
        if values.size != nx * ny:
            raise ConfigError(f"field has {values.size} values for a {nx}x{ny} grid")
        if not np.all(np.isfinite(values)):
            raise ConfigError("field contains non-finite values")
        if np.any(values <= 0.0):
            raise ConfigError("conductivity must be strictly positive everywhere")
        self.values = values
        self.nx = nx
        self.ny = ny

    def as_grid(self):
        """View shaped (ny, nx); row j is the j-th cell row."""
        return self.values.reshape(self.ny, self.nx)

    def block_max(self, coarse):
        """Maximum value over each coarse block."""
        r = coarse.ratio
        g = self.as_grid()
        # fold each r-by-r block of cells
        folded = g.reshape(coarse.Ny, r, coarse.Nx, r)
        return folded.max(axis=(1, 3)).ravel()


@dataclass
class FieldSpec:
    """Background plus axis-aligned rectangles of a single contrast value.

    Rectangles are (i0, j0, w, h) in cell indices: cells with
    i0 <= i < i0+w and j0 <= j < j0+h receive the contrast value.
    """

    background: float
    rects: list = field(default_factory=list)
    value: float = 1.0

    def __post_init__(self):
        if self.background <= 0:
            raise ConfigError(f"background must be positive, got {self.background}")
        if self.rects and self.value < self.background:
            raise ConfigError(
                f"contrast value {self.value} must be >= background {self.background}")


def generate_field(spec, grid):
    """Fill the background and stamp the spec's rectangles."""
    g = np.full((grid.ny, grid.nx), float(spec.background))
    for rect in spec.rects:
        i0, j0, w, h = rect
        if w <= 0 or h <= 0:
            raise ConfigError(f"rectangle {rect} has nonpositive extent")
        if i0 < 0 or j0 < 0 or i0 + w > grid.nx or j0 + h > grid.ny:
            raise ConfigError(f"rectangle {rect} exceeds the {grid.nx}x{grid.ny} grid")
        g[j0:j0 + h, i0:i0 + w] = spec.value
    return PermField(g, grid.nx, grid.ny)


def constant_field(grid, value=1.0):
    return PermField(np.full(grid.nx * grid.ny, float(value)), grid.nx, grid.ny)


def save_raster(values2d, path):
    """Write any 2D array in the .kfld raster layout."""
    a = np.ascontiguousarray(values2d, dtype="<f8")
    ny, nx = a.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, nx, ny, 0))
        fh.write(a.tobytes())


def load_raster(path):
    """Read a .kfld raster into a 2D array, validating the layout."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise RasterFormatError(f"file too short for header ({len(raw)} bytes)", offset=0)
    magic, nx, ny, reserved = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise RasterFormatError(f"bad magic {magic!r}, expected {_MAGIC!r}", offset=0)
    if reserved != 0:
        raise RasterFormatError("reserved header word is not zero", offset=12)
    if nx == 0 or ny == 0:
        raise RasterFormatError(f"empty grid {nx}x{ny} in header", offset=4)
    expect = _HEADER.size + 8 * nx * ny
    if len(raw) != expect:
        raise RasterFormatError(
            f"payload holds {(len(raw) - _HEADER.size) // 8} values, header says {nx * ny}",
            offset=min(len(raw), expect))
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return values.reshape(int(ny), int(nx)).copy()


def save_field_raster(field, path):
    save_raster(field.as_grid(), path)


def load_field_raster(path):
    """Read a conductivity raster; values must be positive and finite."""
    grid = load_raster(path)
    values = grid.ravel()
    bad = np.flatnonzero(~np.isfinite(values) | (values <= 0.0))
    if bad.size:
        raise RasterFormatError(
            f"value {values[bad[0]]} at cell {bad[0]} is not a positive finite number",
            offset=_HEADER.size + 8 * int(bad[0]))
    return PermField(values, grid.shape[1], grid.shape[0])


def save_pgm(values2d, path):
    """8-bit min-max scaled grayscale preview (PGM P5)."""
    a = np.asarray(values2d, dtype=float)
    lo, hi = a.min(), a.max()
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = ((a - lo) * scale).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode())
        fh.write(img[::-1].tobytes())  # flip so row 0 of the file is the top


def edge_kappa_bar(field, coarse):
    """Per-coarse-edge penalty weight.

    Interior edge: mean of the two adjacent block maxima.  Boundary
    edge: maximum over the single adjacent block, consistent with the
    interior definition.
    """
    bmax = field.block_max(coarse)
    kbar = np.empty(len(coarse.edges))
    for e in coarse.edges:
        if e.boundary:
            kbar[e.id] = bmax[e.block_plus]
        else:
            kbar[e.id] = 0.5 * (bmax[e.block_plus] + bmax[e.block_minus])
    return kbar


def experiment1_field_spec(nx, seed=0, value=1.0e4):
    """Seeded channels-and-inclusions layout for the flow studies.

    Three horizontal channels and two vertical channels span the whole
    domain; small square inclusions are scattered on a jittered lattice
    away from the channels.  Channel positions are spaced so that no
    coarse block row or column of width >= nx/32 cells meets two
    parallel channels, keeping at most one horizontal and one vertical
    channel plus one inclusion per block for the block sizes used in
    the studies.
    """
    if nx % 32 != 0:
        raise ConfigError(f"analog field generator expects nx divisible by 32, got {nx}")
    rng = np.random.default_rng(seed)
    t = max(2, nx // 128)          # channel thickness in cells
    jit = nx // 42
    rects = []
    h_rows = []
    for frac in (0.15, 0.48, 0.81):
        y = int(frac * nx) + int(rng.integers(-jit, jit + 1))
        rects.append((0, y, nx, t))
        h_rows.append(y)
    v_cols = []
    for frac in (0.3, 0.68):
        x = int(frac * nx) + int(rng.integers(-jit, jit + 1))
        rects.append((x, 0, t, nx))
        v_cols.append(x)
    s = max(3, nx // 64)           # inclusion size
    step = nx // 5
    for gy in range(1, 5):
        for gx in range(1, 5):
            if (gx + gy) % 2:
                continue
            cx = gx * step + int(rng.integers(-jit, jit + 1))
            cy = gy * step + int(rng.integers(-jit, jit + 1))
            clear = 2 * s
            if any(abs(cy - (y + t // 2)) < clear for y in h_rows):
                continue
            if any(abs(cx - (x + t // 2)) < clear for x in v_cols):
                continue
            i0 = min(max(cx - s // 2, 0), nx - s)
            j0 = min(max(cy - s // 2, 0), nx - s)
            rects.append((i0, j0, s, s))
    return FieldSpec(background=1.0, rects=rects, value=float(value))


def layered_field(grid, seed=0, vmin=1.0, vmax=25.0, bands=12):
    """Seeded horizontally layered field for the wave studies."""
    rng = np.random.default_rng(seed)
    edges = np.sort(rng.uniform(0, grid.ny, bands - 1).astype(int))
    edges = np.concatenate([[0], edges, [grid.ny]])
    vals = np.exp(rng.uniform(np.log(vmin), np.log(vmax), bands))
    g = np.empty((grid.ny, grid.nx))
    for k in range(bands):
        g[edges[k]:edges[k + 1], :] = vals[k]
    return PermField(g, grid.nx, grid.ny)
