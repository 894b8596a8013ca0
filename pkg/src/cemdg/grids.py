"""Nested uniform quadrilateral meshes on the unit square.

A coarse partition into Nx-by-Ny square blocks is refined into an
nx-by-ny fine grid (nx divisible by Nx).  Coarse edges carry a fixed
orientation convention: the unit normal of an interior edge points in
+x or +y away from the lower-indexed block, and outward on the domain
boundary.  Oversampled regions grow a block by whole layers of
neighbouring blocks, clipped at the domain boundary.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


class FineGrid:
    """Uniform fine grid on [0,1]^2 with row-major node/cell indexing."""

    def __init__(self, nx, ny):
        if nx < 2 or ny < 2:
            raise ConfigError(f"fine grid needs at least 2 cells per axis, got {nx}x{ny}")
        self.nx = nx
        self.ny = ny
        self.h = 1.0 / nx
        self.n_nodes = (nx + 1) * (ny + 1)
        self.n_cells = nx * ny

    def node_id(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def cell_id(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def node_ij(self, ids):
        ids = np.asarray(ids)
        return ids % (self.nx + 1), ids // (self.nx + 1)

    def node_xy(self, ids):
        i, j = self.node_ij(ids)
        return i * self.h, j * self.h

    def cell_nodes(self, cells):
        """Node ids of each cell, ordered SW, SE, NE, NW."""
        cells = np.asarray(cells)
        ci = cells % self.nx
        cj = cells // self.nx
        sw = self.node_id(ci, cj)
        return np.stack([sw, sw + 1, sw + self.nx + 2, sw + self.nx + 1], axis=-1)

    def boundary_node_mask(self):
        i, j = self.node_ij(np.arange(self.n_nodes))
        return (i == 0) | (i == self.nx) | (j == 0) | (j == self.ny)


@dataclass
class CoarseEdge:
    """One coarse edge with its adjacency and fixed normal.

    block_plus/block_minus follow the orientation convention; for a
    boundary edge block_minus is -1 and the normal points out of the
    domain.  segment_nodes lists the fine node pair of every fine edge
    on this coarse edge, ordered along the edge.
    """

    id: int
    block_plus: int
    block_minus: int
    normal: tuple
    boundary: bool
    segment_nodes: np.ndarray = field(repr=False)


class CoarseGrid:
    """Coarse block partition aligned with a nested fine grid."""

    def __init__(self, fine, Nx, Ny):
        if Nx < 1 or Ny < 1:
            raise ConfigError(f"coarse grid needs at least 1 block per axis, got {Nx}x{Ny}")
        if fine.nx % Nx != 0 or fine.ny % Ny != 0:
            raise ConfigError(
                f"fine grid {fine.nx}x{fine.ny} does not nest in coarse {Nx}x{Ny}: "
                "cell counts must be divisible by block counts")
        self.fine = fine
        self.Nx = Nx
        self.Ny = Ny
        self.H = 1.0 / Nx
        self.N = Nx * Ny
        self.N_c = (Nx + 1) * (Ny + 1)
        self.ratio = fine.nx // Nx
        self.edges = self._build_edges()

    def block_id(self, I, J):
        return np.asarray(J) * self.Nx + np.asarray(I)

    def block_IJ(self, b):
        b = np.asarray(b)
        return b % self.Nx, b // self.Nx

    def coarse_node_id(self, I, J):
        return np.asarray(J) * (self.Nx + 1) + np.asarray(I)

    def block_corner_nodes(self, b):
        """Coarse node ids at the 4 corners of block b (SW, SE, NE, NW)."""
        I, J = self.block_IJ(b)
        return np.array([
            self.coarse_node_id(I, J),
            self.coarse_node_id(I + 1, J),
            self.coarse_node_id(I + 1, J + 1),
            self.coarse_node_id(I, J + 1),
        ])

    def block_cells(self, b):
        """Fine cell ids inside block b, row-major."""
        r = self.ratio
        I, J = self.block_IJ(b)
        ci = np.arange(I * r, (I + 1) * r)
        cj = np.arange(J * r, (J + 1) * r)
        return (cj[:, None] * self.fine.nx + ci[None, :]).ravel()

    def block_nodes(self, b):
        """Fine node ids of the closed block b (includes its boundary)."""
        r = self.ratio
        I, J = self.block_IJ(b)
        ni = np.arange(I * r, (I + 1) * r + 1)
        nj = np.arange(J * r, (J + 1) * r + 1)
        return (nj[:, None] * (self.fine.nx + 1) + ni[None, :]).ravel()

    def _build_edges(self):
        r = self.ratio
        fine = self.fine
        edges = []
        eid = 0
        # vertical edges (normal along x): grid line I, block row J
        for I in range(self.Nx + 1):
            for J in range(self.Ny):
                jf = np.arange(J * r, (J + 1) * r)
                a = fine.node_id(I * r, jf)
                b = fine.node_id(I * r, jf + 1)
                seg = np.stack([a, b], axis=1)
                if I == 0:
                    edges.append(CoarseEdge(eid, self.block_id(0, J), -1, (-1, 0), True, seg))
                elif I == self.Nx:
                    edges.append(CoarseEdge(eid, self.block_id(self.Nx - 1, J), -1, (1, 0), True, seg))
                else:
                    edges.append(CoarseEdge(eid, self.block_id(I - 1, J), self.block_id(I, J),
                                            (1, 0), False, seg))
                eid += 1
        # horizontal edges (normal along y): block column I, grid line J
        for J in range(self.Ny + 1):
            for I in range(self.Nx):
                if_ = np.arange(I * r, (I + 1) * r)
                a = fine.node_id(if_, J * r)
                b = fine.node_id(if_ + 1, J * r)
                seg = np.stack([a, b], axis=1)
                if J == 0:
                    edges.append(CoarseEdge(eid, self.block_id(I, 0), -1, (0, -1), True, seg))
                elif J == self.Ny:
                    edges.append(CoarseEdge(eid, self.block_id(I, self.Ny - 1), -1, (0, 1), True, seg))
                else:
                    edges.append(CoarseEdge(eid, self.block_id(I, J - 1), self.block_id(I, J),
                                            (0, 1), False, seg))
                eid += 1
        return edges


@dataclass
class MeshHierarchy:
    fine: FineGrid
    coarse: CoarseGrid


class OversampleRegion:
    """Block b grown by m layers of coarse blocks, clipped to the domain.

    The grown region is always an axis-aligned rectangle of blocks
    [Ilo, Ihi] x [Jlo, Jhi] in block indices.
    """

    def __init__(self, coarse, center, m):
        if not 0 <= center < coarse.N:
            raise IndexError(f"block id {center} out of range [0, {coarse.N})")
        if m < 0:
            raise ConfigError(f"oversampling layers must be nonnegative, got {m}")
        self.coarse = coarse
        self.center = center
        self.m = m
        I, J = coarse.block_IJ(center)
        self.Ilo = max(0, I - m)
        self.Ihi = min(coarse.Nx - 1, I + m)
        self.Jlo = max(0, J - m)
        self.Jhi = min(coarse.Ny - 1, J + m)
        II = np.arange(self.Ilo, self.Ihi + 1)
        JJ = np.arange(self.Jlo, self.Jhi + 1)
        self.block_ids = np.sort((JJ[:, None] * coarse.Nx + II[None, :]).ravel())

    @property
    def block_rect(self):
        return (self.Ilo, self.Ihi, self.Jlo, self.Jhi)

    def fine_nodes(self):
        """Fine node ids covered by the closed region, sorted."""
        c = self.coarse
        r = c.ratio
        ni = np.arange(self.Ilo * r, (self.Ihi + 1) * r + 1)
        nj = np.arange(self.Jlo * r, (self.Jhi + 1) * r + 1)
        return np.sort((nj[:, None] * (c.fine.nx + 1) + ni[None, :]).ravel())

    def boundary_fine_nodes(self):
        """Fine nodes on the region boundary that lie inside the domain."""
        c = self.coarse
        fine = c.fine
        r = c.ratio
        ids = self.fine_nodes()
        i, j = fine.node_ij(ids)
        ilo, ihi = self.Ilo * r, (self.Ihi + 1) * r
        jlo, jhi = self.Jlo * r, (self.Jhi + 1) * r
        on_rect = (i == ilo) | (i == ihi) | (j == jlo) | (j == jhi)
        on_domain = (i == 0) | (i == fine.nx) | (j == 0) | (j == fine.ny)
        return ids[on_rect & ~on_domain]

    def interior_node_mask(self, node_ids):
        """True for nodes strictly inside the region (off its boundary)."""
        c = self.coarse
        r = c.ratio
        i, j = c.fine.node_ij(np.asarray(node_ids))
        ilo, ihi = self.Ilo * r, (self.Ihi + 1) * r
        jlo, jhi = self.Jlo * r, (self.Jhi + 1) * r
        return (i > ilo) & (i < ihi) & (j > jlo) & (j < jhi)


def build_mesh_hierarchy(nx, Nx):
    """Build nested square fine/coarse grids with full edge topology."""
    if nx < 2 or Nx < 2:
        raise ConfigError(f"need nx >= 2 and Nx >= 2, got nx={nx}, Nx={Nx}")
    if nx % Nx != 0:
        raise ConfigError(f"fine resolution nx={nx} is not divisible by block count Nx={Nx}")
    fine = FineGrid(nx, nx)
    coarse = CoarseGrid(fine, Nx, Nx)
    return MeshHierarchy(fine, coarse)


def oversample_region(coarse, i, m):
    """Region of all blocks within Chebyshev block distance m of block i."""
    return OversampleRegion(coarse, i, m)
