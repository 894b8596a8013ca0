"""Partition of unity over the coarse grid and the spectral mass weight.

One function per coarse node, supported on its adjacent blocks.  The
"bilinear" kind samples the tensor-product hat; the "msfem" kind
replaces the interior of each block by the conductivity-weighted
discrete harmonic extension of the same (linear) edge data, so the two
kinds coincide for constant conductivity.

The spectral weight multiplies the cell conductivity by the summed
squared gradients of the partition functions, stored per cell at the
four 2x2 Gauss points.
"""

import numpy as np
import scipy.sparse as sp

from . import element_q1 as el
from .errors import ConfigError
from .linalg import SpdFactor


class PartitionOfUnity:
    def __init__(self, kind, chi, mesh):
        self.kind = kind
        self.chi = chi          # csr, (coarse nodes) x (fine nodes)
        self.mesh = mesh


class SWeight:
    """Per-cell spectral weight values at the 2x2 Gauss points."""

    def __init__(self, values, mesh):
        self.values = values    # (n_cells, 4)
        self.mesh = mesh


def _corner_data(r):
    """Hat values of the 4 block corners on the local (r+1)^2 lattice."""
    t = np.arange(r + 1) / r
    lx, ly = np.meshgrid(t, t)        # ly varies along rows
    lx, ly = lx.ravel(), ly.ravel()
    return np.stack([(1 - lx) * (1 - ly), lx * (1 - ly), lx * ly, (1 - lx) * ly], axis=0)


def _local_cell_nodes(r):
    """Local node indices (SW, SE, NE, NW) of each local cell, row-major."""
    ci, cj = np.meshgrid(np.arange(r), np.arange(r))
    sw = (cj * (r + 1) + ci).ravel()
    return np.stack([sw, sw + 1, sw + r + 2, sw + r + 1], axis=1)


def build_pou(kind, field, mesh):
    """Build the partition of unity of the requested kind."""
    if kind not in ("bilinear", "msfem"):
        raise ConfigError(f"unknown partition-of-unity kind {kind!r}")
    fine, coarse = mesh.fine, mesh.coarse
    r = coarse.ratio
    corner_data = _corner_data(r)
    cell_nodes_loc = _local_cell_nodes(r)
    n_loc = (r + 1) ** 2

    li = np.arange(n_loc) % (r + 1)
    lj = np.arange(n_loc) // (r + 1)
    boundary_loc = (li == 0) | (li == r) | (lj == 0) | (lj == r)
    interior_loc = np.flatnonzero(~boundary_loc)
    bnd_loc = np.flatnonzero(boundary_loc)

    rows, cols, vals = [], [], []
    for b in range(coarse.N):
        nodes = coarse.block_nodes(b)
        corners = coarse.block_corner_nodes(b)
        if kind == "bilinear" or interior_loc.size == 0:
            local = corner_data
        else:
            kappa = field.values[coarse.block_cells(b)]
            kloc = np.einsum("c,ab->cab", kappa, el.K_REF)
            rr = np.repeat(cell_nodes_loc, 4, axis=1).ravel()
            cc = np.tile(cell_nodes_loc, (1, 4)).ravel()
            A = sp.coo_matrix((kloc.ravel(), (rr, cc)), shape=(n_loc, n_loc)).tocsr()
            Aii = A[interior_loc][:, interior_loc]
            Aib = A[interior_loc][:, bnd_loc]
            fac = SpdFactor(Aii)
            local = corner_data.copy()
            rhs = -(Aib @ corner_data[:, bnd_loc].T)
            local[:, interior_loc] = fac.solve(rhs).T
        for c in range(4):
            rows.append(np.full(n_loc, corners[c]))
            cols.append(nodes)
            vals.append(local[c])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    # shared edge/corner nodes are written by every adjacent block with
    # identical values; keep the first occurrence instead of summing
    key = rows.astype(np.int64) * fine.n_nodes + cols
    _, first = np.unique(key, return_index=True)
    chi = sp.coo_matrix((vals[first], (rows[first], cols[first])),
                        shape=(coarse.N_c, fine.n_nodes)).tocsr()
    return PartitionOfUnity(kind, chi, mesh)


def build_s_weight(pou, field):
    """Spectral weight kappa * sum_j |grad chi_j|^2 at the Gauss points."""
    mesh = pou.mesh
    fine, coarse = mesh.fine, mesh.coarse
    r = coarse.ratio
    cell_nodes_loc = _local_cell_nodes(r)
    grad_ref = el.GRAD_G / fine.h     # (4 gauss, 4 nodes, 2)
    values = np.empty((fine.n_cells, 4))
    for b in range(coarse.N):
        nodes = coarse.block_nodes(b)
        cells = coarse.block_cells(b)
        corners = coarse.block_corner_nodes(b)
        chi_loc = pou.chi[corners][:, nodes].toarray()       # (4c, n_loc)
        nodal = chi_loc[:, cell_nodes_loc]                   # (4c, ncell, 4a)
        g = np.einsum("cna,gad->cngd", nodal, grad_ref)      # (4c, ncell, 4g, 2)
        values[cells] = field.values[cells, None] * (g ** 2).sum(axis=(0, 3))
    return SWeight(values, mesh)
