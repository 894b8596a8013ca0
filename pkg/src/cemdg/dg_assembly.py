"""Block-discontinuous Q1 space and interior-penalty DG assembly.

Functions are continuous bilinear inside each coarse block and may
jump across coarse edges; fine nodes on an interior coarse edge carry
one degree of freedom per adjacent block.  Homogeneous Dirichlet
conditions are imposed strongly by dropping domain-boundary nodes
(optional, for testing the raw form).

The energy form combines the per-block conductivity stiffness, the two
symmetric flux terms with the classical average/jump convention, and
the gamma/h penalty weighted by the per-edge conductivity bound.  All
edge integrals use 2-point Gauss per fine segment, exact for the
quadratic integrands; cell integrals use closed-form Q1 tables and the
2x2 Gauss values stored in the spectral weight.
"""

import numpy as np
import scipy.sparse as sp

from . import element_q1 as el
from .errors import CoercivityError, ConfigError, DefinitenessError, SolverError
from .linalg import SpdFactor, solve_spd


class DGDofMap:
    """Maps (block, fine node) pairs to global DG indices.

    Indices are contiguous per block, in local row-major lattice
    order.  block_dof[b] holds the (r+1)^2 lattice of block b with -1
    for eliminated Dirichlet nodes.
    """

    def __init__(self, mesh, eliminate_dirichlet=True):
        self.mesh = mesh
        self.eliminate_dirichlet = eliminate_dirichlet
        fine, coarse = mesh.fine, mesh.coarse
        r = coarse.ratio
        n_loc = (r + 1) ** 2
        boundary = fine.boundary_node_mask()
        self.block_dof = []
        self.block_start = np.zeros(coarse.N + 1, dtype=int)
        nxt = 0
        for b in range(coarse.N):
            nodes = coarse.block_nodes(b)
            dof = np.full(n_loc, -1, dtype=int)
            keep = ~boundary[nodes] if eliminate_dirichlet else np.ones(n_loc, bool)
            dof[keep] = nxt + np.arange(keep.sum())
            nxt += keep.sum()
            self.block_dof.append(dof)
            self.block_start[b + 1] = nxt
        self.n_dg = nxt
        self.dof_node = np.empty(nxt, dtype=int)
        self.dof_block = np.empty(nxt, dtype=int)
        for b in range(coarse.N):
            nodes = coarse.block_nodes(b)
            dof = self.block_dof[b]
            keep = dof >= 0
            self.dof_node[dof[keep]] = nodes[keep]
            self.dof_block[dof[keep]] = b
        self.cell_dofs = self._build_cell_dofs()

    def _build_cell_dofs(self):
        coarse = self.mesh.coarse
        r = coarse.ratio
        loc = _local_cell_nodes(r)
        cd = np.empty((self.mesh.fine.n_cells, 4), dtype=int)
        for b in range(coarse.N):
            cd[coarse.block_cells(b)] = self.block_dof[b][loc]
        return cd

    def block_dofs(self, b):
        return np.arange(self.block_start[b], self.block_start[b + 1])

    def node_dof_in_block(self, b, nodes):
        """DG index of given fine nodes within block b (-1 if absent)."""
        coarse = self.mesh.coarse
        r = coarse.ratio
        I, J = coarse.block_IJ(b)
        i, j = self.mesh.fine.node_ij(np.asarray(nodes))
        li, lj = i - I * r, j - J * r
        return self.block_dof[b][lj * (r + 1) + li]


def _local_cell_nodes(r):
    ci, cj = np.meshgrid(np.arange(r), np.arange(r))
    sw = (cj * (r + 1) + ci).ravel()
    return np.stack([sw, sw + 1, sw + r + 2, sw + r + 1], axis=1)


def build_dof_map(mesh, eliminate_dirichlet=True):
    return DGDofMap(mesh, eliminate_dirichlet)


class AssembledForms:
    """Assembled sparse operators of one configuration."""

    def __init__(self, A, A_vol, A_pen, S, M, gamma, dof, field, kbar, sweight):
        self.A = A
        self.A_vol = A_vol
        self.A_pen = A_pen
        self.S = S
        self.M = M
        self.gamma = gamma
        self.dof = dof
        self.field = field
        self.kbar = kbar
        self.sweight = sweight

    @property
    def n_dg(self):
        return self.dof.n_dg

    @property
    def mesh(self):
        return self.dof.mesh


def _accumulate(triplets, rows, cols, vals):
    mask = (rows >= 0) & (cols >= 0)
    triplets[0].append(rows[mask])
    triplets[1].append(cols[mask])
    triplets[2].append(vals[mask])


def _to_csr(triplets, n):
    if not triplets[0]:
        return sp.csr_matrix((n, n))
    rows = np.concatenate([a.ravel() for a in triplets[0]])
    cols = np.concatenate([a.ravel() for a in triplets[1]])
    vals = np.concatenate([a.ravel() for a in triplets[2]])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _edge_groups(mesh):
    """Adjacent cells of every fine segment, grouped by edge type.

    Returns dict: key -> (cells_plus, cells_minus or None, kbar_index),
    keys 'vert'/'horz' for interior edges and 'left'/'right'/'bottom'/
    'top' for boundary edges.  Segment order follows the edge lists.
    """
    fine, coarse = mesh.fine, mesh.coarse
    nx = fine.nx
    groups = {k: ([], [], []) for k in ("vert", "horz", "left", "right", "bottom", "top")}
    for e in coarse.edges:
        a = e.segment_nodes[:, 0]
        i, j = fine.node_ij(a)
        if e.normal[0] != 0:   # vertical edge, segments run along y
            if not e.boundary:
                cp, cm = fine.cell_id(i - 1, j), fine.cell_id(i, j)
                g = groups["vert"]
            elif e.normal[0] < 0:
                cp, cm = fine.cell_id(i, j), None
                g = groups["left"]
            else:
                cp, cm = fine.cell_id(i - 1, j), None
                g = groups["right"]
        else:                  # horizontal edge, segments run along x
            if not e.boundary:
                cp, cm = fine.cell_id(i, j - 1), fine.cell_id(i, j)
                g = groups["horz"]
            elif e.normal[1] < 0:
                cp, cm = fine.cell_id(i, j), None
                g = groups["bottom"]
            else:
                cp, cm = fine.cell_id(i, j - 1), None
                g = groups["top"]
        g[0].append(cp)
        if cm is not None:
            g[1].append(cm)
        g[2].append(np.full(len(cp), e.id))
    out = {}
    for k, (cp, cm, eid) in groups.items():
        if not cp:
            continue
        out[k] = (np.concatenate(cp), np.concatenate(cm) if cm else None,
                  np.concatenate(eid))
    return out


# d/dx and d/dy of a Q1 function, coefficients over (SW, SE, NE, NW);
# t is the coordinate along the edge, the derivative is constant across it
def _dx_coeff(t):
    return np.array([-(1 - t), (1 - t), t, -t])


def _dy_coeff(t):
    return np.array([-(1 - t), -t, t, (1 - t)])


def assemble_forms(field, kbar, sweight, dof, gamma=4.0):
    """Assemble the energy form and both mass forms."""
    if gamma <= 0:
        raise ConfigError(f"penalty parameter must be positive, got gamma={gamma}")
    mesh = dof.mesh
    fine = mesh.fine
    h = fine.h
    n = dof.n_dg
    cd = dof.cell_dofs
    kappa = field.values

    # volume stiffness and mass, closed-form per cell
    vol = (np.zeros(0), np.zeros(0), np.zeros(0))
    vol = ([], [], [])
    mass = ([], [], [])
    rows = np.repeat(cd, 4, axis=1)
    cols = np.tile(cd, (1, 4))
    _accumulate(vol, rows, cols, np.einsum("c,ab->cab", kappa, el.K_REF).reshape(-1, 16))
    _accumulate(mass, rows, cols,
                np.broadcast_to((h * h) * el.M_REF.reshape(1, 16), (cd.shape[0], 16)))

    # kappa~ mass from the stored Gauss values
    smat = ([], [], [])
    s_loc = np.einsum("cg,ga,gb->cab", sweight.values * (h * h / 4.0),
                      el.SHAPE_G, el.SHAPE_G)
    _accumulate(smat, rows, cols, s_loc.reshape(-1, 16))

    flux = ([], [], [])
    pen = ([], [], [])
    groups = _edge_groups(mesh)
    wq = h / 2.0

    def add_interior(cp, cm, eid, trace_p, trace_m, dcoeff):
        dofs_p, dofs_m = cd[cp], cd[cm]
        jd = np.concatenate([dofs_p[:, trace_p], dofs_m[:, trace_m]], axis=1)
        fd = np.concatenate([dofs_p, dofs_m], axis=1)
        kp, km = kappa[cp], kappa[cm]
        T = np.zeros((len(cp), 4, 8))
        P = np.zeros((4, 4))
        for t in el.GAUSS_1D:
            jc = np.array([1 - t, t, -(1 - t), -t])
            fc = dcoeff(t) / h
            ac = 0.5 * np.concatenate([kp[:, None] * fc, km[:, None] * fc], axis=1)
            T -= wq * jc[None, :, None] * ac[:, None, :]
            P += wq * np.outer(jc, jc)
        _accumulate(flux, np.repeat(jd, 8, axis=1), np.tile(fd, (1, 4)), T.reshape(-1, 32))
        _accumulate(flux, np.repeat(fd, 4, axis=1), np.tile(jd, (1, 8)),
                    T.transpose(0, 2, 1).reshape(-1, 32))
        pw = (gamma / h) * kbar[eid]
        _accumulate(pen, np.repeat(jd, 4, axis=1), np.tile(jd, (1, 4)),
                    pw[:, None] * P.reshape(1, 16))

    def add_boundary(cp, eid, trace, dcoeff, sign):
        dofs = cd[cp]
        jd = dofs[:, trace]
        k = kappa[cp]
        T = np.zeros((len(cp), 2, 4))
        P = np.zeros((2, 2))
        for t in el.GAUSS_1D:
            jc = np.array([1 - t, t])
            ac = sign * k[:, None] * (dcoeff(t) / h)
            T -= wq * jc[None, :, None] * ac[:, None, :]
            P += wq * np.outer(jc, jc)
        _accumulate(flux, np.repeat(jd, 4, axis=1), np.tile(dofs, (1, 2)), T.reshape(-1, 8))
        _accumulate(flux, np.repeat(dofs, 2, axis=1), np.tile(jd, (1, 4)),
                    T.transpose(0, 2, 1).reshape(-1, 8))
        pw = (gamma / h) * kbar[eid]
        _accumulate(pen, np.repeat(jd, 2, axis=1), np.tile(jd, (1, 2)),
                    pw[:, None] * P.reshape(1, 4))

    if "vert" in groups:
        cp, cm, eid = groups["vert"]
        add_interior(cp, cm, eid, [1, 2], [0, 3], _dx_coeff)
    if "horz" in groups:
        cp, cm, eid = groups["horz"]
        add_interior(cp, cm, eid, [3, 2], [0, 1], _dy_coeff)
    if "left" in groups:
        cp, _, eid = groups["left"]
        add_boundary(cp, eid, [0, 3], _dx_coeff, -1.0)
    if "right" in groups:
        cp, _, eid = groups["right"]
        add_boundary(cp, eid, [1, 2], _dx_coeff, +1.0)
    if "bottom" in groups:
        cp, _, eid = groups["bottom"]
        add_boundary(cp, eid, [0, 1], _dy_coeff, -1.0)
    if "top" in groups:
        cp, _, eid = groups["top"]
        add_boundary(cp, eid, [3, 2], _dy_coeff, +1.0)

    A_vol = _to_csr(vol, n)
    A_pen = _to_csr(pen, n)
    A = (A_vol + _to_csr(flux, n) + A_pen).tocsr()
    S = _to_csr(smat, n)
    M = _to_csr(mass, n)
    return AssembledForms(A, A_vol, A_pen, S, M, gamma, dof, field, kbar, sweight)


def gauss_cell_coords(mesh):
    """Physical coordinates of the 2x2 Gauss points, shape (n_cells, 4, 2)."""
    fine = mesh.fine
    h = fine.h
    cells = np.arange(fine.n_cells)
    ci, cj = cells % fine.nx, cells // fine.nx
    x = (ci[:, None] + el.GAUSS_2D[None, :, 0]) * h
    y = (cj[:, None] + el.GAUSS_2D[None, :, 1]) * h
    return np.stack([x, y], axis=2)


def assemble_load(f, dof):
    """Load vector of a source f(x, y) by 2x2 Gauss per cell."""
    mesh = dof.mesh
    h = mesh.fine.h
    xy = gauss_cell_coords(mesh)
    vals = np.asarray(f(xy[:, :, 0], xy[:, :, 1]), dtype=float)
    contrib = np.einsum("cg,ga->ca", vals * (h * h / 4.0), el.SHAPE_G)
    b = np.zeros(dof.n_dg)
    mask = dof.cell_dofs >= 0
    np.add.at(b, dof.cell_dofs[mask], contrib[mask])
    return b


def fine_solve(forms, b, method="direct", tol=1e-8):
    """Solve the assembled fine-scale system A u = b.

    The direct path refines towards 1e-12 relative residual; the
    acceptance gate `tol` leaves headroom for the rounding floor of
    strongly contrasted systems.
    """
    if method == "pcg":
        return solve_spd(forms.A, b, tol=tol)
    try:
        fac = SpdFactor(forms.A)
    except DefinitenessError as exc:
        raise CoercivityError(
            f"energy form is not positive definite at gamma={forms.gamma}: {exc}") from exc
    u = fac.solve(b, refine=4)
    bnorm = np.linalg.norm(b)
    if bnorm > 0:
        res = np.linalg.norm(forms.A @ u - b) / bnorm
        if res > tol:
            raise SolverError("fine solve missed tolerance", residual=res)
    return u


def compute_norms(v, forms):
    """Energy, DG, spectral and L2 norms of a DG coefficient vector."""
    v = np.asarray(v, dtype=float)
    q = v @ (forms.A @ v)
    scale = max((v @ v) * abs(forms.A.diagonal()).max(), np.finfo(float).tiny)
    if q < -1e-12 * scale:
        raise CoercivityError(
            f"negative energy {q:.3e} for a nonzero vector; penalty gamma={forms.gamma} too small")
    dg2 = v @ (forms.A_vol @ v) + v @ (forms.A_pen @ v)
    return {
        "energy": np.sqrt(max(q, 0.0)),
        "dg": np.sqrt(max(dg2, 0.0)),
        "s": np.sqrt(max(v @ (forms.S @ v), 0.0)),
        "l2": np.sqrt(max(v @ (forms.M @ v), 0.0)),
    }


def embed_continuous(dof, nodal):
    """Lift fine-grid nodal values into the DG space (all copies equal)."""
    return np.asarray(nodal, dtype=float)[dof.dof_node]


def dg_node_average(dof, v):
    """Fine-grid nodal field from a DG vector, averaging duplicates."""
    n_nodes = dof.mesh.fine.n_nodes
    sums = np.bincount(dof.dof_node, weights=v, minlength=n_nodes)
    counts = np.bincount(dof.dof_node, minlength=n_nodes)
    return sums / np.maximum(counts, 1)
