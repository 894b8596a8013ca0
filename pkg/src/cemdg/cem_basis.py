"""Multiscale basis functions by constrained energy minimization.

Every auxiliary function fixes one basis function: minimize the DG
energy subject to unit pairing with that auxiliary function and zero
pairing with every other one.  The global variant minimizes over the
whole space; the localized variant restricts to an oversampled block
region with zero trace on its boundary; the relaxed variant replaces
the hard constraints by a quadratic penalty on the projection mismatch.

Both constrained variants reduce to sparse quasi-definite saddle
systems: [[A, C^T], [C, 0]] for the hard constraints and
[[A, C^T], [C, -I]] for the relaxed ones (eliminating the auxiliary
block of the latter recovers (A + C^T C) psi = C^T e exactly).  One
factorization per block region serves all of its basis functions.
"""

import multiprocessing

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, RankError
from .grids import oversample_region
from .linalg import SaddleFactor


class MultiscaleSpace:
    """Matrix of multiscale basis vectors with per-column metadata."""

    def __init__(self, R, col_block, col_j, method, m, gram=None):
        self.R = R                    # csc, n_dg x n_ms
        self.col_block = col_block
        self.col_j = col_j
        self.method = method
        self.m = m
        self.gram = gram              # R^T A R, set at assembly

    @property
    def n_ms(self):
        return self.R.shape[1]


def patch_dofs(dof, region):
    """DG indices inside the region, excluding its boundary trace."""
    idx = np.concatenate([dof.block_dofs(b) for b in region.block_ids])
    inner = region.interior_node_mask(dof.dof_node[idx])
    return idx[inner]


def _patch_system(forms, aux, region, method):
    P = patch_dofs(forms.dof, region)
    rows = np.flatnonzero(np.isin(aux.row_block, region.block_ids))
    A_P = forms.A[P][:, P]
    C_P = aux.C[rows][:, P]
    d = 1.0 if method == "relaxed" else 0.0
    return P, rows, SaddleFactor(A_P, C_P, d=d)


def _solve_columns(forms, aux, region, method, pairs, factor_cache=None):
    """Sparse basis columns (indices, values) for pairs sharing one region."""
    key = (region.block_rect, method)
    if factor_cache is not None and key in factor_cache:
        P, rows, sf = factor_cache[key]
    else:
        P, rows, sf = _patch_system(forms, aux, region, method)
        if factor_cache is not None:
            factor_cache[key] = (P, rows, sf)
    nP = P.size
    cols = []
    for (i, j) in pairs:
        target = aux.row_index(i, j)
        pos = np.searchsorted(rows, target)
        if pos >= rows.size or rows[pos] != target:
            raise ConfigError(f"auxiliary function ({i},{j}) not inside its own region")
        rhs = np.zeros(nP + rows.size)
        rhs[nP + pos] = 1.0
        try:
            y = sf.solve(rhs)
        except RankError as exc:
            raise RankError(
                f"degenerate constraints for basis (block {i}, j {j + 1}, "
                f"m {region.m}): {exc}") from exc
        cols.append((P, y[:nP].copy()))
    return cols


def _densify(forms, sparse_col):
    P, vals = sparse_col
    col = np.zeros(forms.n_dg)
    col[P] = vals
    return col


class GlobalBasisSolver:
    """Factor the full-domain saddle system once; one solve per column."""

    def __init__(self, forms, aux):
        self.forms = forms
        self.aux = aux
        self.sf = SaddleFactor(forms.A, aux.C, d=0.0)

    def column(self, i, j):
        rhs = np.zeros(self.forms.n_dg + self.aux.n_aux)
        rhs[self.forms.n_dg + self.aux.row_index(i, j)] = 1.0
        y = self.sf.solve(rhs)
        return y[:self.forms.n_dg]


def build_global_basis(i, j, forms, aux):
    """One energy-minimizing basis vector constrained on the whole domain."""
    return GlobalBasisSolver(forms, aux).column(i, j)


def build_localized_basis(i, j, m, forms, aux, region=None):
    """Localized basis vector supported on the m-layer region of block i."""
    if m < 1:
        raise ConfigError(f"localized basis needs m >= 1, got m={m}")
    if region is None:
        region = oversample_region(forms.mesh.coarse, i, m)
    return _densify(forms, _solve_columns(forms, aux, region, "lagrange", [(i, j)])[0])


def build_relaxed_basis(i, j, m, forms, aux, region=None):
    """Penalty-constrained variant of the localized basis vector."""
    if m < 1:
        raise ConfigError(f"relaxed basis needs m >= 1, got m={m}")
    if region is None:
        region = oversample_region(forms.mesh.coarse, i, m)
    return _densify(forms, _solve_columns(forms, aux, region, "relaxed", [(i, j)])[0])


# worker state for fork-based pools, set before the pool is created
_POOL_STATE = {}


def _pool_block(args):
    b, m, method = args
    forms = _POOL_STATE["forms"]
    aux = _POOL_STATE["aux"]
    region = oversample_region(forms.mesh.coarse, b, m)
    pairs = [(b, j) for j in range(aux.counts[b])]
    return _solve_columns(forms, aux, region, method, pairs)


def build_space(forms, aux, m, method="lagrange", threads=1):
    """All localized (or global) basis functions as a MultiscaleSpace."""
    if method not in ("lagrange", "relaxed", "global"):
        raise ConfigError(f"unknown basis method {method!r}")
    coarse = forms.mesh.coarse
    N = coarse.N
    col_block = np.repeat(np.arange(N), aux.counts)
    col_j = (np.concatenate([np.arange(c) for c in aux.counts])
             if aux.n_aux else np.zeros(0, int))
    if method == "global":
        solver = GlobalBasisSolver(forms, aux)
        sparse_cols = [(np.arange(forms.n_dg), solver.column(b, j))
                       for b, j in zip(col_block, col_j)]
    else:
        work = [(b, m, method) for b in range(N) if aux.counts[b]]
        if threads > 1:
            _POOL_STATE.update(forms=forms, aux=aux)
            try:
                ctx = multiprocessing.get_context("fork")
                with ctx.Pool(threads) as pool:
                    per_block = pool.map(_pool_block, work)
            finally:
                _POOL_STATE.clear()
        else:
            cache = {}
            per_block = []
            for b, _, _ in work:
                region = oversample_region(coarse, b, m)
                pairs = [(b, j) for j in range(aux.counts[b])]
                per_block.append(_solve_columns(forms, aux, region, method, pairs, cache))
        sparse_cols = [c for cols in per_block for c in cols]
    R = _stack_columns(sparse_cols, forms.n_dg)
    return _finish_space(R, forms, col_block, col_j, method, m)


def _stack_columns(sparse_cols, n_dg):
    indptr = np.concatenate([[0], np.cumsum([p.size for p, _ in sparse_cols])])
    indices = np.concatenate([p for p, _ in sparse_cols])
    data = np.concatenate([v for _, v in sparse_cols])
    return sp.csc_matrix((data, indices, indptr), shape=(n_dg, len(sparse_cols)))


def assemble_multiscale_space(columns, forms, col_block=None, col_j=None,
                              method="lagrange", m=None):
    """Stack dense basis columns and verify full rank (test-scale sizes)."""
    n_ms = len(columns)
    if n_ms == 0:
        raise ConfigError("multiscale space needs at least one basis vector")
    R = sp.csc_matrix(np.stack([np.asarray(c, dtype=float) for c in columns], axis=1))
    if col_block is None:
        col_block = np.zeros(n_ms, dtype=int)
    if col_j is None:
        col_j = np.arange(n_ms)
    return _finish_space(R, forms, np.asarray(col_block), np.asarray(col_j), method, m)


def _finish_space(R, forms, col_block, col_j, method, m):
    gram = reduced_matrix(R, forms.A)
    try:
        np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(gram)
        bad = []
        for k in np.flatnonzero(w <= 1e-12 * max(w.max(), 1.0)):
            load = np.argsort(-np.abs(V[:, k]))[:3]
            bad.append("{" + ", ".join(
                f"(block {col_block[c]}, j {col_j[c] + 1})" for c in load) + "}")
        raise RankError("multiscale space is rank deficient; near-dependent "
                        "column groups: " + "; ".join(bad))
    return MultiscaleSpace(R, col_block, col_j, method, m, gram)


def reduced_matrix(R, Mat, chunk=512):
    """Dense R^T Mat R computed in column chunks to bound memory."""
    n_ms = R.shape[1]
    G = np.empty((n_ms, n_ms))
    RT = R.T.tocsr()
    for c0 in range(0, n_ms, chunk):
        c1 = min(c0 + chunk, n_ms)
        G[:, c0:c1] = (RT @ (Mat @ R[:, c0:c1])).toarray()
    return 0.5 * (G + G.T)
