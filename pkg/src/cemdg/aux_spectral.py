"""Per-block generalized eigenproblems and the auxiliary space.

Each coarse block solves  (kappa-stiffness) phi = lambda (kappa~-mass) phi
on its own degrees of freedom; the lowest modes span the local
auxiliary space.  Eigenvectors are normalized against the spectral
mass, so the projection onto the auxiliary space has unit weights and
the orthogonality constraints have unit right-hand sides.  The first
discarded eigenvalue, minimized over blocks, is the convergence
diagnostic reported with every run.
"""

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import ConfigError, DefinitenessError


class AuxBasis:
    """Selected eigenpairs of all blocks plus the spectral gap.

    Phi stacks the (zero-extended) eigenvectors as columns, block by
    block; C = (S Phi)^T holds one constraint row per auxiliary
    function.
    """

    def __init__(self, counts, eigvals, Phi, C, row_block, row_j, lam):
        self.counts = counts          # L_i per block
        self.eigvals = eigvals        # per block, the computed eigenvalues
        self.Phi = Phi                # csc, n_dg x n_aux
        self.C = C                    # csr, n_aux x n_dg
        self.row_block = row_block
        self.row_j = row_j
        self.lam = lam                # min over blocks of the first discarded eigenvalue
        self.offsets = np.concatenate([[0], np.cumsum(counts)])

    @property
    def n_aux(self):
        return int(self.offsets[-1])

    def rows_of_block(self, b):
        return np.arange(self.offsets[b], self.offsets[b + 1])

    def row_index(self, b, j):
        if not 0 <= j < self.counts[b]:
            raise IndexError(f"block {b} has {self.counts[b]} auxiliary functions, asked for {j}")
        return int(self.offsets[b]) + j


def block_matrices(forms, b):
    """Dense local stiffness and spectral mass of block b."""
    s, e = forms.dof.block_start[b], forms.dof.block_start[b + 1]
    A_b = forms.A_vol[s:e, s:e].toarray()
    S_b = forms.S[s:e, s:e].toarray()
    return A_b, S_b


def solve_local_spectral(b, forms, count=None):
    """Lowest eigenpairs of block b, ascending, S-orthonormal."""
    A_b, S_b = block_matrices(forms, b)
    dim = A_b.shape[0]
    if count is None:
        count = dim
    count = min(count, dim)
    try:
        if count == dim:
            w, V = scipy.linalg.eigh(A_b, S_b)
        else:
            w, V = scipy.linalg.eigh(A_b, S_b, subset_by_index=(0, count - 1))
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise DefinitenessError(
            f"spectral mass of block {b} is not positive definite "
            f"(degenerate partition-of-unity weight?): {exc}") from exc
    return w, V


THRESHOLD_SOLVE_CAP = 64


def build_aux_space(forms, levels=None, threshold=None):
    """Select per-block auxiliary functions by count or eigenvalue threshold.

    Exactly one of levels/threshold must be given.  One extra
    eigenvalue beyond the selection is always computed so the spectral
    gap is available.
    """
    if (levels is None) == (threshold is None):
        raise ConfigError("specify exactly one of levels= or threshold=")
    dof = forms.dof
    N = dof.mesh.coarse.N
    counts = np.zeros(N, dtype=int)
    eigvals = []
    cols = []
    lam = np.inf
    for b in range(N):
        dim = dof.block_start[b + 1] - dof.block_start[b]
        if levels is not None:
            if levels < 0 or levels + 1 > dim:
                raise ConfigError(
                    f"block {b}: cannot select {levels} of {dim} local functions "
                    "and keep a discarded eigenvalue")
            w, V = solve_local_spectral(b, forms, count=levels + 1)
            L = levels
        else:
            w, V = solve_local_spectral(b, forms, count=min(THRESHOLD_SOLVE_CAP + 1, dim))
            L = int(np.searchsorted(w, threshold))
            if L >= w.size:
                raise ConfigError(
                    f"block {b}: threshold {threshold} exceeds all {w.size} computed eigenvalues")
        counts[b] = L
        eigvals.append(w)
        lam = min(lam, w[L])
        cols.append(V[:, :L])
    n_aux = int(counts.sum())
    rows_i, cols_i, vals = [], [], []
    row_block = np.repeat(np.arange(N), counts)
    row_j = np.concatenate([np.arange(c) for c in counts]) if n_aux else np.zeros(0, int)
    col0 = 0
    for b in range(N):
        s, e = dof.block_start[b], dof.block_start[b + 1]
        L = counts[b]
        if L:
            rows_i.append(np.tile(np.arange(s, e), L))
            cols_i.append(np.repeat(col0 + np.arange(L), e - s))
            vals.append(cols[b].T.ravel())
        col0 += L
    if n_aux:
        Phi = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows_i), np.concatenate(cols_i))),
            shape=(dof.n_dg, n_aux)).tocsc()
    else:
        Phi = sp.csc_matrix((dof.n_dg, 0))
    C = (forms.S @ Phi).T.tocsr()
    return AuxBasis(counts, eigvals, Phi, C, row_block, row_j, lam)


def apply_pi(v, aux):
    """Project onto the auxiliary space: coefficients and lifted vector."""
    c = aux.C @ np.asarray(v, dtype=float)
    return c, aux.Phi @ c


def dump_eigs_csv(aux, path):
    """Per-block eigenvalue list as CSV (block id, index, eigenvalue)."""
    with open(path, "w") as fh:
        fh.write("block,j,lambda\n")
        for b, w in enumerate(aux.eigvals):
            for j, lam in enumerate(w):
                fh.write(f"{b},{j + 1},{lam:.12e}\n")
