"""Sparse and dense numerical kernels.

Matrices are scipy CSR/CSC throughout; dense work uses numpy.  Direct
factorizations go through CHOLMOD (via cvxopt) when available, with a
SuperLU fallback: supernodal Cholesky for SPD systems (which doubles
as a definiteness check) and simplicial LDL for the quasi-definite
saddle systems of the basis construction, polished by iterative
refinement against the unregularized system.
"""

import threading

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DefinitenessError, RankError, SolverError

try:
    from cvxopt import cholmod as _cholmod
    from cvxopt import matrix as _cvxmat
    from cvxopt import spmatrix as _cvxsp
    HAVE_CHOLMOD = True
except ImportError:  # pragma: no cover - cvxopt is a declared dependency
    HAVE_CHOLMOD = False

# cvxopt.cholmod configuration is process-global; serialize factorizations.
_cholmod_lock = threading.Lock()


def max_abs(A):
    if sp.issparse(A):
        return abs(A).max() if A.nnz else 0.0
    return float(np.max(np.abs(A))) if A.size else 0.0


def symmetry_defect(A):
    """max|A - A^T| relative to max|A|."""
    scale = max_abs(A)
    if scale == 0.0:
        return 0.0
    if sp.issparse(A):
        return abs(A - A.T).max() / scale
    return float(np.max(np.abs(A - A.T))) / scale


def solve_spd(A, b, tol=1e-10, max_iter=None):
    """Jacobi-preconditioned conjugate gradients for SPD systems.

    Returns x with ||Ax - b|| <= tol * ||b||; raises SolverError with the
    final relative residual when max_iter is exhausted.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = 20 * n
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    d = A.diagonal()
    if np.any(d <= 0):
        raise DefinitenessError("matrix has a nonpositive diagonal entry; not SPD")
    x = np.zeros(n)
    r = b.copy()
    z = r / d
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise DefinitenessError("nonpositive curvature encountered; matrix not SPD")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = r / d
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol * bnorm:
        return x
    raise SolverError("conjugate gradients did not converge",
                      residual=np.linalg.norm(r) / bnorm)


def dense_generalized_eig(A, S):
    """Solve A v = lambda S v for symmetric A (PSD) and SPD S.

    Eigenvalues come back ascending; eigenvectors are S-orthonormal.
    """
    A = np.asarray(A, dtype=float)
    S = np.asarray(S, dtype=float)
    if A.shape != S.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"shape mismatch: A {A.shape}, S {S.shape}")
    if symmetry_defect(A) > 1e-12 or symmetry_defect(S) > 1e-12:
        raise ValueError("matrices must be symmetric")
    try:
        w, V = scipy.linalg.eigh(A, S)
    except scipy.linalg.LinAlgError as exc:
        raise DefinitenessError(f"mass matrix is not positive definite: {exc}") from exc
    return w, V


def _to_cvx_lower(K):
    Kl = sp.tril(sp.csc_matrix(K)).tocoo()
    return _cvxsp(_cvxmat(Kl.data), _cvxmat(Kl.row.astype(int)),
                  _cvxmat(Kl.col.astype(int)), K.shape)


class _CholmodFactor:
    def __init__(self, K, supernodal):
        Kc = _to_cvx_lower(K)
        with _cholmod_lock:
            prev = _cholmod.options.get("supernodal")
            _cholmod.options["supernodal"] = supernodal
            try:
                self._F = _cholmod.symbolic(Kc)
                _cholmod.numeric(Kc, self._F)
            finally:
                if prev is None:
                    _cholmod.options.pop("supernodal", None)
                else:
                    _cholmod.options["supernodal"] = prev

    def solve(self, B):
        B = np.asarray(B, dtype=float)
        one_d = B.ndim == 1
        Bc = _cvxmat(B.reshape(B.shape[0], -1))
        _cholmod.solve(self._F, Bc)
        X = np.array(Bc).reshape(B.shape[0], -1)
        return X.ravel() if one_d else X


class SpdFactor:
    """Direct factorization of a sparse SPD matrix; solve many RHS cheaply.

    Factorization failure signals loss of positive definiteness.
    """

    def __init__(self, A):
        self.A = sp.csr_matrix(A)
        if HAVE_CHOLMOD:
            try:
                self._f = _CholmodFactor(self.A, supernodal=2)
            except ArithmeticError as exc:
                raise DefinitenessError(f"Cholesky factorization failed: {exc}") from exc
        else:  # pragma: no cover
            if np.any(self.A.diagonal() <= 0):
                raise DefinitenessError("nonpositive diagonal entry; not SPD")
            self._f = spla.splu(self.A.tocsc())

    def solve(self, b, refine=0, rtol=1e-12):
        x = self._f.solve(b)
        bnorm = np.linalg.norm(b)
        prev = np.inf
        for _ in range(refine):
            r = b - self.A @ x
            rn = np.linalg.norm(r)
            if rn <= rtol * bnorm or rn >= 0.5 * prev:
                break
            prev = rn
            x = x + self._f.solve(r)
        return x


class SaddleFactor:
    """Factor the saddle system [[A, C^T], [C, -d*I]] once, solve many RHS.

    A must be SPD and C full row rank.  For d = 0 a small diagonal
    regularization makes the factored matrix quasi-definite; iterative
    refinement against the exact system removes the perturbation.  For
    d > 0 the system is quasi-definite as is.
    """

    def __init__(self, A, C, d=0.0):
        self.A = sp.csr_matrix(A)
        self.C = sp.csr_matrix(C)
        self.n = self.A.shape[0]
        self.k = self.C.shape[0]
        self.d = float(d)
        if self.k == 0:
            raise ValueError("saddle system needs at least one constraint row")
        row_norms2 = np.asarray(self.C.multiply(self.C).sum(axis=1)).ravel()
        a_scale = max(self.A.diagonal().max(), np.finfo(float).tiny)
        if self.d > 0.0:
            self._reg = 0.0
        else:
            self._reg = 1e-8 * max(np.median(row_norms2) / a_scale, 1e-30)
        bottom = -(self.d + self._reg) * sp.identity(self.k, format="csr")
        K = sp.bmat([[self.A, self.C.T], [self.C, bottom]], format="csc")
        if HAVE_CHOLMOD:
            try:
                self._f = _CholmodFactor(K, supernodal=0)
            except ArithmeticError as exc:
                raise RankError(f"saddle factorization failed: {exc}") from exc
        else:  # pragma: no cover
            try:
                self._f = spla.splu(K)
            except RuntimeError as exc:
                raise RankError(f"saddle factorization failed: {exc}") from exc

    def _apply_exact(self, X):
        """Matvec with the exact (unregularized) saddle matrix."""
        x, mu = X[:self.n], X[self.n:]
        top = self.A @ x + self.C.T @ mu
        bot = self.C @ x - self.d * mu
        return np.concatenate([top, bot], axis=0)

    def solve(self, rhs, refine=4, rtol=1e-13):
        """Solve against the exact system; raises RankError on stagnation."""
        rhs = np.asarray(rhs, dtype=float)
        rnorm0 = np.linalg.norm(rhs)
        if rnorm0 == 0.0:
            return np.zeros_like(rhs)
        x = self._f.solve(rhs)
        best = None
        for _ in range(refine):
            r = rhs - self._apply_exact(x)
            rn = np.linalg.norm(r)
            if rn <= rtol * rnorm0:
                return x
            if best is not None and rn >= 0.5 * best:
                break
            best = rn
            x = x + self._f.solve(r)
        r = rhs - self._apply_exact(x)
        if np.linalg.norm(r) > 1e-8 * rnorm0:
            raise RankError(
                "saddle solve stagnated (residual "
                f"{np.linalg.norm(r) / rnorm0:.2e}); constraints may be redundant")
        return x

    def solve_many(self, RHS, refine=4, rtol=1e-13):
        return np.stack([self.solve(RHS[:, j], refine, rtol) for j in range(RHS.shape[1])], axis=1)


def solve_symmetric_indefinite(K, b):
    """Direct solve of a symmetric (possibly indefinite) system.

    Small systems are eliminated densely; larger ones go through a
    pivoted sparse LU.  Both paths are polished by iterative refinement
    and must reach ||Kx - b|| <= 1e-10 ||b||, else RankError.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    if n < 2000:
        Kd = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
        try:
            lu, piv = scipy.linalg.lu_factor(Kd)
        except scipy.linalg.LinAlgError as exc:
            raise RankError(f"dense factorization failed: {exc}") from exc
        if np.any(np.abs(np.diag(lu)) < 1e-14 * max_abs(Kd)):
            raise RankError("matrix is singular or near-singular")
        x = scipy.linalg.lu_solve((lu, piv), b)
        solve = lambda r: scipy.linalg.lu_solve((lu, piv), r)
        matvec = lambda v: Kd @ v
    else:
        try:
            f = spla.splu(sp.csc_matrix(K))
        except RuntimeError as exc:
            raise RankError(f"sparse factorization failed: {exc}") from exc
        x = f.solve(b)
        solve = f.solve
        matvec = lambda v: K @ v
    for _ in range(3):
        r = b - matvec(x)
        if np.linalg.norm(r) <= 1e-12 * bnorm:
            break
        x = x + solve(r)
    if not np.all(np.isfinite(x)) or np.linalg.norm(b - matvec(x)) > 1e-10 * bnorm:
        raise RankError("symmetric-indefinite solve did not reach tolerance; "
                        "system is likely singular")
    return x


def spectral_radius(A, M_factor, iters=200, tol=1e-8, seed=0):
    """Power-iteration estimate of the largest eigenvalue of M^-1 A."""
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = M_factor.solve(A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        w /= nw
        lam_new = w @ (M_factor.solve(A @ w))
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
        v = w
    return lam
