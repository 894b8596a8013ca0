"""Coarse-scale Galerkin solves, error reports and study loops.

Errors are reported relative to the fine-scale DG solution, in percent,
alongside the spectral gap and the a-priori bound
gap^(-1/2) * || f / sqrt(spectral weight) ||_L2.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import aux_spectral, cem_basis, dg_assembly, msfem_pou, perm_field
from .errors import ConfigError, RankError
from .grids import build_mesh_hierarchy


def default_source(x, y):
    """Unit-amplitude smooth source: 2 pi^2 sin(pi x) sin(pi y)."""
    return 2.0 * math.pi ** 2 * np.sin(math.pi * x) * np.sin(math.pi * y)


@dataclass
class ErrorReport:
    energy_pct: float
    l2_pct: float
    lam: float
    lemma_bound: float

    def summary(self):
        return (f"energy {self.energy_pct:.4f}%  L2 {self.l2_pct:.4f}%  "
                f"gap {self.lam:.4e}  bound {self.lemma_bound:.4e}")


def coarse_solve(space, forms, b):
    """Galerkin solution in the multiscale space, lifted to DG coefficients."""
    G = space.gram if space.gram is not None else cem_basis.reduced_matrix(space.R, forms.A)
    try:
        cho = scipy.linalg.cho_factor(G)
    except scipy.linalg.LinAlgError as exc:
        raise RankError(f"reduced system is not positive definite: {exc}") from exc
    rhs = space.R.T @ b
    x = scipy.linalg.cho_solve(cho, rhs)
    # one refinement pass tightens Galerkin orthogonality at high contrast
    x += scipy.linalg.cho_solve(cho, rhs - G @ x)
    return space.R @ x


def weighted_source_norm(forms, f):
    """|| f / sqrt(spectral weight) ||_L2 over the domain by 2x2 Gauss."""
    mesh = forms.mesh
    xy = dg_assembly.gauss_cell_coords(mesh)
    vals = np.asarray(f(xy[:, :, 0], xy[:, :, 1]), dtype=float)
    w = forms.sweight.values
    h = mesh.fine.h
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(w > 0, vals * vals / w, np.where(vals == 0, 0.0, np.inf))
    return float(np.sqrt((h * h / 4.0) * integrand.sum()))


def error_report(u_h, u_ms, forms, f=None, aux=None):
    """Relative errors of the reduced solution against the fine one."""
    diff = np.asarray(u_h) - np.asarray(u_ms)
    ref = dg_assembly.compute_norms(u_h, forms)
    dn = dg_assembly.compute_norms(diff, forms)
    energy_pct = 100.0 * dn["energy"] / ref["energy"] if ref["energy"] > 0 else 0.0
    l2_pct = 100.0 * dn["l2"] / ref["l2"] if ref["l2"] > 0 else 0.0
    lam = aux.lam if aux is not None else float("nan")
    bound = float("nan")
    if f is not None and aux is not None and aux.lam > 0:
        bound = weighted_source_norm(forms, f) / math.sqrt(aux.lam)
    return ErrorReport(energy_pct, l2_pct, lam, bound)


def table1_m(H):
    """Oversampling layers for a given coarse size: ceil(4 log10(1/H))."""
    return max(1, math.ceil(4.0 * math.log10(1.0 / H) - 1e-12))


def setup_case(nx, Nx, field, gamma=4.0, pou_kind="msfem"):
    """Mesh, forms and fine solve shared by the study loops."""
    mesh = build_mesh_hierarchy(nx, Nx)
    if callable(field):
        field = field(mesh)
    pou = msfem_pou.build_pou(pou_kind, field, mesh)
    sw = msfem_pou.build_s_weight(pou, field)
    kbar = perm_field.edge_kappa_bar(field, mesh.coarse)
    dof = dg_assembly.build_dof_map(mesh)
    forms = dg_assembly.assemble_forms(field, kbar, sw, dof, gamma)
    return mesh, field, forms


def solve_case(forms, f, levels, method, m, threads=1, aux=None, u_h=None, b=None):
    """One complete reduced solve; returns everything a report needs."""
    if b is None:
        b = dg_assembly.assemble_load(f, forms.dof)
    if u_h is None:
        u_h = dg_assembly.fine_solve(forms, b)
    if aux is None:
        aux = aux_spectral.build_aux_space(forms, levels=levels)
    space = cem_basis.build_space(forms, aux, m, method=method, threads=threads)
    u_ms = coarse_solve(space, forms, b)
    report = error_report(u_h, u_ms, forms, f=f, aux=aux)
    return {"b": b, "u_h": u_h, "aux": aux, "space": space, "u_ms": u_ms,
            "report": report}


@dataclass
class ConvergenceConfig:
    nx: int
    Nx_list: list
    m_list: list = None          # None: table1_m rule per H
    levels: int = 3
    gamma: float = 4.0
    pou: str = "msfem"
    method: str = "lagrange"
    contrast: float = 1.0e4
    seed: int = 0
    threads: int = 1
    source: callable = None

    def __post_init__(self):
        if not self.Nx_list:
            raise ConfigError("convergence study needs a nonempty Nx list")
        if self.m_list is not None and len(self.m_list) != len(self.Nx_list):
            raise ConfigError("m list and Nx list must have equal length")


def convergence_study(cfg, field_builder=None):
    """Error rows over a sequence of coarse sizes; field fixed across rows."""
    f = cfg.source or default_source
    if field_builder is None:
        spec = perm_field.experiment1_field_spec(cfg.nx, seed=cfg.seed, value=cfg.contrast)
        field_builder = lambda mesh: perm_field.generate_field(spec, mesh.fine)
    rows = []
    for idx, Nx in enumerate(cfg.Nx_list):
        mesh, fld, forms = setup_case(cfg.nx, Nx, field_builder, cfg.gamma, cfg.pou)
        m = cfg.m_list[idx] if cfg.m_list is not None else table1_m(mesh.coarse.H)
        out = solve_case(forms, f, cfg.levels, cfg.method, m, threads=cfg.threads)
        rep = out["report"]
        rows.append({"H": mesh.coarse.H, "m": m, "method": cfg.method,
                     "contrast": cfg.contrast, "energy_err_pct": rep.energy_pct,
                     "l2_err_pct": rep.l2_pct, "lambda": rep.lam,
                     "lemma1_bound": rep.lemma_bound})
    return rows


@dataclass
class ContrastConfig:
    nx: int
    Nx: int
    m: int
    contrasts: list = field(default_factory=lambda: [1e4, 1e5, 1e6, 1e7, 1e8])
    methods: tuple = ("lagrange", "relaxed")
    levels: int = 3
    gamma: float = 4.0
    pou: str = "msfem"
    seed: int = 0
    threads: int = 1
    source: callable = None


def contrast_study(cfg):
    """Paired method rows per contrast value on the seeded analog field."""
    f = cfg.source or default_source
    rows = []
    for kappa1 in cfg.contrasts:
        spec = perm_field.experiment1_field_spec(cfg.nx, seed=cfg.seed, value=kappa1)
        mesh, fld, forms = setup_case(
            cfg.nx, cfg.Nx, lambda mesh: perm_field.generate_field(spec, mesh.fine),
            cfg.gamma, cfg.pou)
        b = dg_assembly.assemble_load(f, forms.dof)
        u_h = dg_assembly.fine_solve(forms, b)
        aux = aux_spectral.build_aux_space(forms, levels=cfg.levels)
        for method in cfg.methods:
            out = solve_case(forms, f, cfg.levels, method, cfg.m,
                             threads=cfg.threads, aux=aux, u_h=u_h, b=b)
            rep = out["report"]
            rows.append({"H": mesh.coarse.H, "m": cfg.m, "method": method,
                         "contrast": kappa1, "energy_err_pct": rep.energy_pct,
                         "l2_err_pct": rep.l2_pct, "lambda": rep.lam,
                         "lemma1_bound": rep.lemma_bound})
    return rows


CSV_HEADER = "H,m,method,contrast,energy_err_pct,l2_err_pct,lambda,lemma1_bound"


def write_study_csv(rows, path):
    """Fixed-format CSV; identical inputs produce identical bytes."""
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(f"{r['H']:.10g},{r['m']},{r['method']},{r['contrast']:.10g},"
                     f"{r['energy_err_pct']:.10e},{r['l2_err_pct']:.10e},"
                     f"{r['lambda']:.10e},{r['lemma1_bound']:.10e}\n")
