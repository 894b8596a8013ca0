"""Leapfrog time stepping for the heterogeneous wave equation.

The second-order central-difference scheme advances either the fine DG
coefficients or the reduced coordinates of a multiscale space, with the
consistent mass on the left:  M (u^{n+1} - 2 u^n + u^{n-1}) =
dt^2 (F^n - A u^n).  A quiescent start (u^0 = u^1 = 0) is the default.
The driving pulse is a Ricker wavelet in time carried by a narrow
Gaussian in space; the spatial exponent is negative so the pulse
decays away from its center.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import cem_basis, dg_assembly
from .errors import ConfigError, StabilityError
from .linalg import SpdFactor, spectral_radius


@dataclass
class WaveConfig:
    t_final: float = 0.2
    dt: float = 1.0e-4
    f0: float = 20.0
    snapshot_stride: int = 0        # 0 disables snapshots
    mass_lumping: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"time step must be positive, got {self.dt}")
        if self.t_final < self.dt:
            raise ConfigError(f"final time {self.t_final} is below one step {self.dt}")
        if self.f0 <= 0:
            raise ConfigError(f"central frequency must be positive, got {self.f0}")

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))


def ricker_source(t, x, y, f0, h):
    """Ricker pulse in time, Gaussian of width ~2h in space."""
    ts = t - 2.0 / f0
    r2 = (np.asarray(x) - 0.5) ** 2 + (np.asarray(y) - 0.5) ** 2
    return (ts / (4.0 * h * h)) * np.exp(-np.pi ** 2 * f0 ** 2 * ts * ts) \
        * np.exp(-r2 / (4.0 * h * h))


class RickerSource:
    """Separable Ricker pulse; the split form lets the load be prebuilt."""

    def __init__(self, f0, h, center=(0.5, 0.5)):
        self.f0 = f0
        self.h = h
        self.center = center

    def time_part(self, t):
        ts = t - 2.0 / self.f0
        return (ts / (4.0 * self.h ** 2)) * np.exp(-np.pi ** 2 * self.f0 ** 2 * ts * ts)

    def space_part(self, x, y):
        r2 = (np.asarray(x) - self.center[0]) ** 2 + (np.asarray(y) - self.center[1]) ** 2
        return np.exp(-r2 / (4.0 * self.h ** 2))

    def __call__(self, t, x, y):
        return self.time_part(t) * self.space_part(x, y)


@dataclass
class WaveResult:
    u_prev: np.ndarray              # second-to-last state
    u_final: np.ndarray             # state at t_final
    snapshots: list = field(default_factory=list)
    seismogram: np.ndarray = None   # (n_steps + 1, n_receivers)
    reduced: bool = False


def _mass_operator(forms, config):
    if config.mass_lumping:
        d = np.asarray(forms.M.sum(axis=1)).ravel()
        return sp.diags(d).tocsr()
    return forms.M


def max_stable_dt(forms, space=None, config=None):
    """Stability limit dt <= 2 / sqrt(rho(M^-1 A)) by power iteration."""
    config = config or WaveConfig()
    M = _mass_operator(forms, config)
    if space is None:
        rho = spectral_radius(forms.A, SpdFactor(M))
    else:
        A_eff = space.gram
        M_eff = cem_basis.reduced_matrix(space.R, M)
        w = scipy.linalg.eigh(A_eff, M_eff, eigvals_only=True,
                              subset_by_index=(A_eff.shape[0] - 1, A_eff.shape[0] - 1))
        rho = w[0]
    return 2.0 / np.sqrt(rho) if rho > 0 else np.inf


def evaluate_nodal(mesh, nodal, points):
    """Bilinear point evaluation of a fine-grid nodal field."""
    fine = mesh.fine
    h = fine.h
    out = np.empty(len(points))
    for k, (x, y) in enumerate(points):
        ci = min(max(int(x / h), 0), fine.nx - 1)
        cj = min(max(int(y / h), 0), fine.ny - 1)
        xr, yr = x / h - ci, y / h - cj
        nodes = fine.cell_nodes(fine.cell_id(ci, cj))
        shp = np.array([(1 - xr) * (1 - yr), xr * (1 - yr), xr * yr, (1 - xr) * yr])
        out[k] = shp @ nodal[nodes]
    return out


def leapfrog_run(forms, config, source, space=None, initial=None, receivers=None):
    """March the wave to t_final; fine space when `space` is None.

    `initial` optionally supplies (u^0, u^1) coefficient vectors in the
    active space; `source` may be None for free evolution.
    """
    dof = forms.dof
    mesh = forms.mesh
    M = _mass_operator(forms, config)
    if space is None:
        n = forms.n_dg
        A_apply = lambda u: forms.A @ u
        m_fac = SpdFactor(M)
        m_solve = m_fac.solve
        lift = lambda u: u
    else:
        n = space.n_ms
        A_eff = space.gram
        M_eff = cem_basis.reduced_matrix(space.R, M)
        cho = scipy.linalg.cho_factor(M_eff)
        A_apply = lambda u: A_eff @ u
        m_solve = lambda r: scipy.linalg.cho_solve(cho, r)
        lift = lambda u: space.R @ u

    if source is None:
        b_space = None
        time_part = None
    elif hasattr(source, "time_part") and hasattr(source, "space_part"):
        b_space = dg_assembly.assemble_load(source.space_part, dof)
        if space is not None:
            b_space = space.R.T @ b_space
        time_part = source.time_part
    else:
        b_space = None
        time_part = None

    if initial is None:
        u_prev = np.zeros(n)
        u_cur = np.zeros(n)
    else:
        u_prev = np.array(initial[0], dtype=float)
        u_cur = np.array(initial[1], dtype=float)

    snapshots = []
    seis = None
    if receivers:
        seis = np.zeros((config.n_steps + 1, len(receivers)))

    def record(step, u):
        if receivers or (config.snapshot_stride and step % config.snapshot_stride == 0):
            nodal = dg_assembly.dg_node_average(dof, lift(u))
            if config.snapshot_stride and step % config.snapshot_stride == 0:
                snapshots.append((step, nodal))
            if receivers:
                seis[step] = evaluate_nodal(mesh, nodal, receivers)

    record(0, u_prev)
    record(1, u_cur)
    dt2 = config.dt ** 2
    for step in range(1, config.n_steps):
        t_n = step * config.dt
        rhs = -A_apply(u_cur)
        if time_part is not None:
            rhs = rhs + time_part(t_n) * b_space
        elif source is not None:
            f_n = dg_assembly.assemble_load(lambda x, y: source(t_n, x, y), dof)
            rhs = rhs + (f_n if space is None else space.R.T @ f_n)
        u_next = 2.0 * u_cur - u_prev + dt2 * m_solve(rhs)
        if not np.all(np.isfinite(u_next)):
            raise StabilityError(
                f"non-finite state; time step dt={config.dt} likely exceeds the "
                "stability limit, try a smaller step", step=step + 1)
        u_prev, u_cur = u_cur, u_next
        record(step + 1, u_cur)
    return WaveResult(u_prev, u_cur, snapshots, seis, reduced=space is not None)


def wave_error(u_fine_T, u_ms_T, forms):
    """Relative energy/L2 errors (percent) of two final states on the fine map."""
    diff = np.asarray(u_fine_T) - np.asarray(u_ms_T)
    ref = dg_assembly.compute_norms(u_fine_T, forms)
    dn = dg_assembly.compute_norms(diff, forms)
    return {
        "energy_pct": 100.0 * dn["energy"] / ref["energy"] if ref["energy"] > 0 else 0.0,
        "l2_pct": 100.0 * dn["l2"] / ref["l2"] if ref["l2"] > 0 else 0.0,
    }


def write_seismogram_csv(seis, receivers, dt, path):
    """CSV with one time column and one column per receiver point."""
    with open(path, "w", newline="") as fh:
        cols = ",".join(f"r{k}_x{x:g}_y{y:g}" for k, (x, y) in enumerate(receivers))
        fh.write("t," + cols + "\n")
        for step in range(seis.shape[0]):
            vals = ",".join(f"{v:.10e}" for v in seis[step])
            fh.write(f"{step * dt:.10g},{vals}\n")
