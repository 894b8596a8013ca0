"""Configuration-driven command line front end.

One JSON document describes a run; command-line flags override its
top-level scalar keys.  Every command writes a manifest of the full
configuration before any heavy computation starts, then its declared
artifacts (CSV tables, rasters with PGM previews, seismograms) into
the output directory.  Exit status: 0 success, 1 configuration
problem, 2 numerical failure.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from . import aux_spectral, cem_basis, darcy_driver, dg_assembly, perm_field, wave_driver
from .errors import (CemdgError, CoercivityError, ConfigError, DefinitenessError,
                     RankError, RasterFormatError, SolverError, StabilityError)
from .grids import FineGrid, build_mesh_hierarchy

NUMERICAL_ERRORS = (SolverError, RankError, DefinitenessError, CoercivityError,
                    StabilityError)

_FIELD_KINDS = ("constant", "rects", "experiment1", "layered", "raster")


@dataclass
class ExperimentConfig:
    nx: int = 64
    Nx: object = 8                   # int, or list for convergence studies
    field: dict = None
    gamma: float = 4.0
    pou: str = "msfem"
    levels: int = 3
    method: str = "lagrange"
    m: object = None                 # int, list, or None for the m(H) rule
    contrasts: list = None
    problem: str = "darcy"
    wave: dict = None
    out: str = "out"
    threads: int = 1
    seed: int = 0

    _SCALARS = {"nx": int, "Nx": int, "gamma": float, "pou": str, "levels": int,
                "method": str, "m": int, "problem": str, "out": str,
                "threads": int, "seed": int}

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if self.gamma <= 0:
            raise ConfigError(f"key 'gamma': must be positive, got {self.gamma}")
        if self.pou not in ("msfem", "bilinear"):
            raise ConfigError(f"key 'pou': unknown kind {self.pou!r}")
        if self.method not in ("lagrange", "relaxed", "global"):
            raise ConfigError(f"key 'method': unknown method {self.method!r}")
        if self.levels < 1:
            raise ConfigError(f"key 'levels': need at least 1, got {self.levels}")
        if self.problem not in ("darcy", "wave"):
            raise ConfigError(f"key 'problem': unknown problem {self.problem!r}")
        if self.threads < 1:
            raise ConfigError(f"key 'threads': need at least 1, got {self.threads}")
        if self.field is not None:
            kind = self.field.get("kind")
            if kind not in _FIELD_KINDS:
                raise ConfigError(f"key 'field.kind': unknown kind {kind!r}")
            if kind == "raster" and not os.path.exists(self.field.get("path", "")):
                raise ConfigError(f"key 'field.path': no such file {self.field.get('path')!r}")
        if self.contrasts is not None and not self.contrasts:
            raise ConfigError("key 'contrasts': list must be nonempty")
        if isinstance(self.Nx, list) and not self.Nx:
            raise ConfigError("key 'Nx': list must be nonempty")

    def field_builder(self):
        """Field constructor bound to this configuration."""
        spec = self.field or {"kind": "experiment1"}
        kind = spec.get("kind", "experiment1")
        if kind == "constant":
            value = spec.get("value", 1.0)
            return lambda mesh: perm_field.constant_field(mesh.fine, value)
        if kind == "rects":
            fs = perm_field.FieldSpec(spec.get("background", 1.0),
                                      [tuple(r) for r in spec.get("rects", [])],
                                      spec.get("value", 1.0))
            return lambda mesh: perm_field.generate_field(fs, mesh.fine)
        if kind == "experiment1":
            fs = perm_field.experiment1_field_spec(
                self.nx, seed=spec.get("seed", self.seed),
                value=spec.get("contrast", 1.0e4))
            return lambda mesh: perm_field.generate_field(fs, mesh.fine)
        if kind == "layered":
            return lambda mesh: perm_field.layered_field(
                mesh.fine, seed=spec.get("seed", self.seed),
                vmin=spec.get("vmin", 1.0), vmax=spec.get("vmax", 25.0),
                bands=spec.get("bands", 12))
        return lambda mesh: perm_field.load_field_raster(spec["path"])

    def wave_config(self):
        w = self.wave or {}
        return wave_driver.WaveConfig(
            t_final=w.get("t_final", 0.2), dt=w.get("dt", 1.0e-4),
            f0=w.get("f0", 20.0), snapshot_stride=w.get("snapshot_stride", 0),
            mass_lumping=w.get("mass_lumping", False))


def load_config(path, overrides):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    return ExperimentConfig.from_dict(data)


def write_manifest(cfg, outdir, command):
    payload = {"command": command, "version": __version__, "config": asdict(cfg)}
    with open(os.path.join(outdir, "manifest.txt"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_path(cfg, name):
    return os.path.join(cfg.out, name)


def _save_raster_with_preview(arr2d, path):
    perm_field.save_raster(arr2d, path)
    perm_field.save_pgm(arr2d, os.path.splitext(path)[0] + ".pgm")


def _effective_m(cfg, H):
    if cfg.m is not None:
        return cfg.m
    return darcy_driver.table1_m(H)


def cmd_generate_field(cfg):
    grid = FineGrid(cfg.nx, cfg.nx)
    fld = cfg.field_builder()(type("M", (), {"fine": grid})())
    _save_raster_with_preview(fld.as_grid(), _out_path(cfg, "field.kfld"))
    print(f"generate-field: {cfg.nx}x{cfg.nx} cells, "
          f"range [{fld.values.min():.4g}, {fld.values.max():.4g}] -> field.kfld")


def _setup(cfg, Nx):
    return darcy_driver.setup_case(cfg.nx, Nx, cfg.field_builder(), cfg.gamma, cfg.pou)


def cmd_solve_darcy(cfg):
    t0 = time.perf_counter()
    mesh, fld, forms = _setup(cfg, cfg.Nx)
    m = _effective_m(cfg, mesh.coarse.H)
    out = darcy_driver.solve_case(forms, darcy_driver.default_source,
                                  cfg.levels, cfg.method, m, threads=cfg.threads)
    rep = out["report"]
    rows = [{"H": mesh.coarse.H, "m": m, "method": cfg.method,
             "contrast": float(fld.values.max() / fld.values.min()),
             "energy_err_pct": rep.energy_pct, "l2_err_pct": rep.l2_pct,
             "lambda": rep.lam, "lemma1_bound": rep.lemma_bound}]
    darcy_driver.write_study_csv(rows, _out_path(cfg, "results.csv"))
    shape = (mesh.fine.ny + 1, mesh.fine.nx + 1)
    u_h = dg_assembly.dg_node_average(forms.dof, out["u_h"]).reshape(shape)
    u_ms = dg_assembly.dg_node_average(forms.dof, out["u_ms"]).reshape(shape)
    _save_raster_with_preview(u_h, _out_path(cfg, "u_fine.kfld"))
    _save_raster_with_preview(u_ms, _out_path(cfg, "u_ms.kfld"))
    print(f"solve-darcy: H={mesh.coarse.H:g} m={m} {cfg.method}: {rep.summary()}  "
          f"wall {time.perf_counter() - t0:.1f}s")


def cmd_solve_wave(cfg):
    t0 = time.perf_counter()
    mesh, fld, forms = _setup(cfg, cfg.Nx)
    m = _effective_m(cfg, mesh.coarse.H)
    wcfg = cfg.wave_config()
    source = wave_driver.RickerSource(wcfg.f0, mesh.fine.h)
    receivers = [tuple(p) for p in (cfg.wave or {}).get("receivers", [])]
    aux = aux_spectral.build_aux_space(forms, levels=cfg.levels)
    space = cem_basis.build_space(forms, aux, m, method=cfg.method, threads=cfg.threads)
    fine_run = wave_driver.leapfrog_run(forms, wcfg, source, receivers=receivers)
    ms_run = wave_driver.leapfrog_run(forms, wcfg, source, space=space)
    err = wave_driver.wave_error(fine_run.u_final, space.R @ ms_run.u_final, forms)
    with open(_out_path(cfg, "wave_errors.csv"), "w", newline="") as fh:
        fh.write("H,m,method,t_final,dt,f0,energy_err_pct,l2_err_pct\n")
        fh.write(f"{mesh.coarse.H:.10g},{m},{cfg.method},{wcfg.t_final:.10g},"
                 f"{wcfg.dt:.10g},{wcfg.f0:.10g},{err['energy_pct']:.10e},"
                 f"{err['l2_pct']:.10e}\n")
    shape = (mesh.fine.ny + 1, mesh.fine.nx + 1)
    for step, nodal in fine_run.snapshots:
        _save_raster_with_preview(nodal.reshape(shape),
                                  _out_path(cfg, f"snap_fine_{step:06d}.kfld"))
    if fine_run.seismogram is not None:
        wave_driver.write_seismogram_csv(fine_run.seismogram, receivers, wcfg.dt,
                                         _out_path(cfg, "seismogram.csv"))
    print(f"solve-wave: H={mesh.coarse.H:g} m={m} {cfg.method}: "
          f"energy {err['energy_pct']:.4f}% L2 {err['l2_pct']:.4f}% "
          f"gap {aux.lam:.4e}  wall {time.perf_counter() - t0:.1f}s")


def cmd_convergence_study(cfg):
    t0 = time.perf_counter()
    Nx_list = cfg.Nx if isinstance(cfg.Nx, list) else [cfg.Nx]
    m_list = cfg.m if isinstance(cfg.m, list) else (None if cfg.m is None
                                                    else [cfg.m] * len(Nx_list))
    study = darcy_driver.ConvergenceConfig(
        nx=cfg.nx, Nx_list=Nx_list, m_list=m_list, levels=cfg.levels,
        gamma=cfg.gamma, pou=cfg.pou, method=cfg.method,
        contrast=(cfg.field or {}).get("contrast", 1.0e4), seed=cfg.seed,
        threads=cfg.threads)
    rows = darcy_driver.convergence_study(study, field_builder=cfg.field_builder()
                                          if cfg.field else None)
    darcy_driver.write_study_csv(rows, _out_path(cfg, "convergence.csv"))
    for r in rows:
        print(f"  H={r['H']:g} m={r['m']}: energy {r['energy_err_pct']:.4f}% "
              f"L2 {r['l2_err_pct']:.4f}% gap {r['lambda']:.4e}")
    print(f"convergence-study: {len(rows)} rows -> convergence.csv  "
          f"wall {time.perf_counter() - t0:.1f}s")


def cmd_contrast_study(cfg):
    t0 = time.perf_counter()
    if isinstance(cfg.Nx, list):
        raise ConfigError("key 'Nx': contrast study expects a single block count")
    m = _effective_m(cfg, 1.0 / cfg.Nx)
    study = darcy_driver.ContrastConfig(
        nx=cfg.nx, Nx=cfg.Nx, m=m,
        contrasts=cfg.contrasts or [1e4, 1e5, 1e6, 1e7, 1e8],
        levels=cfg.levels, gamma=cfg.gamma, pou=cfg.pou, seed=cfg.seed,
        threads=cfg.threads)
    rows = darcy_driver.contrast_study(study)
    darcy_driver.write_study_csv(rows, _out_path(cfg, "contrast.csv"))
    for r in rows:
        print(f"  contrast={r['contrast']:.1g} {r['method']}: "
              f"energy {r['energy_err_pct']:.4f}% L2 {r['l2_err_pct']:.4f}%")
    print(f"contrast-study: {len(rows)} rows -> contrast.csv  "
          f"wall {time.perf_counter() - t0:.1f}s")


def cmd_dump_eigs(cfg):
    mesh, fld, forms = _setup(cfg, cfg.Nx)
    aux = aux_spectral.build_aux_space(forms, levels=cfg.levels)
    aux_spectral.dump_eigs_csv(aux, _out_path(cfg, "eigs.csv"))
    print(f"dump-eigs: {mesh.coarse.N} blocks, gap {aux.lam:.4e} -> eigs.csv")


def cmd_dump_basis(cfg):
    mesh, fld, forms = _setup(cfg, cfg.Nx)
    m = _effective_m(cfg, mesh.coarse.H)
    aux = aux_spectral.build_aux_space(forms, levels=cfg.levels)
    space = cem_basis.build_space(forms, aux, m, method=cfg.method,
                                  threads=cfg.threads)
    shape = (mesh.fine.ny + 1, mesh.fine.nx + 1)
    for c in range(space.n_ms):
        col = np.asarray(space.R[:, c].todense()).ravel()
        nodal = dg_assembly.dg_node_average(forms.dof, col).reshape(shape)
        name = f"basis_b{space.col_block[c]:04d}_j{space.col_j[c] + 1}.kfld"
        _save_raster_with_preview(nodal, _out_path(cfg, name))
    print(f"dump-basis: {space.n_ms} columns (m={m}, {cfg.method}) -> rasters")


COMMANDS = {
    "generate-field": cmd_generate_field,
    "solve-darcy": cmd_solve_darcy,
    "solve-wave": cmd_solve_wave,
    "convergence-study": cmd_convergence_study,
    "contrast-study": cmd_contrast_study,
    "dump-eigs": cmd_dump_eigs,
    "dump-basis": cmd_dump_basis,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="cemdg", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--nx", type=int)
    parser.add_argument("--Nx", type=int)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--pou")
    parser.add_argument("--levels", type=int)
    parser.add_argument("--method")
    parser.add_argument("--m", type=int)
    parser.add_argument("--problem")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--seed", type=int)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {k: getattr(args, k) for k in
                     ("out", "nx", "Nx", "gamma", "pou", "levels", "method",
                      "m", "problem", "threads", "seed")}
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            cfg = ExperimentConfig.from_dict(
                {k: v for k, v in overrides.items() if v is not None})
        env_threads = os.environ.get("CEM_THREADS")
        if env_threads:
            cfg.threads = max(1, int(env_threads))
        os.makedirs(cfg.out, exist_ok=True)
        write_manifest(cfg, cfg.out, args.command)
        COMMANDS[args.command](cfg)
        return 0
    except (ConfigError, RasterFormatError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
