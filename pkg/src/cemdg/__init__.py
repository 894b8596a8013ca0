"""Constraint-energy-minimizing multiscale DG solver for high-contrast media."""

__version__ = "0.1.0"

from .grids import build_mesh_hierarchy, oversample_region
from .perm_field import (FieldSpec, PermField, constant_field, edge_kappa_bar,
                         experiment1_field_spec, generate_field, layered_field,
                         load_field_raster, save_field_raster)
from .msfem_pou import build_pou, build_s_weight
from .dg_assembly import (assemble_forms, assemble_load, build_dof_map,
                          compute_norms, fine_solve)
from .aux_spectral import apply_pi, build_aux_space, solve_local_spectral
from .cem_basis import (build_global_basis, build_localized_basis,
                        build_relaxed_basis, build_space)
from .darcy_driver import (coarse_solve, contrast_study, convergence_study,
                           error_report, table1_m)
from .wave_driver import WaveConfig, leapfrog_run, ricker_source, wave_error
