"""Relaxed membrane energies for thin films with bending moments.

Energy densities, the discrete cell problem for the relaxed bending density,
structured planar fields and measures, the limit membrane energy and scaled
3D thin-film energies for epsilon studies.
"""

from .cell import (CellGrid, CellSolution, JumpSpec, SolverBudget, gamma_surface, q_tol, qstar,
                   qstar_recession, qstar_rotated, qstar_sweep, qw_zero)
from .errors import (AmbiguityError, ConvergenceError, DomainError, MembrelaxError, ModelError,
                     QuadratureError, ResolutionError, SceneError)
from .fields import BendingMeasure, PlanarScene, besicovitch_split, load_scene, validate_scene, weakstar_pairing
from .membrane import EnergyBreakdown, LoadSet, load_work, membrane_energy, membrane_energy_no_moment
from .models import (ConvexNorm, SeparableLaminate, UserTable, builtin_models, eval_density, load_model,
                     recession_density, w_zero)
from .thinfilm import SlabField, SlabGrid, example_dirac, gamma_study, moment_average, recovery_bulk, scaled_energy

__version__ = "0.1.0"
