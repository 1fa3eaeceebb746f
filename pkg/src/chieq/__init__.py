"""chieq: pseudo-spectral solver for a conserved phase-field equation with
concentration-dependent mobility and a regularized logarithmic potential,
time-stepped by linear, unconditionally energy-stable quadratized schemes.
"""

from .config import InitSpec, RunConfig, load_config, parse_config, preset
from .convergence import ConvergenceReport, run_convergence
from .diagnostics import (EnergyRecord, dissipation_rate, energy_modified,
                          energy_original, mass, u_drift)
from .initial import init_random, init_sinusoidal
from .physics import (PhysParams, free_energy, free_energy_deriv, h_factor,
                      mobility, validate_shift)
from .runner import read_snapshot, run_simulation, write_snapshot
from .schemes import SchemeId, SimState, TimeStepper, init_state
from .solver import SolveStats, SolverCfg, StepOperatorCtx
from .spectral import GridSpec, SpectralOps
from .verify import run_verification

__version__ = "0.1.0"
