"""Temporal convergence study against a fine-step reference solution.

Protocol: all runs start from the sinusoidal benchmark profile on the same
grid and parameters; the reference is the midpoint scheme at dt_ref; errors
are discrete L2 norms of phi at t_final; observed orders are log2 ratios of
errors under dt halving.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .initial import init_sinusoidal
from .physics import PhysParams
from .schemes import SchemeId, TimeStepper, init_state
from .solver import SolverCfg
from .spectral import GridSpec, SpectralOps, norm_l2

DEFAULT_DT_LIST = (5e-3, 2.5e-3, 1.25e-3, 6.25e-4, 3.125e-4)
DEFAULT_DT_REF = 3.90625e-5


@dataclass(frozen=True)
class ConvergenceRow:
    dt: float
    l2_error: float
    observed_order: Optional[float]    # None on the first (coarsest) row


@dataclass(frozen=True)
class ConvergenceReport:
    grid_n: int
    t_final: float
    dt_ref: float
    rows: dict  # SchemeId -> tuple[ConvergenceRow]

    def orders(self, scheme):
        return [r.observed_order for r in self.rows[scheme]
                if r.observed_order is not None]

    def format(self):
        lines = [f"convergence study: {self.grid_n}^2 grid, errors at "
                 f"t = {self.t_final:g}, reference ls2-cn dt = {self.dt_ref:g}"]
        header = f"{'dt':>12}"
        schemes = list(self.rows)
        for s in schemes:
            header += f"  {str(s):>10} {'order':>6}"
        lines.append(header)
        for i, row0 in enumerate(self.rows[schemes[0]]):
            line = f"{row0.dt:12.6g}"
            for s in schemes:
                r = self.rows[s][i]
                o = f"{r.observed_order:6.2f}" if r.observed_order is not None else "     -"
                line += f"  {r.l2_error:10.3e} {o}"
            lines.append(line)
        return "\n".join(lines)


def observed_orders(errors):
    """log2(e_i / e_{i+1}) for successive dt-halved errors."""
    return [float(np.log2(errors[i] / errors[i + 1]))
            for i in range(len(errors) - 1)]


def _evolve(scheme, dt, t_final, grid, params, cfg, ops):
    stepper = TimeStepper(scheme, grid, params, dt, cfg=cfg, ops=ops)
    state = init_state(init_sinusoidal(grid), params)
    n_steps = int(round(t_final / dt))
    res = stepper.bootstrap(state)
    if res is not None:
        state = res.state
    while state.step < n_steps:
        state = stepper.step(state).state
    return state.phi


def run_convergence(schemes=tuple(SchemeId), dt_list=DEFAULT_DT_LIST,
                    dt_ref=DEFAULT_DT_REF, grid=GridSpec(2, 64), t_final=0.5,
                    params=PhysParams(), cfg=SolverCfg(), progress=None):
    """Run the study; returns a ConvergenceReport.

    dt_ref must be at least 4x smaller than the smallest tested dt so the
    reference error is negligible against the measured ones.
    """
    if dt_ref >= min(dt_list) / 4:
        raise ValueError("dt_ref must be < min(dt_list)/4")
    if any(abs(dt_list[i] / dt_list[i + 1] - 2.0) > 1e-12
           for i in range(len(dt_list) - 1)):
        raise ValueError("dt_list must decrease by factors of two")
    ops = SpectralOps(grid)
    if progress:
        progress(f"reference: ls2-cn at dt = {dt_ref:g}")
    ref = _evolve(SchemeId.LS2_CN, dt_ref, t_final, grid, params, cfg, ops)

    rows = {}
    for scheme in schemes:
        errors = []
        for dt in dt_list:
            if progress:
                progress(f"{scheme} at dt = {dt:g}")
            phi = _evolve(scheme, dt, t_final, grid, params, cfg, ops)
            errors.append(norm_l2(phi - ref, grid))
        orders = [None] + observed_orders(errors)
        rows[scheme] = tuple(ConvergenceRow(dt, e, o)
                             for dt, e, o in zip(dt_list, errors, orders))
    return ConvergenceReport(grid_n=grid.n, t_final=t_final, dt_ref=dt_ref,
                             rows=rows)
