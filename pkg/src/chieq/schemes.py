"""Energy-stable time steppers for the quadratized system.

Three schemes advance (phi, U):

  LS1      backward-Euler step; coefficients frozen at phi^n.
  LS2_BDF  two-step BDF with linear extrapolation phi* = 2 phi^n - phi^{n-1}.
  LS2_CN   midpoint (Crank-Nicolson) step with extrapolation
           phi_dag = (3/2) phi^n - (1/2) phi^{n-1}.

Every step solves one SPD linear system (see solver.py) and then updates U
by a pointwise affine formula, so U costs nothing extra.  Each scheme
dissipates its own discrete Lyapunov functional for any time step size; the
midpoint scheme satisfies the energy balance with equality (diagnostics.py
holds the functionals).

The two-step schemes need one history level; ``bootstrap`` fills it with a
single LS1 step.  A TimeStepper owns one solver instance and is not safe for
concurrent use; run distinct simulations on distinct instances.
"""

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import diagnostics
from .physics import PhysParams, free_energy, h_factor, mobility, validate_shift
from .solver import SolveStats, SolverCfg, StepOperatorCtx, TimeStepSolver
from .spectral import GridSpec, SpectralOps


class MissingHistory(RuntimeError):
    """Two-step scheme invoked without phi^{n-1} (run bootstrap first)."""


class SchemeId(enum.Enum):
    LS1 = "ls1"
    LS2_BDF = "ls2-bdf"
    LS2_CN = "ls2-cn"

    @classmethod
    def parse(cls, text: str) -> "SchemeId":
        t = text.strip().lower().replace("_", "-")
        for s in cls:
            if s.value == t:
                return s
        raise ValueError(f"unknown scheme {text!r}; expected one of "
                         + ", ".join(s.value for s in cls))

    def __str__(self):
        return self.value


@dataclass
class SimState:
    """phi^n, U^n plus one history level; step counter and time t = n*dt."""

    phi: np.ndarray
    u: np.ndarray
    phi_prev: Optional[np.ndarray] = None
    u_prev: Optional[np.ndarray] = None
    step: int = 0
    time: float = 0.0

    @property
    def has_history(self):
        return self.phi_prev is not None


@dataclass
class StepResult:
    state: SimState
    mu: np.ndarray
    dissipation: float
    stats: SolveStats
    energy_decrement: float = 0.0
    """Scheme Lyapunov functional change over this step, evaluated in update
    form with extended-precision accumulation; accurate even when the
    decrement sits ten orders below the energy itself."""


def init_state(phi0, p: PhysParams) -> SimState:
    """U(0) = sqrt(Fhat(phi0) + B); requires validate_shift(p) to have passed."""
    validate_shift(p)
    u0 = np.sqrt(free_energy(phi0, p) + p.B)
    return SimState(phi=np.asarray(phi0, dtype=np.float64), u=u0)


def update_u_onestep(u_old, h, phi_new, phi_old):
    """U update shared by LS1 and the midpoint scheme."""
    return u_old + 0.5 * h * (phi_new - phi_old)


def update_u_bdf2(u, u_prev, h_star, phi_new, phi, phi_prev):
    hist_u = (4.0 * u - u_prev) / 3.0
    hist_phi = (4.0 * phi - phi_prev) / 3.0
    return 0.5 * h_star * (phi_new - hist_phi) + hist_u


def g_field_ls1(h, u, phi):
    return h * u - 0.5 * h * h * phi


def g_field_bdf2(h_star, u, u_prev, phi, phi_prev):
    return (h_star * (4.0 * u - u_prev) / 3.0
            - 0.5 * h_star * h_star * (4.0 * phi - phi_prev) / 3.0)


def g_field_cn(lap_phi, h_dag, u, phi, visc_half):
    return -visc_half * lap_phi + h_dag * u - 0.25 * h_dag * h_dag * phi


class TimeStepper:
    """Steps one simulation; owns the spectral plans and the Krylov solver."""

    def __init__(self, scheme: SchemeId, grid: GridSpec, p: PhysParams, dt: float,
                 cfg: SolverCfg = SolverCfg(), dealias: bool = False,
                 ops: Optional[SpectralOps] = None):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.scheme = scheme
        self.grid = grid
        self.p = p
        self.dt = float(dt)
        self.ops = ops if ops is not None else SpectralOps(grid, dealias=dealias)
        self.solver = TimeStepSolver(self.ops, cfg)

    def _ld_inner(self, u, v):
        return (float(np.sum(u * v, dtype=np.longdouble))
                * self.grid.cell_volume)

    def _one_level_decrement(self, phi_new, phi_old, u_old, h):
        """Energy change for the one-level forms, in update form: the U part
        uses the exact-arithmetic update h*(phi_new-phi_old)/2 instead of the
        rounded stored U, keeping the discrete energy identities measurable
        down to machine scale.  The step difference is mean-free for the
        exact scheme map; removing the storage-rounding mean keeps that
        artifact out of the pairing."""
        dphi = phi_new - phi_old
        dphi = dphi - dphi.mean()
        du = 0.5 * h * dphi
        q = self._ld_inner(dphi, -self.ops.laplacian(phi_new + phi_old))
        un = self._ld_inner(du, 2.0 * u_old + du)
        return 0.5 * self.p.epsilon**2 * q + un

    def _finish(self, state, ctx, phi_new, u_new, mu, stats, decrement=None):
        new = SimState(phi=phi_new, u=u_new, phi_prev=state.phi, u_prev=state.u,
                       step=state.step + 1, time=state.time + self.dt)
        dissip = diagnostics.dissipation_rate(mu, ctx.m_field, self.ops)
        if decrement is None:
            decrement = diagnostics.energy_decrement(new, state, self.scheme,
                                                     self.p, self.ops)
        return StepResult(state=new, mu=mu, dissipation=dissip, stats=stats,
                          energy_decrement=decrement)

    def step_ls1(self, state: SimState) -> StepResult:
        p, dt, ops = self.p, self.dt, self.ops
        h = h_factor(state.phi, p)
        ctx = StepOperatorCtx(ops=ops, m_field=mobility(state.phi, p.sigma),
                              h_field=h, time_coeff=1.0 / dt,
                              visc_coeff=p.epsilon**2)
        rhs_f = state.phi / dt
        rhs_g = g_field_ls1(h, state.u, state.phi)
        phi_new, mu, stats = self.solver.solve(ctx, rhs_f, rhs_g,
                                               float(np.mean(state.phi)))
        u_new = update_u_onestep(state.u, h, phi_new, state.phi)
        dec = self._one_level_decrement(phi_new, state.phi, state.u, h)
        return self._finish(state, ctx, phi_new, u_new, mu, stats, decrement=dec)

    def step_bdf2(self, state: SimState) -> StepResult:
        if not state.has_history:
            raise MissingHistory("BDF2 step needs phi^{n-1}; bootstrap first")
        p, dt, ops = self.p, self.dt, self.ops
        phi_star = 2.0 * state.phi - state.phi_prev
        h = h_factor(phi_star, p)
        ctx = StepOperatorCtx(ops=ops, m_field=mobility(phi_star, p.sigma),
                              h_field=h, time_coeff=1.5 / dt,
                              visc_coeff=p.epsilon**2)
        rhs_f = (4.0 * state.phi - state.phi_prev) / (2.0 * dt)
        rhs_g = g_field_bdf2(h, state.u, state.u_prev, state.phi, state.phi_prev)
        phi_new, mu, stats = self.solver.solve(ctx, rhs_f, rhs_g,
                                               float(np.mean(state.phi)))
        u_new = update_u_bdf2(state.u, state.u_prev, h, phi_new,
                              state.phi, state.phi_prev)
        return self._finish(state, ctx, phi_new, u_new, mu, stats)

    def step_cn(self, state: SimState) -> StepResult:
        if not state.has_history:
            raise MissingHistory("midpoint step needs phi^{n-1}; bootstrap first")
        p, dt, ops = self.p, self.dt, self.ops
        phi_dag = 1.5 * state.phi - 0.5 * state.phi_prev
        h = h_factor(phi_dag, p)
        visc_half = 0.5 * p.epsilon**2
        # The solved operator needs h^2/4 on the mass term (the U average
        # contributes H/4 per step); apply_p carries a fixed h^2/2, so the
        # ctx field is scaled by 1/sqrt(2).
        ctx = StepOperatorCtx(ops=ops, m_field=mobility(phi_dag, p.sigma),
                              h_field=h / np.sqrt(2.0), time_coeff=1.0 / dt,
                              visc_coeff=visc_half)
        rhs_f = state.phi / dt
        rhs_g = g_field_cn(ops.laplacian(state.phi), h, state.u, state.phi,
                           visc_half)
        phi_new, mu, stats = self.solver.solve(ctx, rhs_f, rhs_g,
                                               float(np.mean(state.phi)))
        u_new = update_u_onestep(state.u, h, phi_new, state.phi)
        dec = self._one_level_decrement(phi_new, state.phi, state.u, h)
        return self._finish(state, ctx, phi_new, u_new, mu, stats, decrement=dec)

    def step(self, state: SimState) -> StepResult:
        if self.scheme is SchemeId.LS1:
            return self.step_ls1(state)
        if self.scheme is SchemeId.LS2_BDF:
            return self.step_bdf2(state)
        return self.step_cn(state)

    def bootstrap(self, state: SimState) -> Optional[StepResult]:
        """Fill the history level the two-step schemes need.

        One LS1 step for LS2_BDF and LS2_CN; nothing for LS1 (returns None).
        """
        if state.step != 0:
            raise ValueError("bootstrap expects a fresh state (step 0)")
        if self.scheme is SchemeId.LS1:
            return None
        return self.step_ls1(state)
