"""Invariant verification: certifies the discrete structure of the build.

Each check exercises one provable property of the implementation -- branch
stitching of the regularized potential, operator symmetry and definiteness,
conservation, discrete energy laws, solver oracles -- and records the
tolerance it was held to together with the observed value.  `quick` runs a
trimmed set sized for seconds-scale feedback; `full` adds the stiff-step
stability sweep, drift scaling, and a 3D spot check.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft

from . import diagnostics as diag
from . import schemes as schemes_mod
from .initial import init_random, init_sinusoidal
from .physics import (DomainError, PhysParams, ShiftTooSmall, free_energy,
                      free_energy_deriv, free_energy_second_deriv, h_factor,
                      mobility, validate_shift)
from .schemes import SchemeId, TimeStepper, init_state
from .solver import (SolverCfg, StepOperatorCtx, apply_step_operator,
                     invert_variable_laplacian, solve_time_step)
from .spectral import GridSpec, SpectralOps, inner, norm_l2


@dataclass(frozen=True)
class CheckResult:
    name: str
    tolerance: float
    observed: float
    passed: bool
    note: str = ""

    def format(self):
        status = "PASS" if self.passed else "FAIL"
        line = (f"[{status}] {self.name}: observed {self.observed:.3e} "
                f"(tolerance {self.tolerance:.1e})")
        if self.note:
            line += f"  -- {self.note}"
        return line


@dataclass
class VerificationReport:
    level: str
    checks: list = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def format(self):
        lines = [c.format() for c in self.checks]
        n_fail = sum(not c.passed for c in self.checks)
        lines.append(f"{len(self.checks)} checks, {n_fail} failed "
                     f"({self.level} level, {self.elapsed:.1f} s)")
        return "\n".join(lines)


def _worst_rel(a, b, floor=1e-300):
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def _physics_checks(p: PhysParams):
    out = []
    xs = np.linspace(-10.0, 11.0, 21001)
    m = mobility(xs, p.sigma)
    lo, hi = p.sigma / 8.0, 0.25
    bound_ok = float(np.min(m) >= lo * (1 - 1e-12)) and float(np.max(m) <= hi * (1 + 1e-12))
    out.append(CheckResult("mobility bounds sigma/8 <= M <= 1/4", 1e-12,
                           float(max(lo - np.min(m), np.max(m) - hi)), bound_ok))
    sym = _worst_rel(mobility(xs, p.sigma), mobility(1.0 - xs, p.sigma), floor=lo)
    out.append(CheckResult("mobility symmetry M(x) = M(1-x)", 1e-15, sym,
                           sym <= 1e-15))

    # one-sided branch values at the stitch points via adjacent floats
    worst = 0.0
    for x0 in (p.sigma, 1.0 - p.sigma):
        for fn in (free_energy, free_energy_deriv, free_energy_second_deriv):
            below = fn(np.nextafter(x0, -np.inf), p)
            above = fn(np.nextafter(x0, np.inf), p)
            worst = max(worst, abs(above - below) / max(abs(below), 1e-300))
    out.append(CheckResult("potential branch stitching C0/C1/C2", 1e-12,
                           worst, worst <= 1e-12))

    rng = np.random.default_rng(11)
    x = rng.uniform(-2.0, 3.0, 10000)
    h = 1e-6
    fd = (free_energy(x + h, p) - free_energy(x - h, p)) / (2 * h)
    f = free_energy_deriv(x, p)
    scale = np.maximum(np.abs(f), 1.0)
    d = float(np.max(np.abs(fd - f) / scale))
    out.append(CheckResult("derivative vs central differences", 1e-6, d,
                           d <= 1e-6))

    try:
        hf = h_factor(x, p)
        ident = _worst_rel(hf * hf * (free_energy(x, p) + p.B),
                           free_energy_deriv(x, p) ** 2, floor=1e-10)
        out.append(CheckResult("quadratization identity H^2 (F+B) = f^2", 1e-12,
                               ident, ident <= 1e-12))
    except DomainError as err:
        out.append(CheckResult("quadratization identity H^2 (F+B) = f^2", 1e-12,
                               np.inf, False, note=str(err)))

    try:
        validate_shift(p)
        out.append(CheckResult("energy shift B large enough", 0.0, 0.0, True))
    except ShiftTooSmall as err:
        out.append(CheckResult("energy shift B large enough", 0.0,
                               err.min_value, False,
                               note=f"min at x = {err.argmin:.4g}"))
    return out


def _spectral_checks(grid: GridSpec, p: PhysParams):
    out = []
    ops = SpectralOps(grid)
    rng = np.random.default_rng(5)
    f = rng.standard_normal(grid.shape)
    rt = float(np.max(np.abs(ops.inverse(ops.forward(f)) - f))
               / np.max(np.abs(f)))
    out.append(CheckResult("transform round trip", 1e-13, rt, rt <= 1e-13))

    x = grid.coords()[0]
    lap_err = float(np.max(np.abs(ops.laplacian(np.sin(2 * x)) + 4 * np.sin(2 * x))))
    out.append(CheckResult("laplacian eigenfunction sin(2x)", 1e-11, lap_err,
                           lap_err <= 1e-11))

    phi = 0.48 + 0.25 * np.sin(2 * grid.coords()[0]) * np.cos(2 * grid.coords()[1])
    m = mobility(phi, p.sigma)
    u = ops.project(rng.standard_normal(grid.shape))
    w = ops.project(rng.standard_normal(grid.shape))
    Lu, Lw = ops.variable_laplacian(u, m), ops.variable_laplacian(w, m)
    nu, nw = norm_l2(u, grid), norm_l2(w, grid)
    adj = abs(inner(Lu, w, grid) - inner(u, Lw, grid)) / (nu * nw)
    out.append(CheckResult("div(M grad .) self-adjoint", 1e-11, adj, adj <= 1e-11))
    nsd = inner(Lu, u, grid) / nu**2
    out.append(CheckResult("div(M grad .) negative semidefinite", 1e-11, nsd,
                           nsd <= 1e-11))
    cons = abs(float(np.mean(Lu)))
    out.append(CheckResult("div(M grad .) mean-free", 1e-14, cons, cons <= 1e-14))
    return out


def _make_ctx(scheme, phi, phi_prev, p, dt, ops):
    if scheme is SchemeId.LS1:
        ref = phi
        tc, visc, hscale = 1.0 / dt, p.epsilon**2, 1.0
    elif scheme is SchemeId.LS2_BDF:
        ref = 2.0 * phi - phi_prev
        tc, visc, hscale = 1.5 / dt, p.epsilon**2, 1.0
    else:
        ref = 1.5 * phi - 0.5 * phi_prev
        tc, visc, hscale = 1.0 / dt, 0.5 * p.epsilon**2, 1.0 / np.sqrt(2.0)
    return StepOperatorCtx(ops=ops, m_field=mobility(ref, p.sigma),
                           h_field=h_factor(ref, p) * hscale,
                           time_coeff=tc, visc_coeff=visc)


def _spd_checks(grid: GridSpec, p: PhysParams, cfg: SolverCfg, pairs=20):
    out = []
    ops = SpectralOps(grid)
    rng = np.random.default_rng(17)
    phi = init_random(grid, 0.4, 0.2, seed=99)
    phi_prev = phi + 0.01 * init_random(grid, 0.0, 1.0, seed=100)
    for scheme in SchemeId:
        ctx = _make_ctx(scheme, phi, phi_prev, p, 1e-3, ops)
        worst_sym = 0.0
        min_rayleigh = np.inf
        for _ in range(pairs):
            u = ops.project(rng.standard_normal(grid.shape))
            w = ops.project(rng.standard_normal(grid.shape))
            Au = apply_step_operator(ctx, u, cfg)
            Aw = apply_step_operator(ctx, w, cfg)
            s1, s2 = inner(Au, w, grid), inner(u, Aw, grid)
            worst_sym = max(worst_sym,
                            abs(s1 - s2) / (norm_l2(u, grid) * norm_l2(w, grid)))
            min_rayleigh = min(min_rayleigh,
                               inner(Au, u, grid) / inner(u, u, grid))
        out.append(CheckResult(f"step operator symmetric ({scheme})", 1e-9,
                               worst_sym, worst_sym <= 1e-9))
        out.append(CheckResult(f"step operator positive definite ({scheme})",
                               0.0, min_rayleigh, min_rayleigh > 0.0))
    return out


def _solver_oracle_checks(grid: GridSpec, p: PhysParams, cfg: SolverCfg):
    out = []
    ops = SpectralOps(grid)
    x = grid.coords()[0]

    # diagonal closed form for the quasi-Laplace inverse, m constant
    c = 0.17
    u = np.sin(2 * x)
    v, _ = invert_variable_laplacian(u, np.full(grid.shape, c), ops, cfg)
    err = _worst_rel(v, -np.sin(2 * x) / (4 * c), floor=1e-3)
    out.append(CheckResult("quasi-Laplace inverse, constant m oracle", 1e-9,
                           err, err <= 1e-9))

    # constant-coefficient step solve against the Fourier-diagonal formula
    worst = 0.0
    for scheme in SchemeId:
        tc = {SchemeId.LS1: 1e3, SchemeId.LS2_BDF: 1.5e3, SchemeId.LS2_CN: 1e3}[scheme]
        visc = 0.5 * p.epsilon**2 if scheme is SchemeId.LS2_CN else p.epsilon**2
        m0, h0 = 0.21, 0.8
        ctx = StepOperatorCtx(ops=ops, m_field=np.full(grid.shape, m0),
                              h_field=np.full(grid.shape, h0),
                              time_coeff=tc, visc_coeff=visc)
        rng = np.random.default_rng(23)
        rhs_f = 0.3 * tc + ops.project(rng.standard_normal(grid.shape)) * tc * 0.01
        rhs_g = ops.project(rng.standard_normal(grid.shape)) * 0.05
        phi, mu, _ = solve_time_step(ctx, rhs_f, rhs_g, 0.3, cfg)
        F = _fft.rfftn(rhs_f)
        G = _fft.rfftn(rhs_g)
        ksq_dg = ops.grad_ksq_symbol
        ksq_full = ops.minus_lap_symbol
        sym = np.where(ops.kernel_mask, 1.0,
                       tc / np.where(ops.kernel_mask, 1.0, m0 * ksq_dg)
                       + visc * ksq_full + 0.5 * h0**2)
        bhat = np.where(ops.kernel_mask, 0.0,
                        F / np.where(ops.kernel_mask, 1.0, m0 * ksq_dg) - G)
        # kernel rows: mean = mass target, corners = rhs_f / tc
        Phi = np.where(ops.kernel_mask, F / tc, bhat / sym)
        Phi.flat[0] = 0.3 * grid.npoints
        phi_exact = _fft.irfftn(Phi, s=grid.shape)
        worst = max(worst, _worst_rel(phi, phi_exact, floor=1e-6))
    out.append(CheckResult("constant-coefficient step solve oracle", 1e-9,
                           worst, worst <= 1e-9))
    return out


def _energy_checks(grid, p, cfg, dts, n_steps, label):
    out = []
    for scheme in SchemeId:
        worst = -np.inf
        for dt in dts:
            ops = SpectralOps(grid)
            stepper = TimeStepper(scheme, grid, p, dt, cfg=cfg, ops=ops)
            state = init_state(init_random(grid, 0.3, 0.001, seed=7), p)
            res = stepper.bootstrap(state)
            if res is not None:
                state = res.state
            e_prev = diag.energy_modified(state, scheme, p, ops)
            for _ in range(n_steps):
                state = stepper.step(state).state
                e = diag.energy_modified(state, scheme, p, ops)
                worst = max(worst, (e - e_prev) / abs(e_prev))
                e_prev = e
        out.append(CheckResult(f"modified energy non-increasing ({scheme}, {label})",
                               1e-9, worst, worst <= 1e-9))
    return out


def _mass_check(grid, p, cfg, n_steps=50):
    ops = SpectralOps(grid)
    stepper = TimeStepper(SchemeId.LS2_CN, grid, p, 1e-3, cfg=cfg, ops=ops)
    state = init_state(init_random(grid, 0.3, 0.001, seed=7), p)
    m0 = diag.mass(state.phi, grid)
    state = stepper.bootstrap(state).state
    worst = 0.0
    for _ in range(n_steps):
        state = stepper.step(state).state
        worst = max(worst, abs(diag.mass(state.phi, grid) - m0) / abs(m0))
    return [CheckResult("mass conserved along run", 1e-10, worst,
                        worst <= 1e-10)]


def _cn_identity_check(grid, p, cfg, n_steps=100):
    ops = SpectralOps(grid)
    dt = 1e-3
    stepper = TimeStepper(SchemeId.LS2_CN, grid, p, dt, cfg=cfg, ops=ops)
    state = init_state(init_random(grid, 0.3, 0.001, seed=7), p)
    state = stepper.bootstrap(state).state
    worst = 0.0
    for _ in range(n_steps):
        res = stepper.step(state)
        state = res.state
        resid = abs(res.energy_decrement / dt + res.dissipation)
        worst = max(worst, resid / max(res.dissipation, 1e-30))
    return [CheckResult("midpoint scheme energy identity", 1e-6, worst,
                        worst <= 1e-6)]


def _drift_check(grid, p, cfg):
    drifts = []
    for dt in (4e-4, 2e-4, 1e-4):
        ops = SpectralOps(grid)
        stepper = TimeStepper(SchemeId.LS1, grid, p, dt, cfg=cfg, ops=ops)
        state = init_state(init_sinusoidal(grid), p)
        for _ in range(int(round(0.1 / dt))):
            state = stepper.step(state).state
        drifts.append(diag.u_drift(state, p))
    ratios = [drifts[i] / drifts[i + 1] for i in range(2)]
    ok = all(1.4 <= r <= 2.6 for r in ratios)
    return [CheckResult("auxiliary-variable drift halves with dt", 0.3,
                        max(abs(r - 2.0) / 2.0 for r in ratios), ok,
                        note=f"ratios {ratios[0]:.2f}, {ratios[1]:.2f}")]


def run_verification(level="quick"):
    """Run the suite; returns a VerificationReport."""
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    t0 = time.time()
    p = PhysParams()
    cfg = SolverCfg()
    grid = GridSpec(2, 64)
    report = VerificationReport(level=level)
    add = report.checks.extend

    add(_physics_checks(p))
    add(_spectral_checks(grid, p))
    add(_spd_checks(grid, p, cfg, pairs=20 if level == "full" else 8))
    add(_solver_oracle_checks(grid, p, cfg))
    if level == "quick":
        add(_energy_checks(grid, p, cfg, (1e-3, 1e-2), 10, "quick dts"))
        add(_cn_identity_check(grid, p, cfg, n_steps=40))
        add(_mass_check(grid, p, cfg, n_steps=30))
    else:
        add(_energy_checks(grid, p, cfg, (1e-4, 1e-3, 1e-2, 1e-1, 1.0), 50,
                           "all dts"))
        add(_cn_identity_check(grid, p, cfg, n_steps=500))
        add(_mass_check(grid, p, cfg, n_steps=200))
        add(_drift_check(grid, p, cfg))
        add(_spectral_checks(GridSpec(3, 16), p))
    report.elapsed = time.time() - t0
    return report
