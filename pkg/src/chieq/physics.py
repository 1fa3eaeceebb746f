"""Pointwise closures of the phase-field model.

The model tracks a concentration phi in a binary mixture.  Its bulk free
energy is a logarithmic Flory-Huggins potential, regularized into a C^2
piecewise function Fhat that is defined on the whole real line: outside
[sigma, 1 - sigma] the singular log terms are continued by quadratics, so
small over/undershoots of a numerical solution can never hit a log
singularity.  The mobility is likewise regularized to stay within
[sigma/8, 1/4] on the whole real line.

The energy-quadratization change of variables uses

    U = sqrt(Fhat(phi) + B),    H(phi) = f(phi) / sqrt(Fhat(phi) + B),

where f = Fhat' and B is a constant shift keeping the radicand positive.
``validate_shift`` certifies that a given B is large enough.

Note on the chemical potential: mu = -epsilon^2 * laplacian(phi) + f(phi).

All functions accept scalars or numpy arrays and are pure; they can be
evaluated concurrently over grid points with no coordination.
"""

from dataclasses import dataclass

import numpy as np

# exp underflows to subnormals below ~-708; clamping at -700 keeps the
# result an exact 0 contribution (sigma/8 branch) without FP exceptions
_EXP_CLAMP = -700.0


class DomainError(ValueError):
    """Fhat(x) + B <= 0 was encountered (shift constant B too small)."""


class ShiftTooSmall(ValueError):
    """validate_shift found min Fhat(x) + B <= 0."""

    def __init__(self, min_value, argmin):
        self.min_value = float(min_value)
        self.argmin = float(argmin)
        super().__init__(
            f"Fhat(x) + B has minimum {self.min_value:.6g} <= 0 "
            f"at x = {self.argmin:.6g}; increase the shift constant B"
        )


@dataclass(frozen=True)
class PhysParams:
    """Model constants.

    epsilon : interface-width constant, > 0
    sigma   : regularization parameter, 0 < sigma < 0.5
    theta   : Flory interaction parameter, > 1
    B       : energy-shift constant, >= 0 (B = 0 is constructible so that
              validate_shift can report it as too small; any simulation
              entry point runs validate_shift first)
    """

    epsilon: float = 0.05
    sigma: float = 0.005
    theta: float = 2.5
    B: float = 3.5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.sigma < 0.5:
            raise ValueError(f"sigma must be in (0, 0.5), got {self.sigma}")
        if not self.theta > 1:
            raise ValueError(f"theta must be > 1, got {self.theta}")
        if not self.B >= 0:
            raise ValueError(f"B must be >= 0, got {self.B}")


def mobility(x, sigma=0.005):
    """Regularized concentration-dependent mobility M(x).

    Quadratic arch (1 - (1-sigma)(2x-1)^2)/4 on [0, 1], exponential floor
    sigma/8 * (1 + exp(-2(1-sigma)((2x-1)^2 - 1)/sigma)) outside.  The two
    branches meet continuously at x = 0 and x = 1 with value sigma/4, and
    sigma/8 <= M(x) <= 1/4 everywhere.
    """
    x = np.asarray(x, dtype=np.float64)
    s = (2.0 * x - 1.0) ** 2
    inside = (x >= 0.0) & (x <= 1.0)
    expo = np.clip(-2.0 * (1.0 - sigma) * (s - 1.0) / sigma, _EXP_CLAMP, 0.0)
    out = np.where(
        inside,
        0.25 * (1.0 - (1.0 - sigma) * s),
        0.125 * sigma * (1.0 + np.exp(expo)),
    )
    return out if out.ndim else float(out)


def _branches(x, p: PhysParams):
    """Branch masks and log-safe clipped arguments for Fhat and derivatives."""
    x = np.asarray(x, dtype=np.float64)
    lower = x < p.sigma
    upper = x > 1.0 - p.sigma
    middle = ~(lower | upper)
    # clip so every log argument is >= sigma even where the branch is inactive
    xm = np.clip(x, p.sigma, 1.0 - p.sigma)
    xl = np.minimum(x, p.sigma)        # lower branch keeps (1-x)ln(1-x), 1-x >= 1-sigma
    xu = np.maximum(x, 1.0 - p.sigma)  # upper branch keeps x ln x, x >= 1-sigma
    return x, lower, middle, upper, xl, xm, xu


def free_energy(x, p: PhysParams):
    """Regularized bulk free energy Fhat(x), C^2 on all of R.

    Middle branch (sigma <= x <= 1-sigma) is the Flory-Huggins potential
    x ln x + (1-x) ln(1-x) + theta (x - x^2); the outer branches replace the
    singular log term with its second-order Taylor continuation around the
    stitch points.
    """
    x, lower, middle, upper, xl, xm, xu = _branches(x, p)
    sg, th = p.sigma, p.theta
    lnsg = np.log(sg)
    assert np.all(xm > 0.0) and np.all(1.0 - xm > 0.0) and np.all(xu > 0.0)
    bulk = th * (x - x * x)
    fm = xm * np.log(xm) + (1.0 - xm) * np.log(1.0 - xm)
    fl = (1.0 - xl) * np.log(1.0 - xl) + xl * xl / (2.0 * sg) + xl * lnsg - sg / 2.0
    fu = xu * np.log(xu) + (1.0 - xu) ** 2 / (2.0 * sg) + (1.0 - xu) * lnsg - sg / 2.0
    out = np.where(middle, fm, np.where(lower, fl, fu)) + bulk
    return out if out.ndim else float(out)


def free_energy_deriv(x, p: PhysParams):
    """f(x) = Fhat'(x), exact analytic derivative of the active branch."""
    x, lower, middle, upper, xl, xm, xu = _branches(x, p)
    sg, th = p.sigma, p.theta
    lnsg = np.log(sg)
    bulk = th * (1.0 - 2.0 * x)
    fm = np.log(xm / (1.0 - xm))
    fl = -np.log(1.0 - xl) - 1.0 + xl / sg + lnsg
    fu = np.log(xu) + 1.0 - (1.0 - xu) / sg - lnsg
    out = np.where(middle, fm, np.where(lower, fl, fu)) + bulk
    return out if out.ndim else float(out)


def free_energy_second_deriv(x, p: PhysParams):
    """Fhat''(x), used by the branch-stitching checks."""
    x, lower, middle, upper, xl, xm, xu = _branches(x, p)
    sg, th = p.sigma, p.theta
    fm = 1.0 / xm + 1.0 / (1.0 - xm)
    fl = 1.0 / (1.0 - xl) + 1.0 / sg
    fu = 1.0 / xu + 1.0 / sg
    out = np.where(middle, fm, np.where(lower, fl, fu)) - 2.0 * th
    return out if out.ndim else float(out)


def h_factor(x, p: PhysParams):
    """H(x) = f(x) / sqrt(Fhat(x) + B).

    Raises DomainError if the radicand is not positive anywhere; after
    validate_shift has passed this is unreachable.
    """
    x = np.asarray(x, dtype=np.float64)
    rad = free_energy(x, p) + p.B
    if np.any(rad <= 0.0):
        bad = np.argmin(rad)
        raise DomainError(
            f"Fhat + B = {np.min(rad):.6g} <= 0 at x = {x.flat[bad]:.6g}; "
            "shift constant B too small (run validate_shift)"
        )
    out = free_energy_deriv(x, p) / np.sqrt(rad)
    return out if out.ndim else float(out)


def validate_shift(p: PhysParams, lo=-10.0, hi=11.0, spacing=1e-4):
    """Certify Fhat(x) + B > 0 for all real x.

    Scans [lo, hi] at the given spacing and checks analytically that both
    outer branches are convex with outward-pointing slope at the scan ends
    (the x^2/(2 sigma) terms dominate), so no minimum can hide outside the
    window.  Raises ShiftTooSmall carrying the offending minimum.
    """
    xs = np.arange(lo, hi + spacing / 2, spacing)
    vals = free_energy(xs, p) + p.B
    i = int(np.argmin(vals))
    if vals[i] <= 0.0:
        raise ShiftTooSmall(vals[i], xs[i])
    # outer branches convex: Fhat'' = 1/(1-x) + 1/sigma - 2 theta (x <= sigma)
    # and 1/x + 1/sigma - 2 theta (x >= 1-sigma); both > 0 when 1/sigma > 2 theta,
    # and monotone slopes at the scan ends then bound the tails
    if 1.0 / p.sigma <= 2.0 * p.theta:
        raise ValueError(
            "validate_shift tail argument needs 1/sigma > 2*theta "
            f"(got sigma={p.sigma}, theta={p.theta})"
        )
    if not (free_energy_deriv(lo, p) < 0.0 < free_energy_deriv(hi, p)):
        raise ShiftTooSmall(vals[i], xs[i])
