"""Periodic grid and Fourier-based differential operators.

Fields live on a uniform grid over [0, 2*pi]^d (d = 2 or 3) and are plain
float64 numpy arrays of shape (n,)*d, indexed [ix, iy(, iz)].  The canonical
serialization order (snapshots) is x fastest.  Wavenumbers per axis are the
integers -n/2 .. n/2-1.

Nyquist convention: the first-derivative weight at the Nyquist mode is zero
(the odd derivative of a real signal is not representable there), while the
pure Laplacian keeps the full symmetric set with weight -(n/2)^2 on that
mode.  divergence(gradient(f)) therefore differs from laplacian(f) in the
Nyquist modes only.  The variable-coefficient operator v -> div(M grad v)
is built from the zero-Nyquist first derivatives in flux form, which makes
it exactly self-adjoint and mean-conserving at the discrete level.

A consequence worth knowing: the discrete div(M grad .) annihilates every
mode whose wavenumber components all lie in {0, n/2} (the "corner" modes;
2^d - 1 of them plus the constant).  ``kernel_mask`` exposes that set and
``project`` removes it together with the mean; the time-step solver handles
those modes by their exact decoupled update.

Real-to-complex transforms are used throughout; results agree with the full
complex transform to roundoff.  One SpectralOps instance must not be used by
two concurrent callers (no internal locking), but distinct instances may.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft

LENGTH = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid: dim in {2, 3}, n points per axis (power of two >= 8)."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def npoints(self):
        return self.n**self.dim

    @property
    def spacing(self):
        return LENGTH / self.n

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    @property
    def volume(self):
        return LENGTH**self.dim

    def axis_coords(self):
        return np.arange(self.n) * self.spacing

    def coords(self):
        """Meshgrid coordinate arrays (X, Y[, Z]), each of grid shape."""
        x = self.axis_coords()
        return np.meshgrid(*([x] * self.dim), indexing="ij")


def integrate(f, grid: GridSpec):
    """Rectangle-rule integral over the domain (spectrally exact for trig polys)."""
    return float(np.sum(f)) * grid.cell_volume


def inner(u, v, grid: GridSpec):
    """Discrete L2 inner product."""
    return float(np.sum(u * v)) * grid.cell_volume


def norm_l2(u, grid: GridSpec):
    return np.sqrt(max(inner(u, u, grid), 0.0))


class SpectralOps:
    """Fourier differential operators on one grid, with cached weight arrays.

    ``dealias=True`` applies the 2/3-rule truncation to the first-derivative
    weights (products inside div(M grad .) then cannot alias back onto kept
    modes).  Off by default; the energy-stability structure does not need it.
    """

    def __init__(self, grid: GridSpec, dealias: bool = False):
        self.grid = grid
        self.dealias = dealias
        n, d = grid.n, grid.dim
        kfull = np.fft.fftfreq(n, d=1.0 / n)  # 0..n/2-1, -n/2..-1
        khalf = np.fft.rfftfreq(n, d=1.0 / n)  # 0..n/2
        axes_k = [kfull] * (d - 1) + [khalf]

        self._deriv = []  # i*k per axis, Nyquist (and dealiased) modes zeroed
        ksq_full = 0.0
        ksq_grad = 0.0
        for j, k in enumerate(axes_k):
            shape = [1] * d
            shape[j] = k.size
            k = k.reshape(shape)
            keep = np.abs(k) != n // 2
            if dealias:
                keep &= np.abs(k) <= n // 3
            kd = np.where(keep, k, 0.0)
            self._deriv.append(1j * kd)
            ksq_full = ksq_full + k * k
            ksq_grad = ksq_grad + kd * kd
        self._lap_sym = -ksq_full            # symbol of the pure Laplacian
        self._ksq_grad = ksq_grad            # |k|^2 built from zeroed first derivatives
        self._kernel = ksq_grad == 0.0       # constant + corner modes (+ dealiased shell)
        self._shape = grid.shape
        # Parseval weights for the half-spectrum layout: modes with last-axis
        # wavenumber strictly between 0 and n/2 stand for a conjugate pair
        wt = np.full(khalf.size, 2.0)
        wt[0] = 1.0
        wt[-1] = 1.0
        self._dot_weights = wt.reshape([1] * (d - 1) + [khalf.size])

    # -- transforms ---------------------------------------------------------

    def forward(self, f):
        return _fft.rfftn(f)

    def inverse(self, F):
        return _fft.irfftn(F, s=self._shape)

    # -- operators ----------------------------------------------------------

    def gradient(self, f):
        """Tuple of the dim spectral partial derivatives of f."""
        F = _fft.rfftn(f)
        return tuple(_fft.irfftn(w * F, s=self._shape) for w in self._deriv)

    def divergence(self, comps):
        """Sum of spectral partial derivatives of the components."""
        S = self._deriv[0] * _fft.rfftn(comps[0])
        for w, c in zip(self._deriv[1:], comps[1:]):
            S += w * _fft.rfftn(c)
        return _fft.irfftn(S, s=self._shape)

    def laplacian(self, f):
        return _fft.irfftn(self._lap_sym * _fft.rfftn(f), s=self._shape)

    def variable_laplacian(self, v, m):
        """div(m grad v), pseudo-spectral flux form.

        Derivatives are spectral (zero-Nyquist weights), the product m * grad v
        is pointwise in physical space.  Exactly self-adjoint and mean-free.
        """
        V = _fft.rfftn(v)
        S = None
        for w in self._deriv:
            g = _fft.irfftn(w * V, s=self._shape)
            T = w * _fft.rfftn(m * g)
            S = T if S is None else S + T
        return _fft.irfftn(S, s=self._shape)

    # -- kernel handling ----------------------------------------------------

    @property
    def kernel_mask(self):
        return self._kernel

    def project(self, f):
        """Remove the mean and the div(M grad .) kernel modes from f."""
        F = _fft.rfftn(f)
        F[self._kernel] = 0.0
        return _fft.irfftn(F, s=self._shape)

    def kernel_part(self, f):
        """The complementary part removed by project (mean included)."""
        F = _fft.rfftn(f)
        F[~self._kernel] = 0.0
        return _fft.irfftn(F, s=self._shape)

    def zero_kernel_spec(self, F):
        F[self._kernel] = 0.0
        return F

    # -- diagonal symbols for preconditioners -------------------------------

    @property
    def minus_lap_symbol(self):
        """-(Laplacian symbol): |k|^2 with the Nyquist modes kept."""
        return -self._lap_sym

    @property
    def grad_ksq_symbol(self):
        """|k|^2 built from the zeroed first-derivative weights (kernel modes: 0)."""
        return self._ksq_grad

    @property
    def deriv_weights(self):
        """Per-axis spectral first-derivative weights i*k (broadcastable)."""
        return self._deriv

    @property
    def dot_weights(self):
        """Conjugate-pair multiplicities for Parseval dots on the half spectrum."""
        return self._dot_weights

    @property
    def spectral_shape(self):
        n, d = self.grid.n, self.grid.dim
        return (n,) * (d - 1) + (n // 2 + 1,)
