"""Initial conditions for the simulation drivers.

Two variants: the deterministic sinusoidal benchmark profile used by the
temporal-convergence study, and uniformly random perturbations around a
mean concentration for spinodal-decomposition runs.

Randomness comes from splitmix64 in counter mode: output i is a bijective
64-bit mix of (seed + (i+1) * golden), so any slab of the field can be
generated independently of the rest (index-splittable), the sequence is
identical on every platform, and the whole grid vectorizes.  Uniform values
in [-1, 1] take the top 53 bits of each word.
"""

import numpy as np

from .spectral import GridSpec

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


class DimensionError(ValueError):
    pass


def splitmix64(seed, start, count):
    """count pseudo-random uint64 words at counter offsets start..start+count-1."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(seed) + idx * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def uniform_symmetric(seed, count, start=0):
    """i.i.d. uniforms on [-1, 1] from the top 53 bits of splitmix64 words."""
    words = splitmix64(seed, start, count)
    u01 = (words >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    return 2.0 * u01 - 1.0


def init_sinusoidal(grid: GridSpec):
    """0.25 sin(2x) cos(2y) + 0.48, the smooth 2D benchmark profile."""
    if grid.dim != 2:
        raise DimensionError("sinusoidal initial data is two-dimensional")
    x, y = grid.coords()
    return 0.25 * np.sin(2.0 * x) * np.cos(2.0 * y) + 0.48


def init_random(grid: GridSpec, mean, amplitude=0.001, seed=0):
    """mean + amplitude * noise, shifted so the field mean is exactly `mean`.

    The noise is uniform on [-1, 1], laid out in the canonical serialization
    order (x fastest), so a given (seed, grid) always produces the identical
    field.
    """
    if amplitude < 0:
        raise ValueError(f"amplitude must be >= 0, got {amplitude}")
    r = uniform_symmetric(seed, grid.npoints)
    r -= r.mean()
    field = np.asarray(r).reshape(grid.shape[::-1]).T  # x fastest in memory order
    return mean + amplitude * field
