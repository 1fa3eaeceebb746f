import numpy as np
import pytest

from chieq.initial import (DimensionError, init_random, init_sinusoidal,
                           splitmix64, uniform_symmetric)
from chieq.spectral import GridSpec

G = GridSpec(2, 64)


class TestSplitmix:
    def test_deterministic(self):
        assert np.array_equal(splitmix64(42, 0, 100), splitmix64(42, 0, 100))

    def test_counter_mode_splits(self):
        whole = splitmix64(7, 0, 100)
        left, right = splitmix64(7, 0, 60), splitmix64(7, 60, 40)
        assert np.array_equal(whole, np.concatenate([left, right]))

    def test_seeds_differ(self):
        assert not np.array_equal(splitmix64(1, 0, 64), splitmix64(2, 0, 64))

    def test_uniform_range_and_spread(self):
        u = uniform_symmetric(3, 100000)
        assert np.all(u >= -1.0) and np.all(u <= 1.0)
        assert abs(np.mean(u)) < 0.01
        assert np.std(u) == pytest.approx(1.0 / np.sqrt(3.0), rel=0.02)


class TestSinusoidal:
    def test_point_values(self):
        phi = init_sinusoidal(G)
        # x = pi/4, y = 0 sits on the grid: sin(pi/2) cos(0) = 1
        i = G.n // 8
        assert phi[i, 0] == pytest.approx(0.73, rel=1e-15)
        assert phi[0, 0] == pytest.approx(0.48, rel=1e-15)

    def test_mean(self):
        assert np.mean(init_sinusoidal(G)) == pytest.approx(0.48, abs=1e-14)

    def test_rejects_3d(self):
        with pytest.raises(DimensionError):
            init_sinusoidal(GridSpec(3, 16))


class TestRandom:
    def test_zero_amplitude_is_uniform(self):
        phi = init_random(G, 0.35, 0.0, seed=9)
        assert np.all(phi == 0.35)

    def test_mean_exact(self):
        phi = init_random(G, 0.3, 0.001, seed=9)
        assert abs(np.mean(phi) - 0.3) <= 1e-15

    def test_seed_determinism(self):
        a = init_random(G, 0.3, 0.001, seed=5)
        b = init_random(G, 0.3, 0.001, seed=5)
        c = init_random(G, 0.3, 0.001, seed=6)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_amplitude_bound(self):
        # noise is uniform on [-1, 1] minus its sample mean
        phi = init_random(G, 0.5, 0.01, seed=1)
        assert np.max(np.abs(phi - 0.5)) <= 0.01 * 1.05

    def test_x_fastest_layout(self):
        # the flat splitmix sequence fills x first: phi[ix, iy] with
        # consecutive ix maps to consecutive counter values at fixed iy
        phi = init_random(G, 0.0, 1.0, seed=4)
        flat = uniform_symmetric(4, G.npoints)
        flat = flat - flat.mean()
        assert phi[3, 0] == pytest.approx(flat[3], rel=1e-12)
        assert phi[0, 1] == pytest.approx(flat[G.n], rel=1e-12)

    def test_rejects_negative_amplitude(self):
        with pytest.raises(ValueError):
            init_random(G, 0.3, -1e-3, seed=0)
