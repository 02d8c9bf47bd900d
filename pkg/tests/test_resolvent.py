import math

import numpy as np
import pytest

from semipert.errors import InputError
from semipert.resolvent import (
    resolvent_difference_scan,
    spectral_enclosure,
    vertical_decay_scan,
)
from semipert.semigroup import Generator

from conftest import random_operator


class TestVerticalDecayScan:
    def test_zero_perturbation(self, rng):
        g = Generator(random_operator(rng, 4))
        scan = vertical_decay_scan(g, np.zeros((4, 4)), 2, 0.0, 1e4)
        assert np.all(scan.norms == 0.0)

    def test_normal_case_analytic_oracle(self):
        # A = diag(1, 3), B = I, q = inf: the norm at height y is the
        # reciprocal distance 1/sqrt(1 + y^2) to the nearest eigenvalue
        g = Generator(np.diag([1.0, 3.0]))
        scan = vertical_decay_scan(g, np.eye(2), math.inf, 0.0, 1e4, n_points=32)
        assert np.allclose(scan.norms, 1.0 / np.sqrt(1.0 + scan.ys**2), rtol=1e-9)

    def test_decay_slope(self, rng):
        for _ in range(5):
            g = Generator(random_operator(rng, 5, scale=2.0))
            b = random_operator(rng, 5)
            scan = vertical_decay_scan(g, b, 2, 0.3, 1e4)
            assert scan.fitted_decay <= -0.9

    def test_monotone_over_top_decade(self, rng):
        g = Generator(random_operator(rng, 5, scale=2.0))
        b = random_operator(rng, 5)
        scan = vertical_decay_scan(g, b, 2, 0.0, 1e4)
        top = scan.norms[scan.ys >= scan.ys[-1] / 10.0]
        assert np.all(np.diff(top) < 0)

    def test_grazing_points_skipped(self):
        y_hit = 1e3
        g = Generator(np.diag([1j * y_hit, -1j * y_hit]))
        scan = vertical_decay_scan(g, np.eye(2), 2, 0.0, y_hit, n_points=33)
        assert y_hit in scan.skipped
        assert all(abs(y - y_hit) > 0 for y in scan.ys)

    def test_rejects_few_points(self, rng):
        g = Generator(random_operator(rng, 3))
        with pytest.raises(InputError):
            vertical_decay_scan(g, np.eye(3), 2, 0.0, 1e3, n_points=4)


class TestResolventDifferenceScan:
    def test_identical_generators(self, rng):
        g = Generator(random_operator(rng, 4))
        scan = resolvent_difference_scan(g, g, 2, 0.0, 1e4)
        assert np.all(scan.norms <= 1e-14)

    def test_scalar_shift_oracle(self):
        # A2 = A1 + eps I: difference norm at height y ~ eps / y^2
        eps = 1e-3
        a = np.diag([1.0, 2.0])
        scan = resolvent_difference_scan(
            Generator(a), Generator(a + eps * np.eye(2)), math.inf, 0.0, 1e5
        )
        top = scan.ys >= scan.ys[-1] / 10.0
        assert np.allclose(scan.norms[top], eps / scan.ys[top] ** 2, rtol=1e-2)

    def test_second_resolvent_identity_residual(self, rng):
        for _ in range(5):
            g1 = Generator(random_operator(rng, 5, scale=2.0))
            g2 = Generator(g1.a.entries + random_operator(rng, 5, scale=0.5))
            scan = resolvent_difference_scan(g1, g2, 2, 0.1, 1e4)
            assert np.max(scan.identity_residuals) <= 1e-9

    def test_rank_one_difference_trace_norm_slope(self, rng):
        g1 = Generator(random_operator(rng, 5, scale=2.0))
        u = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        bump = 0.5 * np.outer(u, v.conj()) / (np.linalg.norm(u) * np.linalg.norm(v))
        g2 = Generator(g1.a.entries + bump)
        scan = resolvent_difference_scan(g1, g2, 1, 0.0, 1e4)
        assert scan.fitted_decay <= -1.8

    def test_decays_three_orders_by_y_max(self, rng):
        g1 = Generator(random_operator(rng, 5, scale=2.0))
        g2 = Generator(g1.a.entries + random_operator(rng, 5, scale=0.5))
        radius = max(np.abs(g1.eigenvalues).max(), np.abs(g2.eigenvalues).max())
        scan = resolvent_difference_scan(g1, g2, 2, 0.0, 1e3 * radius * 10)
        assert scan.norms[-1] < 1e-3 * scan.norms[0]


class TestSpectralEnclosure:
    def test_real_spectrum_gives_flat_margin(self):
        g = Generator(np.diag([0.5, 1.0, 4.0]))
        env = spectral_enclosure(g, margin=0.2)
        assert np.allclose(env.F, 0.2, atol=1e-15)

    def test_reads_off_complex_spectrum(self):
        g = Generator(np.diag([1.0 + 2.0j, 3.0 - 1.0j]))
        env = spectral_enclosure(g, margin=0.1)
        assert env.bound(1.0) == pytest.approx(2.1)
        assert env.bound(3.0) == pytest.approx(1.1)

    def test_contains_spectrum_of_random_pairs(self, rng):
        for _ in range(10):
            a = random_operator(rng, 6, scale=2.0)
            b = random_operator(rng, 6, scale=0.5)
            env = spectral_enclosure(Generator(a), margin=0.05)
            for lam in np.linalg.eigvals(a):
                assert env.contains(lam)
            env_pair = spectral_enclosure(Generator(a + b), margin=0.05)
            for lam in np.linalg.eigvals(a + b):
                assert env_pair.contains(lam)

    def test_rejects_nonpositive_margin(self, rng):
        with pytest.raises(InputError):
            spectral_enclosure(Generator(random_operator(rng, 3)), margin=0.0)
