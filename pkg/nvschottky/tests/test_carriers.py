import dataclasses
import unittest
import warnings

import numpy as np
import pytest

from ..carriers import (
    calibrate_generation,
    generation_for_density,
    neutrality_residual,
    pair_rate_at,
    solve_carriers,
    steady_carriers,
    steady_carriers_bisect,
)
from ..config import load_config
from ..exceptions import ClampedIterateWarning, ConvergenceError, InvariantViolation, UnreachableTargetError


class TestSteadyCarriers(unittest.TestCase):
    def setUp(self):
        self.config = load_config(environ={})
        self.mat = self.config.material

    def test_dark(self):
        state = steady_carriers(0.0, self.mat)
        self.assertEqual(state.p, 0.0)
        self.assertEqual(state.n, 0.0)
        self.assertEqual(state.N_D_plus, self.mat.N_boron)

    def test_negative_generation(self):
        with self.assertRaises(InvariantViolation):
            steady_carriers(-1.0, self.mat)

    def test_neutrality(self):
        for G in (1e16, 1e20, 1e24, 1e26):
            with self.subTest(G=G):
                state = steady_carriers(G, self.mat, self.config.carriers)
                self.assertLess(neutrality_residual(state), 1e-12)
                self.assertGreater(state.p, state.n)
                self.assertLess(state.N_D_plus, self.mat.N_boron)

    def test_newton_matches_bisection(self):
        for G in (1e12, 1e18, 1e24):
            with self.subTest(G=G):
                newton = steady_carriers(G, self.mat)
                bisect = steady_carriers_bisect(G, self.mat)
                self.assertAlmostEqual(newton.p / bisect.p, 1.0, places=9)
                self.assertAlmostEqual(newton.n / bisect.n, 1.0, places=9)

    def test_newton_matches_bisection_on_random_draws(self):
        rng = np.random.default_rng(20231018)
        for draw in range(100):
            G = 10 ** rng.uniform(12, 24)
            mat = dataclasses.replace(
                self.mat,
                c_e=10 ** rng.uniform(-13, -11),
                c_h=10 ** rng.uniform(-15, -13),
                N_boron=10 ** rng.uniform(20, 23),
                hole_trap_density=10 ** rng.uniform(15, 19),
            )
            with self.subTest(draw=draw, G=G):
                with warnings.catch_warnings():
                    warnings.simplefilter('ignore', ClampedIterateWarning)
                    newton = steady_carriers(G, mat)
                bisect = steady_carriers_bisect(G, mat)
                self.assertEqual(newton.p, pytest.approx(bisect.p, rel=1e-9))
                self.assertEqual(newton.n, pytest.approx(bisect.n, rel=1e-9))
                self.assertLess(neutrality_residual(newton), 1e-12)

    def test_holes_grow_with_generation(self):
        densities = [steady_carriers(G, self.mat).p for G in (1e14, 1e16, 1e18, 1e20, 1e22)]
        self.assertEqual(densities, sorted(densities))
        self.assertEqual(len(set(densities)), len(densities))

    def test_iteration_budget(self):
        with self.assertRaises(ConvergenceError) as cm:
            solve_carriers(1e20, self.mat, max_iter=1)
        self.assertEqual(cm.exception.iterations, 1)

    def test_converges_quietly(self):
        with warnings.catch_warnings():
            warnings.simplefilter('error')
            result = solve_carriers(1e20, self.mat)
        self.assertFalse(result.clamped)
        self.assertGreater(result.iterations, 0)


class TestCalibration(unittest.TestCase):
    def setUp(self):
        self.config = load_config(environ={})
        self.mat = self.config.material

    def test_generation_for_density_inverts_balance(self):
        for p in (1e16, 3.5e20, 5e21):
            with self.subTest(p=p):
                G = generation_for_density(p, self.mat)
                self.assertAlmostEqual(steady_carriers(G, self.mat).p / p, 1.0, places=9)

    def test_target_above_acceptors(self):
        with self.assertRaises(UnreachableTargetError):
            generation_for_density(self.mat.N_boron, self.mat)

    def test_calibrated_scale_reproduces_target(self):
        config = self.config
        cal = config.calibration
        scale = calibrate_generation(cal.target_p, cal.power, self.mat, config.photophysics, config.geometry)
        self.assertGreater(scale, 0)
        G = scale * self.mat.nv_density * pair_rate_at(cal.power, config.geometry, config.photophysics)
        self.assertEqual(steady_carriers(G, self.mat).p, pytest.approx(cal.target_p, rel=1e-9))

    def test_zero_target(self):
        config = self.config
        self.assertEqual(calibrate_generation(0.0, 0.1, self.mat, config.photophysics, config.geometry), 0.0)

    def test_unreachable_target(self):
        config = self.config
        with self.assertRaises(UnreachableTargetError):
            calibrate_generation(2 * self.mat.N_boron, 0.1, self.mat, config.photophysics, config.geometry)
