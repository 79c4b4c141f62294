import dataclasses
import math
import unittest

import numpy as np
import pytest

from .. import photophysics
from ..config import load_config, replace_section
from ..constants import NV_GYROMAGNETIC_RATIO
from ..electrostatics import Grid2D
from ..exceptions import DegenerateInputError, InvariantViolation
from ..experiments import odmr_contrast
from ..photophysics import (
    LEVELS,
    NVLevelRates,
    beam_intensity,
    build_spectrum,
    generation_field,
    gradient_for_lines,
    level_rates,
    line_shape,
    rate_matrix,
    region_fields,
    region_states,
    steady_state,
)


def test_beam_intensity():
    assert beam_intensity(0.1, 5e-6) == pytest.approx(0.1 / (math.pi * 25e-12), rel=1e-15)
    with pytest.raises(InvariantViolation):
        beam_intensity(0.1, 0.0)


class TestSteadyState(unittest.TestCase):
    def setUp(self):
        self.params = load_config(environ={}).photophysics
        self.intensity = beam_intensity(0.1, 5e-6)

    def test_rate_matrix_conserves_population(self):
        matrix = rate_matrix(level_rates(self.params, self.intensity, k_rabi=1e6))
        np.testing.assert_allclose(matrix.sum(axis=0), 0.0, atol=1e-6)
        self.assertEqual(matrix.shape, (len(LEVELS), len(LEVELS)))

    def test_populations_normalized(self):
        state = steady_state(level_rates(self.params, self.intensity))
        self.assertAlmostEqual(sum(state.populations), 1.0, places=12)
        self.assertTrue(all(p >= 0 for p in state.populations))
        self.assertLessEqual(state.residual, photophysics.STEADY_STATE_TOL)

    def test_charge_cycle_balance(self):
        # Every ionization is matched by one back-conversion in the steady state.
        state = steady_state(level_rates(self.params, self.intensity))
        self.assertGreater(state.pair_rate, 0)
        self.assertAlmostEqual(state.pair_rate / state.backconversion_flux, 1.0, places=8)

    def test_pair_rate_grows_with_intensity(self):
        low = steady_state(level_rates(self.params, self.intensity)).pair_rate
        high = steady_state(level_rates(self.params, 2 * self.intensity)).pair_rate
        self.assertGreater(high, low)

    def test_mixing_quenches_nv_minus_pl(self):
        off = steady_state(level_rates(self.params, self.intensity))
        on = steady_state(level_rates(self.params, self.intensity, k_rabi=1e7))
        self.assertLess(on.pl_nv_minus, off.pl_nv_minus)
        self.assertLess(on.pair_rate, off.pair_rate)
        self.assertGreater(on.population('M'), off.population('M'))

    def test_all_zero_rates(self):
        rates = NVLevelRates(
            k_pump=0, k_rad=0, k_isc0=0, k_isc1=0, k_ms=0, k_ion=0, k_back=0, k_rabi=0, linewidth=1e7, k_rad0=0
        )
        with self.assertRaises(DegenerateInputError):
            steady_state(rates)

    def test_no_pumping_is_degenerate(self):
        # Without light the NV0 manifold and the NV- manifold do not exchange population.
        with self.assertRaises(DegenerateInputError):
            steady_state(level_rates(self.params, 0.0))

    def test_negative_rate(self):
        with self.assertRaises(InvariantViolation):
            level_rates(self.params, -1.0)


class TestSpectrum(unittest.TestCase):
    def setUp(self):
        self.config = load_config(environ={})
        self.params = self.config.photophysics

    def test_zero_field_peak(self):
        spectrum = build_spectrum(0.0, self.params)
        self.assertEqual(len(spectrum.lines), 8)
        self.assertAlmostEqual(line_shape(spectrum, self.params.zfs), 1.0, places=12)
        self.assertLess(line_shape(spectrum, self.params.zfs + 10 * self.params.linewidth), 0.01)

    def test_aligned_line_splitting(self):
        B = 0.01
        centers = sorted(line.center for line in build_spectrum(B, self.params).lines)
        self.assertAlmostEqual(centers[0], self.params.zfs - NV_GYROMAGNETIC_RATIO * B, delta=1.0)
        self.assertAlmostEqual(centers[-1], self.params.zfs + NV_GYROMAGNETIC_RATIO * B, delta=1.0)

    def test_gradient_for_lines(self):
        geometry = self.config.geometry
        B_axial, B_gradient = gradient_for_lines(1.98e9, 2.02e9, geometry, self.params.zfs)
        drive = replace_section(self.config, 'drive', B_axial=B_axial, B_gradient=B_gradient).drive
        fields = region_fields(geometry, drive)
        self.assertAlmostEqual(self.params.zfs - NV_GYROMAGNETIC_RATIO * fields['A'], 1.98e9, delta=1e-3)
        self.assertAlmostEqual(self.params.zfs - NV_GYROMAGNETIC_RATIO * fields['B'], 2.02e9, delta=1e-3)

    def test_resonant_region_has_larger_odmr_contrast(self):
        geometry = self.config.geometry
        B_axial, B_gradient = gradient_for_lines(1.98e9, 2.02e9, geometry, self.params.zfs)
        config = replace_section(self.config, 'drive', B_axial=B_axial, B_gradient=B_gradient, rf_frequency=1.98e9)
        off = region_states(self.params, geometry, replace_section(config, 'drive', rf_enabled=False).drive)
        on = region_states(self.params, geometry, replace_section(config, 'drive', rf_enabled=True).drive)
        contrast_A = odmr_contrast(off['A'].pl_nv_minus, on['A'].pl_nv_minus)
        contrast_B = odmr_contrast(off['B'].pl_nv_minus, on['B'].pl_nv_minus)
        self.assertGreater(contrast_A, 0)
        self.assertGreater(contrast_A, contrast_B)


class TestGenerationField(unittest.TestCase):
    def setUp(self):
        self.config = load_config(environ={})
        self.grid = Grid2D.from_geometry(self.config.geometry)

    def test_slab_profile(self):
        config = self.config
        G = generation_field(
            config.geometry, config.drive, config.photophysics, config.material.nv_density, grid=self.grid
        )
        self.assertEqual(G.shape, self.grid.shape)
        self.assertTrue(np.all(G[: self.grid.slab_row + 1] > 0))
        self.assertTrue(np.all(G[self.grid.slab_row + 1 :] == 0))
        # Without a field gradient both electrode regions see the same rates.
        self.assertEqual(np.unique(G[0]).size, 1)

    def test_scale_is_linear(self):
        config = self.config
        args = (config.geometry, config.drive, config.photophysics, config.material.nv_density)
        np.testing.assert_allclose(generation_field(*args, scale=3.0), 3.0 * generation_field(*args), rtol=1e-15)

    def test_dark(self):
        config = replace_section(self.config, 'drive', optical_power=0.0)
        G = generation_field(config.geometry, config.drive, config.photophysics, config.material.nv_density)
        self.assertFalse(G.any())


@pytest.mark.parametrize("power", [0.1, 0.2, 0.4])
@pytest.mark.parametrize("waist", [5e-6, 10e-6])
@pytest.mark.parametrize("k_rabi", [1e5, 1e7, 1e9])
@pytest.mark.parametrize("branching", [1 / 3, 0.5, 1.0])
def test_mixing_never_raises_pair_rate(power, waist, k_rabi, branching):
    params = replace_section(load_config(environ={}), 'photophysics', ms0_branching=branching).photophysics
    intensity = beam_intensity(power, waist)
    off = steady_state(level_rates(params, intensity))
    on = steady_state(level_rates(params, intensity, k_rabi=k_rabi))
    assert on.pair_rate < off.pair_rate
    assert on.pl_nv_minus < off.pl_nv_minus
    # Both signals are proportional to the excited NV- population.
    assert on.pair_rate / off.pair_rate == pytest.approx(on.pl_nv_minus / off.pl_nv_minus, rel=1e-9)


def test_contrast_grows_with_mixing():
    params = load_config(environ={}).photophysics
    intensity = beam_intensity(0.4, 5e-6)
    off = steady_state(level_rates(params, intensity)).pl_nv_minus
    contrasts = [
        odmr_contrast(off, steady_state(level_rates(params, intensity, k_rabi=k)).pl_nv_minus)
        for k in (1e5, 1e6, 1e7, 1e8)
    ]
    assert contrasts == sorted(contrasts)
    assert contrasts[0] > 0


@pytest.mark.parametrize("power", [0.1, 0.4])
def test_no_contrast_without_spin_selective_shelving(power):
    config = load_config(environ={})
    params = replace_section(config, 'photophysics', k_isc1=config.photophysics.k_isc0).photophysics
    intensity = beam_intensity(power, 5e-6)
    off = steady_state(level_rates(params, intensity))
    on = steady_state(level_rates(params, intensity, k_rabi=1e8))
    assert odmr_contrast(off.pl_nv_minus, on.pl_nv_minus) == pytest.approx(0.0, abs=1e-9)
    assert on.pair_rate == pytest.approx(off.pair_rate, rel=1e-9)


def test_branching_below_one_third_is_rejected():
    params = load_config(environ={}).photophysics
    rates = level_rates(params, beam_intensity(0.1, 5e-6))
    with pytest.raises(InvariantViolation):
        dataclasses.replace(rates, ms0_branching=0.3)
