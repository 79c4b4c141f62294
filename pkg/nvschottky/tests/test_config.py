import unittest

import pytest

from ..config import (
    config_to_dict,
    env_overrides,
    load_config,
    load_config_file,
    parse_set_options,
    replace_section,
    serialize_config,
)
from ..exceptions import ConfigParseError, InvariantViolation, OverrideWarning
from . import compact_config, get_fixture_path


class TestLoadConfig(unittest.TestCase):
    def test_defaults_in_si(self):
        config = load_config(environ={})
        self.assertEqual(config.material.phi1, 1.2)
        self.assertEqual(config.material.N_nitrogen, 1.763e23)
        self.assertEqual(config.material.N_boron, 8.815e21)
        self.assertEqual(config.material.c_e, 1e-12)
        self.assertEqual(config.geometry.electrode_gap, 2e-4)
        self.assertEqual(config.drive.optical_power, 0.1)
        self.assertEqual(config.drive.rf_frequency, 2.87e9)
        self.assertEqual(config.calibration.target_p, 3.5e20)
        self.assertIsNone(config.solver.cache_dir)
        self.assertFalse(config.drive.rf_enabled)

    def test_slab_follows_beam_waist(self):
        config = load_config(environ={})
        self.assertEqual(config.geometry.slab_depth, 2 * config.geometry.beam_waist)

        config = load_config(overrides=['geometry.beam_waist=10'], environ={})
        self.assertEqual(config.geometry.beam_waist, 1e-5)
        self.assertEqual(config.geometry.slab_depth, 2e-5)

        config = load_config(overrides=['geometry.slab_depth=16 um'], environ={})
        self.assertEqual(config.geometry.beam_waist, 8e-6)

    def test_domain_ends_at_slab_bottom_by_default(self):
        geometry = load_config(environ={}).geometry
        self.assertIsNone(geometry.box_depth)
        self.assertEqual(geometry.domain_depth, geometry.slab_depth)

        geometry = load_config(overrides=['geometry.beam_waist=10'], environ={}).geometry
        self.assertEqual(geometry.domain_depth, 2e-5)

    def test_explicit_box_depth(self):
        geometry = load_config(overrides=['geometry.box_depth=40'], environ={}).geometry
        self.assertEqual(geometry.domain_depth, 4e-5)
        self.assertEqual(geometry.slab_depth, 1e-5)

        config = load_config(overrides=['geometry.box_depth=40', 'geometry.box_depth=null'], environ={})
        self.assertIsNone(config.geometry.box_depth)

        with self.assertRaises(InvariantViolation) as cm:
            load_config(overrides=['geometry.box_depth=8'], environ={})
        self.assertEqual(cm.exception.field, 'geometry.slab_depth')

    def test_inconsistent_slab_depth(self):
        with self.assertRaises(InvariantViolation) as cm:
            load_config(overrides=['geometry.beam_waist=5', 'geometry.slab_depth=12'], environ={})
        self.assertEqual(cm.exception.field, 'geometry.slab_depth')

    def test_grid_must_divide_lengths(self):
        with self.assertRaises(InvariantViolation) as cm:
            load_config(overrides=['geometry.grid_h=3'], environ={})
        self.assertIn('grid_h', str(cm.exception))

    def test_document_layers_over_defaults(self):
        config = load_config("drive:\n  optical_power: 0.4 W\n", environ={})
        self.assertEqual(config.drive.optical_power, 0.4)
        self.assertEqual(config.material.phi1, 1.2)

    def test_document_as_mapping(self):
        config = load_config({'drive': {'optical_power': 200}}, environ={})
        self.assertEqual(config.drive.optical_power, 0.2)

    def test_set_option(self):
        config = load_config(overrides=['drive.optical_power=400', 'drive.rf_enabled=true'], environ={})
        self.assertEqual(config.drive.optical_power, 0.4)
        self.assertTrue(config.drive.rf_enabled)

    def test_set_mapping(self):
        config = load_config(overrides={'drive.positive_electrode': 'b'}, environ={})
        self.assertEqual(config.drive.positive_electrode, 'B')

    def test_environment(self):
        config = load_config(environ={'NVSCHOTTKY_DRIVE__OPTICAL_POWER': '200'})
        self.assertEqual(config.drive.optical_power, 0.2)

    def test_set_option_wins_over_environment(self):
        with pytest.warns(OverrideWarning):
            config = load_config(
                overrides=['drive.optical_power=50'], environ={'NVSCHOTTKY_DRIVE__OPTICAL_POWER': '200'}
            )
        self.assertEqual(config.drive.optical_power, 0.05)

    def test_unknown_key_reports_line(self):
        with self.assertRaises(ConfigParseError) as cm:
            load_config("drive:\n  optical_power: 3\n  optical_pwr: 3\n", environ={})
        self.assertEqual(cm.exception.field, 'drive.optical_pwr')
        self.assertEqual(cm.exception.line, 3)

    def test_unknown_section(self):
        with self.assertRaises(ConfigParseError):
            load_config("laser:\n  power: 3\n", environ={})

    def test_invalid_yaml(self):
        with self.assertRaises(ConfigParseError) as cm:
            load_config("drive: [1, 2\n", environ={})
        self.assertIsNotNone(cm.exception.line)

    def test_bad_values(self):
        with self.assertRaises(ConfigParseError):
            load_config("drive:\n  rf_enabled: maybe\n", environ={})
        with self.assertRaises(ConfigParseError):
            load_config("carriers:\n  max_iter: 2.5\n", environ={})
        with self.assertRaises(ConfigParseError):
            load_config("drive:\n  positive_electrode: C\n", environ={})
        with self.assertRaises(ConfigParseError):
            load_config(overrides={'drive.colour': 'red'}, environ={})

    def test_bad_boron(self):
        with self.assertRaises(InvariantViolation) as cm:
            load_config_file(get_fixture_path('bad_boron.yaml'), environ={})
        self.assertEqual(cm.exception.field, 'material.N_nitrogen')

    def test_zero_temperature(self):
        with self.assertRaises(InvariantViolation) as cm:
            load_config_file(get_fixture_path('zero_T.yaml'), environ={})
        self.assertEqual(cm.exception.field, 'material.T')

    def test_bad_key_file(self):
        with self.assertRaises(ConfigParseError) as cm:
            load_config_file(get_fixture_path('bad_key.yaml'), environ={})
        self.assertEqual(cm.exception.line, 3)

    def test_missing_file(self):
        with self.assertRaises(ConfigParseError):
            load_config_file(get_fixture_path('does_not_exist.yaml'), environ={})

    def test_minimal_fixture_matches_compact_config(self):
        self.assertEqual(load_config_file(get_fixture_path('minimal.yaml'), environ={}), compact_config())


class TestSerialization(unittest.TestCase):
    def test_round_trip_is_exact(self):
        config = load_config(overrides=['drive.optical_power=123.456', 'material.eta=1.0000001'], environ={})
        self.assertEqual(load_config(serialize_config(config), environ={}), config)

    def test_dict_carries_units(self):
        values = config_to_dict(load_config(environ={}))
        self.assertEqual(values['drive']['optical_power'], '0.1 W')
        self.assertEqual(values['drive']['positive_electrode'], 'A')
        self.assertEqual(values['carriers']['max_iter'], 100)
        self.assertIsNone(values['geometry']['box_depth'])


class TestOverrides(unittest.TestCase):
    def test_parse_set_options(self):
        self.assertEqual(parse_set_options(['drive.bias_voltage = 5']), {'drive.bias_voltage': '5'})
        with self.assertRaises(ConfigParseError):
            parse_set_options(['drive.bias_voltage'])
        with self.assertRaises(ConfigParseError):
            parse_set_options(['bias_voltage=5'])

    def test_env_overrides_skip_unknown(self):
        environ = {'NVSCHOTTKY_DRIVE__RF_POWER': '10', 'NVSCHOTTKY_NOPE__X': '1', 'NVSCHOTTKY_ENGINE': 'serial'}
        found = env_overrides(environ)
        self.assertEqual(found, {'drive.rf_power': '10'})

    def test_replace_section(self):
        config = load_config(environ={})
        changed = replace_section(config, 'geometry', beam_waist=4e-6)
        self.assertEqual(changed.geometry.slab_depth, 8e-6)
        self.assertEqual(config.geometry.beam_waist, 5e-6)
        with self.assertRaises(ConfigParseError):
            replace_section(config, 'drive', colour='red')
        with self.assertRaises(ConfigParseError):
            replace_section(config, 'laser', power=1)
        with self.assertRaises(InvariantViolation):
            replace_section(config, 'drive', optical_power=-1.0)

    def test_replaced_waist_moves_default_domain(self):
        config = load_config(environ={})
        changed = replace_section(config, 'geometry', beam_waist=1e-5)
        self.assertEqual(changed.geometry.domain_depth, 2e-5)

        boxed = replace_section(config, 'geometry', box_depth=1.5e-5)
        with self.assertRaises(InvariantViolation):
            replace_section(boxed, 'geometry', beam_waist=1e-5)

    def test_metastable_branching_bounds(self):
        for value in ('0.2', '1.1'):
            with self.subTest(value=value):
                with self.assertRaises(InvariantViolation) as cm:
                    load_config(overrides=[f'photophysics.ms0_branching={value}'], environ={})
                self.assertEqual(cm.exception.field, 'photophysics.ms0_branching')
        config = load_config(overrides=['photophysics.ms0_branching=0.34'], environ={})
        self.assertEqual(config.photophysics.ms0_branching, 0.34)
