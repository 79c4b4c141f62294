import os
import time
import unittest
from unittest.mock import MagicMock, patch

from .. import engines
from ..engines import Engine, SerialEngine, SweepEngines, ThreadEngine, run_sweep, sweep_engines
from ..exceptions import NVSchottkyException


class TestSweepEngines(unittest.TestCase):
    def setUp(self):
        self.registry = SweepEngines()
        self.registry.register('serial', SerialEngine)

    def test_registration(self):
        mock_engine = MagicMock()
        self.registry.register('mock_engine', mock_engine)
        self.assertIs(self.registry.get_engine('mock_engine'), mock_engine)
        self.assertEqual(self.registry.names(), ['mock_engine', 'serial'])

    def test_getting(self):
        with self.assertRaises(NVSchottkyException):
            self.registry.get_engine('fake')

    def test_environment_default(self):
        with patch.dict(os.environ, {engines.ENGINE_ENV: 'serial'}):
            self.assertIs(self.registry.get_engine(), SerialEngine)
        with patch.dict(os.environ, {engines.ENGINE_ENV: 'nope'}):
            with self.assertRaises(NVSchottkyException):
                self.registry.get_engine()

    def test_register_entry_points(self):
        fake_entrypoint = MagicMock()
        fake_entrypoint.name = 'fake-engine'
        fake_entrypoint.load.return_value = ThreadEngine

        with patch('entrypoints.get_group_all', return_value=[fake_entrypoint]) as mock_get_group_all:
            self.registry.register_entry_points()
            mock_get_group_all.assert_called_once_with('nvschottky.engine')
            self.assertIs(self.registry.get_engine('fake-engine'), ThreadEngine)

    def test_builtin_engines(self):
        self.assertIn('serial', sweep_engines.names())
        self.assertIn('threads', sweep_engines.names())


class TestEngineMap(unittest.TestCase):
    def test_base_engine_is_abstract(self):
        with self.assertRaises(NotImplementedError):
            Engine.map(lambda v: v, [1, 2], progress_bar=False)

    def test_serial_order(self):
        self.assertEqual(SerialEngine.map(lambda v: v * v, [3, 1, 2], progress_bar=False), [9, 1, 4])

    def test_threads_keep_input_order(self):
        def slow_for_small(value):
            time.sleep(0.01 * (5 - value))
            return -value

        results = ThreadEngine.map(slow_for_small, [0, 1, 2, 3, 4], progress_bar=False, workers=5)
        self.assertEqual(results, [0, -1, -2, -3, -4])

    def test_empty_sweep(self):
        self.assertEqual(ThreadEngine.map(lambda v: v, [], progress_bar=True), [])

    def test_errors_propagate(self):
        def fail_on_two(value):
            if value == 2:
                raise NVSchottkyException('boom')
            return value

        for engine in (SerialEngine, ThreadEngine):
            with self.subTest(engine=engine.__name__):
                with self.assertRaises(NVSchottkyException):
                    engine.map(fail_on_two, [1, 2, 3], progress_bar=False)

    @patch('tqdm.auto.tqdm')
    def test_progress_bar(self, tqdm_mock):
        SerialEngine.map(lambda v: v, [1, 2, 3], progress_bar=True, desc='I-U')
        tqdm_mock.assert_called_once_with(total=3, unit='point', desc='I-U')
        self.assertEqual(tqdm_mock.return_value.update.call_count, 3)
        tqdm_mock.return_value.close.assert_called_once_with()

    @patch('tqdm.auto.tqdm')
    def test_progress_bar_options(self, tqdm_mock):
        SerialEngine.map(lambda v: v, [1, 2], progress_bar={'leave': False, 'desc': 'Spectrum'})
        tqdm_mock.assert_called_once_with(total=2, unit='point', desc='Spectrum', leave=False)

    @patch('tqdm.auto.tqdm')
    def test_no_progress_bar(self, tqdm_mock):
        SerialEngine.map(lambda v: v, [1, 2], progress_bar=False)
        tqdm_mock.assert_not_called()

    def test_run_sweep_uses_named_engine(self):
        with patch.object(SerialEngine, 'evaluate_all', wraps=SerialEngine.evaluate_all) as evaluate_all:
            self.assertEqual(run_sweep(lambda v: v + 1, [1, 2], engine_name='serial'), [2, 3])
        evaluate_all.assert_called_once()
