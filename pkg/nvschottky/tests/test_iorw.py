import io
import json
import os
import unittest
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest.mock import MagicMock, patch

import pandas as pd
import pytest

from ..exceptions import CalibrationError, ConvergenceError, NVSchottkyException, VerificationMismatch
from ..iorw import (
    MANIFEST_FILE,
    LocalHandler,
    ResultIO,
    ResultWriter,
    StreamHandler,
    manifest_hash,
    read_iv_data,
    read_table,
    read_yaml_file,
    results_io,
    verify_output,
    write_failure,
)
from . import get_fixture_path

MANIFEST = {'software': 'nvschottky', 'command': 'test', 'parameters': {'u_range': '0:10:5'}}


class TestResultIO(unittest.TestCase):
    class FakeIO:
        def __init__(self, value):
            self.value = value

        def read(self, path):
            return self.value

        def write(self, buf, path):
            return self.value

        def listdir(self, path):
            return [self.value]

        def pretty_path(self, path):
            return self.value

    class FakeByteIO(FakeIO):
        def read(self, path):
            return self.value.encode('utf-8')

    def setUp(self):
        self.old_io = results_io._handlers
        results_io._handlers = []
        self.fake1 = self.FakeIO("fake1")
        self.fake2 = self.FakeIO("fake2")
        results_io.register("fake", self.fake1)

    def tearDown(self):
        results_io._handlers = self.old_io

    def test_registration(self):
        results_io.register("fake2", self.fake2)
        self.assertEqual(results_io._handlers, [("fake2", self.fake2), ("fake", self.fake1)])

    def test_get_with_no_local_handler(self):
        with self.assertRaises(NVSchottkyException):
            results_io.get_handler("results/iv.csv")

    def test_local_fallback(self):
        local = LocalHandler()
        results_io.register("local", local)
        self.assertIs(results_io.get_handler("results/iv.csv"), local)
        self.assertIs(results_io.get_handler("fake://bucket/iv.csv"), self.fake1)

    def test_read_bytes(self):
        results_io.register("fakebyte", self.FakeByteIO("value"))
        self.assertEqual(results_io.read("fakebyte://iv.csv"), "value")

    def test_register_entry_points(self):
        fake_entrypoint = MagicMock()
        fake_entrypoint.name = "fake-from-entry-point://"
        fake_entrypoint.load.return_value = self.fake2

        with patch('entrypoints.get_group_all', return_value=[fake_entrypoint]) as mock_get_group_all:
            results_io.register_entry_points()
            mock_get_group_all.assert_called_once_with("nvschottky.io")
            self.assertEqual(results_io.get_handler("fake-from-entry-point://"), self.fake2)

    def test_fresh_registry(self):
        registry = ResultIO()
        with self.assertRaises(NVSchottkyException):
            registry.get_handler("iv.csv")


class TestHandlers(unittest.TestCase):
    def test_local_write_needs_folder(self):
        with TemporaryDirectory() as tmpdir:
            with self.assertRaises(FileNotFoundError):
                LocalHandler().write("x", os.path.join(tmpdir, 'missing', 'iv.csv'))

    def test_local_round_trip(self):
        handler = LocalHandler()
        with TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "iv.csv")
            handler.write("U,I\n", path)
            self.assertEqual(handler.read(path), "U,I\n")
            self.assertEqual(handler.listdir(tmpdir), [path])

    def test_stream_handler(self):
        with patch('sys.stdout', new_callable=io.StringIO) as stdout:
            StreamHandler().write("U,I\n", "-")
            self.assertEqual(stdout.getvalue(), "U,I\n")

    def test_read_yaml_keeps_dates_as_text(self):
        with TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, 'campaign.yaml')
            Path(path).write_text("name: 2024-01-31\nruns: []\n")
            self.assertEqual(read_yaml_file(path), {'name': '2024-01-31', 'runs': []})


def _contrast_frame():
    I_off = [1.0e-12, 2.5e-12, 4.75e-12, 0.0]
    I_on = [0.99e-12, 2.4e-12, 4.5e-12, 0.0]
    contrast = [(a - b) / a if a else 0.0 for a, b in zip(I_off, I_on)]
    return pd.DataFrame({'U': [5.0, 10.0, 15.0, 0.0], 'I_off': I_off, 'I_on': I_on, 'contrast': contrast})


@pytest.fixture
def written(tmp_path):
    writer = ResultWriter(tmp_path, MANIFEST).prepare()
    writer.write_table('contrast.csv', _contrast_frame())
    writer.write_sidecar('contrast.json', {'kind': 'contrast', 'knee_off': None})
    writer.write_timing({'wall_clock_seconds': 1.5})
    return writer


def test_writer_layout(written, tmp_path):
    assert written.files == ['contrast.csv', 'contrast.json']
    first = (tmp_path / 'contrast.csv').read_text().splitlines()[0]
    assert first == f'# nvschottky schema=1 manifest={manifest_hash(MANIFEST)}'
    stored = json.loads((tmp_path / MANIFEST_FILE).read_text())
    assert stored == {'manifest': MANIFEST, 'hash': manifest_hash(MANIFEST)}
    assert json.loads((tmp_path / 'contrast.json').read_text())['manifest'] == written.digest


def test_tables_read_back_exactly(written, tmp_path):
    header, frame = read_table(str(tmp_path / 'contrast.csv'))
    assert header == {'schema': '1', 'manifest': written.digest}
    pd.testing.assert_frame_equal(frame, _contrast_frame())


def test_verify_output(written, tmp_path):
    assert sorted(verify_output(tmp_path)) == ['contrast.csv', 'contrast.json']


def test_verify_detects_edited_contrast(written, tmp_path):
    path = tmp_path / 'contrast.csv'
    lines = path.read_text().splitlines()
    values = lines[2].split(',')
    values[3] = '0.5'
    lines[2] = ','.join(values)
    path.write_text('\n'.join(lines) + '\n')
    with pytest.raises(VerificationMismatch, match='contrast.csv'):
        verify_output(tmp_path)


def test_verify_detects_edited_manifest(written, tmp_path):
    path = tmp_path / MANIFEST_FILE
    stored = json.loads(path.read_text())
    stored['manifest']['command'] = 'other'
    path.write_text(json.dumps(stored))
    with pytest.raises(VerificationMismatch, match=MANIFEST_FILE):
        verify_output(tmp_path)


def test_verify_detects_foreign_file(written, tmp_path):
    other = ResultWriter(tmp_path / 'other', {'command': 'other'}).prepare()
    other.write_table('contrast.csv', _contrast_frame())
    os.replace(tmp_path / 'other' / 'contrast.csv', tmp_path / 'foreign.csv')
    with pytest.raises(VerificationMismatch, match='foreign.csv'):
        verify_output(tmp_path)


def test_verify_missing_manifest(tmp_path):
    with pytest.raises(VerificationMismatch):
        verify_output(tmp_path)


def test_write_failure(tmp_path):
    exc = ConvergenceError("Newton iteration did not converge", residual=1e-3, iterations=60, bias=150.0)
    path = write_failure(tmp_path / 'out', exc, {'command': 'iv'})
    record = json.loads(Path(path).read_text())
    assert record['type'] == 'ConvergenceError'
    assert record['iterations'] == 60
    assert record['bias'] == 150.0
    assert record['command'] == 'iv'


def test_read_iv_data_with_header(tmp_path):
    path = tmp_path / 'iv.csv'
    path.write_text('# measured\nU,I\n1,1e-12\n2,2e-12\n')
    frame = read_iv_data(str(path))
    assert list(frame.columns) == ['U', 'I']
    assert frame['I'].tolist() == [1e-12, 2e-12]


def test_read_iv_data_without_header(tmp_path):
    path = tmp_path / 'iv.csv'
    path.write_text('1,1e-12,1e6\n2,2e-12,2e6\n')
    frame = read_iv_data(str(path))
    assert list(frame.columns) == ['U', 'I', 'E']


def test_read_iv_data_rejects_other_layouts(tmp_path):
    path = tmp_path / 'iv.csv'
    path.write_text('1,2,3,4\n5,6,7,8\n')
    with pytest.raises(CalibrationError):
        read_iv_data(str(path))


def test_fixture_path_resolves():
    assert os.path.exists(get_fixture_path('short_campaign.yaml'))
