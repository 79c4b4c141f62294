import io
import json
import os
import sys
from pathlib import Path

import entrypoints
import numpy as np
import pandas as pd
import yaml

from .config import config_to_dict
from .exceptions import CalibrationError, NVSchottkyException, VerificationMismatch
from .log import logger
from .utils import stable_hash
from .version import version as __version__

CSV_SCHEMA_VERSION = 1
CSV_HEADER_PREFIX = '# nvschottky'
MANIFEST_FILE = 'manifest.json'
TIMING_FILE = 'timing.json'
FAILURE_FILE = 'failure.json'
CONTRAST_TOLERANCE = 1e-12

# Columns holding a contrast and the raw signals it is computed from.
CONTRAST_COLUMNS = (('contrast', 'I_off', 'I_on'), ('pdmr_contrast', 'I_off', 'I_on'))


class ResultIO:
    '''
    The holder which houses any io system registered with the system.
    This object is used in a singleton manner to save and load particular
    named Handler objects for reference externally.
    '''

    def __init__(self):
        self.reset()

    def read(self, path):
        text = self.get_handler(path).read(path)
        if isinstance(text, (bytes, bytearray)):
            return text.decode('utf-8')
        return text

    def write(self, buf, path):
        return self.get_handler(path).write(buf, path)

    def listdir(self, path):
        return self.get_handler(path).listdir(path)

    def pretty_path(self, path):
        return self.get_handler(path).pretty_path(path)

    def reset(self):
        self._handlers = []

    def register(self, scheme, handler):
        # Keep these ordered as LIFO
        self._handlers.insert(0, (scheme, handler))

    def register_entry_points(self):
        # Load handlers provided by other packages
        for entrypoint in entrypoints.get_group_all("nvschottky.io"):
            self.register(entrypoint.name, entrypoint.load())

    def get_handler(self, path):
        '''Get I/O Handler based on a result path

        Parameters
        ----------
        path : str

        Raises
        ------
        NVSchottkyException: If a valid I/O handler could not be found for the path

        Returns
        -------
        I/O Handler
        '''
        path = str(path)
        local_handler = None
        for scheme, handler in self._handlers:
            if scheme == 'local':
                local_handler = handler

            if path.startswith(scheme):
                return handler

        if local_handler is None:
            raise NVSchottkyException(f"Could not find a registered schema handler for: {path}")

        return local_handler


class LocalHandler:
    def read(self, path):
        with open(path, encoding="utf-8") as f:
            return f.read()

    def listdir(self, path):
        return sorted(os.path.join(path, fn) for fn in os.listdir(path))

    def write(self, buf, path):
        dirname = os.path.dirname(path)
        if dirname and not os.path.exists(dirname):
            raise FileNotFoundError(f"output folder {dirname} doesn't exist.")
        with open(path, 'w', encoding="utf-8", newline='\n') as f:
            f.write(buf)

    def pretty_path(self, path):
        return path


class StreamHandler:
    '''Handler for Stdin/Stdout streams'''

    def read(self, path):
        return sys.stdin.read()

    def listdir(self, path):
        raise NVSchottkyException('listdir is not supported by Stream Handler')

    def write(self, buf, path):
        try:
            return sys.stdout.buffer.write(buf.encode('utf-8'))
        except AttributeError:
            return sys.stdout.write(buf)

    def pretty_path(self, path):
        return path


# Keep YAML from turning dates into datetime objects
class NoDatesSafeLoader(yaml.SafeLoader):
    yaml_implicit_resolvers = {
        k: [r for r in v if r[0] != 'tag:yaml.org,2002:timestamp']
        for k, v in yaml.SafeLoader.yaml_implicit_resolvers.items()
    }


# Instantiate a ResultIO instance and register Handlers.
results_io = ResultIO()
results_io.register("local", LocalHandler())
results_io.register("-", StreamHandler())
results_io.register_entry_points()


def read_yaml_file(path):
    """Reads a YAML file from the location specified at 'path'."""
    return yaml.load(results_io.read(path), Loader=NoDatesSafeLoader)


def get_pretty_path(path):
    return results_io.pretty_path(path)


def build_manifest(model, command, parameters=None, seeds=None):
    """Everything a result depends on, minus wall-clock time.

    Parameters
    ----------
    model : DeviceModel
    command : str
        Subcommand or campaign run kind producing the results
    parameters : dict, optional
        Command parameters (SI values)
    seeds : dict, optional
        Random seeds per sweep, if any sweep draws random numbers
    """
    config = config_to_dict(model.config)
    solver = model.config.solver
    return {
        'software': 'nvschottky',
        'version': __version__,
        'schema': CSV_SCHEMA_VERSION,
        'command': command,
        'parameters': parameters or {},
        'config_hash': stable_hash(config),
        'config': config,
        'calibration': {
            'generation_scale': repr(float(model.scale)),
            'target_p': repr(float(model.config.calibration.target_p)),
            'power': repr(float(model.config.calibration.power)),
        },
        'tolerances': {
            'carrier_rtol': repr(float(model.config.carriers.rtol)),
            'newton_tol': repr(float(solver.newton_tol)),
            'linear_rtol': repr(float(solver.linear_rtol)),
            'depletion_threshold': repr(float(solver.depletion_threshold)),
        },
        'seeds': seeds or {},
    }


def manifest_hash(manifest):
    return stable_hash(manifest)


def _csv_header(digest):
    return f'{CSV_HEADER_PREFIX} schema={CSV_SCHEMA_VERSION} manifest={digest}\n'


def _parse_csv_header(line):
    if not line.startswith(CSV_HEADER_PREFIX):
        return None
    fields = dict(part.split('=', 1) for part in line[len(CSV_HEADER_PREFIX) :].split() if '=' in part)
    return fields


def write_json(data, path):
    results_io.write(json.dumps(data, indent=1, sort_keys=True, allow_nan=False) + '\n', path)


class ResultWriter:
    """Single writer for one output directory; every file it writes carries the manifest hash."""

    def __init__(self, output_dir, manifest):
        self.output_dir = Path(output_dir)
        self.manifest = manifest
        self.digest = manifest_hash(manifest)
        self.files = []

    def path(self, name):
        return str(self.output_dir / name)

    def prepare(self):
        self.output_dir.mkdir(parents=True, exist_ok=True)
        write_json({'manifest': self.manifest, 'hash': self.digest}, self.path(MANIFEST_FILE))
        logger.info(f"Writing results to {get_pretty_path(str(self.output_dir))}")
        return self

    def write_table(self, name, frame):
        """Write ``frame`` as CSV with the schema/manifest line ahead of the header row."""
        buf = io.StringIO()
        buf.write(_csv_header(self.digest))
        frame.to_csv(buf, index=False, lineterminator='\n')
        path = self.path(name)
        results_io.write(buf.getvalue(), path)
        self.files.append(name)
        logger.info(f"Wrote {len(frame)} rows to {get_pretty_path(path)}")
        return path

    def write_sidecar(self, name, data):
        path = self.path(name)
        write_json({'manifest': self.digest, **data}, path)
        self.files.append(name)
        return path

    def write_timing(self, timing):
        write_json(timing, self.path(TIMING_FILE))


def write_failure(output_dir, exc, context=None):
    """Describe a failed run in ``failure.json``; returns the path written."""
    record = {'type': type(exc).__name__, 'message': str(exc)}
    if hasattr(exc, 'to_dict'):
        record.update(exc.to_dict())
    record.update(context or {})
    Path(output_dir).mkdir(parents=True, exist_ok=True)
    path = str(Path(output_dir) / FAILURE_FILE)
    results_io.write(json.dumps(record, indent=1, sort_keys=True, default=repr) + '\n', path)
    return path


def read_table(path):
    """Read a result CSV; returns ``(header, frame)`` where ``header`` holds the schema and manifest fields."""
    text = results_io.read(path)
    first, _, rest = text.partition('\n')
    header = _parse_csv_header(first)
    if header is None:
        header, rest = {}, text
    frame = pd.read_csv(io.StringIO(rest), float_precision='round_trip')
    return header, frame


def read_iv_data(path):
    """Measured I-U data: columns ``U`` (V) and ``I`` (A), optionally ``E`` (V/m).

    Lines starting with ``#`` are skipped; a file without a header row is read as ``U, I[, E]``.
    """
    text = results_io.read(path)
    frame = pd.read_csv(io.StringIO(text), comment='#', float_precision='round_trip')
    if 'U' not in frame.columns or 'I' not in frame.columns:
        frame = pd.read_csv(io.StringIO(text), comment='#', header=None, float_precision='round_trip')
        if frame.shape[1] not in (2, 3):
            raise CalibrationError(f"{path} needs columns U and I (and optionally E)")
        frame.columns = ['U', 'I', 'E'][: frame.shape[1]]
    return frame


def iv_frame(curve):
    return pd.DataFrame(list(curve.points), columns=list(curve.points[0]._fields) if curve.points else None)


def points_frame(points, columns):
    return pd.DataFrame([tuple(p) for p in points], columns=list(columns))


def field_map_frame(solution):
    """One row per node: x, z (m), phi (V), Ex, Ez (V/m) and the depletion flag."""
    grid = solution.grid
    z, x = np.meshgrid(grid.z, grid.x, indexing='ij')
    return pd.DataFrame(
        {
            'x': x.ravel(),
            'z': z.ravel(),
            'phi': solution.phi.ravel(),
            'Ex': solution.Ex.ravel(),
            'Ez': solution.Ez.ravel(),
            'depleted': solution.depleted.ravel().astype(int),
        }
    )


def generation_frame(grid, G):
    """One row per node: x, z (m) and the generation rate G (m^-3 s^-1)."""
    z, x = np.meshgrid(grid.z, grid.x, indexing='ij')
    return pd.DataFrame({'x': x.ravel(), 'z': z.ravel(), 'G': np.asarray(G).ravel()})


def _recomputed_contrast(frame, off, on):
    I_off = frame[off].to_numpy(dtype=float)
    I_on = frame[on].to_numpy(dtype=float)
    safe = np.where(I_off == 0, 1.0, I_off)
    return np.where(I_off == 0, 0.0, (I_off - I_on) / safe)


def verify_output(output_dir):
    """Check every result file in ``output_dir`` against its manifest.

    The manifest hash is recomputed from ``manifest.json``, every CSV and JSON sidecar must carry it,
    and stored contrasts must match the ones recomputed from the persisted raw currents.

    Returns
    -------
    list of str
        The files checked

    Raises
    ------
    VerificationMismatch
        Listing every problem found
    """
    output_dir = Path(output_dir)
    try:
        stored = json.loads(results_io.read(str(output_dir / MANIFEST_FILE)))
    except (OSError, ValueError) as e:
        raise VerificationMismatch(f"Cannot read {output_dir / MANIFEST_FILE}: {e}")
    digest = manifest_hash(stored['manifest'])
    problems = []
    if digest != stored.get('hash'):
        problems.append(f"{MANIFEST_FILE}: stored hash {stored.get('hash')} != recomputed {digest}")

    checked = []
    for path in results_io.listdir(str(output_dir)):
        name = os.path.basename(path)
        if name in (MANIFEST_FILE, TIMING_FILE, FAILURE_FILE):
            continue
        if name.endswith('.csv'):
            header, frame = read_table(path)
            if header.get('manifest') != digest:
                problems.append(f"{name}: manifest {header.get('manifest')} != {digest}")
            if header.get('schema') != str(CSV_SCHEMA_VERSION):
                problems.append(f"{name}: schema {header.get('schema')} != {CSV_SCHEMA_VERSION}")
            for column, off, on in CONTRAST_COLUMNS:
                if {column, off, on} <= set(frame.columns):
                    expected = _recomputed_contrast(frame, off, on)
                    error = float(np.max(np.abs(frame[column].to_numpy(dtype=float) - expected), initial=0.0))
                    if not error <= CONTRAST_TOLERANCE:
                        problems.append(f"{name}: {column} differs from recomputation by {error:.3e}")
        elif name.endswith('.json'):
            data = json.loads(results_io.read(path))
            if data.get('manifest') != digest:
                problems.append(f"{name}: manifest {data.get('manifest')} != {digest}")
        else:
            continue
        checked.append(name)

    if problems:
        raise VerificationMismatch("; ".join(problems))
    logger.info(f"Verified {len(checked)} files in {output_dir}")
    return checked
