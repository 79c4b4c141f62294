"""On-disk cache of converged field solutions."""
import hashlib
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from .electrostatics import Grid2D, assemble_solution

logger = logging.getLogger('nvschottky.cache')

CACHE_FORMAT_VERSION = 1


class FieldCache:
    """Compressed ``.npz`` files named by a SHA-256 of everything a solve depends on."""

    def __init__(self, directory):
        self.directory = Path(directory)

    @classmethod
    def from_settings(cls, settings):
        """A cache in ``settings.cache_dir``, or ``None`` when caching is off."""
        if not settings.cache_dir:
            return None
        return cls(os.path.expanduser(settings.cache_dir))

    def key(self, grid, p_map, U, polarity, mat, settings):
        digest = hashlib.sha256()
        parts = (
            CACHE_FORMAT_VERSION,
            grid,
            repr(float(U)),
            polarity,
            repr(mat.eps_s),
            repr(mat.T),
            repr(settings.depletion_threshold),
            repr(settings.newton_tol),
            repr(settings.linear_rtol),
            repr(settings.damping),
            repr(settings.ramp_step),
        )
        digest.update(repr(parts).encode('utf-8'))
        digest.update(np.ascontiguousarray(p_map, dtype='<f8').tobytes())
        return digest.hexdigest()

    def path(self, key):
        return self.directory / f'{key}.npz'

    def get(self, key):
        path = self.path(key)
        if not path.exists():
            return None
        try:
            with np.load(path) as data:
                if int(data['version']) != CACHE_FORMAT_VERSION:
                    return None
                grid = Grid2D(
                    nx=int(data['nx']),
                    nz=int(data['nz']),
                    h=float(data['h']),
                    slab_depth=float(data['slab_depth']),
                    electrode_a=tuple(int(v) for v in data['electrode_a']),
                    electrode_b=tuple(int(v) for v in data['electrode_b']),
                )
                solution = assemble_solution(
                    grid,
                    data['p_map'].copy(),
                    float(data['U']),
                    str(data['polarity']),
                    data['psi'].copy(),
                    float(data['thermal_voltage']),
                    float(data['permittivity']),
                    float(data['threshold']),
                    int(data['iterations']),
                    float(data['residual']),
                )
        except (OSError, KeyError, ValueError) as e:
            logger.warning(f"Ignoring unreadable cache entry {path}: {e}")
            return None
        logger.debug(f"Field cache hit {key[:12]}")
        return solution

    def put(self, key, solution):
        self.directory.mkdir(parents=True, exist_ok=True)
        grid = solution.grid
        # Concurrent writers of one key each get their own file; the last rename wins.
        tmp = tempfile.NamedTemporaryFile(dir=self.directory, prefix=f'{key}.', suffix='.tmp', delete=False)
        try:
            with tmp:
                self._write(tmp, grid, solution)
            os.replace(tmp.name, self.path(key))
        except BaseException:
            os.unlink(tmp.name)
            raise

    @staticmethod
    def _write(file, grid, solution):
        np.savez_compressed(
            file,
            version=CACHE_FORMAT_VERSION,
            nx=grid.nx,
            nz=grid.nz,
            h=grid.h,
            slab_depth=grid.slab_depth,
            electrode_a=np.array(grid.electrode_a),
            electrode_b=np.array(grid.electrode_b),
            p_map=solution.p_map,
            U=solution.U_applied,
            polarity=solution.polarity,
            psi=solution.psi,
            thermal_voltage=solution.thermal_voltage,
            permittivity=solution.permittivity,
            threshold=solution.threshold,
            iterations=solution.iterations,
            residual=solution.residual,
        )
