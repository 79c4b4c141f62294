import os

from ..config import load_config
from ..experiments import DeviceModel

# A reduced device: 20 um electrodes 60 um apart over a 20 um deep box, 121 x 21 nodes.
COMPACT_GEOMETRY = {
    'geometry.electrode_width': 20,
    'geometry.electrode_gap': 60,
    'geometry.box_depth': 20,
    'geometry.grid_h': 1,
    'geometry.lateral_margin': 10,
}


def get_fixture_path(*args):
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fixtures', *args)


def compact_config(**overrides):
    """Defaults on the reduced geometry; keyword names use ``section__field``."""
    values = dict(COMPACT_GEOMETRY)
    values.update({key.replace('__', '.'): value for key, value in overrides.items()})
    return load_config(overrides=values, environ={})


def compact_model(**overrides):
    return DeviceModel.from_config(compact_config(**overrides))
