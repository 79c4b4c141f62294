"""Run parameters for campaign entries and subcommands.

Parameters are written in lab units like the configuration file: bare numbers take the unit listed
below, strings may carry their own (``"10 um"``). Ranges accept ``start:stop:step`` with an inclusive
stop, a comma separated list, or a YAML list.
"""
from .exceptions import ConfigParseError, MissingParameterError
from .units import to_si
from .utils import expand_range

# name -> (quantity kind, unit of bare numbers)
SCALARS = {
    'power': ('power', 'mW'),
    'waist': ('length', 'um'),
    'bias': ('voltage', 'V'),
    'rf_frequency': ('frequency', 'GHz'),
    'f_A': ('frequency', 'GHz'),
    'f_B': ('frequency', 'GHz'),
}
RANGES = {
    'u_range': ('voltage', 'V'),
    'u_list': ('voltage', 'V'),
    'frequencies': ('frequency', 'GHz'),
    'powers': ('power', 'mW'),
}
CHOICES = {
    'rf': {'on': True, 'off': False, 'true': True, 'false': False},
    'polarity': {'a': 'A', 'b': 'B'},
    'filter': {'nvminus': 'NV_minus', 'nv_minus': 'NV_minus', 'nvzero': 'NV_zero', 'nv_zero': 'NV_zero'},
}
FLAGS = ('field_maps', 'generation_map')
PATHS = ('data',)


def parameterize_path(path, parameters):
    """Format a path with a provided dictionary of parameters

    Parameters
    ----------
    path : string or None
       Path with optional parameters, as a python format string. If path is None, it is returned
       without modification
    parameters : dict or None
       Arbitrary keyword arguments to fill in the path
    """
    if path is None:
        return path

    if parameters is None:
        parameters = {}

    try:
        return path.format(**parameters)
    except KeyError as key_error:
        raise MissingParameterError(f"Missing parameter {key_error} for output '{path}'")


def _values(value, name):
    if isinstance(value, (list, tuple)):
        return list(value)
    try:
        return expand_range(value)
    except ValueError as e:
        raise ConfigParseError(str(e), field=name)


def _beams(value):
    beams = []
    for entry in value:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise ConfigParseError(f"Expected [waist, power] pairs, got {entry!r}", field='beams')
        waist, power = entry
        beams.append((to_si(waist, 'length', 'um', field='beams'), to_si(power, 'power', 'mW', field='beams')))
    return beams


def resolve_parameters(parameters):
    """SI values for run parameters; ``None`` values are dropped.

    Raises
    ------
    ConfigParseError
        On an unknown parameter name, an unreadable value or an invalid choice
    """
    resolved = {}
    for name, value in (parameters or {}).items():
        if value is None:
            continue
        if name in SCALARS:
            kind, unit = SCALARS[name]
            resolved[name] = to_si(value, kind, unit, field=name)
        elif name in RANGES:
            kind, unit = RANGES[name]
            resolved[name] = [to_si(v, kind, unit, field=name) for v in _values(value, name)]
        elif name in CHOICES:
            choice = CHOICES[name].get(str(value).lower())
            if choice is None:
                options = ', '.join(sorted(CHOICES[name]))
                raise ConfigParseError(f"'{value}' is not one of {options}", field=name)
            resolved[name] = choice
        elif name == 'beams':
            resolved[name] = _beams(value)
        elif name in FLAGS:
            resolved[name] = bool(value)
        elif name in PATHS:
            resolved[name] = str(value)
        elif name == 'set':
            resolved[name] = [value] if isinstance(value, str) else list(value)
        else:
            raise ConfigParseError(f"Unknown run parameter '{name}'", field=name)
    return resolved
