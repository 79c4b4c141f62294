"""Lab-unit parsing for configuration values.

Values are converted with exact decimal arithmetic and rounded once to a float, so that
``"200 um"`` and ``"200000 nm"`` land on the same SI double.
"""
import re
from decimal import Decimal, InvalidOperation

from .constants import watts_to_dbm
from .exceptions import ConfigParseError

_DIAMOND_PPM = Decimal('1.763e23')  # m^-3 per ppm

UNITS = {
    'length': {
        'm': Decimal(1),
        'cm': Decimal('1e-2'),
        'mm': Decimal('1e-3'),
        'um': Decimal('1e-6'),
        'µm': Decimal('1e-6'),
        'nm': Decimal('1e-9'),
    },
    'area': {
        'm^2': Decimal(1),
        'cm^2': Decimal('1e-4'),
        'mm^2': Decimal('1e-6'),
        'um^2': Decimal('1e-12'),
    },
    'power': {
        'W': Decimal(1),
        'mW': Decimal('1e-3'),
        'uW': Decimal('1e-6'),
    },
    'frequency': {
        'Hz': Decimal(1),
        'kHz': Decimal('1e3'),
        'MHz': Decimal('1e6'),
        'GHz': Decimal('1e9'),
    },
    'rate': {
        '1/s': Decimal(1),
        's^-1': Decimal(1),
        'Hz': Decimal(1),
    },
    'field': {
        'T': Decimal(1),
        'mT': Decimal('1e-3'),
        'uT': Decimal('1e-6'),
        'G': Decimal('1e-4'),
    },
    'gradient': {
        'T/m': Decimal(1),
        'mT/um': Decimal('1e3'),
        'mT/mm': Decimal(1),
        'G/cm': Decimal('1e-2'),
    },
    'density': {
        'm^-3': Decimal(1),
        'cm^-3': Decimal('1e6'),
        'ppm': _DIAMOND_PPM,
        'ppb': _DIAMOND_PPM / 1000,
    },
    'capture': {
        'm^3/s': Decimal(1),
        'cm^3/s': Decimal('1e-6'),
    },
    'richardson': {
        'A/m^2/K^2': Decimal(1),
        'A/cm^2/K^2': Decimal('1e4'),
    },
    'rate_per_intensity': {
        'm^2/J': Decimal(1),
        'cm^2/J': Decimal('1e-4'),
    },
    'voltage': {'V': Decimal(1), 'mV': Decimal('1e-3')},
    'resistance': {'Ohm': Decimal(1), 'kOhm': Decimal('1e3'), 'MOhm': Decimal('1e6'), 'GOhm': Decimal('1e9')},
    'temperature': {'K': Decimal(1)},
    'dimensionless': {'': Decimal(1)},
}

SI_UNIT = {
    'length': 'm',
    'area': 'm^2',
    'power': 'W',
    'frequency': 'Hz',
    'rate': '1/s',
    'field': 'T',
    'gradient': 'T/m',
    'density': 'm^-3',
    'capture': 'm^3/s',
    'richardson': 'A/m^2/K^2',
    'rate_per_intensity': 'm^2/J',
    'voltage': 'V',
    'resistance': 'Ohm',
    'temperature': 'K',
    'dimensionless': '',
    'rf_power': 'dBm',
}

_QUANTITY = re.compile(r'^\s*([-+0-9.eE]+|[-+]?inf)\s*(.*?)\s*$')


def _split(value, field):
    match = _QUANTITY.match(value)
    if not match:
        raise ConfigParseError(f"Cannot read quantity '{value}'", field=field)
    return match.group(1), match.group(2)


def _decimal(number, field):
    try:
        return Decimal(number)
    except InvalidOperation:
        raise ConfigParseError(f"Cannot read number '{number}'", field=field)


def to_si(value, kind, default_unit, field=None):
    """Convert a config value to SI.

    Parameters
    ----------
    value : int, float or str
        A bare number (in ``default_unit``) or a ``"<number> <unit>"`` string
    kind : str
        Quantity kind, a key of ``UNITS`` or ``'rf_power'``
    default_unit : str
        Unit assumed for bare numbers
    field : str, optional
        Field name used in error messages
    """
    if isinstance(value, bool):
        raise ConfigParseError(f"Expected a quantity, got {value!r}", field=field)
    if kind == 'rf_power':
        return _rf_power_to_dbm(value, default_unit, field)
    if isinstance(value, (int, float)):
        number, unit = repr(value), default_unit
    elif isinstance(value, str):
        number, unit = _split(value, field)
        unit = unit or default_unit
    else:
        raise ConfigParseError(f"Expected a quantity, got {value!r}", field=field)
    factors = UNITS[kind]
    if unit not in factors:
        raise ConfigParseError(
            f"Unknown unit '{unit}' for a {kind} quantity; use one of {sorted(factors)}", field=field
        )
    return float(_decimal(number, field) * factors[unit])


def _rf_power_to_dbm(value, default_unit, field):
    if isinstance(value, (int, float)):
        number, unit = float(value), default_unit
    elif isinstance(value, str):
        raw, unit = _split(value, field)
        number = float(_decimal(raw, field))
        unit = unit or default_unit
    else:
        raise ConfigParseError(f"Expected an RF power, got {value!r}", field=field)
    if unit == 'dBm':
        return number
    if unit in ('mW', 'W'):
        watts = number * (1e-3 if unit == 'mW' else 1.0)
        if watts <= 0:
            raise ConfigParseError(f"RF power must be positive, got {value!r}", field=field)
        return watts_to_dbm(watts)
    raise ConfigParseError(f"Unknown unit '{unit}' for an RF power; use dBm, mW or W", field=field)


def format_si(value, kind):
    """Render an SI float so that ``to_si`` reads it back bit-for-bit."""
    unit = SI_UNIT[kind]
    text = repr(float(value))
    return f"{text} {unit}".rstrip()
