"""Model parameters and their loading from YAML documents.

Every section of a configuration document maps onto one frozen dataclass. Values are held in SI;
the YAML surface accepts the lab units documented per field (see ``defaults.yaml``).
"""
import dataclasses
import logging
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .exceptions import ConfigParseError, InvariantViolation, OverrideWarning
from .units import format_si, to_si

logger = logging.getLogger('nvschottky.config')

DEFAULTS_PATH = Path(__file__).parent / 'defaults.yaml'
ENV_PREFIX = 'NVSCHOTTKY_'
ELECTRODES = ('A', 'B')
LINKED_TOLERANCE = 1e-3


def _q(kind, unit, optional=False):
    """A quantity field: ``kind`` selects the unit table, ``unit`` applies to bare numbers.

    An ``optional`` field also accepts ``null``.
    """
    return field(metadata={'kind': kind, 'unit': unit, 'optional': optional})


def _raw(kind):
    return field(metadata={'kind': kind, 'unit': None})


def _require(cls, name, ok, bound, value):
    if not ok:
        raise InvariantViolation(f'{cls}.{name}', bound, value)


def _grid_divides(length, h):
    cells = length / h
    return abs(cells - round(cells)) <= LINKED_TOLERANCE * max(1.0, cells) and round(cells) >= 1


@dataclass(frozen=True)
class MaterialParams:
    eps_s: float = _q('dimensionless', '')
    N_nitrogen: float = _q('density', 'cm^-3')
    N_boron: float = _q('density', 'cm^-3')
    nv_fraction: float = _q('dimensionless', '')
    phi1: float = _q('voltage', 'V')
    eta: float = _q('dimensionless', '')
    A_star: float = _q('richardson', 'A/cm^2/K^2')
    T: float = _q('temperature', 'K')
    c_e: float = _q('capture', 'cm^3/s')
    c_h: float = _q('capture', 'cm^3/s')
    hole_trap_density: float = _q('density', 'cm^-3')

    def __post_init__(self):
        _require('material', 'eps_s', self.eps_s > 1, '> 1', self.eps_s)
        _require('material', 'T', self.T > 0, '> 0', self.T)
        _require('material', 'eta', self.eta >= 1, '>= 1', self.eta)
        _require('material', 'phi1', self.phi1 > 0, '> 0', self.phi1)
        _require('material', 'A_star', self.A_star > 0, '> 0', self.A_star)
        _require('material', 'N_boron', self.N_boron > 0, '> 0', self.N_boron)
        _require(
            'material',
            'N_nitrogen',
            self.N_nitrogen > self.N_boron,
            f'> N_boron ({self.N_boron!r} m^-3)',
            self.N_nitrogen,
        )
        _require('material', 'nv_fraction', 0 < self.nv_fraction <= 1, 'in (0, 1]', self.nv_fraction)
        _require('material', 'c_e', self.c_e > 0, '> 0', self.c_e)
        _require('material', 'c_h', self.c_h > 0, '> 0', self.c_h)
        _require('material', 'hole_trap_density', self.hole_trap_density >= 0, '>= 0', self.hole_trap_density)
        _require(
            'material',
            'hole_trap_density',
            self.c_h * self.hole_trap_density < self.c_e * self.N_boron,
            'c_h * hole_trap_density < c_e * N_boron (p-type ordering)',
            self.hole_trap_density,
        )

    @property
    def nv_density(self):
        return self.nv_fraction * self.N_nitrogen


@dataclass(frozen=True)
class DeviceGeometry:
    electrode_width: float = _q('length', 'um')
    electrode_gap: float = _q('length', 'um')
    slab_depth: float = _q('length', 'um')
    beam_waist: float = _q('length', 'um')
    box_depth: float = _q('length', 'um', optional=True)
    grid_h: float = _q('length', 'um')
    lateral_margin: float = _q('length', 'um')

    def __post_init__(self):
        for name in ('electrode_width', 'electrode_gap', 'slab_depth', 'beam_waist', 'grid_h'):
            value = getattr(self, name)
            _require('geometry', name, value > 0, '> 0', value)
        if self.box_depth is not None:
            _require('geometry', 'box_depth', self.box_depth > 0, '> 0 or null', self.box_depth)
        _require('geometry', 'lateral_margin', self.lateral_margin >= 0, '>= 0', self.lateral_margin)
        _require(
            'geometry',
            'slab_depth',
            abs(self.slab_depth - 2 * self.beam_waist) <= LINKED_TOLERANCE * self.slab_depth,
            f'== 2 * beam_waist ({2 * self.beam_waist!r} m) within 0.1%',
            self.slab_depth,
        )
        _require(
            'geometry',
            'slab_depth',
            self.slab_depth <= self.domain_depth,
            f'<= box_depth ({self.domain_depth!r} m)',
            self.slab_depth,
        )
        for name in ('electrode_width', 'electrode_gap', 'slab_depth', 'box_depth', 'lateral_margin'):
            value = getattr(self, name)
            if not value:
                continue
            multiple = f'a multiple of grid_h ({self.grid_h!r} m)'
            _require('geometry', name, _grid_divides(value, self.grid_h), multiple, value)

    @property
    def domain_depth(self):
        """Depth of the simulated cross-section; the slab depth unless ``box_depth`` is set."""
        return self.slab_depth if self.box_depth is None else self.box_depth

    @property
    def width(self):
        """Total lateral extent of the simulated cross-section."""
        return 2 * self.lateral_margin + 2 * self.electrode_width + self.electrode_gap

    def electrode_span(self, electrode):
        """(x_start, x_end) of electrode ``'A'`` (left) or ``'B'`` (right)."""
        left = self.lateral_margin
        if electrode == 'A':
            return left, left + self.electrode_width
        start = left + self.electrode_width + self.electrode_gap
        return start, start + self.electrode_width

    def electrode_center(self, electrode):
        start, end = self.electrode_span(electrode)
        return 0.5 * (start + end)

    @property
    def midpoint(self):
        return 0.5 * self.width


@dataclass(frozen=True)
class DriveConditions:
    optical_power: float = _q('power', 'mW')
    rf_frequency: float = _q('frequency', 'Hz')
    rf_power: float = _q('rf_power', 'dBm')
    rf_enabled: bool = _raw('bool')
    B_axial: float = _q('field', 'mT')
    B_gradient: float = _q('gradient', 'mT/um')
    bias_voltage: float = _q('voltage', 'V')
    positive_electrode: str = _raw('electrode')

    def __post_init__(self):
        _require('drive', 'optical_power', self.optical_power >= 0, '>= 0', self.optical_power)
        if self.rf_enabled:
            _require('drive', 'rf_frequency', self.rf_frequency > 0, '> 0 when rf_enabled', self.rf_frequency)
        _require(
            'drive', 'positive_electrode', self.positive_electrode in ELECTRODES, 'one of A, B', self.positive_electrode
        )

    @property
    def negative_electrode(self):
        return 'B' if self.positive_electrode == 'A' else 'A'


@dataclass(frozen=True)
class RateParams:
    """Rate-model constants; the three coefficients multiply the beam intensity (W/m^2)."""

    k_rad: float = _q('rate', '1/s')
    k_isc0: float = _q('rate', '1/s')
    k_isc1: float = _q('rate', '1/s')
    k_ms: float = _q('rate', '1/s')
    k_rad0: float = _q('rate', '1/s')
    pump_coefficient: float = _q('rate_per_intensity', 'm^2/J')
    ionization_coefficient: float = _q('rate_per_intensity', 'm^2/J')
    backconversion_coefficient: float = _q('rate_per_intensity', 'm^2/J')
    ms0_branching: float = _q('dimensionless', '')
    rabi_rate_ref: float = _q('rate', '1/s')
    zfs: float = _q('frequency', 'Hz')
    linewidth: float = _q('frequency', 'Hz')
    nv_zero_ratio: float = _q('dimensionless', '')

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            _require('photophysics', f.name, value >= 0, '>= 0', value)
        _require(
            'photophysics', 'ms0_branching', 1 / 3 <= self.ms0_branching <= 1, 'in [1/3, 1]', self.ms0_branching
        )
        _require('photophysics', 'linewidth', self.linewidth > 0, '> 0', self.linewidth)
        _require('photophysics', 'zfs', self.zfs > 0, '> 0', self.zfs)


@dataclass(frozen=True)
class CarrierSettings:
    rtol: float = _q('dimensionless', '')
    max_iter: int = _raw('count')

    def __post_init__(self):
        _require('carriers', 'rtol', 0 < self.rtol < 1e-3, 'in (0, 1e-3)', self.rtol)
        _require('carriers', 'max_iter', self.max_iter >= 1, '>= 1', self.max_iter)


@dataclass(frozen=True)
class SolverSettings:
    depletion_threshold: float = _q('dimensionless', '')
    newton_tol: float = _q('dimensionless', '')
    linear_rtol: float = _q('dimensionless', '')
    damping: float = _q('dimensionless', '')
    max_newton: int = _raw('count')
    ramp_step: float = _q('voltage', 'V')
    ramp_retries: int = _raw('count')
    lateral_stage_factor: float = _q('dimensionless', '')
    cache_dir: str = _raw('path')

    def __post_init__(self):
        _require(
            'solver', 'depletion_threshold', 0 < self.depletion_threshold < 1, 'in (0, 1)', self.depletion_threshold
        )
        _require('solver', 'newton_tol', self.newton_tol > 0, '> 0', self.newton_tol)
        _require('solver', 'linear_rtol', self.linear_rtol > 0, '> 0', self.linear_rtol)
        _require('solver', 'damping', 0 < self.damping < 1, 'in (0, 1)', self.damping)
        _require('solver', 'max_newton', self.max_newton >= 1, '>= 1', self.max_newton)
        _require('solver', 'ramp_step', self.ramp_step > 0, '> 0', self.ramp_step)
        _require('solver', 'ramp_retries', self.ramp_retries >= 0, '>= 0', self.ramp_retries)
        _require('solver', 'lateral_stage_factor', self.lateral_stage_factor > 0, '> 0', self.lateral_stage_factor)


@dataclass(frozen=True)
class TransportSettings:
    A_eff: float = _q('area', 'cm^2')
    edge_weight: float = _q('dimensionless', '')
    series_resistance: float = _q('resistance', 'Ohm')

    def __post_init__(self):
        _require('transport', 'A_eff', self.A_eff > 0, '> 0', self.A_eff)
        _require('transport', 'edge_weight', 0 <= self.edge_weight <= 1, 'in [0, 1]', self.edge_weight)
        _require('transport', 'series_resistance', self.series_resistance >= 0, '>= 0', self.series_resistance)


@dataclass(frozen=True)
class CalibrationSettings:
    target_p: float = _q('density', 'cm^-3')
    power: float = _q('power', 'mW')

    def __post_init__(self):
        _require('calibration', 'target_p', self.target_p >= 0, '>= 0', self.target_p)
        _require('calibration', 'power', self.power > 0, '> 0', self.power)


SECTIONS = {
    'material': MaterialParams,
    'geometry': DeviceGeometry,
    'drive': DriveConditions,
    'photophysics': RateParams,
    'carriers': CarrierSettings,
    'solver': SolverSettings,
    'transport': TransportSettings,
    'calibration': CalibrationSettings,
}


@dataclass(frozen=True)
class SimulationConfig:
    material: MaterialParams
    geometry: DeviceGeometry
    drive: DriveConditions
    photophysics: RateParams
    carriers: CarrierSettings
    solver: SolverSettings
    transport: TransportSettings
    calibration: CalibrationSettings

    def triple(self):
        """The (material, geometry, drive) parameter triple."""
        return self.material, self.geometry, self.drive


def replace_section(config, section, **changes):
    """Return a copy of ``config`` with fields of one section replaced (SI values), re-validated.

    Changing one of ``geometry.slab_depth`` / ``geometry.beam_waist`` alone moves the other with it.
    """
    if section not in SECTIONS:
        raise ConfigParseError(f"Unknown config section '{section}'", field=section)
    current = getattr(config, section)
    if section == 'geometry':
        if 'beam_waist' in changes and 'slab_depth' not in changes:
            changes['slab_depth'] = 2 * changes['beam_waist']
        elif 'slab_depth' in changes and 'beam_waist' not in changes:
            changes['beam_waist'] = changes['slab_depth'] / 2
    known = {f.name for f in dataclasses.fields(current)}
    for name in changes:
        if name not in known:
            raise ConfigParseError(f"Unknown config key '{section}.{name}'", field=f'{section}.{name}')
    return dataclasses.replace(config, **{section: dataclasses.replace(current, **changes)})


def _convert(section, f, value, line=None):
    name = f'{section}.{f.name}'
    kind = f.metadata['kind']
    if f.metadata.get('optional') and value in (None, '', 'null', 'None'):
        return None
    try:
        if kind == 'bool':
            if isinstance(value, str):
                value = yaml.safe_load(value)
            if not isinstance(value, bool):
                raise ConfigParseError(f"Expected true or false, got {value!r}", field=name)
            return value
        if kind == 'electrode':
            value = str(value).strip().upper()
            if value not in ELECTRODES:
                raise ConfigParseError(f"Expected electrode A or B, got {value!r}", field=name)
            return value
        if kind == 'count':
            if isinstance(value, str):
                value = yaml.safe_load(value)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigParseError(f"Expected an integer, got {value!r}", field=name)
            return value
        if kind == 'path':
            if value in (None, '', 'null', 'None'):
                return None
            return str(value)
        return to_si(value, kind, f.metadata['unit'], field=name)
    except ConfigParseError as e:
        raise ConfigParseError(e.message, line=line, field=name)


def _key_lines(text):
    """Map ``section.field`` to 1-based line numbers in a YAML document."""
    lines = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for section_key, section_node in root.value:
        lines[section_key.value] = section_key.start_mark.line + 1
        if isinstance(section_node, yaml.MappingNode):
            for key, _ in section_node.value:
                lines[f'{section_key.value}.{key.value}'] = key.start_mark.line + 1
    return lines


def _parse_document(text):
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        raise ConfigParseError(f"Invalid YAML: {getattr(e, 'problem', e)}", line=mark.line + 1 if mark else None)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigParseError("A config document must be a mapping of sections", line=1)
    for section, values in doc.items():
        if section not in SECTIONS:
            raise ConfigParseError(f"Unknown config section '{section}'", field=str(section))
        if values is None:
            doc[section] = {}
        elif not isinstance(values, dict):
            raise ConfigParseError(f"Section '{section}' must be a mapping", field=str(section))
    return doc


def _known_field(section, name):
    for f in dataclasses.fields(SECTIONS[section]):
        if f.name == name:
            return f
    return None


def _match_field(section, name):
    """Case-insensitive field lookup, used for environment variable names."""
    for f in dataclasses.fields(SECTIONS[section]):
        if f.name.lower() == name.lower():
            return f
    return None


def env_overrides(environ=None):
    """Collect ``NVSCHOTTKY_<SECTION>__<FIELD>`` variables as ``{'section.field': value}``."""
    environ = os.environ if environ is None else environ
    found = {}
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX) or '__' not in key:
            continue
        section, _, name = key[len(ENV_PREFIX) :].partition('__')
        section = section.lower()
        f = _match_field(section, name) if section in SECTIONS else None
        if f is None:
            logger.warning(f"Ignoring unknown config override {key}")
            continue
        found[f'{section}.{f.name}'] = environ[key]
    return found


def parse_set_options(options):
    """Turn ``['section.field=value', ...]`` or a ``{'section.field': value}`` mapping into checked pairs."""
    if isinstance(options, dict):
        pairs = [(str(key).strip(), value) for key, value in options.items()]
    else:
        pairs = []
        for option in options or ():
            key, sep, value = option.partition('=')
            key = key.strip()
            if not sep or '.' not in key:
                raise ConfigParseError(f"Expected section.field=value, got '{option}'", field=key or None)
            pairs.append((key, value.strip()))
    found = {}
    for key, value in pairs:
        section, _, name = key.partition('.')
        if section not in SECTIONS or _known_field(section, name) is None:
            raise ConfigParseError(f"Unknown config key '{key}'", field=key)
        found[key] = value
    return found


def _apply_layer(merged, layer, origin, sources):
    """Merge one layer of ``{'section.field': value}`` into ``merged``, tracking linked geometry fields."""
    linked = {'geometry.slab_depth', 'geometry.beam_waist'}
    touched = linked & set(layer)
    if len(touched) == 1:
        (other,) = linked - touched
        merged.pop(other, None)
    for key, value in layer.items():
        previous = sources.get(key)
        if previous in ('environment', 'set option') and origin != previous:
            warnings.warn(f"{origin} replaces {key} already set by the {previous}", OverrideWarning)
        merged[key] = value
        sources[key] = origin


def _flatten(doc):
    flat = {}
    for section, values in doc.items():
        for name, value in values.items():
            if _known_field(section, name) is None:
                raise ConfigParseError(f"Unknown config key '{section}.{name}'", field=f'{section}.{name}')
            flat[f'{section}.{name}'] = value
    return flat


def load_config(document=None, overrides=None, environ=None):
    """Build a validated :class:`SimulationConfig`.

    Parameters
    ----------
    document : str or dict, optional
        YAML text (or an already parsed mapping) layered over the packaged defaults
    overrides : list or dict, optional
        ``--set`` style ``section.field=value`` strings, or a ``{'section.field': value}`` mapping
    environ : dict, optional
        Environment to read ``NVSCHOTTKY_<SECTION>__<FIELD>`` overrides from; ``os.environ`` by default

    Raises
    ------
    ConfigParseError
        If the document is not valid YAML or holds an unknown key or unreadable value
    InvariantViolation
        If a parameter breaks a model invariant
    """
    with open(DEFAULTS_PATH, encoding='utf-8') as f:
        defaults = _flatten(_parse_document(f.read()))

    lines = {}
    if isinstance(document, str):
        lines = _key_lines(document)
        doc = _parse_document(document)
    elif document is None:
        doc = {}
    else:
        doc = _parse_document(yaml.safe_dump(dict(document)))
    try:
        from_file = _flatten(doc)
    except ConfigParseError as e:
        raise ConfigParseError(e.message, line=lines.get(e.field), field=e.field)

    from_set = parse_set_options(overrides)

    merged, sources = {}, {}
    _apply_layer(merged, defaults, 'defaults', sources)
    _apply_layer(merged, from_file, 'config file', sources)
    _apply_layer(merged, env_overrides(environ), 'environment', sources)
    _apply_layer(merged, from_set, 'set option', sources)

    sections = {}
    for section, cls in SECTIONS.items():
        values = {}
        for f in dataclasses.fields(cls):
            key = f'{section}.{f.name}'
            if key in merged:
                values[f.name] = _convert(section, f, merged[key], lines.get(key))
        if section == 'geometry':
            if 'slab_depth' not in values and 'beam_waist' in values:
                values['slab_depth'] = 2 * values['beam_waist']
            elif 'beam_waist' not in values and 'slab_depth' in values:
                values['beam_waist'] = values['slab_depth'] / 2
        missing = [f.name for f in dataclasses.fields(cls) if f.name not in values]
        if missing:
            raise ConfigParseError(f"Missing value for '{section}.{missing[0]}'", field=f'{section}.{missing[0]}')
        sections[section] = cls(**values)
    return SimulationConfig(**sections)


def load_config_file(path, overrides=None, environ=None):
    """Read ``path`` and pass it to :func:`load_config`."""
    logger.info(f"Loading config {path}")
    try:
        with open(path, encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigParseError(f"Cannot read config file {path}: {e.strerror}")
    return load_config(text, overrides=overrides, environ=environ)


def config_to_dict(config):
    """SI values with explicit units, keyed by section then field."""
    out = {}
    for section in SECTIONS:
        params = getattr(config, section)
        values = {}
        for f in dataclasses.fields(params):
            value = getattr(params, f.name)
            if f.metadata['unit'] is None or value is None:
                values[f.name] = value
            else:
                values[f.name] = format_si(value, f.metadata['kind'])
        out[section] = values
    return out


def serialize_config(config):
    """YAML text that :func:`load_config` reads back to an equal config, bit for bit."""
    return yaml.safe_dump(config_to_dict(config), sort_keys=False, allow_unicode=True)
