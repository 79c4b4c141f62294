"""Running subcommands and campaign files into an output directory."""
import math
import time
from pathlib import Path

import pandas as pd

from .config import config_to_dict, load_config
from .exceptions import ConfigParseError, NoKneeError
from .experiments import (
    DeviceModel,
    beam_size_study,
    compare_contrasts,
    contrast_vs_voltage,
    depletion_study,
    identify_polarity,
    plateau_contrast,
    plateau_spread,
    power_study,
    spectrum_scan,
    tune_gradient,
)
from .iorw import (
    ResultWriter,
    build_manifest,
    field_map_frame,
    generation_frame,
    iv_frame,
    points_frame,
    read_iv_data,
    read_yaml_file,
)
from .log import logger
from .models import ContrastPoint, IVPoint, SpectrumPoint
from .parameterize import parameterize_path, resolve_parameters
from .photophysics import generation_field
from .transport import calibrate_barrier, device_iv

DEFAULT_U_RANGE = '0:150:5'
DEFAULT_U_LIST = '10:150:10'
DEFAULT_FREQUENCIES = '1.95:2.05:0.002'
DEFAULT_LINES = (1.98e9, 2.02e9)
DEFAULT_BIAS = 150.0
DEFAULT_POWERS = '100,200,400'
DEFAULT_BEAMS = [[5, 100], [10, 400]]


def _finite(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _stem(output):
    return str(Path(output).with_suffix(''))


def _output(outputs, key, default):
    return (outputs or {}).get(key) or default


def _sweep(params, key, default):
    if key in params:
        return params[key]
    return resolve_parameters({key: default})[key]


def _engine(options):
    return {k: v for k, v in options.items() if k in ('engine_name', 'progress_bar', 'workers')}


def _with_power(model, params):
    if 'power' in params:
        return model.replace('drive', optical_power=params['power'])
    return model


def run_iv(model, writer, output, params, outputs=None, **options):
    """I-U characteristic at one optical power with RF on or off."""
    model = _with_power(model, params)
    curve = device_iv(
        _sweep(params, 'u_range', DEFAULT_U_RANGE),
        model,
        rf_enabled=params.get('rf', False),
        rf_frequency=params.get('rf_frequency'),
        **_engine(options),
    )
    writer.write_table(output, iv_frame(curve))
    writer.write_sidecar(
        f'{_stem(output)}.json',
        {
            'kind': 'iv',
            'optical_power': curve.drive.optical_power,
            'rf_enabled': curve.rf_enabled,
            'rf_frequency': curve.drive.rf_frequency,
            'inflection_voltage': _finite(curve.inflection_voltage),
            'full_bias_on_reverse_contact': model.diodes().full_bias_on_reverse_contact,
        },
    )
    return curve


def run_power_study(model, writer, output, params, outputs=None, **options):
    """I-U characteristics over a list of optical powers."""
    powers = _sweep(params, 'powers', DEFAULT_POWERS)
    curves = power_study(
        model,
        powers,
        _sweep(params, 'u_range', DEFAULT_U_RANGE),
        rf_enabled=params.get('rf', False),
        rf_frequency=params.get('rf_frequency'),
        **_engine(options),
    )
    frames = [iv_frame(curve).assign(optical_power=power) for power, curve in zip(powers, curves)]
    table = pd.concat(frames, ignore_index=True)[['optical_power', *IVPoint._fields]]
    writer.write_table(output, table)
    knees = pd.DataFrame(
        {'optical_power': powers, 'inflection_voltage': [_finite(c.inflection_voltage) for c in curves]}
    )
    writer.write_table(_output(outputs, 'knees', f'{_stem(output)}_knees.csv'), knees)
    return curves


def run_dr(model, writer, output, params, outputs=None, **options):
    """Depletion metrics, PL-change profiles and surface fields for a list of biases."""
    model = _with_power(model, params)
    study = depletion_study(
        model, _sweep(params, 'u_list', DEFAULT_U_LIST), filter=params.get('filter', 'NV_minus'), **_engine(options)
    )
    stem = _stem(output)
    metrics = pd.DataFrame([m._asdict() for m in study.metrics])
    metrics.insert(0, 'U', list(study.voltages))
    writer.write_table(output, metrics)

    profiles = pd.concat(
        [
            pd.DataFrame({'U': U, 'position': position, 'profile': profile})
            for U, (position, profile) in zip(study.voltages, study.profiles)
        ],
        ignore_index=True,
    )
    writer.write_table(_output(outputs, 'profiles', f'{stem}_profiles.csv'), profiles)
    surface = pd.concat(
        [pd.DataFrame({'U': U, 'x': x, 'E': E}) for U, (x, E) in zip(study.voltages, study.surface_fields)],
        ignore_index=True,
    )
    writer.write_table(_output(outputs, 'surface', f'{stem}_surface.csv'), surface)

    if params.get('field_maps'):
        for U, solution in zip(study.voltages, study.solutions):
            writer.write_table(f'{stem}_field_{U:g}V.csv', field_map_frame(solution))
    if params.get('generation_map'):
        drive = model.config.drive
        G = generation_field(
            model.geometry, drive, model.config.photophysics, model.config.material.nv_density, model.scale, model.grid
        )
        writer.write_table(f'{stem}_generation.csv', generation_frame(model.grid, G))

    fit = None
    if study.sqrt_fit is not None:
        slope, intercept, r2 = study.sqrt_fit
        fit = {'slope': slope, 'intercept': intercept, 'r2': r2}
    writer.write_sidecar(
        f'{stem}.json',
        {
            'kind': 'dr',
            'filter': study.filter,
            'depletion_threshold': model.config.solver.depletion_threshold,
            'sqrt_fit': fit,
        },
    )
    return study


def run_spectrum(model, writer, output, params, outputs=None, **options):
    """PDMR and ODMR spectra with the aligned lines tuned to ``f_A`` / ``f_B``."""
    model = _with_power(model, params)
    f_A = params.get('f_A', DEFAULT_LINES[0])
    f_B = params.get('f_B', DEFAULT_LINES[1])
    model = tune_gradient(model, f_A, f_B)
    result = spectrum_scan(
        model,
        _sweep(params, 'frequencies', DEFAULT_FREQUENCIES),
        U=params.get('bias', DEFAULT_BIAS),
        polarity=params.get('polarity'),
        **_engine(options),
    )
    writer.write_table(output, points_frame(result.points, SpectrumPoint._fields))
    writer.write_sidecar(
        f'{_stem(output)}.json',
        {
            'kind': 'spectrum',
            'bias': result.bias,
            'polarity': result.polarity,
            'B_axial': result.drive.B_axial,
            'B_gradient': result.drive.B_gradient,
            'pdmr_peak': result.pdmr_peak,
            'odmr_peak_A': result.odmr_peak('A'),
            'odmr_peak_B': result.odmr_peak('B'),
            'identified_polarity': identify_polarity(result),
        },
    )
    return result


def _plateau_summary(sweep):
    try:
        return _finite(plateau_contrast(sweep)), _finite(plateau_spread(sweep))
    except NoKneeError:
        return None, None


def run_contrast(model, writer, output, params, outputs=None, **options):
    """Paired RF-off / RF-on sweeps and the PDMR contrast between them."""
    model = _with_power(model, params)
    sweep = contrast_vs_voltage(
        model,
        _sweep(params, 'u_range', DEFAULT_U_RANGE),
        rf_frequency=params.get('rf_frequency'),
        rf_enabled=params.get('rf', True),
        **_engine(options),
    )
    writer.write_table(output, points_frame(sweep.points, ContrastPoint._fields))
    if outputs and outputs.get('iv'):
        curves = pd.concat(
            [iv_frame(sweep.curve_off).assign(rf=0), iv_frame(sweep.curve_on).assign(rf=1)], ignore_index=True
        )
        writer.write_table(outputs['iv'], curves[['rf', *IVPoint._fields]])
    plateau, spread = _plateau_summary(sweep)
    writer.write_sidecar(
        f'{_stem(output)}.json',
        {
            'kind': 'contrast',
            'optical_power': model.config.drive.optical_power,
            'rf_frequency': sweep.drive.rf_frequency,
            'knee_on': _finite(sweep.knee_on),
            'knee_off': _finite(sweep.knee_off),
            'plateau_contrast': plateau,
            'plateau_spread': spread,
        },
    )
    return sweep


def run_beam_study(model, writer, output, params, outputs=None, **options):
    """Contrast sweeps for beam waist / power pairs at one intensity."""
    beams = params.get('beams') or resolve_parameters({'beams': DEFAULT_BEAMS})['beams']
    runs = beam_size_study(
        model,
        beams,
        _sweep(params, 'u_range', DEFAULT_U_RANGE),
        rf_frequency=params.get('rf_frequency'),
        **_engine(options),
    )
    frames = [
        points_frame(run.sweep.points, ContrastPoint._fields).assign(
            beam_waist=run.beam_waist, optical_power=run.optical_power
        )
        for run in runs
    ]
    table = pd.concat(frames, ignore_index=True)[['beam_waist', 'optical_power', *ContrastPoint._fields]]
    writer.write_table(output, table)
    summary = pd.DataFrame(
        {
            'beam_waist': [run.beam_waist for run in runs],
            'optical_power': [run.optical_power for run in runs],
            'knee_voltage': [_finite(run.knee_voltage) for run in runs],
            'plateau_contrast': [_finite(run.plateau_contrast) for run in runs],
        }
    )
    writer.write_table(_output(outputs, 'summary', f'{_stem(output)}_summary.csv'), summary)
    return runs


def run_calibrate(model, writer, output, params, outputs=None, **options):
    """Fit barrier height and ideality to a measured I-U file."""
    if 'data' not in params:
        raise ConfigParseError("The calibrate run needs a 'data' file", field='data')
    data = read_iv_data(params['data'])
    mat = model.config.material
    fit = calibrate_barrier(data, model.diodes(), mat)
    errors = [math.sqrt(max(fit.covariance[i, i], 0.0)) for i in range(3)]
    table = pd.DataFrame(
        {'parameter': ['phi1', 'eta', 'A_eff'], 'value': [fit.phi1, fit.eta, fit.A_eff], 'stderr': errors}
    )
    writer.write_table(output, table)
    writer.write_sidecar(
        f'{_stem(output)}.json',
        {
            'kind': 'calibrate',
            'data': params['data'],
            'points': len(fit.residuals),
            'nfev': int(fit.nfev),
            'rms_residual': float(math.sqrt(sum(r * r for r in fit.residuals) / len(fit.residuals))),
            'covariance': [[float(v) for v in row] for row in fit.covariance],
        },
    )
    return fit


def run_compare(model, writer, output, params, outputs=None, **options):
    """Electrical against optical contrast at one bias."""
    model = _with_power(model, params)
    comparison = compare_contrasts(model, params.get('bias', DEFAULT_BIAS), rf_frequency=params.get('rf_frequency'))
    writer.write_table(output, pd.DataFrame([comparison._asdict()]))
    return comparison


RUN_KINDS = {
    'iv': run_iv,
    'powerstudy': run_power_study,
    'dr': run_dr,
    'spectrum': run_spectrum,
    'contrast': run_contrast,
    'beamstudy': run_beam_study,
    'calibrate': run_calibrate,
    'compare': run_compare,
}


def _run_model(model, params):
    """Model for one run; a run-level ``set`` list re-layers the configuration and recalibrates."""
    overrides = params.get('set')
    if not overrides:
        return model
    config = load_config(config_to_dict(model.config), overrides=overrides, environ={})
    return DeviceModel.from_config(config)


def execute_run(kind, model, writer, output, params, outputs=None, **options):
    """Run one entry of kind ``kind`` and write its files through ``writer``."""
    if kind not in RUN_KINDS:
        raise ConfigParseError(f"Unknown run kind '{kind}'; use one of {', '.join(sorted(RUN_KINDS))}", field='kind')
    model = _run_model(model, params)
    logger.info(f"Running {kind} into {output}")
    return RUN_KINDS[kind](model, writer, output, params, outputs=outputs, **options)


def execute_command(
    kind, config, output_dir, parameters=None, output=None, engine_name=None, progress_bar=False, workers=None
):
    """Run one subcommand into ``output_dir``.

    Parameters
    ----------
    kind : str
        One of ``RUN_KINDS``
    config : SimulationConfig
    output_dir : str or Path
    parameters : dict, optional
        Run parameters in lab units; see :mod:`nvschottky.parameterize`
    output : str, optional
        Result file name; defaults to ``<kind>.csv``
    """
    start = time.perf_counter()
    parameters = {k: v for k, v in (parameters or {}).items() if v is not None}
    params = resolve_parameters(parameters)
    model = DeviceModel.from_config(config)
    manifest = build_manifest(model, kind, parameters)
    writer = ResultWriter(output_dir, manifest).prepare()
    result = execute_run(
        kind,
        model,
        writer,
        output or f'{kind}.csv',
        params,
        engine_name=engine_name,
        progress_bar=progress_bar,
        workers=workers,
    )
    writer.write_timing({'command': kind, 'wall_clock_seconds': time.perf_counter() - start})
    return writer, result


def load_campaign(campaign):
    """Validated campaign mapping from a path or an already parsed mapping."""
    if not isinstance(campaign, dict):
        campaign = read_yaml_file(str(campaign))
    if not isinstance(campaign, dict) or not isinstance(campaign.get('runs'), list):
        raise ConfigParseError("A campaign needs a 'runs' list", field='runs')
    names = set()
    for index, run in enumerate(campaign['runs']):
        if not isinstance(run, dict) or 'kind' not in run or 'output' not in run:
            raise ConfigParseError(f"Run {index} needs 'kind' and 'output'", field=f'runs[{index}]')
        name = run.get('name', f"{run['kind']}-{index}")
        if name in names:
            raise ConfigParseError(f"Duplicate run name '{name}'", field=f'runs[{index}].name')
        names.add(name)
    return campaign


def execute_campaign(campaign, config, output_dir, engine_name=None, progress_bar=False, workers=None):
    """Run every entry of a campaign file into one output directory under one manifest.

    Runs execute in file order; the bias points inside each run are spread over the sweep engine.
    """
    start = time.perf_counter()
    campaign = load_campaign(campaign)
    model = DeviceModel.from_config(config)
    manifest = build_manifest(model, 'campaign', {'name': campaign.get('name'), 'runs': campaign['runs']})
    writer = ResultWriter(output_dir, manifest).prepare()

    timing = {}
    results = {}
    for index, run in enumerate(campaign['runs']):
        name = run.get('name', f"{run['kind']}-{index}")
        raw = run.get('params') or {}
        run_start = time.perf_counter()
        results[name] = execute_run(
            run['kind'],
            model,
            writer,
            parameterize_path(run['output'], raw),
            resolve_parameters(raw),
            outputs={k: parameterize_path(v, raw) for k, v in (run.get('outputs') or {}).items()},
            engine_name=engine_name,
            progress_bar=progress_bar,
            workers=workers,
        )
        timing[name] = time.perf_counter() - run_start
    writer.write_timing(
        {'campaign': campaign.get('name'), 'wall_clock_seconds': time.perf_counter() - start, 'runs': timing}
    )
    return writer, results
