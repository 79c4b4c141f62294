"""Main `nvschottky` interface."""

import logging
import platform
import sys
from pathlib import Path

import click

from .config import load_config, load_config_file, serialize_config
from .engines import sweep_engines
from .exceptions import NVSchottkyException, SolverError
from .execute import execute_campaign, execute_command
from .iorw import verify_output, write_failure
from .log import logger
from .version import version as nvschottky_version

FIGURE_PACK = Path(__file__).parent / 'campaigns' / 'figure_pack.yaml'


def print_nvschottky_version(ctx, param, value):
    if not value:
        return
    print(f"{nvschottky_version} from {__file__} ({platform.python_version()})")
    ctx.exit()


@click.group(context_settings=dict(help_option_names=['-h', '--help']))
@click.option(
    '--log-level',
    type=click.Choice(['NOTSET', 'DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']),
    default='INFO',
    help='Set log level',
)
@click.option(
    '--version',
    is_flag=True,
    callback=print_nvschottky_version,
    expose_value=False,
    is_eager=True,
    help='Flag for displaying the version.',
)
def nvschottky(log_level):
    """Simulate photoelectric readout of NV centres through graphitic Schottky contacts.

    Every subcommand writes its results, a manifest.json and a timing.json into
    the output directory. Quantities on the command line take the same lab units
    as the configuration file (mW, um, GHz, V) unless a unit is given, e.g.
    ``--power "0.4 W"``.
    """
    logging.basicConfig(level=log_level, format="%(message)s")


def config_options(func):
    func = click.option('--set', 'set_options', multiple=True, help='Override a value: section.field=value.')(func)
    func = click.option(
        '--config', '-c', 'config_path', type=click.Path(dir_okay=False), help='YAML configuration file.'
    )(func)
    return func


def run_options(func):
    func = click.option(
        '--progress-bar/--no-progress-bar', default=None, help="Flag for turning on the progress bar."
    )(func)
    func = click.option('--workers', type=int, help='Worker count for the sweep engine.')(func)
    func = click.option('--engine', help='Sweep engine name (serial, threads or a registered plugin).')(func)
    func = click.option('--output', help='Name of the main result file.')(func)
    func = click.option(
        '--output-dir', '-o', default='results', show_default=True, help='Directory for result files.'
    )(func)
    return config_options(func)


def _fail(exc, output_dir=None, context=None):
    if isinstance(exc, SolverError) and output_dir is not None:
        path = write_failure(output_dir, exc, context)
        logger.error(f"Diagnostics written to {path}")
    click.echo(f"Error: {exc}", err=True)
    sys.exit(exc.exit_code)


def _load(config_path, set_options):
    if config_path:
        return load_config_file(config_path, overrides=list(set_options))
    return load_config(overrides=list(set_options))


def _execute(kind, options, parameters):
    output_dir = options['output_dir']
    progress_bar = options['progress_bar']
    try:
        config = _load(options['config_path'], options['set_options'])
        writer, result = execute_command(
            kind,
            config,
            output_dir,
            parameters=parameters,
            output=options['output'],
            engine_name=options['engine'],
            progress_bar=True if progress_bar is None else progress_bar,
            workers=options['workers'],
        )
    except NVSchottkyException as e:
        _fail(e, output_dir, {'command': kind, 'parameters': parameters})
    for name in writer.files:
        click.echo(str(Path(output_dir) / name))
    return result


def _options(kwargs):
    keys = ('config_path', 'set_options', 'output_dir', 'output', 'engine', 'workers', 'progress_bar')
    return {k: kwargs.pop(k) for k in keys}


@nvschottky.command()
@run_options
@click.option('--power', help='Optical power, mW.')
@click.option('--rf', type=click.Choice(['on', 'off']), default='off', show_default=True)
@click.option('--rf-frequency', help='RF frequency, GHz; defaults to drive.rf_frequency.')
@click.option('--u-range', default='0:150:5', show_default=True, help='Bias sweep start:stop:step, V.')
def iv(**kwargs):
    """I-U characteristic of the device."""
    options = _options(kwargs)
    curve = _execute('iv', options, kwargs)
    if curve.inflection_voltage is not None:
        click.echo(f"Inflection at {curve.inflection_voltage:.2f} V")


@nvschottky.command()
@run_options
@click.option('--powers', default='100,200,400', show_default=True, help='Optical powers, mW.')
@click.option('--u-range', default='0:150:5', show_default=True, help='Bias sweep start:stop:step, V.')
def powerstudy(**kwargs):
    """I-U characteristics over several optical powers."""
    options = _options(kwargs)
    _execute('powerstudy', options, kwargs)


@nvschottky.command()
@run_options
@click.option('--power', help='Optical power, mW.')
@click.option('--u-list', default='10:150:10', show_default=True, help='Biases as start:stop:step or a list, V.')
@click.option('--filter', type=click.Choice(['nvminus', 'nvzero']), default='nvminus', show_default=True)
@click.option('--field-maps', is_flag=True, default=False, help='Also write a field map per bias.')
@click.option('--generation-map', is_flag=True, default=False, help='Also write the generation map.')
def dr(**kwargs):
    """Depletion-region metrics, PL-change profiles and surface fields."""
    options = _options(kwargs)
    study = _execute('dr', options, kwargs)
    if study.sqrt_fit is not None:
        slope, _, r2 = study.sqrt_fit
        click.echo(f"L_lateral = {slope:.4e} m/V^0.5 * sqrt(U) + c, R^2 = {r2:.5f}")


@nvschottky.command()
@run_options
@click.option('--polarity', type=click.Choice(['A', 'B']), help='Electrode held at the bias.')
@click.option('--bias', default='150', show_default=True, help='Bias, V.')
@click.option('--power', help='Optical power, mW.')
@click.option('--frequencies', default='1.95:2.05:0.002', show_default=True, help='RF frequencies, GHz.')
@click.option('--f-a', 'f_A', default='1.98', show_default=True, help='Resonance over electrode A, GHz.')
@click.option('--f-b', 'f_B', default='2.02', show_default=True, help='Resonance over electrode B, GHz.')
def spectrum(**kwargs):
    """PDMR and ODMR spectra under a field gradient."""
    options = _options(kwargs)
    result = _execute('spectrum', options, kwargs)
    click.echo(
        f"PDMR peak {result.pdmr_peak / 1e9:.4f} GHz; ODMR peaks A {result.odmr_peak('A') / 1e9:.4f} GHz, "
        f"B {result.odmr_peak('B') / 1e9:.4f} GHz"
    )


@nvschottky.command()
@run_options
@click.option('--power', help='Optical power, mW.')
@click.option('--rf', type=click.Choice(['on', 'off']), default='on', show_default=True)
@click.option('--rf-frequency', help='RF frequency, GHz; defaults to drive.rf_frequency.')
@click.option('--u-range', default='0:150:5', show_default=True, help='Bias sweep start:stop:step, V.')
def contrast(**kwargs):
    """PDMR contrast against bias, labelled by regime."""
    options = _options(kwargs)
    sweep = _execute('contrast', options, kwargs)
    click.echo(f"Knees: RF on {sweep.knee_on} V, RF off {sweep.knee_off} V")


@nvschottky.command()
@run_options
@click.option(
    '--beam', 'beams', nargs=2, multiple=True, help='Beam waist (um) and optical power (mW); repeat per beam.'
)
@click.option('--u-range', default='0:150:5', show_default=True, help='Bias sweep start:stop:step, V.')
@click.option('--rf-frequency', help='RF frequency, GHz; defaults to drive.rf_frequency.')
def beamstudy(**kwargs):
    """Contrast sweeps for beam sizes at one common intensity."""
    options = _options(kwargs)
    kwargs['beams'] = [list(beam) for beam in kwargs['beams']] or None
    for entry in _execute('beamstudy', options, kwargs):
        click.echo(
            f"waist {entry.beam_waist * 1e6:g} um: knee {entry.knee_voltage} V, plateau {entry.plateau_contrast}"
        )


@nvschottky.command()
@run_options
@click.option('--data', required=True, type=click.Path(exists=True, dir_okay=False), help='CSV with U and I columns.')
def calibrate(**kwargs):
    """Fit barrier height and ideality to measured I-U data."""
    options = _options(kwargs)
    fit = _execute('calibrate', options, kwargs)
    click.echo(f"phi1 = {fit.phi1:.6f} V, eta = {fit.eta:.6f}")


@nvschottky.command()
@run_options
@click.option('--bias', default='150', show_default=True, help='Bias, V.')
@click.option('--power', help='Optical power, mW.')
@click.option('--rf-frequency', help='RF frequency, GHz; defaults to drive.rf_frequency.')
def compare(**kwargs):
    """Electrical against optical contrast at one bias."""
    options = _options(kwargs)
    result = _execute('compare', options, kwargs)
    click.echo(f"PDMR {result.pdmr_contrast:.4%}, ODMR {result.odmr_contrast:.4%}")


def _campaign(campaign, options):
    output_dir = options['output_dir']
    progress_bar = options['progress_bar']
    try:
        config = _load(options['config_path'], options['set_options'])
        writer, _ = execute_campaign(
            campaign,
            config,
            output_dir,
            engine_name=options['engine'],
            progress_bar=True if progress_bar is None else progress_bar,
            workers=options['workers'],
        )
    except NVSchottkyException as e:
        _fail(e, output_dir, {'campaign': str(campaign)})
    for name in writer.files:
        click.echo(str(Path(output_dir) / name))


@nvschottky.command()
@click.argument('campaign_path', type=click.Path(exists=True, dir_okay=False))
@run_options
def run(campaign_path, **kwargs):
    """Execute every run of a campaign file."""
    _campaign(campaign_path, _options(kwargs))


@nvschottky.command('figure-pack')
@run_options
def figure_pack(**kwargs):
    """Write the data files behind every figure (fig2a.csv ... fig3d.csv)."""
    _campaign(FIGURE_PACK, _options(kwargs))


@nvschottky.command()
@click.argument('output_dir', type=click.Path(exists=True, file_okay=False))
def verify(output_dir):
    """Check the result files in OUTPUT_DIR against their manifest."""
    try:
        checked = verify_output(output_dir)
    except NVSchottkyException as e:
        _fail(e)
    click.echo(f"OK: {len(checked)} files match the manifest")


@nvschottky.command('show-config')
@config_options
def show_config(config_path, set_options):
    """Print the effective configuration in SI units."""
    try:
        config = _load(config_path, set_options)
    except NVSchottkyException as e:
        _fail(e)
    click.echo(serialize_config(config), nl=False)


@nvschottky.command('engines')
def engines():
    """List the registered sweep engines."""
    for name in sweep_engines.names():
        click.echo(name)
