"""Measurement campaigns built on the single-point device pipeline.

A :class:`DeviceModel` couples a validated configuration with the generation calibration constant and
evaluates one bias point at a time (carriers, then electrostatics, then thermionic current). The
functions below compose those evaluations into spectra, contrast sweeps, power and beam-size studies
and depletion-region imaging runs.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np

from .cache import FieldCache
from .carriers import calibrate_generation, steady_carriers
from .config import replace_section
from .electrostatics import (
    Grid2D,
    delta_pl_profile,
    extract_metrics,
    solve_poisson,
    sqrt_law_fit,
    surface_field_profile,
)
from .engines import run_sweep
from .exceptions import DegenerateInputError, InvariantViolation, NoKneeError
from .models import BeamSizeRun, ContrastComparison, ContrastPoint, IVPoint, SpectrumPoint
from .photophysics import beam_intensity, generation_field, gradient_for_lines, region_states
from .transport import DiodePair, device_current, device_iv

logger = logging.getLogger('nvschottky.experiments')

REGIMES = ('rising', 'fast-rise', 'plateau')
# Minimum number of stage-3 points for the square-root fit of the lateral extension.
MIN_SQRT_FIT_POINTS = 3
INTENSITY_RTOL = 1e-9


@dataclass(frozen=True)
class DeviceModel:
    """A configuration plus the constant linking the per-NV pair rate to the carrier balance."""

    config: object
    scale: float

    @classmethod
    def from_config(cls, config):
        """Calibrate the generation scale at ``calibration.power`` and wrap ``config``."""
        cal = config.calibration
        scale = calibrate_generation(
            cal.target_p, cal.power, config.material, config.photophysics, config.geometry
        )
        return cls(config=config, scale=scale)

    @property
    def geometry(self):
        return self.config.geometry

    @property
    def grid(self):
        return Grid2D.from_geometry(self.config.geometry)

    def replace(self, section, **changes):
        """A model on a modified configuration that keeps this model's calibration."""
        return DeviceModel(config=replace_section(self.config, section, **changes), scale=self.scale)

    def drive_for(self, rf_enabled=False, rf_frequency=None):
        changes = {'rf_enabled': bool(rf_enabled)}
        if rf_frequency is not None:
            changes['rf_frequency'] = float(rf_frequency)
        return dataclasses.replace(self.config.drive, **changes)

    def hole_map(self, drive=None):
        """Quasi-neutral hole density (m^-3) on the grid nodes for ``drive``."""
        drive = drive or self.config.drive
        mat = self.config.material
        G = generation_field(
            self.geometry, drive, self.config.photophysics, mat.nv_density, scale=self.scale, grid=self.grid
        )
        # Generation only takes a handful of distinct values, one per electrode region.
        rates, inverse = np.unique(G, return_inverse=True)
        holes = np.array([steady_carriers(float(g), mat, self.config.carriers).p for g in rates])
        return holes[inverse.ravel()].reshape(G.shape)

    def diodes(self, polarity=None):
        return DiodePair.from_config(
            self.config.material, self.config.transport, polarity or self.config.drive.positive_electrode
        )

    def solve(self, U, rf_enabled=False, rf_frequency=None):
        """Field solution at bias ``U`` (V) on the configured positive electrode."""
        drive = self.drive_for(rf_enabled, rf_frequency)
        solver = self.config.solver
        return solve_poisson(
            self.grid,
            self.hole_map(drive),
            U,
            drive.positive_electrode,
            self.config.material,
            solver,
            cache=FieldCache.from_settings(solver),
        )

    def evaluate(self, U, rf_enabled=False, rf_frequency=None):
        """One point of the I-U characteristic.

        Returns
        -------
        IVPoint
        """
        solution = self.solve(U, rf_enabled, rf_frequency)
        metrics = extract_metrics(solution, self.geometry, self.config.solver.lateral_stage_factor)
        column = int(round(self.geometry.electrode_center(solution.polarity) / solution.grid.h))
        p0 = float(solution.p_map[0, column])
        if p0 == 0:
            current = 0.0
        else:
            current, _ = device_current(
                U,
                metrics.E_center,
                metrics.E_edge,
                self.diodes(solution.polarity),
                self.config.material,
                self.config.transport.edge_weight,
            )
        return IVPoint(
            U=float(U),
            I=float(current),
            E_center=metrics.E_center,
            E_edge=metrics.E_edge,
            W_vertical=metrics.W_vertical,
            L_lateral=metrics.L_lateral,
            stage=metrics.stage,
            p0=p0,
        )


def _contrast(off, on, what):
    if not off > 0:
        raise DegenerateInputError(f"{what} contrast needs a positive baseline, got {off!r}")
    return (off - on) / off


def pdmr_contrast(I_off, I_on):
    """Photocurrent contrast ``(I_off - I_on) / I_off``."""
    return _contrast(I_off, I_on, 'PDMR')


def odmr_contrast(PL_off, PL_on):
    """Photoluminescence contrast ``(PL_off - PL_on) / PL_off``."""
    return _contrast(PL_off, PL_on, 'ODMR')


@dataclass(frozen=True)
class SpectrumResult:
    points: tuple
    bias: float
    polarity: str
    drive: object = None

    @property
    def frequencies(self):
        return np.array([p.frequency for p in self.points])

    @property
    def pdmr_contrast(self):
        return np.array([p.pdmr_contrast for p in self.points])

    def odmr_contrast(self, region):
        field = 'odmr_contrast_A' if region == 'A' else 'odmr_contrast_B'
        return np.array([getattr(p, field) for p in self.points])

    @property
    def pdmr_peak(self):
        return float(self.frequencies[int(np.argmax(self.pdmr_contrast))])

    def odmr_peak(self, region):
        return float(self.frequencies[int(np.argmax(self.odmr_contrast(region)))])


def tune_gradient(model, f_A, f_B):
    """Model whose field gradient puts the aligned resonance at ``f_A`` over A and ``f_B`` over B."""
    B_axial, B_gradient = gradient_for_lines(f_A, f_B, model.geometry, model.config.photophysics.zfs)
    logger.info(f"Field {B_axial * 1e3:.4f} mT with gradient {B_gradient * 1e-3:.6f} mT/um")
    return model.replace('drive', B_axial=B_axial, B_gradient=B_gradient)


def spectrum_scan(model, frequencies, U=None, polarity=None, engine_name=None, **engine_kwargs):
    """PDMR and per-region ODMR contrast over ``frequencies`` (Hz).

    Parameters
    ----------
    model : DeviceModel
    frequencies : list of float
    U : float, optional
        Bias, V; defaults to ``drive.bias_voltage``
    polarity : str, optional
        Electrode to hold at ``U``; defaults to ``drive.positive_electrode``

    Returns
    -------
    SpectrumResult
    """
    if polarity is not None:
        model = model.replace('drive', positive_electrode=polarity)
    drive = model.config.drive
    U = drive.bias_voltage if U is None else float(U)
    frequencies = [float(f) for f in frequencies]
    if not frequencies:
        raise InvariantViolation('frequencies', 'non-empty', frequencies)

    params = model.config.photophysics
    baseline = model.evaluate(U, rf_enabled=False)
    if not baseline.I > 0:
        raise DegenerateInputError(f"No photocurrent at U = {U:g} V; the PDMR spectrum is undefined")
    pl_off = region_states(params, model.geometry, model.drive_for(False))

    def scan(frequency):
        point = model.evaluate(U, rf_enabled=True, rf_frequency=frequency)
        pl_on = region_states(params, model.geometry, model.drive_for(True, frequency))
        return SpectrumPoint(
            frequency=frequency,
            I_off=baseline.I,
            I_on=point.I,
            pdmr_contrast=pdmr_contrast(baseline.I, point.I),
            odmr_contrast_A=odmr_contrast(pl_off['A'].pl_nv_minus, pl_on['A'].pl_nv_minus),
            odmr_contrast_B=odmr_contrast(pl_off['B'].pl_nv_minus, pl_on['B'].pl_nv_minus),
        )

    points = run_sweep(scan, frequencies, engine_name=engine_name, desc='Spectrum', **engine_kwargs)
    result = SpectrumResult(points=tuple(points), bias=U, polarity=drive.positive_electrode, drive=drive)
    logger.info(f"PDMR peak at {result.pdmr_peak / 1e9:.4f} GHz with +{U:g} V on {drive.positive_electrode}")
    return result


def identify_polarity(spectrum):
    """Electrode region whose ODMR peak coincides with the PDMR peak, or ``None`` if not unique."""
    matches = [region for region in ('A', 'B') if spectrum.odmr_peak(region) == spectrum.pdmr_peak]
    if len(matches) != 1:
        logger.warning(f"PDMR peak at {spectrum.pdmr_peak:g} Hz matches regions {matches}")
        return None
    return matches[0]


def label_regimes(voltages, knee_on=None, knee_off=None):
    """``rising`` below the RF-on knee, ``fast-rise`` up to the RF-off knee, ``plateau`` beyond."""
    if knee_on is not None and knee_off is not None and knee_on > knee_off:
        logger.warning(f"RF-on knee {knee_on:g} V lies above the RF-off knee {knee_off:g} V")
        knee_on = knee_off
    if knee_on is None:
        knee_on = knee_off
    lower = math.inf if knee_on is None else knee_on
    upper = math.inf if knee_off is None else knee_off
    return tuple('rising' if U < lower else 'fast-rise' if U < upper else 'plateau' for U in voltages)


@dataclass(frozen=True)
class ContrastSweep:
    points: tuple
    knee_on: float = None
    knee_off: float = None
    drive: object = None
    curve_off: object = None
    curve_on: object = None

    @property
    def voltages(self):
        return np.array([p.U for p in self.points])

    @property
    def contrasts(self):
        return np.array([p.contrast for p in self.points])

    @property
    def regimes(self):
        return tuple(p.regime for p in self.points)

    def band(self, regime):
        if regime not in REGIMES:
            raise InvariantViolation('regime', f"one of {', '.join(REGIMES)}", regime)
        return [p for p in self.points if p.regime == regime]


def contrast_vs_voltage(model, U_sweep, rf_frequency=None, rf_enabled=True, engine_name=None, **engine_kwargs):
    """PDMR contrast along paired RF-off and RF-on I-U sweeps, labelled by regime.

    Returns
    -------
    ContrastSweep
    """
    curve_off = device_iv(U_sweep, model, rf_enabled=False, engine_name=engine_name, **engine_kwargs)
    if rf_enabled:
        curve_on = device_iv(
            U_sweep, model, rf_enabled=True, rf_frequency=rf_frequency, engine_name=engine_name, **engine_kwargs
        )
    else:
        curve_on = curve_off
    regimes = label_regimes(curve_off.voltages, curve_on.inflection_voltage, curve_off.inflection_voltage)
    points = tuple(
        ContrastPoint(
            U=off.U,
            I_off=off.I,
            I_on=on.I,
            contrast=0.0 if off.I == 0 else pdmr_contrast(off.I, on.I),
            regime=regime,
        )
        for off, on, regime in zip(curve_off.points, curve_on.points, regimes)
    )
    return ContrastSweep(
        points=points,
        knee_on=curve_on.inflection_voltage,
        knee_off=curve_off.inflection_voltage,
        drive=curve_on.drive,
        curve_off=curve_off,
        curve_on=curve_on,
    )


def plateau_contrast(sweep):
    """Mean contrast over the plateau band."""
    values = [p.contrast for p in sweep.band('plateau')]
    if not values:
        raise NoKneeError("The contrast sweep has no plateau band")
    return float(np.mean(values))


def plateau_spread(sweep):
    """Relative spread ``(max - min) / mean`` of the contrast over the plateau band."""
    values = np.array([p.contrast for p in sweep.band('plateau')])
    if values.size == 0:
        raise NoKneeError("The contrast sweep has no plateau band")
    spread = values.max() - values.min()
    mean = abs(values.mean())
    if mean == 0:
        return 0.0 if spread == 0 else math.inf
    return float(spread / mean)


def compare_contrasts(model, U, rf_frequency=None):
    """Electrical against optical contrast at one bias under identical illumination."""
    off = model.evaluate(U, rf_enabled=False)
    on = model.evaluate(U, rf_enabled=True, rf_frequency=rf_frequency)
    region = model.config.drive.positive_electrode
    params = model.config.photophysics
    pl_off = region_states(params, model.geometry, model.drive_for(False))[region]
    pl_on = region_states(params, model.geometry, model.drive_for(True, rf_frequency))[region]
    comparison = ContrastComparison(
        U=float(U),
        region=region,
        pdmr_contrast=pdmr_contrast(off.I, on.I),
        odmr_contrast=odmr_contrast(pl_off.pl_nv_minus, pl_on.pl_nv_minus),
    )
    logger.info(
        f"At {U:g} V: PDMR contrast {comparison.pdmr_contrast:.4%}, ODMR contrast {comparison.odmr_contrast:.4%}"
    )
    return comparison


def power_study(model, powers, U_sweep, rf_enabled=False, rf_frequency=None, engine_name=None, **engine_kwargs):
    """I-U curves at each optical power (W), keeping the model's calibration."""
    curves = []
    for power in powers:
        variant = model.replace('drive', optical_power=float(power))
        curve = device_iv(
            U_sweep, variant, rf_enabled=rf_enabled, rf_frequency=rf_frequency, engine_name=engine_name, **engine_kwargs
        )
        logger.info(f"{power * 1e3:g} mW: knee at {curve.inflection_voltage} V")
        curves.append(curve)
    knees = [c.inflection_voltage for c in curves if c.inflection_voltage is not None]
    if any(b < a for a, b in zip(knees, knees[1:])):
        logger.warning(f"Knee voltages {knees} decrease with optical power")
    return curves


def beam_size_study(model, beams, U_sweep, rf_frequency=None, engine_name=None, **engine_kwargs):
    """Contrast sweeps for ``(beam_waist, optical_power)`` pairs at one common intensity.

    Raises
    ------
    InvariantViolation
        If the pairs do not share the same intensity (power proportional to waist squared)
    """
    beams = [(float(w), float(P)) for w, P in beams]
    if not beams:
        raise InvariantViolation('beams', 'non-empty', beams)
    intensities = [beam_intensity(P, w) for w, P in beams]
    if any(abs(i - intensities[0]) > INTENSITY_RTOL * intensities[0] for i in intensities):
        raise InvariantViolation('beams', 'constant intensity (power proportional to waist^2)', intensities)

    runs = []
    for waist, power in beams:
        variant = model.replace('geometry', beam_waist=waist).replace('drive', optical_power=power)
        sweep = contrast_vs_voltage(
            variant, U_sweep, rf_frequency=rf_frequency, engine_name=engine_name, **engine_kwargs
        )
        try:
            plateau = plateau_contrast(sweep)
        except NoKneeError:
            logger.warning(f"No plateau for a {waist * 1e6:g} um waist at {power * 1e3:g} mW")
            plateau = None
        runs.append(BeamSizeRun(waist, power, sweep, sweep.knee_off, plateau))
    return runs


@dataclass(frozen=True, eq=False)
class DepletionStudy:
    voltages: tuple
    metrics: tuple
    profiles: tuple  # (position, profile) per voltage
    surface_fields: tuple  # (x, |E|) per voltage
    filter: str
    sqrt_fit: tuple = None  # (slope, intercept, r2) over stage-3 points
    solutions: tuple = ()


def depletion_study(model, voltages, filter='NV_minus', engine_name=None, **engine_kwargs):
    """Depletion metrics, PL-change profiles and surface fields for a list of biases.

    Profiles are taken against the unbiased solution. The lateral extension of the stage-3 points
    is fitted against the square root of the bias when at least three such points exist.
    """
    voltages = [float(U) for U in voltages]
    reference = model.solve(0.0)
    solutions = run_sweep(model.solve, voltages, engine_name=engine_name, desc='Depletion', **engine_kwargs)
    factor = model.config.solver.lateral_stage_factor
    ratio = model.config.photophysics.nv_zero_ratio
    metrics = tuple(extract_metrics(s, model.geometry, factor) for s in solutions)
    profiles = tuple(delta_pl_profile(s, reference, filter=filter, nv_zero_ratio=ratio) for s in solutions)
    surface = tuple(surface_field_profile(s) for s in solutions)

    lateral = [(U, m.L_lateral) for U, m in zip(voltages, metrics) if m.stage == 3]
    fit = None
    if len(lateral) >= MIN_SQRT_FIT_POINTS:
        fit = sqrt_law_fit(*zip(*lateral))
        logger.info(f"Lateral extension vs sqrt(U) over {len(lateral)} stage-3 points: R^2 = {fit[2]:.5f}")
    return DepletionStudy(
        voltages=tuple(voltages),
        metrics=metrics,
        profiles=profiles,
        surface_fields=surface,
        filter=filter,
        sqrt_fit=fit,
        solutions=tuple(solutions),
    )
