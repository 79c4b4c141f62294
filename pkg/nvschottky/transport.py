"""Thermionic emission through the reverse-biased contact.

The two graphitic contacts act as back-to-back Schottky diodes. For a p-type layer the contact held
at the positive bias is reverse biased and limits the current; the forward contact and the bulk are
taken to drop no voltage unless a series resistance is configured.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.interpolate import UnivariateSpline

from .constants import CONSTANTS, thermal_voltage
from .engines import run_sweep
from .exceptions import CalibrationError, InvariantViolation, NoKneeError, TransportError
from .models import BarrierFit, IVPoint

logger = logging.getLogger('nvschottky.transport')

# Smoothing of the knee spline per point, on axes normalized to [0, 1].
KNEE_SPLINE_STIFFNESS = 1e-6
# Curvature maxima this many sweep steps from either end do not count as a knee.
KNEE_HALF_WINDOW = 2
KNEE_MIN_POINTS = 7
KNEE_OVERSAMPLING = 20

MIN_CALIBRATION_POINTS = 10
PHI1_BOUNDS = (0.0, 5.0)
ETA_BOUNDS = (1.0, 10.0)


@dataclass(frozen=True)
class DiodePair:
    phi1: float
    eta: float
    A_eff: float
    reverse_contact: str = 'A'
    series_resistance: float = 0.0

    @classmethod
    def from_config(cls, mat, transport, positive_electrode):
        return cls(
            phi1=mat.phi1,
            eta=mat.eta,
            A_eff=transport.A_eff,
            reverse_contact=positive_electrode,
            series_resistance=transport.series_resistance,
        )

    @property
    def full_bias_on_reverse_contact(self):
        """Whether U1 = U is assumed, i.e. no series drop."""
        return self.series_resistance == 0


@dataclass(frozen=True)
class IVCurve:
    points: tuple
    rf_enabled: bool
    drive: object = None
    inflection_voltage: float = None

    def __post_init__(self):
        voltages = [p.U for p in self.points]
        if any(b <= a for a, b in zip(voltages, voltages[1:])):
            raise InvariantViolation('IVCurve.U', 'strictly increasing', voltages)

    @property
    def voltages(self):
        return np.array([p.U for p in self.points])

    @property
    def currents(self):
        return np.array([p.I for p in self.points])


def image_force_lowering(E, mat):
    """Barrier lowering (V) at field ``E`` (V/m)."""
    if E < 0:
        raise InvariantViolation('E', '>= 0', E)
    return math.sqrt(CONSTANTS.q * E / (4 * math.pi * CONSTANTS.permittivity(mat.eps_s)))


def _log_saturation_current(E, phi1, A_eff, mat):
    Vt = thermal_voltage(mat.T)
    return math.log(A_eff * mat.A_star * mat.T**2) - (phi1 - image_force_lowering(E, mat)) / Vt


def thermionic_current(U1, E, pair, mat):
    """Current (A) over the reverse contact with ``U1`` volts across it and surface field ``E``.

    Raises
    ------
    TransportError
        If the parameters drive the current out of floating point range
    """
    if U1 < 0:
        raise InvariantViolation('U1', '>= 0', U1)
    if U1 == 0:
        return 0.0
    log_current = _log_saturation_current(E, pair.phi1, pair.A_eff, mat)
    factor = -math.expm1(-U1 / (pair.eta * thermal_voltage(mat.T)))
    if not math.isfinite(log_current) or log_current > 700:
        raise TransportError(f"Thermionic current out of range (ln I = {log_current:.4g})")
    current = math.exp(log_current) * factor
    if not math.isfinite(current):
        raise TransportError(f"Non-finite thermionic current at U1 = {U1:g} V, E = {E:.4g} V/m")
    return current


def effective_field(E_center, E_edge, edge_weight):
    """Field entering the barrier lowering; ``edge_weight`` mixes in the electrode edge field."""
    return (1.0 - edge_weight) * E_center + edge_weight * E_edge


def junction_voltage(U, E, pair, mat):
    """Voltage across the reverse contact, ``U1 = U - I R`` with the configured series resistance."""
    if U <= 0 or pair.series_resistance == 0:
        return U

    def balance(U1):
        return U1 + pair.series_resistance * thermionic_current(U1, E, pair, mat) - U

    return optimize.brentq(balance, 0.0, U, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def device_current(U, E_center, E_edge, pair, mat, edge_weight=0.0):
    """Current through the device at bias ``U``; returns ``(I, U1)``."""
    E = effective_field(E_center, E_edge, edge_weight)
    U1 = junction_voltage(U, E, pair, mat)
    return thermionic_current(U1, E, pair, mat), U1


def device_iv(U_sweep, model, rf_enabled=False, rf_frequency=None, engine_name=None, **engine_kwargs):
    """I-U characteristic of ``model`` over ``U_sweep``.

    Parameters
    ----------
    U_sweep : list of float
        Ascending, non-negative biases, V
    model : DeviceModel
        Evaluates one bias point; see :class:`nvschottky.experiments.DeviceModel`
    rf_enabled : bool
    rf_frequency : float, optional
        Defaults to the model's configured drive frequency
    engine_name : str, optional
        Sweep engine to distribute bias points with

    Returns
    -------
    IVCurve
    """
    U_sweep = [float(u) for u in U_sweep]
    if any(u < 0 for u in U_sweep):
        raise InvariantViolation('U_sweep', 'all >= 0', U_sweep)
    if any(b <= a for a, b in zip(U_sweep, U_sweep[1:])):
        raise InvariantViolation('U_sweep', 'strictly ascending', U_sweep)

    def evaluate(U):
        return model.evaluate(U, rf_enabled=rf_enabled, rf_frequency=rf_frequency)

    points = run_sweep(evaluate, U_sweep, engine_name=engine_name, desc='I-U', **engine_kwargs)
    knee = None
    if len(points) >= KNEE_MIN_POINTS:
        try:
            knee = find_inflection(points)
        except NoKneeError as e:
            logger.info(f"No knee on the I-U curve: {e}")
    drive = model.drive_for(rf_enabled, rf_frequency)
    return IVCurve(points=tuple(points), rf_enabled=rf_enabled, drive=drive, inflection_voltage=knee)


def _curve_arrays(curve):
    if isinstance(curve, IVCurve):
        return curve.voltages, curve.currents
    if curve and isinstance(curve[0], IVPoint):
        return np.array([p.U for p in curve]), np.array([p.I for p in curve])
    U, I = curve
    return np.asarray(U, dtype=float), np.asarray(I, dtype=float)


def find_inflection(curve):
    """Voltage of the knee of an I-U curve.

    A cubic smoothing spline is fitted on axes scaled to [0, 1]; the knee is the concave-down point of
    largest geometric curvature.

    Parameters
    ----------
    curve : IVCurve, list of IVPoint or (U, I) pair

    Raises
    ------
    NoKneeError
        If the curve has no concave-down part farther than ``KNEE_HALF_WINDOW`` steps from either
        end
    """
    U, I = _curve_arrays(curve)
    n = len(U)
    if n < KNEE_MIN_POINTS:
        raise NoKneeError(f"Need at least {KNEE_MIN_POINTS} points to locate a knee, got {n}")
    span = U[-1] - U[0]
    top = np.abs(I).max()
    if span <= 0 or top == 0:
        raise NoKneeError("Flat or empty I-U curve")

    u = (U - U[0]) / span
    y = I / top
    spline = UnivariateSpline(u, y, k=3, s=KNEE_SPLINE_STIFFNESS * n)
    fine = np.linspace(0.0, 1.0, KNEE_OVERSAMPLING * (n - 1) + 1)
    slope = spline.derivative(1)(fine)
    bend = spline.derivative(2)(fine)
    curvature = np.where(bend < 0, -bend / (1 + slope**2) ** 1.5, 0.0)
    if not np.any(curvature > 0):
        raise NoKneeError("The I-U curve is nowhere concave")

    step = 1.0 / (n - 1)
    inner = (fine >= KNEE_HALF_WINDOW * step) & (fine <= 1 - KNEE_HALF_WINDOW * step)
    curvature = np.where(inner, curvature, 0.0)
    if not np.any(curvature > 0):
        raise NoKneeError(f"The I-U curve only bends within {KNEE_HALF_WINDOW} steps of the sweep ends")
    best = int(np.argmax(curvature))
    return float(U[0] + fine[best] * span)


def calibrate_barrier(data, seed, mat):
    """Fit barrier height and ideality to measured I-U data.

    ``ln I`` is fitted with a bounded trust-region least-squares solve. ``A_eff`` enters ``ln I`` only
    through the same additive constant as ``phi1``, so it is held at the seed value and reported with
    zero variance.

    Parameters
    ----------
    data : pandas.DataFrame or dict
        Columns ``U`` (V) and ``I`` (A), optionally ``E`` (V/m) for the barrier lowering
    seed : DiodePair
        Starting point for ``phi1`` and ``eta``; supplies ``A_eff``
    mat : MaterialParams

    Returns
    -------
    BarrierFit

    Raises
    ------
    CalibrationError
        With fewer than 10 usable points or when the fit does not converge
    """
    U = np.asarray(data['U'], dtype=float)
    I = np.asarray(data['I'], dtype=float)
    E = np.asarray(data['E'], dtype=float) if 'E' in data else np.zeros_like(U)
    usable = (U > 0) & (I > 0) & np.isfinite(I)
    if usable.sum() < len(U):
        logger.debug(f"Dropping {len(U) - usable.sum()} points with U <= 0 or I <= 0")
    U, I, E = U[usable], I[usable], E[usable]
    if len(U) < MIN_CALIBRATION_POINTS:
        raise CalibrationError(f"Need at least {MIN_CALIBRATION_POINTS} points with U > 0 and I > 0, got {len(U)}")

    Vt = thermal_voltage(mat.T)
    lowering = np.array([image_force_lowering(e, mat) for e in E])
    log_prefactor = math.log(seed.A_eff * mat.A_star * mat.T**2)
    log_measured = np.log(I)

    def residuals(params):
        phi1, eta = params
        return log_prefactor - (phi1 - lowering) / Vt + np.log(-np.expm1(-U / (eta * Vt))) - log_measured

    x0 = [min(max(seed.phi1, 1e-3), PHI1_BOUNDS[1] - 1e-3), min(max(seed.eta, ETA_BOUNDS[0]), ETA_BOUNDS[1])]
    result = optimize.least_squares(
        residuals,
        x0,
        bounds=([PHI1_BOUNDS[0], ETA_BOUNDS[0]], [PHI1_BOUNDS[1], ETA_BOUNDS[1]]),
        method='trf',
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=2000,
    )
    if not result.success:
        raise CalibrationError(f"Barrier fit did not converge: {result.message}")

    dof = max(len(U) - 2, 1)
    s2 = 2 * result.cost / dof
    jtj = result.jac.T @ result.jac
    try:
        cov2 = s2 * np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov2 = s2 * np.linalg.pinv(jtj)
    covariance = np.zeros((3, 3))
    covariance[:2, :2] = cov2
    phi1, eta = (float(v) for v in result.x)
    logger.info(f"Fitted phi1 = {phi1:.6f} V, eta = {eta:.6f} over {len(U)} points")
    return BarrierFit(
        phi1=phi1, eta=eta, A_eff=seed.A_eff, covariance=covariance, residuals=result.fun, nfev=result.nfev
    )
