"""NV charge cycling and spin polarization under continuous pumping.

The NV centre is reduced to seven levels::

    G0, G1   NV- ground state, m_S = 0 and m_S = +-1
    E0, E1   NV- excited state, m_S = 0 and m_S = +-1
    M        NV- metastable singlet
    N0g, N0e NV0 ground and excited state

Ionization leaves the excited NV- state with one more photon and back-conversion
leaves the NV0 excited state with another, so each full charge cycle frees one
electron-hole pair.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .constants import NV_GYROMAGNETIC_RATIO
from .exceptions import DegenerateInputError, InvariantViolation
from .models import SpectralLine

logger = logging.getLogger('nvschottky.photophysics')

LEVELS = ('G0', 'G1', 'E0', 'E1', 'M', 'N0g', 'N0e')
G0, G1, E0, E1, M, N0G, N0E = range(len(LEVELS))

# NV axis projections on the static field for the four crystallographic families.
FAMILY_PROJECTIONS = (1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
LINE_AMPLITUDE = 1.0 / 8.0
# Metastable decay must not favour a single m_S = +-1 sublevel over m_S = 0.
MIN_MS0_BRANCHING = 1.0 / 3.0

STEADY_STATE_TOL = 1e-10


@dataclass(frozen=True)
class NVLevelRates:
    """Transition rates (1/s) for one NV at one intensity.

    ``k_rabi`` is the RF mixing rate actually applied between m_S = 0 and the driven m_S = +-1
    sublevel, i.e. already weighted by the detuning through :func:`resonance_factor`.

    With ``k_isc1 > k_isc0`` and ``ms0_branching >= 1/3`` any mixing lowers both the pair rate and
    the NV- emission at every intensity.
    """

    k_pump: float
    k_rad: float
    k_isc0: float
    k_isc1: float
    k_ms: float
    k_ion: float
    k_back: float
    k_rabi: float
    linewidth: float
    k_rad0: float
    ms0_branching: float = 0.5

    def __post_init__(self):
        for name in ('k_pump', 'k_rad', 'k_isc0', 'k_isc1', 'k_ms', 'k_ion', 'k_back', 'k_rabi', 'k_rad0'):
            value = getattr(self, name)
            if not value >= 0:
                raise InvariantViolation(f'rates.{name}', '>= 0', value)
        if not MIN_MS0_BRANCHING <= self.ms0_branching <= 1:
            raise InvariantViolation('rates.ms0_branching', 'in [1/3, 1]', self.ms0_branching)


@dataclass(frozen=True)
class SpinChargeState:
    populations: tuple
    pair_rate: float
    pl_nv_minus: float
    pl_nv_zero: float
    backconversion_flux: float
    residual: float

    def population(self, level):
        return self.populations[LEVELS.index(level)]


@dataclass(frozen=True)
class ResonanceSpectrum:
    zfs: float
    lines: tuple  # of models.SpectralLine


def beam_intensity(power, waist):
    """Mean intensity (W/m^2) of a beam of ``power`` (W) and 1/e^2 radius ``waist`` (m)."""
    if waist <= 0:
        raise InvariantViolation('beam_waist', '> 0', waist)
    return power / (math.pi * waist**2)


def rabi_rate(rf_power, rabi_rate_ref):
    """Peak mixing rate at ``rf_power`` (dBm); amplitude scaling from the 0 dBm reference."""
    return rabi_rate_ref * 10 ** (rf_power / 20)


def level_rates(params, intensity, k_rabi=0.0):
    """Build :class:`NVLevelRates` from the configured :class:`~nvschottky.config.RateParams`."""
    return NVLevelRates(
        k_pump=params.pump_coefficient * intensity,
        k_rad=params.k_rad,
        k_isc0=params.k_isc0,
        k_isc1=params.k_isc1,
        k_ms=params.k_ms,
        k_ion=params.ionization_coefficient * intensity,
        k_back=params.backconversion_coefficient * intensity,
        k_rabi=k_rabi,
        linewidth=params.linewidth,
        k_rad0=params.k_rad0,
        ms0_branching=params.ms0_branching,
    )


def rate_matrix(rates):
    """Generator of the master equation, ``dP/dt = rate_matrix(rates) @ P``."""
    matrix = np.zeros((len(LEVELS), len(LEVELS)))

    def add(src, dst, rate):
        matrix[dst, src] += rate
        matrix[src, src] -= rate

    add(G0, E0, rates.k_pump)
    add(G1, E1, rates.k_pump)
    add(E0, G0, rates.k_rad)
    add(E1, G1, rates.k_rad)
    add(E0, M, rates.k_isc0)
    add(E1, M, rates.k_isc1)
    add(M, G0, rates.k_ms * rates.ms0_branching)
    add(M, G1, rates.k_ms * (1 - rates.ms0_branching))
    add(E0, N0G, rates.k_ion)
    add(E1, N0G, rates.k_ion)
    add(N0G, N0E, rates.k_pump)
    add(N0E, N0G, rates.k_rad0)
    add(N0E, G0, rates.k_back / 3)
    add(N0E, G1, 2 * rates.k_back / 3)
    # G1 lumps both m_S = +-1 sublevels and the drive couples m_S = 0 to one of them.
    add(G0, G1, rates.k_rabi)
    add(G1, G0, rates.k_rabi / 2)
    return matrix


def steady_state(rates):
    """Solve the seven-level master equation for its stationary populations.

    Parameters
    ----------
    rates : NVLevelRates
        Intensity-scaled rates, including the applied RF mixing rate

    Returns
    -------
    SpinChargeState

    Raises
    ------
    DegenerateInputError
        If the rates do not single out one stationary state (e.g. no pumping at all)
    """
    matrix = rate_matrix(rates)
    norm = np.abs(matrix).max()
    if norm == 0:
        raise DegenerateInputError("All transition rates are zero; the steady state is undefined")
    scaled = matrix / norm
    if np.linalg.matrix_rank(scaled) != len(LEVELS) - 1:
        raise DegenerateInputError("The rate matrix has more than one stationary state")

    system = scaled.copy()
    system[-1, :] = 1.0
    rhs = np.zeros(len(LEVELS))
    rhs[-1] = 1.0
    try:
        populations = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as e:
        raise DegenerateInputError(f"Rate matrix is singular: {e}")

    populations = np.clip(populations, 0.0, None)
    populations /= populations.sum()
    residual = float(np.abs(scaled @ populations).max())
    if residual > STEADY_STATE_TOL:
        raise DegenerateInputError(f"Steady state residual {residual:.3e} exceeds {STEADY_STATE_TOL:g}")

    excited = populations[E0] + populations[E1]
    return SpinChargeState(
        populations=tuple(float(v) for v in populations),
        pair_rate=float(rates.k_ion * excited),
        pl_nv_minus=float(rates.k_rad * excited),
        pl_nv_zero=float(rates.k_rad0 * populations[N0E]),
        backconversion_flux=float(rates.k_back * populations[N0E]),
        residual=residual,
    )


def build_spectrum(B_axial, params):
    """The eight NV- ground-state lines of the four families in a field ``B_axial`` (T)."""
    lines = []
    for projection in FAMILY_PROJECTIONS:
        shift = NV_GYROMAGNETIC_RATIO * B_axial * projection
        lines.append(SpectralLine(params.zfs - shift, LINE_AMPLITUDE, params.linewidth))
        lines.append(SpectralLine(params.zfs + shift, LINE_AMPLITUDE, params.linewidth))
    return ResonanceSpectrum(zfs=params.zfs, lines=tuple(lines))


def lorentzian(frequency, center, fwhm):
    return 1.0 / (1.0 + ((frequency - center) / (fwhm / 2)) ** 2)


def line_shape(spectrum, rf_frequency):
    """Sum of the amplitude-weighted lines at ``rf_frequency``; 1 at the zero-field peak."""
    return sum(line.amplitude * lorentzian(rf_frequency, line.center, line.fwhm) for line in spectrum.lines)


def resonance_factor(spectrum, rf_frequency, rf_power, rabi_rate_ref, enabled=True):
    """Ground-state mixing rate (1/s) driven at ``rf_frequency`` (Hz) with ``rf_power`` (dBm)."""
    if not enabled:
        return 0.0
    return rabi_rate(rf_power, rabi_rate_ref) * line_shape(spectrum, rf_frequency)


def region_fields(geometry, drive):
    """Static field (T) at the centres of electrodes A and B."""
    mid = geometry.midpoint
    return {
        electrode: drive.B_axial + drive.B_gradient * (geometry.electrode_center(electrode) - mid)
        for electrode in ('A', 'B')
    }


def gradient_for_lines(f_A, f_B, geometry, zfs):
    """Field and gradient placing the aligned m_S=0 -> -1 line at ``f_A`` over A and ``f_B`` over B.

    Returns
    -------
    tuple
        ``(B_axial, B_gradient)`` in T and T/m
    """
    B_A = (zfs - f_A) / NV_GYROMAGNETIC_RATIO
    B_B = (zfs - f_B) / NV_GYROMAGNETIC_RATIO
    distance = geometry.electrode_center('B') - geometry.electrode_center('A')
    return 0.5 * (B_A + B_B), (B_B - B_A) / distance


def region_states(params, geometry, drive, intensity=None):
    """Steady state per electrode region, keyed ``'A'``/``'B'``, for the drive's RF settings."""
    if intensity is None:
        intensity = beam_intensity(drive.optical_power, geometry.beam_waist)
    states = {}
    for region, field in region_fields(geometry, drive).items():
        spectrum = build_spectrum(field, params)
        mixing = resonance_factor(
            spectrum, drive.rf_frequency, drive.rf_power, params.rabi_rate_ref, enabled=drive.rf_enabled
        )
        states[region] = steady_state(level_rates(params, intensity, mixing))
    return states


def column_regions(grid, geometry):
    """``'A'`` for columns left of the device midpoint, ``'B'`` for the rest."""
    return np.where(grid.x < geometry.midpoint, 'A', 'B')


def pair_rate_map(grid, geometry, drive, params):
    """Pair generation per NV (1/s) for every grid column; zero without illumination."""
    if drive.optical_power == 0:
        return np.zeros(grid.nx + 1)
    states = region_states(params, geometry, drive)
    regions = column_regions(grid, geometry)
    return np.where(regions == 'A', states['A'].pair_rate, states['B'].pair_rate)


def generation_field(geometry, drive, params, nv_density, scale=1.0, grid=None):
    """Volumetric pair generation G(x, z) (m^-3 s^-1) on the device grid.

    The beam is treated as a top-hat slab of depth ``2 * beam_waist`` running along the surface; G is
    ``scale * nv_density * pair_rate`` inside it and zero below.

    Parameters
    ----------
    geometry : DeviceGeometry
    drive : DriveConditions
    params : RateParams
    nv_density : float
        NV density, m^-3
    scale : float
        Calibration constant linking the per-NV pair rate to the carrier balance
    grid : Grid2D, optional
        Defaults to the grid built from ``geometry``
    """
    from .electrostatics import Grid2D

    if geometry.slab_depth > geometry.domain_depth:
        raise InvariantViolation(
            'geometry.slab_depth', f'<= box_depth ({geometry.domain_depth!r} m)', geometry.slab_depth
        )
    grid = grid or Grid2D.from_geometry(geometry)
    columns = scale * nv_density * pair_rate_map(grid, geometry, drive, params)
    inside = grid.z <= geometry.slab_depth * (1 + 1e-9)
    return np.where(inside[:, None], columns[None, :], 0.0)
