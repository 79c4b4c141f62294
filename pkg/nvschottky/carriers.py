"""Steady-state free carriers in illuminated, nitrogen-overcompensated diamond.

The balance solved here is a reconstruction::

    G = c_e * n * N_D+                              electron capture on ionized nitrogen
    G = c_h * p * (N_trap + N_B - N_D+)             hole capture on neutralized centres
    p + N_D+ = n + N_B                              neutrality, boron fully ionized

With ``u = N_B - N_D+`` (equal to ``p - n``) the three collapse to one equation on ``(0, N_B)``::

    f(u) = c_h * (u + G / (c_e (N_B - u))) * (N_trap + u) - G

which is strictly increasing, negative at ``u = 0`` whenever ``c_h N_trap < c_e N_B`` and unbounded
at ``u = N_B``, so it has exactly one root.
"""
import logging
import math
import warnings

from scipy import optimize

from .exceptions import ClampedIterateWarning, ConvergenceError, InvariantViolation, UnreachableTargetError
from .models import CarrierSolveResult, CarrierState
from .photophysics import beam_intensity, level_rates, steady_state

logger = logging.getLogger('nvschottky.carriers')

DEFAULT_RTOL = 1e-13
DEFAULT_MAX_ITER = 100


def _balance(u, G, mat):
    n = G / (mat.c_e * (mat.N_boron - u))
    return mat.c_h * (u + n) * (mat.hole_trap_density + u) - G


def _balance_slope(u, G, mat):
    D = mat.N_boron - u
    n = G / (mat.c_e * D)
    dn = G / (mat.c_e * D * D)
    return mat.c_h * ((1 + dn) * (mat.hole_trap_density + u) + (u + n))


def _state(u, G, mat):
    p = G / (mat.c_h * (mat.hole_trap_density + u))
    n = G / (mat.c_e * (mat.N_boron - u))
    return CarrierState(p=p, n=n, N_D_plus=mat.N_boron - u, N_A_minus=mat.N_boron)


def _dark_state(mat):
    return CarrierState(p=0.0, n=0.0, N_D_plus=mat.N_boron, N_A_minus=mat.N_boron)


def _initial_guess(G, mat):
    # n << p: G = c_h p (N_trap + p)
    g = G / mat.c_h
    u = 2 * g / (mat.hole_trap_density + math.sqrt(mat.hole_trap_density**2 + 4 * g))
    return min(u, 0.5 * mat.N_boron)


def solve_carriers(G, mat, rtol=DEFAULT_RTOL, max_iter=DEFAULT_MAX_ITER):
    """Safeguarded Newton solve of the carrier balance at generation rate ``G`` (m^-3 s^-1).

    Returns
    -------
    CarrierSolveResult
        The state, the iteration count and whether any Newton iterate had to be pulled back
        into the physical bracket.

    Raises
    ------
    ConvergenceError
        If the iterate has not settled after ``max_iter`` steps
    """
    if G < 0 or not math.isfinite(G):
        raise InvariantViolation('G', '>= 0 and finite', G)
    if G == 0:
        return CarrierSolveResult(_dark_state(mat), 0, False)

    lo, hi = 0.0, mat.N_boron
    u = _initial_guess(G, mat)
    clamped = False
    for iteration in range(1, max_iter + 1):
        f = _balance(u, G, mat)
        if f < 0:
            lo = u
        else:
            hi = u
        step = f / _balance_slope(u, G, mat)
        candidate = u - step
        if not lo < candidate < hi:
            logger.debug(f"Carrier iterate {candidate:.6e} left ({lo:.6e}, {hi:.6e}); bisecting")
            candidate = 0.5 * (lo + hi)
            clamped = True
        if abs(candidate - u) <= rtol * candidate:
            u = candidate
            break
        u = candidate
    else:
        raise ConvergenceError(
            "Carrier balance did not converge", residual=abs(_balance(u, G, mat)) / G, iterations=max_iter
        )
    if clamped:
        logger.warning(f"Carrier solve at G = {G:.4e} m^-3 s^-1 clamped an iterate to its bracket")
        warnings.warn(f"Clamped carrier iterate at G = {G:.4e}", ClampedIterateWarning)
    return CarrierSolveResult(_state(u, G, mat), iteration, clamped)


def steady_carriers(G, mat, settings=None):
    """Free carrier densities at generation rate ``G``; see :func:`solve_carriers`."""
    if settings is None:
        return solve_carriers(G, mat).state
    return solve_carriers(G, mat, rtol=settings.rtol, max_iter=settings.max_iter).state


def steady_carriers_bisect(G, mat):
    """Independent bisection solve of the same balance, used to cross-check the Newton path."""
    if G == 0:
        return _dark_state(mat)
    lo = 0.0
    hi = mat.N_boron * (1 - 1e-15)
    while _balance(hi, G, mat) <= 0:
        hi = mat.N_boron - 0.5 * (mat.N_boron - hi)
    u = optimize.bisect(_balance, lo, hi, args=(G, mat), xtol=1e-300, maxiter=2000)
    return _state(u, G, mat)


def neutrality_residual(state):
    """|p + N_D+ - n - N_A-| relative to the largest term."""
    scale = max(state.p, state.n, state.N_D_plus, state.N_A_minus)
    return abs(state.p + state.N_D_plus - state.n - state.N_A_minus) / scale


def generation_for_density(p, mat):
    """Generation rate (m^-3 s^-1) at which the balance settles on hole density ``p`` (m^-3).

    Raises
    ------
    UnreachableTargetError
        If ``p`` is not below ``N_boron``; a depletion charge above the acceptor density is unphysical
    """
    if p < 0:
        raise InvariantViolation('target_p', '>= 0', p)
    if p == 0:
        return 0.0
    if p >= mat.N_boron:
        raise UnreachableTargetError(
            f"Hole density {p:.4e} m^-3 is beyond the ceiling set by N_boron = {mat.N_boron:.4e} m^-3"
        )
    # c_e n^2 + (c_e (N_B - p) + c_h p) n - c_h p (N_trap + p) = 0
    a = mat.c_e
    b = mat.c_e * (mat.N_boron - p) + mat.c_h * p
    c = -mat.c_h * p * (mat.hole_trap_density + p)
    root = math.sqrt(b * b - 4 * a * c)
    n = -2 * c / (b + root) if b > 0 else (root - b) / (2 * a)
    D = mat.N_boron + n - p
    if D <= 0:
        raise UnreachableTargetError(f"Hole density {p:.4e} m^-3 would leave no ionized donors")
    return mat.c_e * n * D


def pair_rate_at(power, geometry, params):
    """Per-NV pair rate (1/s) with RF off at ``power`` (W) over the configured beam."""
    if power == 0:
        return 0.0
    intensity = beam_intensity(power, geometry.beam_waist)
    return steady_state(level_rates(params, intensity)).pair_rate


def calibrate_generation(target_p, power, mat, params, geometry):
    """Constant linking the per-NV pair rate to the carrier balance.

    The returned ``scale`` makes ``steady_carriers(scale * nv_density * pair_rate(power), mat)``
    reproduce ``target_p``.

    Parameters
    ----------
    target_p : float
        Hole density to reproduce, m^-3
    power : float
        Optical power at which ``target_p`` holds, W
    mat : MaterialParams
    params : RateParams
    geometry : DeviceGeometry
    """
    if target_p < 0:
        raise InvariantViolation('calibration.target_p', '>= 0', target_p)
    if target_p == 0:
        return 0.0
    G = generation_for_density(target_p, mat)
    rate = pair_rate_at(power, geometry, params)
    if rate <= 0:
        raise UnreachableTargetError(f"No pair generation at {power * 1e3:g} mW; cannot reach p = {target_p:.4e}")
    scale = G / (mat.nv_density * rate)
    logger.info(f"Calibrated generation scale {scale:.6e} for p0 = {target_p:.4e} m^-3 at {power * 1e3:g} mW")
    return scale
