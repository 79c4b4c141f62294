"""Cross-section electrostatics of the biased device.

The potential is solved on a node-centred finite-volume grid over (x, z), x running across both
electrodes and z into the diamond. Holes in the illuminated slab follow a Boltzmann factor
relative to the quasi-neutral slab, so depleting them exposes a fixed charge ``-q p0``; everything
outside the slab is charge-free dielectric.

In units of the thermal voltage the discrete problem is the stationary point of the convex energy::

    E(psi) = -1/2 psi^T L psi - b^T psi + sum_i c_i (psi_i + exp(-psi_i) - 1)

which is what the damped Newton iteration minimizes.
"""
import functools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg, spsolve
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from .constants import CONSTANTS, thermal_voltage
from .exceptions import ConvergenceError, GridResolutionError, InvariantViolation
from .models import DepletionMetrics
from .utils import r_squared

logger = logging.getLogger('nvschottky.electrostatics')

MIN_SLAB_CELLS = 8
EXP_CLIP = 200.0
ARMIJO = 1e-4
ENERGY_SLACK = 1e-12
MAX_BACKTRACKS = 40
FILTERS = ('NV_minus', 'NV_zero')


def depletion_width_1d(U, p0, mat):
    """Abrupt-junction depletion width (m) at reverse bias ``U`` (V) over hole density ``p0`` (m^-3)."""
    if U < 0:
        raise InvariantViolation('U', '>= 0', U)
    if p0 <= 0:
        raise InvariantViolation('p0', '> 0', p0)
    return math.sqrt(2 * CONSTANTS.permittivity(mat.eps_s) * U / (CONSTANTS.q * p0))


def saturation_field(p0, depth, mat):
    """Surface field (V/m) over a fully depleted column of depth ``depth``."""
    return CONSTANTS.q * p0 * depth / CONSTANTS.permittivity(mat.eps_s)


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid of ``(nz + 1) x (nx + 1)`` nodes; arrays are indexed ``[z, x]``."""

    nx: int
    nz: int
    h: float
    slab_depth: float
    electrode_a: tuple
    electrode_b: tuple

    @classmethod
    def from_geometry(cls, geometry):
        h = geometry.grid_h

        def node(x):
            return int(round(x / h))

        a0, a1 = geometry.electrode_span('A')
        b0, b1 = geometry.electrode_span('B')
        return cls(
            nx=node(geometry.width),
            nz=node(geometry.domain_depth),
            h=h,
            slab_depth=geometry.slab_depth,
            electrode_a=(node(a0), node(a1)),
            electrode_b=(node(b0), node(b1)),
        )

    @property
    def shape(self):
        return self.nz + 1, self.nx + 1

    @property
    def x(self):
        return np.arange(self.nx + 1) * self.h

    @property
    def z(self):
        return np.arange(self.nz + 1) * self.h

    @property
    def slab_row(self):
        """Index of the node row on the slab bottom."""
        return int(round(self.slab_depth / self.h))

    def electrode_nodes(self, electrode):
        """First and last surface node index of ``electrode``."""
        return self.electrode_a if electrode == 'A' else self.electrode_b

    def x_weights(self):
        w = np.ones(self.nx + 1)
        w[[0, -1]] = 0.5
        return w

    def z_weights(self):
        w = np.ones(self.nz + 1)
        w[[0, -1]] = 0.5
        return w

    def slab_weights(self):
        """Fraction of each row's control height lying inside the slab."""
        w = np.zeros(self.nz + 1)
        w[: self.slab_row] = 1.0
        w[0] = 0.5
        w[self.slab_row] = 0.5
        return w

    def dirichlet_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for start, end in (self.electrode_a, self.electrode_b):
            mask[0, start : end + 1] = True
        return mask


@functools.lru_cache(maxsize=8)
def laplacian(grid):
    """Finite-volume operator with ``(L psi)_i = sum_j w_ij (psi_j - psi_i)`` over all nodes."""
    nzp, nxp = grid.shape
    index = np.arange(nzp * nxp).reshape(nzp, nxp)
    w_h = np.repeat(grid.z_weights()[:, None], nxp - 1, axis=1)
    w_v = np.repeat(grid.x_weights()[None, :], nzp - 1, axis=0)
    first = np.concatenate([index[:, :-1].ravel(), index[:-1, :].ravel()])
    second = np.concatenate([index[:, 1:].ravel(), index[1:, :].ravel()])
    weights = np.concatenate([w_h.ravel(), w_v.ravel()])
    size = nzp * nxp
    off = sparse.coo_matrix(
        (np.concatenate([weights, weights]), (np.concatenate([first, second]), np.concatenate([second, first]))),
        shape=(size, size),
    ).tocsr()
    return (off - sparse.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()


def _exp_neg(psi):
    return np.exp(np.minimum(-psi, EXP_CLIP))


@dataclass(eq=False)
class _PoissonSystem:
    L_ff: sparse.csr_matrix
    L_fd: sparse.csr_matrix
    free: np.ndarray
    dirichlet: np.ndarray
    positive: np.ndarray  # over dirichlet nodes
    charge: np.ndarray  # c_i over free nodes
    tol: float
    scale: float

    @classmethod
    def build(cls, grid, p_map, polarity, mat, newton_tol):
        L = laplacian(grid)
        mask = grid.dirichlet_mask().ravel()
        free = np.flatnonzero(~mask)
        dirichlet = np.flatnonzero(mask)
        start, end = grid.electrode_nodes(polarity)
        positive = (dirichlet >= start) & (dirichlet <= end)

        kappa = CONSTANTS.q * p_map / (CONSTANTS.permittivity(mat.eps_s) * thermal_voltage(mat.T))
        volume = grid.h**2 * grid.slab_weights()[:, None] * grid.x_weights()[None, :]
        charge = (kappa * volume).ravel()[free]

        scale = float(kappa.max() * grid.h**2)
        return cls(
            L_ff=L[free][:, free].tocsr(),
            L_fd=L[free][:, dirichlet].tocsr(),
            free=free,
            dirichlet=dirichlet,
            positive=positive,
            charge=charge,
            tol=newton_tol,
            scale=scale,
        )

    def boundary(self, psi_d):
        return self.L_fd @ np.where(self.positive, psi_d, 0.0)

    def residual(self, psi, b):
        return self.L_ff @ psi + b - self.charge * (1.0 - _exp_neg(psi))

    def energy(self, psi, b):
        psi_c = np.maximum(psi, -EXP_CLIP)
        return float(
            -0.5 * psi @ (self.L_ff @ psi) - b @ psi + np.sum(self.charge * (psi_c + _exp_neg(psi) - 1.0))
        )

    def hessian(self, psi):
        return (-self.L_ff + sparse.diags(self.charge * _exp_neg(psi))).tocsr()

    def tolerance(self, psi_d):
        scale = self.scale if self.scale > 0 else max(abs(psi_d), 1.0)
        return self.tol * scale, scale


def _linear_solve(matrix, rhs, rtol):
    preconditioner = sparse.diags(1.0 / matrix.diagonal())
    delta, info = cg(matrix, rhs, rtol=rtol, M=preconditioner)
    if info != 0:
        logger.warning(f"Conjugate gradients stopped with info={info}; falling back to a direct solve")
        delta = spsolve(matrix.tocsc(), rhs)
    return delta


def _newton(system, psi, psi_d, settings, bias):
    b = system.boundary(psi_d)
    tol, scale = system.tolerance(psi_d)
    energy = system.energy(psi, b)
    norm = math.inf
    for iteration in range(settings.max_newton + 1):
        F = system.residual(psi, b)
        norm = float(np.abs(F).max()) if F.size else 0.0
        if norm < tol:
            return psi, iteration, norm / scale
        if iteration == settings.max_newton:
            break
        delta = _linear_solve(system.hessian(psi), F, settings.linear_rtol)
        slope = float(F @ delta)
        step = 1.0
        for _ in range(MAX_BACKTRACKS):
            trial = psi + step * delta
            trial_energy = system.energy(trial, b)
            if trial_energy <= energy - ARMIJO * step * slope + ENERGY_SLACK * abs(energy):
                break
            step *= settings.damping
        else:
            raise ConvergenceError("Line search failed", residual=norm / scale, iterations=iteration, bias=bias)
        logger.debug(f"U = {bias:g} V, iteration {iteration}: residual {norm / scale:.3e}, step {step:g}")
        psi, energy = trial, trial_energy
    raise ConvergenceError(
        "Newton iteration did not converge", residual=norm / scale, iterations=settings.max_newton, bias=bias
    )


def _continuation(system, U, Vt, ramp_step, settings):
    psi = np.zeros(system.free.size)
    steps = max(1, math.ceil(U / ramp_step - 1e-9))
    iterations = 0
    residual = 0.0
    for k in range(1, steps + 1):
        U_k = U if k == steps else k * ramp_step
        psi, used, residual = _newton(system, psi, U_k / Vt, settings, U_k)
        iterations += used
    return psi, iterations, residual


@dataclass(frozen=True, eq=False)
class FieldSolution:
    """Converged potential and derived fields; every array is read-only and indexed ``[z, x]``."""

    grid: Grid2D
    U_applied: float
    polarity: str
    psi: np.ndarray
    phi: np.ndarray
    Ex: np.ndarray
    Ez: np.ndarray
    rho: np.ndarray
    depleted: np.ndarray
    p_map: np.ndarray
    thermal_voltage: float
    permittivity: float
    threshold: float
    iterations: int = 0
    residual: float = 0.0

    @property
    def E(self):
        return np.hypot(self.Ex, self.Ez)


def _freeze(*arrays):
    for array in arrays:
        array.setflags(write=False)


def assemble_solution(grid, p_map, U, polarity, psi, Vt, permittivity, threshold, iterations=0, residual=0.0):
    """Derive fields, space charge and depletion mask from the scaled potential ``psi`` ([z, x])."""
    phi = psi * Vt
    start, end = grid.electrode_nodes(polarity)
    phi[0, start : end + 1] = U
    other_start, other_end = grid.electrode_nodes('B' if polarity == 'A' else 'A')
    phi[0, other_start : other_end + 1] = 0.0
    dphi_dz, dphi_dx = np.gradient(phi, grid.h, grid.h, edge_order=2)
    holes = _exp_neg(psi)
    rho = CONSTANTS.q * p_map * (holes - 1.0)
    depleted = (p_map > 0) & (holes < threshold)
    Ex, Ez = -dphi_dx, -dphi_dz
    _freeze(psi, phi, Ex, Ez, rho, depleted, p_map)
    return FieldSolution(
        grid=grid,
        U_applied=float(U),
        polarity=polarity,
        psi=psi,
        phi=phi,
        Ex=Ex,
        Ez=Ez,
        rho=rho,
        depleted=depleted,
        p_map=p_map,
        thermal_voltage=Vt,
        permittivity=permittivity,
        threshold=threshold,
        iterations=iterations,
        residual=residual,
    )


def solve_poisson(grid, p_map, U, polarity, mat, settings, cache=None):
    """Solve the nonlinear Poisson problem with electrode ``polarity`` at ``U`` volts and the other grounded.

    Parameters
    ----------
    grid : Grid2D
    p_map : numpy.ndarray
        Quasi-neutral hole density (m^-3) per node, zero outside the illuminated slab
    U : float
        Bias on the positive electrode, V
    polarity : str
        ``'A'`` or ``'B'``, the electrode held at ``U``
    mat : MaterialParams
    settings : SolverSettings
    cache : FieldCache, optional

    Raises
    ------
    GridResolutionError
        If the slab spans fewer than 8 cells
    ConvergenceError
        If Newton fails at every attempted bias ramp
    """
    if grid.slab_row < MIN_SLAB_CELLS:
        raise GridResolutionError(
            f"Slab depth {grid.slab_depth * 1e6:g} um spans {grid.slab_row} cells of {grid.h * 1e6:g} um; "
            f"at least {MIN_SLAB_CELLS} are needed"
        )
    if U < 0:
        raise InvariantViolation('U', '>= 0', U)
    if polarity not in ('A', 'B'):
        raise InvariantViolation('polarity', 'one of A, B', polarity)
    p_map = np.array(p_map, dtype=float)
    if p_map.shape != grid.shape or np.any(p_map < 0) or not np.all(np.isfinite(p_map)):
        raise InvariantViolation('p_map', f'finite, >= 0, shape {grid.shape}', p_map.shape)

    key = None
    if cache is not None:
        key = cache.key(grid, p_map, U, polarity, mat, settings)
        cached = cache.get(key)
        if cached is not None:
            return cached

    Vt = thermal_voltage(mat.T)
    system = _PoissonSystem.build(grid, p_map, polarity, mat, settings.newton_tol)
    ramps = []

    @retry(
        retry=retry_if_exception_type(ConvergenceError),
        stop=stop_after_attempt(settings.ramp_retries + 1),
        reraise=True,
    )
    def ramp():
        step = settings.ramp_step / 2 ** len(ramps)
        if ramps:
            logger.info(f"Retrying U = {U:g} V with a {step:g} V bias ramp")
        ramps.append(step)
        return _continuation(system, U, Vt, step, settings)

    free_psi, iterations, residual = ramp()

    psi = np.zeros(grid.shape[0] * grid.shape[1])
    psi[system.free] = free_psi
    psi[system.dirichlet] = np.where(system.positive, U / Vt, 0.0)
    solution = assemble_solution(
        grid,
        p_map,
        U,
        polarity,
        psi.reshape(grid.shape),
        Vt,
        CONSTANTS.permittivity(mat.eps_s),
        settings.depletion_threshold,
        iterations,
        residual,
    )
    if cache is not None:
        cache.put(key, solution)
    return solution


def _first_crossing(values, level):
    """Fractional index where ``values`` first drops below ``level``, scanning from index 0.

    Returns 0 when the first value is already below and ``len(values) - 1`` when none is.
    """
    below = np.flatnonzero(values < level)
    if below.size == 0:
        return float(len(values) - 1)
    k = below[0]
    if k == 0:
        return 0.0
    return (k - 1) + (values[k - 1] - level) / (values[k - 1] - values[k])


def _threshold_level(threshold):
    return math.log(1.0 / threshold)


def vertical_depletion(solution, column):
    """Depth (m) of the depleted zone in node column ``column``."""
    grid = solution.grid
    if solution.p_map[0, column] == 0:
        return 0.0
    values = solution.psi[: grid.slab_row + 1, column]
    return _first_crossing(values, _threshold_level(solution.threshold)) * grid.h


def lateral_extension(solution):
    """Extension (m) of the fully depleted slab beyond the positive electrode's inner edge.

    Measured along the slab bottom, so the fringe of a column that has not yet depleted through
    reads 0.
    """
    grid = solution.grid
    if not solution.p_map.any():
        return 0.0
    level = _threshold_level(solution.threshold)
    start, end = grid.electrode_nodes(solution.polarity)
    bottom = solution.psi[grid.slab_row]
    if solution.polarity == 'A':
        edge, row = end, bottom[end:]
    else:
        edge, row = start, bottom[: start + 1][::-1]
    if row[0] < level:
        return 0.0
    extension = _first_crossing(row, level) * grid.h
    logger.debug(f"Lateral extension from node {edge}: {extension * 1e6:.3f} um")
    return extension


def extract_metrics(solution, geometry, lateral_stage_factor=0.25):
    """Depletion widths, contact fields and extension stage of a converged solution.

    Parameters
    ----------
    solution : FieldSolution
    geometry : DeviceGeometry
    lateral_stage_factor : float
        Lateral growth (stage 3) starts once the extension exceeds this multiple of the slab depth

    Returns
    -------
    DepletionMetrics
    """
    grid = solution.grid
    start, end = grid.electrode_nodes(solution.polarity)
    center = int(round(geometry.electrode_center(solution.polarity) / grid.h))
    W = vertical_depletion(solution, center)
    L = lateral_extension(solution)
    E = solution.E
    if W < geometry.slab_depth * (1 - 1e-9):
        stage = 1
    elif L > lateral_stage_factor * geometry.slab_depth:
        stage = 3
    else:
        stage = 2
    return DepletionMetrics(
        W_vertical=float(W),
        L_lateral=float(L),
        E_center=float(E[0, center]),
        E_edge=float(max(E[0, start], E[0, end])),
        stage=stage,
    )


def surface_field_profile(solution):
    """``(x, |E|)`` along the top surface."""
    return solution.grid.x.copy(), solution.E[0].copy()


def gauss_law_residual(solution, region=None):
    """Relative mismatch between the discrete flux into ``region`` and the charge it encloses.

    ``region`` is ``(z_start, z_stop, x_start, x_stop)`` in node indices, stops exclusive; electrode
    nodes inside it are left out. By default every node below the surface row is used.
    """
    grid = solution.grid
    if region is None:
        region = (1, grid.nz + 1, 0, grid.nx + 1)
    z0, z1, x0, x1 = region
    selected = np.zeros(grid.shape, dtype=bool)
    selected[z0:z1, x0:x1] = True
    selected &= ~grid.dirichlet_mask()
    if not selected.any():
        return 0.0

    flux = (laplacian(grid) @ solution.psi.ravel()).reshape(grid.shape)[selected]
    kappa = CONSTANTS.q * solution.p_map / (solution.permittivity * solution.thermal_voltage)
    volume = grid.h**2 * grid.slab_weights()[:, None] * grid.x_weights()[None, :]
    charge = (kappa * volume * (1.0 - _exp_neg(solution.psi)))[selected]
    reference = max(np.abs(charge).sum(), np.abs(flux).sum())
    if reference == 0:
        return 0.0
    return float(abs(flux.sum() - charge.sum()) / reference)


def delta_pl_profile(sol_on, sol_off, filter='NV_minus', nv_zero_ratio=0.6):
    """Normalized PL change along the device caused by biasing.

    The NV- share rises inside the depletion region, so the NV- filter signal follows the change
    of the depleted column height seen from above, the NV0 filter signal its negative times
    ``nv_zero_ratio``. Averaging the image over a band of pixels across the beam leaves the profile
    unchanged because the cross-section is uniform along the beam's transverse axis. The profile is
    normalized at the midpoint of the positive electrode. The returned position is measured from the
    positive electrode's edge facing the other electrode, growing into the electrode.

    Returns
    -------
    tuple
        ``(position, profile)`` arrays, position ascending, in m
    """
    if filter not in FILTERS:
        raise InvariantViolation('filter', f"one of {', '.join(FILTERS)}", filter)
    grid = sol_on.grid
    if sol_off.grid != grid:
        raise InvariantViolation('sol_off.grid', 'equal to sol_on.grid', sol_off.grid)
    heights = grid.h * grid.slab_weights()[:, None]
    delta = (sol_on.depleted * heights).sum(axis=0) - (sol_off.depleted * heights).sum(axis=0)

    start, end = grid.electrode_nodes(sol_on.polarity)
    reference = delta[(start + end) // 2]
    profile = np.zeros_like(delta) if reference == 0 else delta / reference
    if filter == 'NV_zero':
        profile = -nv_zero_ratio * profile

    x = grid.x
    if sol_on.polarity == 'A':
        return (x[end] - x)[::-1], profile[::-1]
    return x - x[start], profile


def sqrt_law_fit(voltages, lengths):
    """Least-squares line of ``lengths`` against ``sqrt(voltages)``: ``(slope, intercept, r2)``."""
    root = np.sqrt(np.asarray(voltages, dtype=float))
    lengths = np.asarray(lengths, dtype=float)
    slope, intercept = np.polyfit(root, lengths, 1)
    return float(slope), float(intercept), r_squared(lengths, slope * root + intercept)
