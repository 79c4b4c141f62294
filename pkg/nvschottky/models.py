"""Records shared between the solver modules and the result writers."""
from collections import namedtuple

CarrierState = namedtuple(
    'CarrierState',
    [
        'p',  # free holes, m^-3
        'n',  # free electrons, m^-3
        'N_D_plus',  # ionized nitrogen, m^-3
        'N_A_minus',  # ionized boron, m^-3
    ],
)

CarrierSolveResult = namedtuple('CarrierSolveResult', ['state', 'iterations', 'clamped'])

SpectralLine = namedtuple('SpectralLine', ['center', 'amplitude', 'fwhm'])

DepletionMetrics = namedtuple(
    'DepletionMetrics',
    [
        'W_vertical',  # m
        'L_lateral',  # m
        'E_center',  # V/m
        'E_edge',  # V/m
        'stage',  # 1 vertical growth, 2 slab bottom reached, 3 lateral growth
    ],
)

IVPoint = namedtuple('IVPoint', ['U', 'I', 'E_center', 'E_edge', 'W_vertical', 'L_lateral', 'stage', 'p0'])

ContrastPoint = namedtuple('ContrastPoint', ['U', 'I_off', 'I_on', 'contrast', 'regime'])

SpectrumPoint = namedtuple(
    'SpectrumPoint', ['frequency', 'I_off', 'I_on', 'pdmr_contrast', 'odmr_contrast_A', 'odmr_contrast_B']
)

BarrierFit = namedtuple(
    'BarrierFit',
    [
        'phi1',
        'eta',
        'A_eff',
        'covariance',  # 3x3 over (phi1, eta, A_eff); A_eff row and column are zero
        'residuals',  # ln(I_model) - ln(I_measured)
        'nfev',
    ],
)

ContrastComparison = namedtuple('ContrastComparison', ['U', 'region', 'pdmr_contrast', 'odmr_contrast'])

BeamSizeRun = namedtuple('BeamSizeRun', ['beam_waist', 'optical_power', 'sweep', 'knee_voltage', 'plateau_contrast'])
