from .config import load_config, load_config_file  # noqa: F401
from .exceptions import NVSchottkyException, SolverError  # noqa: F401
from .execute import execute_campaign, execute_command  # noqa: F401
from .experiments import DeviceModel, contrast_vs_voltage, depletion_study, spectrum_scan  # noqa: F401
from .iorw import verify_output  # noqa: F401
from .transport import device_iv  # noqa: F401
from .version import version as __version__  # noqa: F401
