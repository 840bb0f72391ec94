"""Link-level simulator for a full-duplex SC-FDMA cell with multi-antenna UEs."""

from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .harness import run_ber, run_doa_experiment, run_spectral_efficiency
from .impairments import SicMode
from .numerics import RngStream
from .slot import run_slot

__all__ = [
    "ConfigError",
    "RngStream",
    "ScenarioConfig",
    "SicMode",
    "load_config",
    "parse_config",
    "run_ber",
    "run_doa_experiment",
    "run_slot",
    "run_spectral_efficiency",
]
__version__ = "0.1.0"
