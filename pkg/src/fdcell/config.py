"""
Scenario configuration.

Config files are flat ``key = value`` text. ``#`` starts a comment, list values
are comma separated and unknown keys are rejected::

    n_ues = 2
    doa_enb_deg = 10, 60
    sic_mode = full
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .impairments import GHORBANI_AM, GHORBANI_PM, PaModel, SicMode, thermal_noise_power
from .modem import SUPPORTED_ORDERS, Allocation

__all__ = ["ConfigError", "ScenarioConfig", "parse_config", "load_config"]

SCHEMES = ("fd", "alternating", "hd-tdd")


@lru_cache(maxsize=32)
def _pa_model(am, pm, ibo_db) -> PaModel:
    return PaModel(am, pm, ibo_db)


class ConfigError(ValueError):
    """Invalid scenario; ``errors`` lists every violation found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class ScenarioConfig:
    # grid and array sizes
    n_subcarriers: int = 256
    n_alloc: int = 180
    n_ues: int = 2
    n_enb_ant: int = 4
    n_ue_ant: int = 4
    n_taps: int = 10
    cp_len: int = 18
    mod_order: int = 16
    allocation: str = "localized"
    sample_rate_hz: float = 3.84e6
    bandwidth_hz: float = 3e6
    noise_temp_k: float = 290.0

    # geometry and beamforming
    doa_enb_deg: tuple[float, ...] = (10.0, 60.0)
    spacing_wl: float = 0.45
    doa_mode: str = "oracle"
    snapshots: int = 200
    snapshot_snr_db: float = 20.0
    clms_mu: float = 0.01
    clms_iters: int = 500

    # links
    ue_gain_db: tuple[float, ...] = (0.0, 3.0)
    ue_xlink_gain_db: float = 0.0
    ue_corr_rho: float = 1.0
    power_policy: str = "equal"
    tone_power: float = 1.0

    # experiment
    snr_start_db: float = 0.0
    snr_stop_db: float = 30.0
    snr_step_db: float = 2.0
    trials: int = 500
    seed: int = 1
    max_errors: int = 400
    calib_draws: int = 64
    ref_ue: int = 0
    genie_sic: bool = False
    schemes: tuple[str, ...] = SCHEMES

    # impairments
    sic_mode: SicMode = SicMode.FULL
    si_enabled: bool = True
    si_db: float = 60.0
    si_xtalk_db: float = -10.0
    si_taps: int = 2
    sic_residual_db: float = -20.0
    pa_enabled: bool = True
    pa_ibo_db: float = 21.0
    pa_am: tuple[float, ...] = GHORBANI_AM
    pa_pm: tuple[float, ...] = GHORBANI_PM
    tx_noise_enabled: bool = True
    tx_noise_evm_db: float = -30.0

    def __post_init__(self):
        object.__setattr__(self, "sic_mode", SicMode(self.sic_mode))
        for name in ("doa_enb_deg", "ue_gain_db", "pa_am", "pa_pm"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "schemes", tuple(self.schemes))

    # derived quantities -------------------------------------------------

    @property
    def alloc(self) -> Allocation:
        if self.allocation == "interleaved":
            return Allocation.interleaved(self.n_subcarriers, self.n_alloc)
        return Allocation.localized(self.n_subcarriers, self.n_alloc)

    @property
    def snr_grid(self) -> np.ndarray:
        step = self.snr_step_db
        return np.arange(self.snr_start_db, self.snr_stop_db + step / 2, step)

    @property
    def pa(self) -> PaModel | None:
        if not self.pa_enabled:
            return None
        return _pa_model(self.pa_am, self.pa_pm, self.pa_ibo_db)

    @property
    def tx_evm_db(self) -> float | None:
        return self.tx_noise_evm_db if self.tx_noise_enabled else None

    @property
    def doa_enb_rad(self) -> np.ndarray:
        return np.deg2rad(np.asarray(self.doa_enb_deg))

    @property
    def thermal_noise_w(self) -> float:
        return thermal_noise_power(self.bandwidth_hz, self.noise_temp_k)

    @property
    def cp_us(self) -> float:
        return 1e6 * self.cp_len / self.sample_rate_hz

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # validation -------------------------------------------------------

    def validate(self) -> list[str]:
        """Every violated constraint, empty when the scenario is runnable."""
        errs = []

        def need(cond, msg):
            if not cond:
                errs.append(msg)

        for name in ("n_subcarriers", "n_alloc", "n_ues", "n_enb_ant", "n_ue_ant", "n_taps",
                     "snapshots", "trials", "max_errors", "calib_draws", "si_taps"):
            need(getattr(self, name) >= 1, f"{name} must be >= 1")
        need(self.cp_len >= 0, "cp_len must be >= 0")
        need(self.clms_iters >= 0, "clms_iters must be >= 0")
        need(self.n_alloc <= self.n_subcarriers, "n_alloc must not exceed n_subcarriers")
        need(self.cp_len >= self.n_taps - 1, f"cp_len {self.cp_len} shorter than channel memory {self.n_taps - 1}")
        need(self.cp_len >= self.si_taps - 1, "cp_len shorter than the SI channel memory")
        need(self.n_taps <= self.n_subcarriers, "n_taps must not exceed n_subcarriers")
        # each UE collapses to one effective stream, so at most Ne UEs per tone
        need(self.n_ues <= self.n_enb_ant, f"K={self.n_ues} exceeds the {self.n_enb_ant} streams the eNB can separate")
        need(self.n_ues <= self.n_ue_ant, f"K={self.n_ues} constraints do not fit an {self.n_ue_ant}-element UE array")
        need(self.mod_order in SUPPORTED_ORDERS, f"mod_order must be one of {SUPPORTED_ORDERS}")
        need(self.allocation in ("localized", "interleaved"), "allocation must be localized or interleaved")
        need(len(self.doa_enb_deg) == self.n_ues, f"doa_enb_deg needs {self.n_ues} angles")
        need(len(set(self.doa_enb_deg)) == len(self.doa_enb_deg), "doa_enb_deg angles must be distinct")
        need(all(-90.0 < a < 90.0 for a in self.doa_enb_deg), "doa_enb_deg angles must lie in (-90, 90)")
        need(len(self.ue_gain_db) == self.n_ues, f"ue_gain_db needs {self.n_ues} values")
        need(0.0 < self.spacing_wl <= 0.5, "spacing_wl must lie in (0, 0.5]")
        need(self.doa_mode in ("oracle", "estimated"), "doa_mode must be oracle or estimated")
        need(self.clms_mu >= 0, "clms_mu must be >= 0")
        need(0.0 <= self.ue_corr_rho <= 1.0, "ue_corr_rho must lie in [0, 1]")
        need(self.power_policy in ("equal", "waterfill"), "power_policy must be equal or waterfill")
        need(self.tone_power > 0, "tone_power must be > 0")
        need(self.snr_step_db > 0, "snr_step_db must be > 0")
        need(self.snr_stop_db >= self.snr_start_db, "snr_stop_db must be >= snr_start_db")
        need(0 <= self.seed < 2**64, "seed must fit in 64 bits")
        need(0 <= self.ref_ue < self.n_ues, "ref_ue out of range")
        need(set(self.schemes) <= set(SCHEMES) and self.schemes, f"schemes must be drawn from {SCHEMES}")
        need(self.si_xtalk_db <= 0, "si_xtalk_db must be <= 0 (self-talk dominates)")
        need(len(self.pa_am) == 4 and len(self.pa_pm) == 4, "pa_am and pa_pm need 4 parameters each")
        need(self.sample_rate_hz > 0 and self.bandwidth_hz > 0, "rates must be positive")
        if self.pa_enabled and len(self.pa_am) == 4 and len(self.pa_pm) == 4:
            try:
                self.pa
            except ValueError as exc:
                errs.append(f"PA model: {exc}")
        return errs

    def check(self) -> "ScenarioConfig":
        errs = self.validate()
        if errs:
            raise ConfigError(errs)
        return self

    # text form ----------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(float(x)) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, SicMode):
                v = v.value
            elif isinstance(v, float):
                v = repr(float(v))
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _parse_bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _converter(default):
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, SicMode):
        return SicMode
    if isinstance(default, int):
        return lambda s: int(s, 0)
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        if default and isinstance(default[0], str):
            return lambda s: tuple(p.strip() for p in s.split(",") if p.strip())
        return lambda s: tuple(float(p) for p in s.split(",") if p.strip())
    return str.strip


_DEFAULTS = ScenarioConfig()
_CONVERTERS = {f.name: _converter(getattr(_DEFAULTS, f.name)) for f in dataclasses.fields(ScenarioConfig)}


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse ``key = value`` lines on top of `base` (defaults if omitted)."""
    errs = []
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append(f"line {lineno}: expected key = value")
            continue
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in _CONVERTERS:
            errs.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in values:
            errs.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            values[key] = _CONVERTERS[key](val)
        except ValueError as exc:
            errs.append(f"line {lineno}: bad value for {key}: {exc}")
    if errs:
        raise ConfigError(errs)
    return dataclasses.replace(base or ScenarioConfig(), **values)


def load_config(path) -> ScenarioConfig:
    """Read and parse a config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from exc
    return parse_config(text)
