"""Flat key = value experiment configuration.

Lists are comma separated; booleans accept true/false/1/0/yes/no.  The
same syntax is written back as ``# key = value`` header lines, so a results
file can be re-parsed into the config that produced it.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional

DR_GRID = tuple(round(0.5 + 0.05 * i, 2) for i in range(11))

KINDS = ("ber", "sir", "qos")

# execution details that never change results; kept out of the header echo
EXECUTION_FIELDS = ("workers",)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # system parameters
    n_ra: int = 6
    n_ms: int = 6
    bs_spacing_km: float = 3.0
    ra_ring_fraction: float = 0.7
    edge_fraction: float = 0.5
    fiber_length_factor: float = 5.0
    fiber_snr_db: float = 50.0
    fiber_scale: float = 1.0
    pathloss_intercept_db: float = 128.1
    pathloss_slope_db: float = 37.6
    shadowing_std_db: float = 8.0
    noise_psd_dbm_hz: float = -174.0
    subcarrier_spacing_hz: float = 15e3
    n_subcarriers: int = 1200
    bandwidth_hz: float = 20e6
    packet_bits: int = 1024
    code_rate: float = 2 / 3
    p_min_dbm: float = 20.0
    p_max_dbm: float = 30.0
    target_sir_db: float = 15.0
    pc_iterations: int = 20
    # modelling choices
    spread_power: bool = True
    fading: str = "fast"
    cochannel: str = "radial"
    relay_correlation: str = "composite"
    relay_shadowing: str = "shared"
    vicinity_radius_frac: float = 0.15
    reliable_radius_frac: float = 0.2
    mr_error_prob: float = 0.0
    slot_halving: bool = True
    llr_clip: float = 20.0
    pda_tol: float = 1e-4
    pda_max_sweeps: int = 10
    # sweep axes
    kind: str = "ber"
    modes: tuple = ("FFR-DAS",)
    detectors: tuple = ("PDA",)
    directions: tuple = ("best",)
    d_over_r: tuple = DR_GRID
    tx_power_dbm: tuple = (20.0,)
    rho: tuple = (0.0,)
    mr_strategy: tuple = ("close_to_ms",)
    power_control: tuple = (False,)
    # budget and bookkeeping
    seed: int = 1
    min_bits: int = 1_000_000
    min_errors: int = 200
    max_bits: int = 10_000_000
    batch_trials: int = 8
    stop_on: str = "wanted"
    sir_trials: int = 2000
    qos_grid: int = 100
    workers: int = 1
    preset: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def cell_radius(self) -> float:
        return self.bs_spacing_km / math.sqrt(3.0)

    def validate(self):
        checks = [
            (self.kind in KINDS, "kind", f"must be one of {KINDS}"),
            (self.fading in ("fast", "block"), "fading", "must be fast or block"),
            (self.relay_correlation in ("composite", "fading"), "relay_correlation",
             "must be composite or fading"),
            (self.relay_shadowing in ("shared", "independent"), "relay_shadowing",
             "must be shared or independent"),
            (self.stop_on in ("wanted", "all"), "stop_on", "must be wanted or all"),
            (all(0 < d <= 1 for d in self.d_over_r), "d_over_r", "values must lie in (0, 1]"),
            (all(0 <= r <= 1 for r in self.rho), "rho", "values must lie in [0, 1]"),
            (0 <= self.mr_error_prob <= 1, "mr_error_prob", "must lie in [0, 1]"),
            (self.p_min_dbm <= self.p_max_dbm, "p_min_dbm", "exceeds p_max_dbm"),
            (self.min_bits <= self.max_bits, "min_bits", "exceeds max_bits"),
            (self.batch_trials >= 1, "batch_trials", "must be positive"),
            (self.workers >= 1, "workers", "must be positive"),
        ]
        for ok, name, msg in checks:
            if not ok:
                raise ConfigError(f"{name}: {msg}")
        from .topology import COCHANNEL_PLACEMENTS, MODES
        if self.cochannel not in COCHANNEL_PLACEMENTS:
            raise ConfigError(f"cochannel: must be one of {COCHANNEL_PLACEMENTS}")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ConfigError(f"modes: unknown {bad}")
        bad = [d for d in self.directions if d not in ("best", "worst")]
        if bad:
            raise ConfigError(f"directions: unknown {bad}")
        bad = [s for s in self.mr_strategy if s not in ("close_to_ms", "reliable_area")]
        if bad:
            raise ConfigError(f"mr_strategy: unknown {bad}")

    # ------------------------------------------------------------ text io
    def to_lines(self) -> list[str]:
        return [f"{f.name} = {_format(getattr(self, f.name))}" for f in fields(self)]

    def header(self) -> str:
        return "".join(f"# {f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self)
                       if f.name not in EXECUTION_FIELDS)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def override(self, pairs: Iterable[str]) -> "ExperimentConfig":
        """Apply ``key=value`` strings."""
        kw = {}
        for i, item in enumerate(pairs):
            if "=" not in item:
                raise ConfigError(f"override {i + 1} ({item!r}): expected key=value")
            k, v = item.split("=", 1)
            kw[k.strip()] = v.strip()
        return _apply(self, kw, "override")

    @classmethod
    def from_text(cls, text: str, base: Optional["ExperimentConfig"] = None,
                  source: str = "<text>") -> "ExperimentConfig":
        kw = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if line.startswith("#"):
                line = line[1:].strip()
            if not line or "=" not in line:
                continue
            k, v = line.split("=", 1)
            kw[(k.strip(), n)] = v.strip()
        return _apply(base or cls(), kw, source)

    @classmethod
    def from_file(cls, path, base=None) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), base, str(path))

    @classmethod
    def from_header(cls, csv_text: str) -> "ExperimentConfig":
        head = "\n".join(l for l in csv_text.splitlines() if l.startswith("# ") and " = " in l)
        return cls.from_text(head, source="<header>")


_TYPES = None


def _types():
    global _TYPES
    if _TYPES is None:
        hints = typing.get_type_hints(ExperimentConfig)
        _TYPES = {f.name: hints[f.name] for f in fields(ExperimentConfig)}
    return _TYPES


def _format(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_scalar(s: str, kind):
    if kind is bool:
        return _parse_bool(s)
    if kind is int:
        return int(float(s)) if "e" in s.lower() else int(s.replace("_", ""))
    if kind is float:
        return float(s)
    return s


def _parse(name: str, text: str, default):
    kind = _types()[name]
    if kind is tuple or isinstance(default, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        elem = type(default[0]) if default else str
        return tuple(_parse_scalar(t, elem) for t in items)
    return _parse_scalar(text, {"int": int, "float": float, "bool": bool, "str": str}.get(
        getattr(kind, "__name__", str(kind)), kind))


def _apply(base: ExperimentConfig, kw: dict, source: str) -> ExperimentConfig:
    known = _types()
    out = {}
    for key, text in kw.items():
        name, where = (key if isinstance(key, tuple) else (key, None))
        loc = f"{source}:{where}" if where else source
        if name not in known:
            raise ConfigError(f"{loc}: unknown field {name!r}")
        try:
            out[name] = _parse(name, text, getattr(base, name))
        except ValueError as exc:
            raise ConfigError(f"{loc}: field {name!r}: {exc}") from None
    try:
        return dataclasses.replace(base, **out)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
