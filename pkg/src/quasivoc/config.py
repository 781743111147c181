"""Pipeline configuration: defaults, config-file parsing, CLI overrides."""
from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(Exception):
    """Raised for unknown keys or out-of-range values."""


@dataclass
class PipelineConfig:
    sample_rate: int = 24000
    frame_shift: float = 0.005
    half_window: float = 0.010
    window_kind: str = "hann"
    gauss_sigma: float = 0.0
    k_guard: float = 50.0
    unvoiced_f0: float = 100.0
    max_components: int = 0          # 0 means no cap
    order_p: int = 128
    order_q: int = 128
    order_r: int = 8
    phase_weight: float = 0.1
    fit_max_steps: int = 500
    f0_min: float = 50.0
    f0_max: float = 500.0
    voicing_threshold: float = 0.45
    refine_mode: str = "none"        # none | aqhm | eaqhm
    refine_iters: int = 3
    output_format: str = "float32"   # float32 | pcm16
    threads: int = 1
    seed: int = 0

    def validate(self):
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if self.frame_shift <= 0 or self.half_window <= 0:
            raise ConfigError("frame_shift and half_window must be positive")
        if self.order_r <= 0 or self.order_p % self.order_r or self.order_q % self.order_r:
            raise ConfigError("order_r must divide order_p and order_q")
        if not (0 < self.f0_min < self.f0_max < self.sample_rate / 2):
            raise ConfigError("f0 range must satisfy 0 < min < max < Nyquist")
        if self.window_kind not in ("hann", "hamming", "gauss"):
            raise ConfigError(f"unknown window kind: {self.window_kind}")
        if self.refine_mode not in ("none", "aqhm", "eaqhm"):
            raise ConfigError(f"unknown refine mode: {self.refine_mode}")
        if self.output_format not in ("float32", "pcm16"):
            raise ConfigError(f"unknown output format: {self.output_format}")
        return self

    @property
    def orders(self) -> tuple[int, int, int]:
        return (self.order_p, self.order_q, self.order_r)

    @property
    def component_cap(self):
        return self.max_components if self.max_components > 0 else None


def load_config(path) -> PipelineConfig:
    """Parse 'key = value' lines into a PipelineConfig; unknown keys reject."""
    known = {f.name: f.type for f in fields(PipelineConfig)}
    kwargs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            kwargs[key] = _coerce(key, value)
    return PipelineConfig(**kwargs).validate()


def _coerce(key: str, value: str):
    default = getattr(PipelineConfig(), key)
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value
