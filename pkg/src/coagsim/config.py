"""Experiment configuration files: one ``key = value`` per line, ``#`` comments."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

EXPERIMENTS = ("E1", "E2", "E3", "E4", "E5")

# key -> (kind, required)
_SCHEMA = {
    "experiment": ("str", True),
    "epsilon": ("floats", True),
    "alpha": ("float", True),
    "nu": ("float", True),
    "nu_tilde": ("float", True),
    "mu": ("float", True),
    "kappa": ("float", True),
    "theta": ("float", True),
    "margin": ("float", True),
    "a": ("float", True),
    "rho": ("floats", True),
    "t_macro_end": ("float", True),
    "sample_every": ("float", True),
    "dt_override": ("float", False),
    "delta": ("float", True),
    "replicas": ("int", True),
    "master_seed": ("int", True),
    "dt_safety": ("float", False),
    "separation": ("floats", False),
    "window": ("float", False),
    "rod_dt": ("float", False),
    "workers": ("int", False),
    "output_dir": ("str", False),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    epsilon: tuple[float, ...]
    alpha: float
    nu: float
    nu_tilde: float
    mu: float
    kappa: float
    theta: float
    margin: float
    a: float
    rho: tuple[float, ...]
    t_macro_end: float
    sample_every: float
    delta: float
    replicas: int
    master_seed: int
    dt_override: float | None = None
    dt_safety: float = 1.0
    separation: tuple[float, ...] | None = None
    window: float | None = None
    rod_dt: float | None = None
    workers: int = 1
    output_dir: str = "out"

    @property
    def seeds(self) -> range:
        return range(self.master_seed, self.master_seed + self.replicas)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name} = {_format(v)}")
        return "\n".join(lines) + "\n"


def _format(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(kind: str, raw: str):
    if kind == "str":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return tuple(float(p) for p in raw.split(","))


def parse_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (p.strip() for p in body.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(_SCHEMA[key][0], raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: cannot parse value {raw!r} for key {key!r}") from None
    missing = [k for k, (_, req) in _SCHEMA.items() if req and k not in values]
    if missing:
        raise ConfigError(f"{source}: missing key(s) {', '.join(missing)}")
    cfg = ExperimentConfig(**values)
    validate(cfg, source)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_text(path.read_text(encoding="utf-8"), str(path))


def validate(cfg: ExperimentConfig, source: str = "<config>") -> None:
    def fail(msg):
        raise ConfigError(f"{source}: {msg}")

    if cfg.experiment not in EXPERIMENTS:
        fail(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {cfg.experiment!r}")
    if cfg.replicas < 1:
        fail("replicas must be at least 1")
    if not all(0.0 < e < 1.0 for e in cfg.epsilon):
        fail("every epsilon must lie in (0, 1)")
    if not all(r > 0.0 for r in cfg.rho):
        fail("every rho must be positive")
    if cfg.t_macro_end <= 0.0 or cfg.sample_every <= 0.0:
        fail("t_macro_end and sample_every must be positive")
    if cfg.workers < 1:
        fail("workers must be at least 1")
    if cfg.experiment == "E5":
        if cfg.separation is None or cfg.window is None:
            fail("E5 needs 'separation' and 'window'")
        if len(cfg.separation) != len(cfg.rho) - 1:
            fail("E5 needs one separation per neighbouring pair of chains")
    if cfg.experiment in ("E2", "E4", "E5") and len(cfg.epsilon) != 1:
        fail(f"{cfg.experiment} takes a single epsilon")
