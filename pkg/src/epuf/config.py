"""Run configuration: flat key = value files with command-line overrides.

Every run is reproducible from (config file, seed): the seed derives the
device population, the read nonces, and the protocol randomness.
"""

from dataclasses import dataclass, field, fields, replace

from .dramsim import Geometry, InputPattern


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # geometry
    chips: int = 1
    banks_per_chip: int = 8
    segments_per_bank: int = 4
    segment_bytes: int = 32768
    bitmap_rows: int = 256
    # failure model
    f_fail: float = 0.30
    f_marginal: float = 1e-4
    density_shape: float = 0.30
    p_noise_max: float = 0.05
    # pipeline
    pattern: str = "all-zero"
    omega2: int = 20
    omega3: int = 50
    theta: int = 0
    thetas: tuple = (0, 1, 2)
    temperatures: tuple = (25.0, 35.0, 45.0, 55.0)
    frac_bits: int = 0            # 0 = measure with the precision algorithm
    min_qualified: int = 128
    # population studies
    devices: int = 100
    reads_per_point: int = 10
    # protocol
    n_crps: int = 16
    sessions: int = 10
    # run
    seed: int = 42
    figures: bool = True

    def geometry(self) -> Geometry:
        try:
            return Geometry(self.chips, self.banks_per_chip, self.segments_per_bank,
                            self.segment_bytes, self.bitmap_rows)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def input_pattern(self) -> InputPattern:
        try:
            return InputPattern.parse(self.pattern)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model_knobs(self) -> dict:
        return {"f_fail": self.f_fail, "f_marginal": self.f_marginal,
                "density_shape": self.density_shape, "p_noise_max": self.p_noise_max}


_BOOL_WORDS = {"true": True, "yes": True, "1": True, "on": True,
               "false": False, "no": False, "0": False, "off": False}


def _convert(name: str, kind, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError(f"expected a boolean, got {raw!r}")
            return _BOOL_WORDS[raw.lower()]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            parts = [p for p in raw.replace(",", " ").split() if p]
            if name == "temperatures":
                return tuple(float(p) for p in parts)
            return tuple(int(p) for p in parts)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    kinds = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}
    if path is not None:
        seen = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in kinds:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                seen[key] = _convert(key, kinds[key], raw)
        cfg = replace(cfg, **seen)
    if overrides:
        clean = {k: v for k, v in overrides.items() if v is not None}
        for key in clean:
            if key not in kinds:
                raise ConfigError(f"unknown override {key!r}")
        cfg = replace(cfg, **clean)
    cfg.geometry()
    cfg.input_pattern()
    return cfg


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
