"""Hyper-parameters and their ``key=value`` text form."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError

VARIANTS = ("EA-GPS", "GPS_OPT", "GPS_RPE", "GPS_OMA", "GPS_OEA", "GPS_SA", "GPS_LA", "GPS_Basic")
LOSS_MODES = ("last-item", "all-prefixes")

# learning rates used per public dataset; synthetic runs default to 1e-3
LR_PRESETS = {
    "FOOD": 1e-4,
    "MOVIELENS": 1e-4,
    "BOOK": 1e-3,
    "DOUBAN": 1e-3,
    "MOVIE": 3e-3,
    "synthetic": 1e-3,
}

ALPHA_GRID = (8, 16, 32, 64, 128)
BETA_GRID = (1, 2, 4, 8, 16)
GAMMA_GRID = tuple(round(0.1 * k, 1) for k in range(11))


@dataclass(frozen=True)
class HyperConfig:
    d: int = 16
    d1: int = 0  # 0 means "same as d"
    alpha: int = 16
    beta: int = 2
    gamma: float = 0.4
    delta: float = 1.0
    eta: int = 2
    lr: float = 1e-3
    batch_size: int = 256
    dropout: float = 0.1
    ea_l2: float = 1e-7
    epochs: int = 50
    max_len: int = 0  # 0 means "longest sequence in the dataset"
    init_seed: int = 0
    shuffle_seed: int = 1
    dropout_seed: int = 2
    mask_seed: int = 3
    variant: str = "EA-GPS"
    loss_mode: str = "last-item"
    softmax_soft_attention: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def prompt_dim(self) -> int:
        return self.d1 or self.d

    @property
    def d_head(self) -> int:
        return self.d // self.beta

    def validate(self) -> None:
        if self.d < 1 or self.alpha < 1 or self.beta < 1:
            raise ConfigError("d, alpha and beta must be positive")
        if self.d % self.beta:
            raise ConfigError(f"beta={self.beta} does not divide d={self.d}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.eta < 1:
            raise ConfigError("eta must be at least 1")
        if self.delta != 1.0:
            raise ConfigError("delta is fixed at 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.lr < 0:
            raise ConfigError("batch_size, epochs and lr must be non-negative (batch_size >= 1)")
        if self.d1 < 0 or self.max_len < 0:
            raise ConfigError("d1 and max_len must be non-negative")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"unknown loss mode {self.loss_mode!r}")

    def with_overrides(self, **kw) -> "HyperConfig":
        known = {f.name for f in fields(self)}
        unknown = set(kw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "HyperConfig":
        return cls().with_overrides(**parse_kv(text, cls))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def coerce(name: str, raw: str, cls=HyperConfig):
    types = {f.name: f.type for f in fields(cls)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    kind = types[name]
    try:
        if kind in ("bool", bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw.strip()


def parse_kv(text: str, cls=HyperConfig) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        out[key] = coerce(key, raw, cls)
    return out


@dataclass(frozen=True)
class VariantSpec:
    """Which encoder attention and which decoder a variant wires together."""

    attention: str | None  # "EA", "SA", "LA" or None (no external encoder)
    decoder: str  # "prompt", "relative", "additive" or "maxpool"


VARIANT_SPECS = {
    "EA-GPS": VariantSpec("EA", "prompt"),
    "GPS_OPT": VariantSpec("EA", "maxpool"),
    "GPS_RPE": VariantSpec("EA", "relative"),
    "GPS_OMA": VariantSpec("EA", "additive"),
    "GPS_OEA": VariantSpec(None, "prompt"),
    "GPS_SA": VariantSpec("SA", "prompt"),
    "GPS_LA": VariantSpec("LA", "prompt"),
    "GPS_Basic": VariantSpec(None, "maxpool"),
}


def variant_spec(name: str) -> VariantSpec:
    try:
        return VARIANT_SPECS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}") from None
