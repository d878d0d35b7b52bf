"""Run configuration: one flat dataclass plus a strict file parser.

Config files are UTF-8 ``key = value`` lines (blank lines and ``#``
comments allowed).  Keys are exactly the dataclass field names; an
unknown key is an error rather than a warning, so typos cannot silently
fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError, ParseError


@dataclass
class TrainConfig:
    # geometry
    height: int = 16
    width: int = 64
    channels: int = 32        # sequence feature width C
    c0: int = 16              # pyramid channels, fine to coarse
    c1: int = 24
    c2: int = 32
    embed: int = 32           # previous-symbol embedding size
    t_steps: int = 8          # decode step budget T
    m_chars: int = 8          # glyph channel slots M
    # formula constants
    mu: float = 70.0
    lam: float = 0.1
    delta: float = 0.05
    kmeans_k: int = 2
    # loss weights
    w_rec: float = 1.0
    w_ins: float = 1.0
    w_seq: float = 1.0
    w_seg: float = 1.0
    # optimization
    lr: float = 1e-3
    grad_clip: float = 1.0    # global-norm bound; 0 disables
    batch_size: int = 16
    steps: int = 600
    eval_interval: int = 100
    seed: int = 0
    # structure switches
    enable_js: bool = True
    enable_acfm: bool = True
    align_cor: bool = True
    align_dif: bool = True

    @property
    def n_cells(self) -> int:
        return self.width // 4

    def validate(self) -> "TrainConfig":
        if self.width % 4 != 0:
            raise ConfigError(f"width {self.width} must be divisible by 4")
        if self.height % 4 != 0:
            raise ConfigError(f"height {self.height} must be divisible by 4")
        q = self.height // 4
        if q & (q - 1):
            raise ConfigError(f"height {self.height}: quarter height {q} must be a power of two")
        for name in ("channels", "c0", "c1", "c2", "embed", "t_steps", "m_chars",
                     "batch_size", "steps", "eval_interval"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.t_steps > self.m_chars + 1:
            raise ConfigError(
                f"t_steps {self.t_steps} exceeds m_chars+1 = {self.m_chars + 1}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta {self.delta} outside (0, 1)")
        if self.mu <= 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if self.kmeans_k != 2:
            raise ConfigError(f"kmeans_k must be 2, got {self.kmeans_k}")
        for name in ("w_rec", "w_ins", "w_seq", "w_seg"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.grad_clip < 0:
            raise ConfigError(f"grad_clip must be >= 0, got {self.grad_clip}")
        if self.enable_acfm and not self.enable_js:
            raise ConfigError("enable_acfm requires enable_js")
        return self


_FIELDS = {f.name: f.type for f in fields(TrainConfig)}


def _cast(key: str, text: str):
    kind = _FIELDS[key]
    if kind == "bool":
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: cannot read {text!r} as a boolean")
    try:
        return int(text) if kind == "int" else float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {kind}") from None


def parse_config(path: str, base: TrainConfig | None = None) -> TrainConfig:
    """Load overrides from a file onto ``base`` (default config if None)."""
    cfg = base or TrainConfig()
    with open(path, "r", encoding="utf-8") as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path} line {ln}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _FIELDS:
                raise ConfigError(f"{path} line {ln}: unknown key {key!r}")
            setattr(cfg, key, _cast(key, value))
    return cfg
