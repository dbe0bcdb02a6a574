"""Training configuration and the key=value config file format."""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

ABLATIONS = ("NP", "NKG", "NDKG", "NIEM")


@dataclass
class TrainConfig:
    """Hyperparameters and switches for one training run.

    Defaults follow the reference setup: 112-dim embeddings, batch size 100,
    Adam at 1e-3, a single propagation layer, and 5 contrastive samples.
    """

    embedding_dim: int = 112
    layers: int = 1
    batch_size: int = 100
    learning_rate: float = 0.001
    epochs: int = 30
    sample_count: int = 5            # positives/negatives per session in the contrastive loss
    contrastive_weight: float = 0.001
    kg_weight: float = 0.1
    ssl_temperature: float = 0.2
    mask_temperature: float = 1.0
    hard_pool_fraction: float = 0.1  # top fraction of scores eligible as hard negatives
    similarity_dim: int | None = None  # importance-extraction projection width, defaults to embedding_dim
    max_session_len: int | None = None  # derived from data when unset
    seed: int = 0
    patience: int = 5                # early stopping on validation precision@20
    ablation: tuple[str, ...] = ()
    # Switches between the written form of an equation and its conventional variant.
    iem_divisor: str = "t"           # "t" averages off-diagonal similarities over t, "t-1" over t-1
    ssl_mixed_negatives: bool = False  # True draws the first InfoNCE denominator's negatives from the other channel
    rec_loss_form: str = "binary"    # "binary" penalizes every non-target item, "categorical" is plain cross-entropy
    dtype: str = "float64"

    def __post_init__(self):
        if self.embedding_dim < 1:
            raise ValueError(f"embedding_dim must be positive, got {self.embedding_dim}")
        if self.layers < 0:
            raise ValueError(f"layers must be non-negative, got {self.layers}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.sample_count < 1:
            raise ValueError(f"sample_count must be positive, got {self.sample_count}")
        if not 0.0 < self.hard_pool_fraction <= 1.0:
            raise ValueError(f"hard_pool_fraction must lie in (0, 1], got {self.hard_pool_fraction}")
        if self.iem_divisor not in ("t", "t-1"):
            raise ValueError(f"iem_divisor must be 't' or 't-1', got {self.iem_divisor!r}")
        if self.rec_loss_form not in ("binary", "categorical"):
            raise ValueError(f"rec_loss_form must be 'binary' or 'categorical', got {self.rec_loss_form!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be 'float32' or 'float64', got {self.dtype!r}")
        if isinstance(self.ablation, str):
            self.ablation = tuple(f for f in self.ablation.replace(",", " ").split() if f)
        else:
            self.ablation = tuple(self.ablation)
        for flag in self.ablation:
            if flag not in ABLATIONS:
                raise ValueError(f"unknown ablation flag {flag!r}, expected subset of {ABLATIONS}")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ablation"] = list(self.ablation)
        return d

    def hash(self) -> str:
        """Stable digest of every field; checkpoints refuse to load across differing hashes."""
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ChannelWiring:
    """Which model pieces the ablation flags leave active."""

    use_position: bool = True
    use_kg: bool = True
    denoise: bool = True
    uniform_importance: bool = False


def apply_ablation(config: TrainConfig) -> ChannelWiring:
    """Translate ablation flags into channel wiring.

    NP zeroes position vectors in both readouts, NKG removes the KG channel
    and its loss, NDKG disables edge denoising (every edge kept at weight 1),
    NIEM replaces importance weights with a uniform average.
    """
    for flag in config.ablation:
        if flag not in ABLATIONS:
            raise ValueError(f"unknown ablation flag {flag!r}")
    return ChannelWiring(
        use_position="NP" not in config.ablation,
        use_kg="NKG" not in config.ablation,
        denoise="NDKG" not in config.ablation,
        uniform_importance="NIEM" in config.ablation,
    )


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _parse_value(name: str, raw: str):
    if name == "ablation":
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(parts)
    if raw.lower() in ("none", ""):
        return None
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    ftype = _FIELD_TYPES.get(name, "str")
    if "int" in str(ftype):
        return int(raw)
    if "float" in str(ftype):
        return float(raw)
    if "bool" in str(ftype):
        return raw.lower() == "true"
    return raw


def parse_config_text(text: str) -> dict:
    """Parse key = value lines into a TrainConfig kwargs dict.

    Blank lines and '#' comments are skipped. Unknown keys raise so typos
    do not silently fall back to defaults.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw.strip())
    return values


def load_config(path, **overrides) -> TrainConfig:
    with open(path) as fh:
        values = parse_config_text(fh.read())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values)


def config_to_text(config: TrainConfig) -> str:
    """Render a config as key = value lines that parse_config_text accepts."""
    lines = []
    for key, value in config.to_dict().items():
        if key == "ablation":
            value = ",".join(value)
        elif value is None:
            value = "none"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
