"""Run configuration: dataclass defaults plus a flat ``section.key=value``
text format with exact round-tripping.

Unknown keys are hard errors so a misspelled hyperparameter can never
silently fall back to its default.  Floats serialize via repr, so
parse(serialize(c)) == c including every bit of every float.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .data import DatasetManifest
from .losses import LossWeights
from .networks import NetworkConfig


class ConfigError(ValueError):
    """Unknown key, malformed value, or inconsistent configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run needs.  Defaults are the trained-model
    settings: Adam 0.0002/0.9/0.999, margin 0.9, grayscale probability 0.1,
    fusion alpha 0.55, and the loss weights in LossWeights."""

    network: NetworkConfig = field(default_factory=NetworkConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 0.0002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 8
    epochs: int = 20
    steps_per_epoch: int = 100
    refresh_period_epochs: int = 1
    grayscale_prob: float = 0.1
    seed: int = 0
    swap_negative_appearance: bool = False
    data_path: str = ""
    data: DatasetManifest = field(default_factory=DatasetManifest)
    eval_alpha: float = 0.55
    eval_flip: bool = True
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.steps_per_epoch < 1:
            raise ConfigError("batch_size/steps_per_epoch must be >= 1, epochs >= 0")
        if not 0.0 <= self.grayscale_prob <= 1.0:
            raise ConfigError("grayscale_prob must be in [0, 1]")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if self.data.image_shape != self.network.image_shape:
            raise ConfigError(
                f"dataset image shape {self.data.image_shape} does not match "
                f"network image shape {self.network.image_shape}")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ConfigError(f"expected true/false, got {text!r}")


def _parse_shape(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated ints, got {text!r}") from None


# (flat key, section, field name, parser); "data.image_shape" is deliberately
# absent: the dataset always renders at the network's image shape
_SCHEMA = [
    ("net.image_shape", "network", "image_shape", _parse_shape),
    ("net.feature_shape", "network", "feature_shape", _parse_shape),
    ("net.id_dim", "network", "id_dim", int),
    ("net.app_dim", "network", "app_dim", int),
    ("net.num_identities", "network", "num_identities", int),
    ("net.backbone_hidden", "network", "backbone_hidden", int),
    ("net.separator_hidden", "network", "separator_hidden", int),
    ("net.generator_hidden", "network", "generator_hidden", int),
    ("net.id_dropout", "network", "id_dropout", float),
    ("loss.id_weight", "loss", "id_weight", float),
    ("loss.recon_weight", "loss", "recon_weight", float),
    ("loss.cls_weight", "loss", "cls_weight", float),
    ("loss.triplet_weight", "loss", "triplet_weight", float),
    ("loss.center_weight", "loss", "center_weight", float),
    ("loss.pos_recon_weight", "loss", "pos_recon_weight", float),
    ("loss.neg_recon_weight", "loss", "neg_recon_weight", float),
    ("loss.cam_weight", "loss", "cam_weight", float),
    ("loss.margin", "loss", "margin", float),
    ("optim.learning_rate", "", "learning_rate", float),
    ("optim.beta1", "", "beta1", float),
    ("optim.beta2", "", "beta2", float),
    ("optim.epsilon", "", "epsilon", float),
    ("train.batch_size", "", "batch_size", int),
    ("train.epochs", "", "epochs", int),
    ("train.steps_per_epoch", "", "steps_per_epoch", int),
    ("train.refresh_period_epochs", "", "refresh_period_epochs", int),
    ("train.grayscale_prob", "", "grayscale_prob", float),
    ("train.seed", "", "seed", int),
    ("train.swap_negative_appearance", "", "swap_negative_appearance", _parse_bool),
    ("data.path", "", "data_path", str),
    ("data.num_identities", "data", "num_identities", int),
    ("data.samples_per_identity", "data", "samples_per_identity", int),
    ("data.train_per_identity", "data", "train_per_identity", int),
    ("data.query_per_identity", "data", "query_per_identity", int),
    ("data.gallery_per_identity", "data", "gallery_per_identity", int),
    ("data.seed", "data", "seed", int),
    ("data.appearance_bands", "data", "appearance_bands", int),
    ("eval.alpha", "", "eval_alpha", float),
    ("eval.flip", "", "eval_flip", _parse_bool),
    ("out.dir", "", "out_dir", str),
]


def serialize_config(config: RunConfig) -> str:
    """All keys in schema order, one per line."""
    lines = []
    for key, section, name, _ in _SCHEMA:
        holder = getattr(config, section) if section else config
        lines.append(f"{key}={_fmt(getattr(holder, name))}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    """Parse the flat format; keys may appear in any order, each at most
    once, and every key must exist in the schema.  Missing keys keep their
    defaults.  Lines that are blank or start with '#' are skipped."""
    schema = {key: (section, name, parser) for key, section, name, parser in _SCHEMA}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = value.strip()

    sections = {"network": {}, "loss": {}, "data": {}, "": {}}
    for key, value in seen.items():
        section, name, parser = schema[key]
        try:
            sections[section][name] = parser(value)
        except ConfigError:
            raise
        except (ValueError, TypeError):
            raise ConfigError(f"bad value for {key}: {value!r}") from None

    try:
        network = NetworkConfig(**sections["network"])
        loss = LossWeights(**sections["loss"])
        data = DatasetManifest(image_shape=network.image_shape, **sections["data"])
        return RunConfig(network=network, loss=loss, data=data, **sections[""])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    with open(path) as handle:
        return parse_config(handle.read())


def save_config(config: RunConfig, path) -> None:
    with open(path, "w") as handle:
        handle.write(serialize_config(config))


def with_overrides(config: RunConfig, seed: int | None = None,
                   out_dir: str | None = None) -> RunConfig:
    """CLI-level overrides for --seed and --out."""
    updates = {}
    if seed is not None:
        updates["seed"] = int(seed)
    if out_dir is not None:
        updates["out_dir"] = str(out_dir)
    return replace(config, **updates) if updates else config
