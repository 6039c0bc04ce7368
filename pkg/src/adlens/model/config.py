"""Model and training configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..util import digest_of


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs for the four encoders, fusion, and regression head.

    The shapes follow one family: a conv stem plus four residual blocks with
    global average pooling for images, transformer layers with mean pooling
    for text, and 1:2:2:1 fully-connected stacks with batch-norm + ELU for the
    domain/feature encoders and the head. Desk-scale defaults below; the
    production-scale variant of the same family is (512, 1024, 1024, 512)
    stacks, 12 transformer layers of width 768, and an ImageNet-sized residual
    net, reachable purely through these fields.

    The vocabulary and domain list travel with the config so a checkpoint plus
    its config digest fully describe the deployed model.
    """

    vocab: tuple
    domains: tuple
    feature_dim: int
    image_size: int = 32
    image_filters: int = 32
    text_hidden: int = 64
    text_layers: int = 2
    text_heads: int = 4
    text_max_len: int = 16
    mlp_widths: tuple = (128, 256, 256, 128)
    head_widths: tuple = (128, 256, 256)
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    elu_alpha: float = 1.0

    def __post_init__(self):
        if self.text_hidden % self.text_heads != 0:
            raise ValueError("text_hidden must divide evenly across attention heads")
        if len(self.mlp_widths) != 4 or len(self.head_widths) != 3:
            raise ValueError("encoder stacks are four layers; the head is three plus the output unit")

    @classmethod
    def from_dataset(cls, dataset, **overrides) -> "ModelConfig":
        return cls(vocab=tuple(dataset.vocab), domains=tuple(dataset.domains),
                   feature_dim=dataset.feature_dim, **overrides)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def pad_id(self) -> int:
        return len(self.vocab)

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    @property
    def image_width(self) -> int:
        return self.image_filters

    @property
    def text_width(self) -> int:
        return self.text_hidden

    @property
    def domain_width(self) -> int:
        return self.mlp_widths[-1]

    @property
    def feature_width(self) -> int:
        return self.mlp_widths[-1]

    @property
    def fusion_width(self) -> int:
        return self.image_width + self.text_width + self.domain_width + self.feature_width

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vocab"] = list(self.vocab)
        d["domains"] = list(self.domains)
        d["mlp_widths"] = list(self.mlp_widths)
        d["head_widths"] = list(self.head_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["vocab"] = tuple(d["vocab"])
        d["domains"] = tuple(d["domains"])
        d["mlp_widths"] = tuple(d["mlp_widths"])
        d["head_widths"] = tuple(d["head_widths"])
        return cls(**d)

    def digest(self) -> str:
        return digest_of(self.to_dict())


@dataclass(frozen=True)
class StageConfig:
    """One optimization stage: Adam settings plus epoch/batch counts."""

    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")


@dataclass(frozen=True)
class TrainConfig:
    """Two-stage protocol: per-modality pretraining, then joint training."""

    image: StageConfig = field(default_factory=lambda: StageConfig(lr=1e-3, batch_size=32, epochs=14))
    text: StageConfig = field(default_factory=lambda: StageConfig(lr=1e-3, batch_size=32, epochs=50))
    domain: StageConfig = field(default_factory=lambda: StageConfig(lr=5e-4, batch_size=512, epochs=50))
    features: StageConfig = field(default_factory=lambda: StageConfig(lr=5e-4, batch_size=512, epochs=50))
    joint: StageConfig = field(default_factory=lambda: StageConfig(lr=1e-3, batch_size=32, epochs=60))
    #: random-crop side for image pretraining; 0 trains on full images, which
    #: is right at desk scale (crops exist to cap memory on huge screenshots)
    image_crop: int = 0
    freeze_image: bool = True
    min_modality_items: int = 8

    def stage(self, name: str) -> StageConfig:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for key in ("image", "text", "domain", "features", "joint"):
            if key in d and isinstance(d[key], dict):
                d[key] = StageConfig(**d[key])
        return cls(**d)
