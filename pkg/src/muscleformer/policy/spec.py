from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class PolicySpec:
    """Muscle transformer hyperparameters (defaults: the full-size model)."""

    embedding_dim: int = 128
    feedforward_dim: int = 512
    heads: int = 4
    encoder_layers: int = 6
    decoder_layers: int = 6
    dropout: float = 0.0
    pre_norm: bool = True
    window: int = 5
    activation: str = "relu"
    layer_norm_eps: float = 1e-5
    # appends a constant-1 slot to every sensor window (tokenizer input W + 1)
    tokenizer_extra_feature: bool = False
    max_sensor_tokens: int = 512
    max_actuators: int = 128
    init_sigma: float = 1.0
    # std of the i.i.d. normal word-embedding init
    embedding_init_std: float = 0.02

    def __post_init__(self):
        if self.embedding_dim % self.heads:
            raise ValueError(f"embedding_dim {self.embedding_dim} must be divisible by heads {self.heads}")
        if self.dropout != 0.0:
            raise ValueError("dropout is not supported (the policy is trained without it)")
        if not self.pre_norm:
            raise ValueError("only pre-norm blocks are implemented")
        if self.activation != "relu":
            raise ValueError("only ReLU feedforward activation is implemented")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def tokenizer_inputs(self) -> int:
        return self.window + (1 if self.tokenizer_extra_feature else 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PolicySpec":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})
