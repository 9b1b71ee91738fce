"""Model and cache hyperparameters, with a documented JSON form.

The JSON keys are exactly the field names below. Omitted keys fall back to
the defaults; unknown keys are rejected so typos fail loudly instead of
silently running a different model.
"""

import dataclasses
import json
from dataclasses import dataclass

from .kernels import ContractViolation


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 32
    n_heads: int = 4
    n_layers: int = 2
    sink_blocks: int = 1
    window_blocks: int = 8
    chunk_size: int = 3
    horizon: int = 1000
    vocab_size: int | None = None
    io_dim: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.d_model < 2 or self.n_heads < 1:
            raise ContractViolation("ModelConfig: d_model >= 2 and n_heads >= 1 required")
        if self.d_model % self.n_heads != 0:
            raise ContractViolation(
                f"ModelConfig: n_heads {self.n_heads} does not divide d_model {self.d_model}"
            )
        if (self.d_model // self.n_heads) % 2 != 0:
            raise ContractViolation(
                "ModelConfig: head width must be even for rotary pairs"
            )
        if self.n_layers < 1:
            raise ContractViolation("ModelConfig: n_layers must be >= 1")
        if self.sink_blocks < 0 or self.window_blocks < 1 or self.chunk_size < 1:
            raise ContractViolation(
                "ModelConfig: sink_blocks >= 0, window_blocks >= 1, chunk_size >= 1"
            )
        if self.horizon < 1:
            raise ContractViolation("ModelConfig: horizon must be >= 1")
        if self.vocab_size is not None and self.vocab_size < 2:
            raise ContractViolation("ModelConfig: vocab_size must be >= 2 when set")
        if self.io_dim is not None and self.io_dim < 1:
            raise ContractViolation("ModelConfig: io_dim must be >= 1 when set")
        if self.vocab_size is not None and self.io_dim is not None:
            raise ContractViolation(
                "ModelConfig: vocab_size and io_dim are mutually exclusive"
            )

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ContractViolation(f"ModelConfig: unknown keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ContractViolation(f"ModelConfig: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ContractViolation("ModelConfig: JSON root must be an object")
        return cls.from_dict(data)
