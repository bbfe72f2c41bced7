"""
Architecture and loss settings of the TCVD network.
"""

from dataclasses import asdict, dataclass
from typing import Tuple

from utils.errors import ConfigError


@dataclass(frozen=True)
class TcvdConfig:
    """
    Sizes of the encoder, TpFormer and decoder, plus the loss weights.

    encoder_filters has one entry per CNN stage; a TpFormer follows each of the
    first tpformer_stages stages.
    """

    encoder_filters: Tuple[int, ...] = (32, 64, 128, 256)
    tpformer_stages: int = 3
    heads: int = 4
    input_size: int = 224
    triplet_len: int = 3
    loss_a: float = 1.0
    loss_b: float = 1.0
    mlp_ratio: int = 2

    def __post_init__(self):
        object.__setattr__(self, 'encoder_filters', tuple(int(f) for f in self.encoder_filters))
        self.validate()

    def validate(self):
        """
        Raises:
            ConfigError: on any inconsistent setting
        """
        filters = self.encoder_filters
        if len(filters) != self.tpformer_stages + 1:
            raise ConfigError(
                f"encoder_filters needs tpformer_stages + 1 = {self.tpformer_stages + 1} entries, got {len(filters)}"
            )
        if any(f < 1 for f in filters):
            raise ConfigError(f"encoder_filters must be positive, got {list(filters)}")
        if self.heads < 1:
            raise ConfigError(f"heads must be >= 1, got {self.heads}")
        for stage, width in enumerate(filters[:self.tpformer_stages]):
            if width % self.heads != 0:
                raise ConfigError(f"stage {stage + 1} width {width} is not divisible by {self.heads} heads")
        if self.triplet_len != 3:
            raise ConfigError(f"triplet_len must be 3, got {self.triplet_len}")
        if self.loss_a < 0 or self.loss_b < 0 or self.loss_a + self.loss_b <= 0:
            raise ConfigError(f"loss weights must be >= 0 with a positive sum, got a={self.loss_a}, b={self.loss_b}")
        if self.mlp_ratio < 1:
            raise ConfigError(f"mlp_ratio must be >= 1, got {self.mlp_ratio}")
        reduction = 2 ** len(filters)
        if self.input_size < reduction or self.input_size % reduction != 0:
            raise ConfigError(f"input_size {self.input_size} must be a positive multiple of {reduction}")

    @classmethod
    def desk(cls, **overrides):
        """Reduced model used for tests and CPU training."""
        settings = dict(encoder_filters=(8, 16, 32, 64), heads=2, input_size=64)
        settings.update(overrides)
        return cls(**settings)

    @classmethod
    def full(cls, **overrides):
        """Full-size model: 224 input, filters 32/64/128/256, 4 heads."""
        return cls(**overrides)

    @classmethod
    def from_dict(cls, values):
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(f"bad model configuration: {e}") from None

    def as_dict(self):
        values = asdict(self)
        values['encoder_filters'] = list(self.encoder_filters)
        return values

    def stage_sizes(self):
        """Spatial side of every encoder stage output."""
        return [self.input_size // 2 ** (s + 1) for s in range(len(self.encoder_filters))]
