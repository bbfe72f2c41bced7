"""
TCVD: per-frame CNN encoder, TpFormer temporal fusion and a U-Net style decoder.

Tensors are laid out N,H,W,C. A batch of B triplets is carried through the
encoder as 3B frames in frame-major order (all prev frames, then all centers,
then all nexts), so one set of convolution weights serves the three paths.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from services.autodiff import ops
from services.autodiff.attention import AttentionWeights, multi_head_attention
from services.autodiff.layers import conv_block, he_uniform, linear, ones, xavier_uniform, zeros
from services.autodiff.tensor import Tensor, as_tensor
from services.tcvd.config import TcvdConfig
from utils.errors import ShapeError


logger = logging.getLogger(__name__)


@dataclass
class StageFeatures:
    """Output of one encoder stage for all 3B frames."""

    spatial: Tensor
    fused: Optional[Tensor] = None
    attention: Optional[Tensor] = None

    @property
    def output(self):
        return self.fused if self.fused is not None else self.spatial


def triplet_array(frames):
    """Stack (prev, center, next) Frames into a 3 x 1 x H x W x 3 array."""
    if len(frames) != 3:
        raise ShapeError(f"a triplet has 3 frames, got {len(frames)}")
    return np.stack([frame.pixels for frame in frames])[:, None]


def center_of(x, batch):
    """The center-frame slice of a frame-major 3B batch."""
    return ops.slice_axis(x, batch, 2 * batch, axis=0)


class TcvdModel:
    """TCVD network with a name -> Tensor parameter registry."""

    def __init__(self, config=None, seed=0):
        """
        Build and initialize every parameter.

        Convs use He-uniform, attention and the MLP output use Xavier-uniform,
        biases start at zero and LayerNorm scales at one.

        Args:
            config: TcvdConfig (desk-scale when None)
            seed: seed of the initialization generator
        """
        self.config = config or TcvdConfig.desk()
        self.params = OrderedDict()
        rng = np.random.default_rng(seed)
        self._build(rng)
        logger.debug(f"TCVD model with {self.parameter_count()} parameters")

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------

    def _add(self, name, tensor):
        tensor.name = name
        self.params[name] = tensor
        return tensor

    def _conv(self, rng, name, kernel, cin, cout):
        self._add(f'{name}.w', he_uniform(rng, (kernel, kernel, cin, cout), kernel * kernel * cin))
        self._add(f'{name}.b', zeros((cout,)))

    def _build(self, rng):
        filters = self.config.encoder_filters
        cin = 3
        for stage, width in enumerate(filters):
            self._conv(rng, f'enc{stage}.conv1', 3, cin, width)
            self._conv(rng, f'enc{stage}.conv2', 3, width, width)
            self._conv(rng, f'enc{stage}.down', 3, width, width)
            cin = width

        for stage in range(self.config.tpformer_stages):
            width = filters[stage]
            hidden = width * self.config.mlp_ratio
            prefix = f'tp{stage}'
            self._add(f'{prefix}.ln1.gamma', ones((width,)))
            self._add(f'{prefix}.ln1.beta', zeros((width,)))
            for proj in ('w_q', 'w_k', 'w_v', 'w_o'):
                self._add(f'{prefix}.attn.{proj}', xavier_uniform(rng, (width, width), width, width))
            self._add(f'{prefix}.attn.b_o', zeros((width,)))
            self._add(f'{prefix}.ln2.gamma', ones((width,)))
            self._add(f'{prefix}.ln2.beta', zeros((width,)))
            self._add(f'{prefix}.mlp.w1', he_uniform(rng, (width, hidden), width))
            self._add(f'{prefix}.mlp.b1', zeros((hidden,)))
            self._add(f'{prefix}.mlp.w2', xavier_uniform(rng, (hidden, width), hidden, width))
            self._add(f'{prefix}.mlp.b2', zeros((width,)))
            self._conv(rng, f'{prefix}.fuse', 1, 2 * width, width)

        # Decoder levels run deepest first; level s restores the resolution of
        # encoder stage s-1 (or the input for s = 0).
        for stage in reversed(range(len(filters))):
            width = filters[stage]
            out = filters[stage - 1] if stage > 0 else filters[0]
            skip = filters[stage - 1] if stage > 0 else 3
            prefix = f'dec{stage}'
            # transposed_conv2d kernels are kh,kw,Cout,Cin
            self._add(f'{prefix}.up.w', he_uniform(rng, (3, 3, out, width), 9 * width))
            self._add(f'{prefix}.up.b', zeros((out,)))
            self._conv(rng, f'{prefix}.conv1', 3, out + skip, out)
            self._conv(rng, f'{prefix}.conv2', 3, out, out)
        self._add('out.w', xavier_uniform(rng, (3, 3, filters[0], 3), 9 * filters[0], 9 * 3))
        self._add('out.b', zeros((3,)))

    def parameters(self):
        return self.params

    def parameter_count(self):
        return int(sum(p.size for p in self.params.values()))

    def attention_weights(self, stage):
        p = self.params
        prefix = f'tp{stage}.attn'
        return AttentionWeights(
            w_q=p[f'{prefix}.w_q'], w_k=p[f'{prefix}.w_k'], w_v=p[f'{prefix}.w_v'],
            w_o=p[f'{prefix}.w_o'], b_o=p[f'{prefix}.b_o'],
        )

    # ------------------------------------------------------------------
    # Forward pass
    # ------------------------------------------------------------------

    def _check_input(self, x):
        size = self.config.input_size
        if x.ndim != 5 or x.shape[0] != 3 or x.shape[2:] != (size, size, 3):
            raise ShapeError(f"expected a 3 x B x {size} x {size} x 3 triplet batch, got shape {x.shape}")

    def encode(self, x):
        """
        Run the shared CNN stages and the TpFormer fusions.

        Args:
            x: Tensor or array shaped 3 x B x S x S x 3 (prev, center, next)

        Returns:
            list: one StageFeatures per encoder stage; spatial maps are 3B x S/2^(s+1) x S/2^(s+1) x filters[s]

        Raises:
            ShapeError: if x does not match the configured input size
        """
        x = as_tensor(x)
        self._check_input(x)
        batch = x.shape[1]
        h = ops.reshape(x, (3 * batch,) + x.shape[2:])
        p = self.params
        stages = []
        for stage in range(len(self.config.encoder_filters)):
            prefix = f'enc{stage}'
            h = conv_block(h, p[f'{prefix}.conv1.w'], p[f'{prefix}.conv1.b'])
            h = conv_block(h, p[f'{prefix}.conv2.w'], p[f'{prefix}.conv2.b'])
            h = conv_block(h, p[f'{prefix}.down.w'], p[f'{prefix}.down.b'], stride=2)
            features = StageFeatures(spatial=h)
            if stage < self.config.tpformer_stages:
                features.fused, features.attention = self.tpformer_block(stage, h, batch)
                h = features.fused
            stages.append(features)
        return stages

    def tpformer_block(self, stage, features, batch):
        """
        Fuse the three frames' features at every spatial location.

        Tokens are the 3 temporal slices at one location (T = 3, dim C). A
        pre-norm attention + MLP block runs on them with weights shared across
        locations; the result is concatenated with the spatial features and
        projected back to C channels by a 1x1 conv.

        Args:
            stage: TpFormer index
            features: 3B x H x W x C Tensor in frame-major order
            batch: B

        Returns:
            tuple: (fused 3B x H x W x C Tensor, attention weights [B*H*W, heads, 3, 3])
        """
        p = self.params
        prefix = f'tp{stage}'
        _, height, width, channels = features.shape
        tokens = ops.reshape(features, (3, batch * height * width, channels))
        tokens = ops.transpose(tokens, (1, 0, 2))

        normed = ops.layer_norm(tokens, p[f'{prefix}.ln1.gamma'], p[f'{prefix}.ln1.beta'])
        attended, attention = multi_head_attention(
            normed, normed, normed, self.config.heads, self.attention_weights(stage), return_attention=True
        )
        tokens = ops.add(tokens, attended)

        normed = ops.layer_norm(tokens, p[f'{prefix}.ln2.gamma'], p[f'{prefix}.ln2.beta'])
        hidden = ops.relu(linear(normed, p[f'{prefix}.mlp.w1'], p[f'{prefix}.mlp.b1']))
        tokens = ops.add(tokens, linear(hidden, p[f'{prefix}.mlp.w2'], p[f'{prefix}.mlp.b2']))

        temporal = ops.reshape(ops.transpose(tokens, (1, 0, 2)), features.shape)
        merged = ops.concat([temporal, features], axis=3)
        fused = conv_block(merged, p[f'{prefix}.fuse.w'], p[f'{prefix}.fuse.b'], activation=False)
        return fused, attention

    def decode(self, bottleneck, skips, center_input):
        """
        Upsample the center frame's deepest features back to the input size.

        Args:
            bottleneck: B x s x s x filters[-1] Tensor (last encoder stage, center frame)
            skips: center-frame features of every earlier stage, shallowest first
            center_input: B x S x S x 3 Tensor, the center input frame

        Returns:
            Tensor: B x S x S x 3 in [0, 1]

        Raises:
            ShapeError: if the pyramid does not match the configuration
        """
        filters = self.config.encoder_filters
        pyramid = [center_input] + list(skips)
        if len(pyramid) != len(filters):
            raise ShapeError(f"decoder needs {len(filters) - 1} skip tensors, got {len(skips)}")
        p = self.params
        h = bottleneck
        for stage in reversed(range(len(filters))):
            prefix = f'dec{stage}'
            h = ops.relu(ops.add(ops.transposed_conv2d(h, p[f'{prefix}.up.w'], stride=2), p[f'{prefix}.up.b']))
            skip = pyramid[stage]
            if skip.shape[:3] != h.shape[:3]:
                raise ShapeError(f"skip for decoder level {stage} is {skip.shape}, upsampled features are {h.shape}")
            h = ops.concat([h, skip], axis=3)
            h = conv_block(h, p[f'{prefix}.conv1.w'], p[f'{prefix}.conv1.b'])
            h = conv_block(h, p[f'{prefix}.conv2.w'], p[f'{prefix}.conv2.b'])
        return ops.sigmoid(conv_block(h, p['out.w'], p['out.b'], activation=False))

    def forward(self, x):
        """
        Restore the center frame of every triplet in the batch.

        Args:
            x: 3 x B x S x S x 3 Tensor or array

        Returns:
            Tensor: B x S x S x 3
        """
        x = as_tensor(x)
        batch = x.shape[1] if x.ndim == 5 else 0
        stages = self.encode(x)
        bottleneck = center_of(stages[-1].spatial, batch)
        skips = [center_of(s.output, batch) for s in stages[:-1]]
        center_input = ops.slice_axis(x, 1, 2, axis=0)
        center_input = ops.reshape(center_input, center_input.shape[1:])
        return self.decode(bottleneck, skips, center_input)

    __call__ = forward


def load_parameters(model, arrays):
    """Copy arrays (name -> ndarray) into the model's parameters."""
    for name, param in model.params.items():
        value = np.asarray(arrays[name], dtype=np.float64)
        if value.shape != param.shape:
            raise ShapeError(f"parameter '{name}' has shape {param.shape}, got {value.shape}")
        param.data = value.copy()
    return model

