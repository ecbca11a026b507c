"""Geometry-aware attention over a disparity cost volume.

Feature maps here are channels-last: [H,W,C], optionally with a leading batch
axis. The cost volume stacks the target features against the reference
features shifted by every candidate disparity; a 3D-conv stack regresses
per-disparity attention which is softmax-normalized along the disparity axis
and used to aggregate the reference half of the volume.
"""

from __future__ import annotations

from dataclasses import dataclass

from .tensor import (
    ConvSpec,
    ShapeError,
    Tensor,
    concat,
    conv3d,
    elu,
    max_axis,
    mul,
    narrow,
    reshape,
    save_tensor,
    shift_horizontal,
    softmax_axis,
    sum_axis,
    transpose,
)

DIRECTIONS = ("ref_is_right", "ref_is_left")


@dataclass
class Conv3dLayer:
    """One plain 3D convolution of the attention regression stack."""

    weight: Tensor
    bias: Tensor
    spec: ConvSpec
    activation: str = "identity"


@dataclass(frozen=True)
class GAAConfig:
    max_disparity: int
    feature_channels: int
    conv3d_stack: tuple[ConvSpec, ...]

    def __post_init__(self):
        if self.max_disparity < 1:
            raise ValueError(f"max_disparity {self.max_disparity} must be >= 1")
        c = self.feature_channels
        if not self.conv3d_stack:
            raise ValueError("conv3d_stack must not be empty")
        if self.conv3d_stack[0].in_channels != 2 * c:
            raise ShapeError(f"conv3d stack must take 2C={2 * c} input channels")
        if self.conv3d_stack[-1].out_channels != c:
            raise ShapeError(f"conv3d stack must emit C={c} output channels")


@dataclass
class CostVolume:
    """4D volume [H,W,D,2C] (batched: [N,H,W,D,2C]); first C channels repeat
    the target features, last C hold the reference shifted per disparity."""

    values: Tensor
    direction: str
    max_disparity: int
    feature_channels: int

    def dump(self, path) -> None:
        save_tensor(path, self.values.data)


@dataclass
class AttentionMap:
    """[H,W,D,C] (batched: [N,H,W,D,C]); sums to 1 along the disparity axis."""

    values: Tensor


def _check_features(phi_tar: Tensor, phi_ref: Tensor, cfg: GAAConfig, direction: str) -> None:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction {direction!r} not in {DIRECTIONS}")
    if phi_tar.shape != phi_ref.shape:
        raise ShapeError(f"feature shapes differ: {phi_tar.shape} vs {phi_ref.shape}")
    if phi_tar.ndim not in (3, 4):
        raise ShapeError(f"features must be [H,W,C] or [N,H,W,C], got {phi_tar.shape}")
    if phi_tar.shape[-1] != cfg.feature_channels:
        raise ShapeError(
            f"features have {phi_tar.shape[-1]} channels, config expects {cfg.feature_channels}"
        )


def build_cost_volume(phi_tar: Tensor, phi_ref: Tensor, cfg: GAAConfig,
                      direction: str = "ref_is_right") -> CostVolume:
    """Concatenate target features with reference features shifted by each
    disparity in {0..D-1}; out-of-range columns are zero-filled.

    ref_is_right means the target is the left view, so reference columns move
    right (+d) to line candidate correspondences up with the target.
    """
    _check_features(phi_tar, phi_ref, cfg, direction)
    sign = 1 if direction == "ref_is_right" else -1
    c = cfg.feature_channels
    lead = phi_tar.shape[:-1]
    slices = []
    for d in range(cfg.max_disparity):
        shifted = shift_horizontal(phi_ref, sign * d, 0.0, axis=-2) if d else phi_ref
        pair = concat([phi_tar, shifted], axis=-1)
        slices.append(reshape(pair, lead + (1, 2 * c)))
    values = concat(slices, axis=-2) if len(slices) > 1 else slices[0]
    return CostVolume(values, direction, cfg.max_disparity, c)


def _regress(volume: CostVolume, layers) -> Tensor:
    """Run the conv3d stack over the volume; returns logits shaped like [..,D,C]."""
    vals = volume.values
    batched = vals.ndim == 5
    if not batched:
        vals = reshape(vals, (1,) + vals.shape)
    if layers[0].spec.in_channels != vals.shape[-1]:
        raise ShapeError(
            f"conv3d stack expects {layers[0].spec.in_channels} channels, "
            f"volume has {vals.shape[-1]}"
        )
    # [N,H,W,D,2C] -> [N,2C,D,H,W]: disparity becomes conv depth
    x = transpose(vals, (0, 4, 3, 1, 2))
    for layer in layers:
        x = conv3d(x, layer.weight, layer.bias, layer.spec)
        if layer.activation == "elu":
            x = elu(x)
    if x.shape[1] != volume.feature_channels:
        raise ShapeError(f"conv3d stack emitted {x.shape[1]} channels, "
                         f"expected {volume.feature_channels}")
    x = transpose(x, (0, 3, 4, 2, 1))  # back to [N,H,W,D,C]
    if not batched:
        x = reshape(x, x.shape[1:])
    return x


def attention_from_volume(volume: CostVolume, layers) -> AttentionMap:
    """Conv3d stack then softmax along the disparity axis, per (h,w,c)."""
    return AttentionMap(softmax_axis(_regress(volume, layers), axis=-2))


def aggregate(attention: AttentionMap, volume: CostVolume) -> Tensor:
    """phi_ref_atn[h,w,c] = sum_d A[h,w,d,c] * V_ref[h,w,d,c]."""
    a = attention.values
    c = volume.feature_channels
    if a.shape != volume.values.shape[:-1] + (c,):
        raise ShapeError(f"attention {a.shape} does not match volume {volume.values.shape}")
    v_ref = narrow(volume.values, -1, c, c)
    return sum_axis(mul(a, v_ref), axis=-2)


def gaa_forward(phi_tar: Tensor, phi_ref: Tensor, cfg: GAAConfig, layers,
                direction: str = "ref_is_right") -> Tensor:
    """Full module: [..,H,W,C] x2 -> [..,H,W,2C], target features passed through."""
    volume = build_cost_volume(phi_tar, phi_ref, cfg, direction)
    attention = attention_from_volume(volume, layers)
    return concat([phi_tar, aggregate(attention, volume)], axis=-1)


def gaa_forward_max(phi_tar: Tensor, phi_ref: Tensor, cfg: GAAConfig, layers,
                    direction: str = "ref_is_right") -> Tensor:
    """Ablation variant: the disparity axis is reduced by a hard max of the
    attended reference values instead of their sum, so exactly one disparity
    level wins per (h,w,c), as with max pooling."""
    volume = build_cost_volume(phi_tar, phi_ref, cfg, direction)
    attention = attention_from_volume(volume, layers)
    c = volume.feature_channels
    picked = max_axis(mul(attention.values, narrow(volume.values, -1, c, c)), axis=-2)
    return concat([phi_tar, picked], axis=-1)
