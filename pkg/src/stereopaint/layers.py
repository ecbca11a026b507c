"""The two learned layer types: gated convolution and spectrally normalized convolution."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    ConvSpec,
    ShapeError,
    Tensor,
    concat,
    constant,
    conv2d,
    elu,
    mul,
    mul_scalar,
    narrow,
    reciprocal,
    sigmoid,
    sum_all,
)

ACTIVATIONS = ("elu", "identity")


@dataclass
class GatedConv:
    """Feature convolution modulated elementwise by a learned sigmoid gate.

    Both convolutions share one ConvSpec; the gate output is returned
    separately so the network's last layer can expose its soft mask.
    """

    w_feat: Tensor
    b_feat: Tensor
    w_gate: Tensor
    b_gate: Tensor
    spec: ConvSpec
    activation: str = "elu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.w_feat.shape != self.w_gate.shape:
            raise ShapeError("gated conv: feature and gate weights must share one shape")
        s = self.spec
        self._stacked_spec = ConvSpec(s.kernel_dims, s.stride, s.padding,
                                      s.in_channels, 2 * s.out_channels)


def gated_conv_forward(layer: GatedConv, x: Tensor) -> tuple[Tensor, Tensor]:
    """Returns (features, soft_gate) with features = act(conv_f(x)) * sigmoid(conv_g(x)).

    Both convolutions run as one stacked-output convolution and are split
    afterwards; the math is identical to two separate passes.
    """
    co = layer.spec.out_channels
    both = conv2d(x, concat([layer.w_feat, layer.w_gate], axis=0),
                  concat([layer.b_feat, layer.b_gate], axis=0), layer._stacked_spec)
    feats = narrow(both, 1, 0, co)
    if layer.activation == "elu":
        feats = elu(feats)
    gate = sigmoid(narrow(both, 1, co, co))
    return mul(feats, gate), gate


@dataclass
class SpectralNormState:
    """Weight plus the persisted left singular-vector estimate of its 2D reshape."""

    weight: Tensor
    u_vector: np.ndarray
    power_iterations: int = 1
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.power_iterations < 1:
            raise ValueError("power_iterations must be positive")
        rows = self.weight.shape[0]
        if self.u_vector.shape != (rows,):
            raise ShapeError(f"u_vector shape {self.u_vector.shape}, expected ({rows},)")


def spectral_normalize(state: SpectralNormState, iterations: int | None = None,
                       update_state: bool = True) -> Tensor:
    """Estimate the top singular value by power iteration and return weight / sigma.

    The weight is viewed as (out_channels x rest). With update_state the
    refined u estimate is stored back, as during training; forward passes that
    must stay pure (grad checks, repeated discriminator calls within one
    step) pass update_state=False.
    """
    w2 = state.weight.data.reshape(state.weight.shape[0], -1).astype(np.float64)
    u = state.u_vector.astype(np.float64)
    n = state.power_iterations if iterations is None else iterations
    if n < 1:
        raise ValueError("iterations must be positive")
    v = None
    for _ in range(n):
        v = w2.T @ u
        v = v / max(np.linalg.norm(v), 1e-12)
        u = w2 @ v
        u = u / max(np.linalg.norm(u), 1e-12)
    if update_state:
        state.u_vector = u.astype(np.float32)
    sigma = float(u @ w2 @ v)
    if sigma < 1e-12:
        state.degenerate = True
        return state.weight
    state.degenerate = False
    # sigma as a differentiable function of the weight, u and v held fixed
    rank1 = np.outer(u, v).reshape(state.weight.shape).astype(np.float32)
    sigma_t = sum_all(mul(state.weight, constant(rank1)))
    return mul_scalar(state.weight, reciprocal(sigma_t))
