"""Network assembly: shared gated-conv encoder, attention-bridged decoder,
full-resolution branch, and the spectrally normalized patch discriminator.

All forward functions take single images [3,H,W] with masks [1,H,W] per their
contracts, and transparently accept a leading batch axis (training batches
samples); outputs match the input form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaa import Conv3dLayer, GAAConfig, gaa_forward, gaa_forward_max
from .layers import GatedConv, SpectralNormState, gated_conv_forward, spectral_normalize
from .tensor import (
    ConvSpec,
    ShapeError,
    Tensor,
    add,
    clamp,
    concat,
    conv2d,
    leaky_relu,
    mul,
    narrow,
    reshape,
    resample,
    sigmoid,
    transpose,
)

ABLATIONS = ("gaa", "max", "concat")


@dataclass
class SpectralConv:
    state: SpectralNormState
    bias: Tensor
    spec: ConvSpec


@dataclass
class BranchOutput:
    """restored in [0,1]; soft_mask is the last layer's 3-channel gate in (0,1)."""

    restored: Tensor
    soft_mask: Tensor


@dataclass
class ModelParams:
    encoder: list[GatedConv]
    gaa_cfg: GAAConfig
    gaa_layers: list[Conv3dLayer]
    decoder: list[GatedConv]
    fullres: list[GatedConv]
    disc: list[SpectralConv]
    lambda_adv: float = 0.01
    iterations: int = 6
    ablation: str = "gaa"
    widths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.iterations < 2 or self.iterations % 2:
            raise ValueError(f"iterations T={self.iterations} must be even and >= 2")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation {self.ablation!r} not in {ABLATIONS}")
        if len(self.fullres) != 4:
            raise ValueError("full-resolution branch must have exactly 4 gated conv layers")


DEFAULT_WIDTHS = {
    "enc_channels": (16, 32),
    "dec_channels": (32, 16),
    "fullres_channels": (16, 16, 16),
    "disc_channels": (32, 64, 64),
}


def _gated(rng, ci, co, stride, activation, feat_bias=0.0, gate_bias=0.0,
           kernel=3, pool_passthrough=0) -> GatedConv:
    spec = ConvSpec((kernel, kernel), stride=stride, padding=kernel // 2,
                    in_channels=ci, out_channels=co)
    std = math.sqrt(2.0 / (ci * kernel * kernel))
    w_feat = rng.normal(0.0, std, (co, ci, kernel, kernel)).astype(np.float32)
    w_gate = rng.normal(0.0, std, (co, ci, kernel, kernel)).astype(np.float32)
    if pool_passthrough:
        # first channels start as a 2x2 average pool of the matching inputs,
        # so quarter-scale features carry recognizable content from step one
        # (ELU is the identity on the non-negative image range)
        for ch in range(pool_passthrough):
            w_feat[ch] *= 0.1
            for ky, kx in ((1, 1), (1, 2), (2, 1), (2, 2)):
                w_feat[ch, ch, ky, kx] += 0.25
    return GatedConv(
        w_feat=Tensor(w_feat, requires_grad=True),
        b_feat=Tensor(np.full(co, feat_bias, dtype=np.float32), requires_grad=True),
        w_gate=Tensor(w_gate, requires_grad=True),
        b_gate=Tensor(np.full(co, gate_bias, dtype=np.float32), requires_grad=True),
        spec=spec,
        activation=activation,
    )


def build_model(seed: int, *, d_levels: int = 8, iterations: int = 6,
                lambda_adv: float = 0.01, ablation: str = "gaa",
                widths: dict | None = None) -> ModelParams:
    """Construct all learnable state, deterministically from the seed."""
    w = dict(DEFAULT_WIDTHS)
    if widths:
        w.update(widths)
    enc = tuple(w["enc_channels"])
    dec = tuple(w["dec_channels"])
    fr = tuple(w["fullres_channels"])
    dc = tuple(w["disc_channels"])
    rng = np.random.default_rng(seed)

    encoder = [
        _gated(rng, 4, enc[0], stride=2, activation="elu", gate_bias=2.0,
               pool_passthrough=4),
        _gated(rng, enc[0], enc[1], stride=2, activation="elu", gate_bias=2.0,
               pool_passthrough=4),
    ]

    c = enc[1]
    stack = (
        ConvSpec((3, 3, 3), stride=1, padding=1, in_channels=2 * c, out_channels=c),
        ConvSpec((3, 3, 3), stride=1, padding=1, in_channels=c, out_channels=c),
    )
    gaa_cfg = GAAConfig(max_disparity=d_levels, feature_channels=c, conv3d_stack=stack)
    # Matching-prior initialization: with random weights the softmax starts
    # uniform, the aggregated reference is a blur of all shifts, and the
    # decoder never learns to read it (observed bootstrap failure at this
    # scale). Start the stack as a feature-difference detector instead: six
    # layer-1 units respond to signed target/reference differences of the
    # pooled RGB channels, layer 2 turns their summed magnitude into a
    # penalty, so attention initially peaks where the shifted reference
    # agrees with the target. Small noise keeps every tap trainable.
    # gain large enough that the negative ELU branch saturates, otherwise the
    # +/- pair cancels and |difference| is invisible to the stack
    w1 = rng.normal(0.0, 0.02, (c, 2 * c, 3, 3, 3)).astype(np.float32)
    for unit in range(6):
        feat = unit // 2
        sign = 12.0 if unit % 2 == 0 else -12.0
        w1[unit, feat, 1, 1, 1] += sign
        w1[unit, c + feat, 1, 1, 1] -= sign
    w2 = rng.normal(0.0, 0.02, (c, c, 3, 3, 3)).astype(np.float32)
    w2[:, :6, 1, 1, 1] -= 2.0
    # spatial smoothing of the match evidence, so hole cells inherit their
    # neighbours' disparity preference
    for dy, dx in ((0, 1), (2, 1), (1, 0), (1, 2)):
        w2[:, :6, 1, dy, dx] -= 0.5
    gaa_layers = [
        Conv3dLayer(weight=Tensor(w1, requires_grad=True),
                    bias=Tensor(np.zeros(c, dtype=np.float32), requires_grad=True),
                    spec=stack[0], activation="elu"),
        Conv3dLayer(weight=Tensor(w2, requires_grad=True),
                    bias=Tensor(np.zeros(c, dtype=np.float32), requires_grad=True),
                    spec=stack[1], activation="identity"),
    ]

    decoder = [
        # 1x1 fusion keeps cross-view alignment the attention module's job;
        # the quarter-scale decoder cannot re-align cells spatially
        _gated(rng, 2 * c, dec[0], stride=1, activation="elu", kernel=1),
        _gated(rng, dec[0], dec[1], stride=1, activation="elu"),
        _gated(rng, dec[1], 3, stride=1, activation="identity", feat_bias=0.5, gate_bias=1.0),
    ]

    fullres = [
        _gated(rng, 4, fr[0], stride=1, activation="elu"),
        _gated(rng, fr[0], fr[1], stride=1, activation="elu"),
        _gated(rng, fr[1], fr[2], stride=1, activation="elu"),
        _gated(rng, fr[2], 3, stride=1, activation="identity", feat_bias=0.5, gate_bias=1.0),
    ]

    disc = []
    chans = (3,) + dc + (1,)
    for ci, co in zip(chans[:-1], chans[1:]):
        spec = ConvSpec((3, 3), stride=2, padding=1, in_channels=ci, out_channels=co)
        std = math.sqrt(2.0 / (ci * 9))
        weight = Tensor(rng.normal(0.0, std, (co, ci, 3, 3)), requires_grad=True)
        u = rng.normal(size=co).astype(np.float32)
        u /= max(np.linalg.norm(u), 1e-12)
        disc.append(SpectralConv(
            state=SpectralNormState(weight=weight, u_vector=u, power_iterations=1),
            bias=Tensor(np.zeros(co, dtype=np.float32), requires_grad=True),
            spec=spec,
        ))

    return ModelParams(
        encoder=encoder, gaa_cfg=gaa_cfg, gaa_layers=gaa_layers, decoder=decoder,
        fullres=fullres, disc=disc, lambda_adv=lambda_adv, iterations=iterations,
        ablation=ablation,
        widths={"enc_channels": enc, "dec_channels": dec,
                "fullres_channels": fr, "disc_channels": dc},
    )


# ---------------------------------------------------------------------------
# parameter bookkeeping


def named_parameters(params: ModelParams):
    yield from generator_named_parameters(params)
    yield from discriminator_named_parameters(params)


def generator_named_parameters(params: ModelParams):
    for group, layers in (("encoder", params.encoder), ("decoder", params.decoder),
                          ("fullres", params.fullres)):
        for i, lyr in enumerate(layers):
            yield f"{group}.{i}.w_feat", lyr.w_feat
            yield f"{group}.{i}.b_feat", lyr.b_feat
            yield f"{group}.{i}.w_gate", lyr.w_gate
            yield f"{group}.{i}.b_gate", lyr.b_gate
    for i, lyr in enumerate(params.gaa_layers):
        yield f"gaa.{i}.weight", lyr.weight
        yield f"gaa.{i}.bias", lyr.bias


def discriminator_named_parameters(params: ModelParams):
    for i, lyr in enumerate(params.disc):
        yield f"disc.{i}.weight", lyr.state.weight
        yield f"disc.{i}.bias", lyr.bias


def named_buffers(params: ModelParams):
    for i, lyr in enumerate(params.disc):
        yield f"disc.{i}.u_vector", lyr.state.u_vector


def advance_spectral(params: ModelParams) -> None:
    """One persisted power-iteration step per discriminator weight."""
    for lyr in params.disc:
        spectral_normalize(lyr.state)


# ---------------------------------------------------------------------------
# forward passes


def _ensure_batched(t: Tensor, rank: int, what: str) -> tuple[Tensor, bool]:
    if t.ndim == rank:
        return reshape(t, (1,) + t.shape), False
    if t.ndim == rank + 1:
        return t, True
    raise ShapeError(f"{what}: expected rank {rank} or {rank + 1}, got shape {t.shape}")


def _unbatch(t: Tensor, batched: bool) -> Tensor:
    return t if batched else reshape(t, t.shape[1:])


def _mask3(mask: Tensor) -> Tensor:
    return concat([mask, mask, mask], axis=1)


def _masked_input(image: Tensor, mask: Tensor) -> Tensor:
    """Zero the holes and append the mask as a fourth channel."""
    if image.shape[1] != 3 or mask.shape[1] != 1 or image.shape[2:] != mask.shape[2:]:
        raise ShapeError(f"image {image.shape} / mask {mask.shape} do not pair up")
    return concat([mul(image, _mask3(mask)), mask], axis=1)


def _encode(image_b: Tensor, mask_b: Tensor, params: ModelParams) -> Tensor:
    h, w = image_b.shape[2:]
    if h % 4 or w % 4:
        raise ShapeError(f"encoder needs H, W divisible by 4, got {h}x{w}")
    x = _masked_input(image_b, mask_b)
    for layer in params.encoder:
        x, _ = gated_conv_forward(layer, x)
    return x


def encoder_forward(image: Tensor, mask: Tensor, params: ModelParams) -> Tensor:
    """Masked image -> feature map at 1/4 scale (two stride-2 gated convs)."""
    img, batched = _ensure_batched(image, 3, "encoder image")
    msk, _ = _ensure_batched(mask, 3, "encoder mask")
    return _unbatch(_encode(img, msk, params), batched)


def _bridge(phi_tar: Tensor, phi_ref: Tensor, params: ModelParams, direction: str) -> Tensor:
    """Combine the two encodings per the configured mode; output [N,2C,Hq,Wq]."""
    if params.ablation == "concat":
        return concat([phi_tar, phi_ref], axis=1)
    ta = transpose(phi_tar, (0, 2, 3, 1))
    ra = transpose(phi_ref, (0, 2, 3, 1))
    fwd = gaa_forward if params.ablation == "gaa" else gaa_forward_max
    out = fwd(ta, ra, params.gaa_cfg, params.gaa_layers, direction)
    return transpose(out, (0, 3, 1, 2))


def _decode(x: Tensor, params: ModelParams) -> BranchOutput:
    x, _ = gated_conv_forward(params.decoder[0], x)
    x = resample(x, "up2")
    x, _ = gated_conv_forward(params.decoder[1], x)
    x = resample(x, "up2")
    feats, gate = gated_conv_forward(params.decoder[2], x)
    return BranchOutput(restored=clamp(feats, 0.0, 1.0), soft_mask=gate)


def encoder_decoder_forward(target_img: Tensor, target_mask: Tensor, ref_img: Tensor,
                            ref_mask: Tensor, params: ModelParams,
                            direction: str = "ref_is_right") -> BranchOutput:
    """Encode both views with the shared encoder, bridge them, decode the target."""
    if target_img.shape != ref_img.shape:
        raise ShapeError(f"view shapes differ: {target_img.shape} vs {ref_img.shape}")
    timg, batched = _ensure_batched(target_img, 3, "target image")
    tmask, _ = _ensure_batched(target_mask, 3, "target mask")
    rimg, _ = _ensure_batched(ref_img, 3, "reference image")
    rmask, _ = _ensure_batched(ref_mask, 3, "reference mask")
    # one shared-encoder pass over both views, stacked along the batch axis
    n = timg.shape[0]
    phi = _encode(concat([timg, rimg], axis=0), concat([tmask, rmask], axis=0), params)
    phi_tar = narrow(phi, 0, 0, n)
    phi_ref = narrow(phi, 0, n, n)
    out = _decode(_bridge(phi_tar, phi_ref, params, direction), params)
    return BranchOutput(_unbatch(out.restored, batched), _unbatch(out.soft_mask, batched))


def fullres_forward(target_img: Tensor, target_mask: Tensor,
                    params: ModelParams) -> BranchOutput:
    """Four gated convolutions at full resolution, no resampling anywhere."""
    img, batched = _ensure_batched(target_img, 3, "fullres image")
    msk, _ = _ensure_batched(target_mask, 3, "fullres mask")
    x = _masked_input(img, msk)
    for layer in params.fullres[:-1]:
        x, _ = gated_conv_forward(layer, x)
    feats, gate = gated_conv_forward(params.fullres[-1], x)
    return BranchOutput(_unbatch(clamp(feats, 0.0, 1.0), batched), _unbatch(gate, batched))


def fuse_branches(a: BranchOutput, b: BranchOutput) -> Tensor:
    """Element-wise addition of the two restored images (pre-mask fusion)."""
    return add(a.restored, b.restored)


def discriminator_forward(image: Tensor, params: ModelParams) -> Tensor:
    """Patch scores in (0,1); every conv weight is spectrally normalized first."""
    img, batched = _ensure_batched(image, 3, "discriminator image")
    h, w = img.shape[2:]
    if h < 32 or w < 32:
        raise ShapeError(f"discriminator needs H, W >= 32, got {h}x{w}")
    x = img
    last = len(params.disc) - 1
    for i, lyr in enumerate(params.disc):
        w_eff = spectral_normalize(lyr.state, update_state=False)
        x = conv2d(x, w_eff, lyr.bias, lyr.spec)
        if i != last:
            x = leaky_relu(x, 0.2)
    return _unbatch(sigmoid(x), batched)
