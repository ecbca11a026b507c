"""Training objectives: per-iteration L1 reconstruction plus the GAN terms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ModelParams, discriminator_forward
from .tensor import (
    ShapeError,
    Tensor,
    absolute,
    add,
    clamp,
    concat,
    log,
    mean_all,
    reshape,
    scale,
    sub,
)

_EPS = 1e-6


@dataclass(frozen=True)
class LossReport:
    rec: float
    adv_gen: float
    adv_disc: float
    total: float

    @classmethod
    def create(cls, rec: float, adv_gen: float, adv_disc: float, lambda_adv: float):
        return cls(rec=rec, adv_gen=adv_gen, adv_disc=adv_disc,
                   total=total_loss(rec, adv_gen, lambda_adv))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _split_views(history):
    lefts = [r for r in history if r.view == "left"]
    rights = [r for r in history if r.view == "right"]
    if not lefts or len(lefts) != len(rights):
        raise ValueError(
            f"history must hold T/2 snapshots per view, got {len(lefts)} left / {len(rights)} right"
        )
    return lefts, rights


def rec_loss(history, y_left, y_right) -> Tensor:
    """Sum over iterations of the per-view mean-per-pixel L1 distances."""
    _split_views(history)
    yl, yr = _as_tensor(y_left), _as_tensor(y_right)
    total = None
    for rec in history:
        y = yl if rec.view == "left" else yr
        if rec.result.shape != y.shape:
            raise ShapeError(f"snapshot {rec.result.shape} vs ground truth {y.shape}")
        term = mean_all(absolute(sub(rec.result, y)))
        total = term if total is None else add(total, term)
    return total


def _mean_log(scores: Tensor) -> Tensor:
    arr = scores.data
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"discriminator scores outside [0,1]: [{arr.min()}, {arr.max()}]")
    return mean_all(log(clamp(scores, _EPS, 1.0 - _EPS)))


def _ones_like(t: Tensor) -> Tensor:
    return Tensor(np.ones(t.shape, dtype=np.float32))


def _stack_batch(tensors) -> Tensor:
    """Concatenate along the batch axis, promoting [3,H,W] inputs to [1,3,H,W].

    All snapshots share a shape, so a sum of per-snapshot means equals
    len(tensors) times the mean over the stack; stacking turns T
    discriminator passes into one.
    """
    ts = [t if t.ndim == 4 else reshape(t, (1,) + t.shape) for t in tensors]
    return ts[0] if len(ts) == 1 else concat(ts, axis=0)


def generator_adv_loss(history, params: ModelParams) -> Tensor:
    """Non-saturating generator objective: -sum_t mean log D(snapshot)."""
    stacked = _stack_batch([rec.result for rec in history])
    return scale(_mean_log(discriminator_forward(stacked, params)), -float(len(history)))


def discriminator_adv_value(history, y_left, y_right, params: ModelParams) -> Tensor:
    """The adversarial sum the discriminator maximizes (Dis high on real, low on fake)."""
    lefts, _ = _split_views(history)
    pairs = len(lefts)
    reals = _stack_batch([_as_tensor(y_left), _as_tensor(y_right)])
    real_term = scale(_mean_log(discriminator_forward(reals, params)), 2.0 * pairs)
    fakes = discriminator_forward(_stack_batch([rec.result for rec in history]), params)
    fake_term = scale(_mean_log(sub(_ones_like(fakes), fakes)), float(len(history)))
    return add(real_term, fake_term)


def adv_losses(history, y_left, y_right, params: ModelParams) -> tuple[Tensor, Tensor]:
    """Returns (gen_term, disc_term) as scalar tensors."""
    return (generator_adv_loss(history, params),
            discriminator_adv_value(history, y_left, y_right, params))


def total_loss(rec: float, adv_gen: float, lambda_adv: float) -> float:
    if lambda_adv < 0:
        raise ValueError(f"lambda_adv {lambda_adv} must be >= 0")
    return float(rec) + lambda_adv * float(adv_gen)


def detach_history(history):
    """Shallow copies whose results are cut from the generator graph."""
    import copy

    out = []
    for rec in history:
        clone = copy.copy(rec)
        clone.result = rec.result.detach()
        out.append(clone)
    return out
