"""Training loop: alternating generator/discriminator SGD-with-momentum steps,
fully deterministic under the seed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import StereoSample, derive_seed
from .icg import icg_run
from .losses import (
    LossReport,
    detach_history,
    discriminator_adv_value,
    generator_adv_loss,
    rec_loss,
)
from .network import (
    ModelParams,
    advance_spectral,
    build_model,
    discriminator_named_parameters,
    generator_named_parameters,
)
from .tensor import Tensor, add, scale


class TrainingDiverged(RuntimeError):
    pass


class SGD:
    """Plain SGD with momentum over named parameters; stateless beyond velocities."""

    def __init__(self, params, lr: float, momentum: float = 0.9):
        self.params = list(params)
        self.lr = np.float32(lr)
        self.momentum = np.float32(momentum)
        self.velocity = {name: np.zeros_like(p.data) for name, p in self.params}

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self) -> None:
        for name, p in self.params:
            if p.grad is None:
                continue
            v = self.momentum * self.velocity[name] + p.grad
            self.velocity[name] = v
            p.data = p.data - self.lr * v


def _first_nonfinite(root: Tensor) -> str:
    """Forward-order scan of the graph for the earliest non-finite tensor."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:  # post-order lists inputs before consumers
        if not np.all(np.isfinite(node.data)):
            return f"op={node.op!r} shape={node.data.shape}"
    return "unlocated"


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


@dataclass
class TrainResult:
    params: ModelParams
    log: list[LossReport]


def train_model(samples: list[StereoSample], *, seed: int, epochs: int,
                batch_size: int = 4, learning_rate: float = 1e-2,
                momentum: float = 0.9, d_levels: int = 8, iterations: int = 6,
                lambda_adv: float = 0.01, ablation: str = "gaa",
                widths: dict | None = None, params: ModelParams | None = None,
                on_epoch=None) -> TrainResult:
    if not samples:
        raise ValueError("empty training set")
    if params is None:
        params = build_model(seed, d_levels=d_levels, iterations=iterations,
                             lambda_adv=lambda_adv, ablation=ablation, widths=widths)
    opt_g = SGD(generator_named_parameters(params), learning_rate, momentum)
    opt_d = SGD(discriminator_named_parameters(params), learning_rate, momentum)
    shuffle_rng = np.random.default_rng(derive_seed(seed, 0x5487FFE))

    x_l = np.stack([s.x_left for s in samples])
    x_r = np.stack([s.x_right for s in samples])
    m_l = np.stack([s.m_left for s in samples])
    m_r = np.stack([s.m_right for s in samples])
    y_l = np.stack([s.y_left for s in samples])
    y_r = np.stack([s.y_right for s in samples])

    log: list[LossReport] = []
    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(len(samples))
        sums = np.zeros(3, dtype=np.float64)
        steps = 0
        for batch in _batches(order, batch_size):
            advance_spectral(params)
            yl_t = Tensor(y_l[batch])
            yr_t = Tensor(y_r[batch])

            _, _, history = icg_run(Tensor(x_l[batch]), Tensor(x_r[batch]),
                                    m_l[batch], m_r[batch], params)
            rec = rec_loss(history, yl_t, yr_t)
            adv_gen = generator_adv_loss(history, params)
            g_total = add(rec, scale(adv_gen, params.lambda_adv))
            if not np.isfinite(g_total.data):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; first non-finite tensor: "
                    f"{_first_nonfinite(g_total)}"
                )
            opt_g.zero_grad()
            opt_d.zero_grad()
            g_total.backward()
            opt_g.step()

            detached = detach_history(history)
            adv_disc = discriminator_adv_value(detached, yl_t, yr_t, params)
            opt_d.zero_grad()
            d_loss = scale(adv_disc, -1.0)
            d_loss.backward()
            opt_d.step()

            sums += (rec.item(), adv_gen.item(), adv_disc.item())
            steps += 1
        rec_m, gen_m, disc_m = (sums / steps).tolist()
        report = LossReport.create(rec_m, gen_m, disc_m, params.lambda_adv)
        log.append(report)
        if on_epoch is not None:
            on_epoch(epoch, report)
    return TrainResult(params=params, log=log)
