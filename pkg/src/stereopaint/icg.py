"""Iterative cross guidance: confidence thresholding, mask updates, role swaps.

Masks are float32 arrays with entries in {0,1} and the internal convention
1 = known. File I/O inverts the external convention (255 = missing) at the
boundary, so no other module ever sees it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (
    BranchOutput,
    ModelParams,
    encoder_decoder_forward,
    fullres_forward,
    fuse_branches,
)
from .tensor import ShapeError, Tensor, add, constant, mul, reshape, scale


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)


def validate_binary_mask(mask, what: str = "mask") -> np.ndarray:
    arr = _as_array(mask)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError(f"{what}: entries must be exactly 0 or 1")
    return arr.astype(np.float32)


def threshold_mask(soft_mask) -> np.ndarray:
    """Confidence rule: known iff the max over the 3 channels exceeds 0.5 strictly."""
    s = _as_array(soft_mask)
    if s.ndim not in (3, 4) or s.shape[-3] != 3:
        raise ShapeError(f"soft mask must be [3,H,W] or [N,3,H,W], got {s.shape}")
    if s.min() < 0.0 or s.max() > 1.0:
        raise ValueError(f"soft mask values outside [0,1]: [{s.min()}, {s.max()}]")
    return (s.max(axis=-3, keepdims=True) > 0.5).astype(np.float32)


def combine_confidence(m_f, m_ed) -> np.ndarray:
    """Both branches must be confident: element-wise product."""
    a = validate_binary_mask(m_f, "m_f")
    b = validate_binary_mask(m_ed, "m_ed")
    if a.shape != b.shape:
        raise ShapeError(f"confidence masks differ in shape: {a.shape} vs {b.shape}")
    return a * b


def _mask3(mask: np.ndarray) -> Tensor:
    return constant(np.repeat(mask, 3, axis=-3))


def compose_iteration_output(r_f: BranchOutput, r_ed: BranchOutput, m_t,
                             x_orig: Tensor, m_known) -> tuple[Tensor, np.ndarray]:
    """Blend the branch mean into the holes that became confident.

    Known pixels always keep their original values; holes that stay
    unconfident remain 0. The returned mask is monotone: m_new >= m_known.
    """
    mt = validate_binary_mask(m_t, "m_t")
    mk = validate_binary_mask(m_known, "m_known")
    if mt.shape != mk.shape:
        raise ShapeError(f"mask shapes differ: {mt.shape} vs {mk.shape}")
    prediction = scale(fuse_branches(r_f, r_ed), 0.5)
    if prediction.shape[:-3] + (1,) + prediction.shape[-2:] != mk.shape:
        raise ShapeError(f"masks {mk.shape} do not pair with images {prediction.shape}")
    fill = (1.0 - mk) * mt
    r = add(mul(x_orig, _mask3(mk)), mul(prediction, _mask3(fill)))
    m_new = np.maximum(mk, fill)
    return r, m_new


@dataclass
class IterationRecord:
    t: int
    view: str                 # "left" for odd t, "right" for even t
    result: Tensor
    confidence: np.ndarray    # combined M_t
    mask_before: np.ndarray
    mask_after: np.ndarray
    params: ModelParams


def icg_run(x_left, x_right, m_left, m_right, params: ModelParams,
            iterations: int | None = None):
    """Run Algorithm-1 style cross guidance for T iterations.

    Returns (y_left_hat, y_right_hat, history); the history carries one record
    per iteration for the training losses. The same params drive every
    iteration, and the attention direction flips with the target view.
    """
    t_total = params.iterations if iterations is None else int(iterations)
    if t_total < 2 or t_total % 2:
        raise ValueError(f"iteration count T={t_total} must be even and >= 2")
    xl = x_left if isinstance(x_left, Tensor) else Tensor(x_left)
    xr = x_right if isinstance(x_right, Tensor) else Tensor(x_right)
    if xl.shape != xr.shape:
        raise ShapeError(f"view shapes differ: {xl.shape} vs {xr.shape}")
    batched = xl.ndim == 4
    if not batched:
        if xl.ndim != 3:
            raise ShapeError(f"images must be [3,H,W] or [N,3,H,W], got {xl.shape}")
        xl = reshape(xl, (1,) + xl.shape)
        xr = reshape(xr, (1,) + xr.shape)
    ml = validate_binary_mask(m_left, "m_left")
    mr = validate_binary_mask(m_right, "m_right")
    if not batched:
        ml = ml.reshape((1,) + ml.shape)
        mr = mr.reshape((1,) + mr.shape)
    want = xl.shape[:1] + (1,) + xl.shape[2:]
    if ml.shape != want or mr.shape != want:
        raise ShapeError(f"masks {ml.shape}/{mr.shape} do not pair with images {xl.shape}")

    x_tar, m_tar, x_ref, m_ref = xl, ml, xr, mr
    direction = "ref_is_right"
    history: list[IterationRecord] = []
    for t in range(1, t_total + 1):
        r_f = fullres_forward(x_tar, constant(m_tar), params)
        r_ed = encoder_decoder_forward(x_tar, constant(m_tar), x_ref, constant(m_ref),
                                       params, direction)
        m_t = combine_confidence(threshold_mask(r_f.soft_mask),
                                 threshold_mask(r_ed.soft_mask))
        r, m_new = compose_iteration_output(r_f, r_ed, m_t, x_tar, m_tar)
        history.append(IterationRecord(
            t=t, view="left" if t % 2 else "right", result=r, confidence=m_t,
            mask_before=m_tar, mask_after=m_new, params=params,
        ))
        x_tar, m_tar, x_ref, m_ref = x_ref, m_ref, r, m_new
        direction = "ref_is_left" if direction == "ref_is_right" else "ref_is_right"

    if not batched:
        for rec in history:
            rec.result = reshape(rec.result, rec.result.shape[1:])
            rec.confidence = rec.confidence[0]
            rec.mask_before = rec.mask_before[0]
            rec.mask_after = rec.mask_after[0]
    return history[-2].result, history[-1].result, history


def missing_count(mask) -> int:
    """Number of still-missing pixels in an internal mask."""
    return int(np.sum(validate_binary_mask(mask) == 0.0))


def dump_history(history, out_dir) -> None:
    """Write each iteration's result as iter_<t>.ppm for inspection."""
    from pathlib import Path

    from .pnm import write_image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rec in history:
        img = rec.result.data
        if img.ndim == 4:
            img = img[0]
        write_image(img, out / f"iter_{rec.t}.ppm")
