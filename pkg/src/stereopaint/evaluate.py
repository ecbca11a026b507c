"""Held-out evaluation: per-bucket PSNR/SSIM for the model and the zero-fill
baseline, plus the masked-region L1 used by the ablation comparison."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import MaskSpec, StereoSample, assemble_sample, derive_seed, gen_irregular_mask
from .icg import icg_run
from .metrics import psnr, ssim
from .network import ModelParams
from .tensor import Tensor, no_grad

THREADS_ENV = "STEREOPAINT_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}")


@dataclass(frozen=True)
class EvalRow:
    bucket: str
    source: str  # "model" | "zero_fill"
    view: str    # "left" | "right" | "avg"
    psnr: float
    ssim: float


def _infer_pair(params: ModelParams, sample: StereoSample):
    with no_grad():
        yl, yr, _ = icg_run(Tensor(sample.x_left), Tensor(sample.x_right),
                            sample.m_left, sample.m_right, params)
    return yl.data, yr.data


def _sample_metrics(params: ModelParams, sample: StereoSample):
    out_l, out_r = _infer_pair(params, sample)
    return (
        (psnr(out_l, sample.y_left), ssim(out_l, sample.y_left),
         psnr(out_r, sample.y_right), ssim(out_r, sample.y_right)),
        (psnr(sample.x_left, sample.y_left), ssim(sample.x_left, sample.y_left),
         psnr(sample.x_right, sample.y_right), ssim(sample.x_right, sample.y_right)),
    )


def _rows_for(bucket: str, source: str, quad: np.ndarray) -> list[EvalRow]:
    pl, sl, pr, sr = quad
    return [
        EvalRow(bucket, source, "left", pl, sl),
        EvalRow(bucket, source, "right", pr, sr),
        EvalRow(bucket, source, "avg", (pl + pr) / 2.0, (sl + sr) / 2.0),
    ]


def evaluate_samples(params: ModelParams, samples: list[StereoSample],
                     bucket_label: str, threads: int | None = None) -> list[EvalRow]:
    """Mean PSNR/SSIM over the set, per view and averaged, for the model and
    the zero-fill baseline. Sample order fixes the aggregation order."""
    if not samples:
        raise ValueError("evaluate_samples: empty dataset")
    n = threads if threads is not None else worker_count()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            per_sample = list(pool.map(lambda s: _sample_metrics(params, s), samples))
    else:
        per_sample = [_sample_metrics(params, s) for s in samples]
    model_mean = np.mean([m for m, _ in per_sample], axis=0)
    base_mean = np.mean([b for _, b in per_sample], axis=0)
    return _rows_for(bucket_label, "model", model_mean) + \
        _rows_for(bucket_label, "zero_fill", base_mean)


def remask_samples(samples: list[StereoSample], bucket: str, seed: int) -> list[StereoSample]:
    """Regenerate per-view masks at a requested bucket, deterministically."""
    h, w = samples[0].y_left.shape[1:]
    out = []
    for i, s in enumerate(samples):
        ml = gen_irregular_mask(MaskSpec(bucket, derive_seed(seed, i, 11)), h, w)
        mr = gen_irregular_mask(MaskSpec(bucket, derive_seed(seed, i, 12)), h, w)
        out.append(assemble_sample(s.y_left, s.y_right, s.gt_disparity, ml, mr))
    return out


def masked_region_l1(params: ModelParams, samples: list[StereoSample]) -> float:
    """Mean absolute error over hole pixels only, averaged over views and samples."""
    if not samples:
        raise ValueError("masked_region_l1: empty dataset")
    vals = []
    for s in samples:
        out_l, out_r = _infer_pair(params, s)
        for out, y, m in ((out_l, s.y_left, s.m_left), (out_r, s.y_right, s.m_right)):
            holes = m[0] == 0.0
            if not holes.any():
                continue
            vals.append(float(np.mean(np.abs(out[:, holes] - y[:, holes]))))
    if not vals:
        raise ValueError("masked_region_l1: no hole pixels in dataset")
    return float(np.mean(vals))


def rows_to_csv(rows: list[EvalRow]) -> str:
    lines = ["bucket,source,view,psnr,ssim"]
    for r in rows:
        lines.append(f"{r.bucket},{r.source},{r.view},{r.psnr:.4f},{r.ssim:.6f}")
    return "\n".join(lines) + "\n"


def rows_to_text(rows: list[EvalRow]) -> str:
    lines = []
    for r in rows:
        lines.append(f"bucket={r.bucket} source={r.source} view={r.view} "
                     f"psnr={r.psnr:.4f} ssim={r.ssim:.6f}")
    return "\n".join(lines) + "\n"
