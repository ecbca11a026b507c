"""Synthetic rectified stereo pairs with ground-truth disparity, irregular
free-form masks bucketed by missing ratio, and dataset directory I/O.

Everything is a pure function of seeds. Per-sample sub-seeds come from a
splitmix64-style hash of (seed, index), so samples can be generated in any
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pnm
from .tensor import load_tensor, save_tensor

_M64 = (1 << 64) - 1

BUCKETS = {
    "b0_20": (0.0, 0.20),
    "b20_40": (0.20, 0.40),
    "b40_60": (0.40, 0.60),
}


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def derive_seed(seed: int, *indices: int) -> int:
    """Hash-chain (seed, i0, i1, ...) into an independent 64-bit sub-seed."""
    h = splitmix64(seed & _M64)
    for ix in indices:
        h = splitmix64(h ^ (ix & _M64))
    return h


@dataclass
class MaskSpec:
    ratio_bucket: str
    seed: int
    max_strokes: int = 32
    vertex_range: tuple[int, int] = (3, 8)
    step_range: tuple[float, float] = (3.0, 8.0)
    width_range: tuple[int, int] = (2, 6)

    def __post_init__(self):
        if self.ratio_bucket not in BUCKETS:
            raise ValueError(f"unknown ratio bucket {self.ratio_bucket!r}, "
                             f"expected one of {sorted(BUCKETS)}")


@dataclass
class StereoSample:
    """Ground-truth pair, per-view masks (1 = known) and the masked inputs."""

    y_left: np.ndarray
    y_right: np.ndarray
    gt_disparity: np.ndarray
    m_left: np.ndarray
    m_right: np.ndarray
    x_left: np.ndarray
    x_right: np.ndarray


def assemble_sample(y_left, y_right, disp, m_left, m_right) -> StereoSample:
    return StereoSample(
        y_left=y_left, y_right=y_right, gt_disparity=disp,
        m_left=m_left, m_right=m_right,
        x_left=y_left * m_left, x_right=y_right * m_right,
    )


def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Random color mosaic plus sinusoidal shading and a few larger rectangles.

    The mosaic cells carry independent colors, so a fully occluded cell is
    unguessable from its surroundings and only recoverable from the other
    view; that is the signal the cross-view machinery is supposed to exploit."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cells = rng.uniform(0.0, 1.0, size=(3, (h + 3) // 4, (w + 3) // 4))
    img = 2.0 * np.repeat(np.repeat(cells, 4, axis=1), 4, axis=2)[:, :h, :w]
    for c in range(3):
        fx = rng.uniform(0.03, 0.15)
        fy = rng.uniform(0.03, 0.15)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        img[c] += rng.uniform(0.2, 0.4) * np.sin(2.0 * math.pi * (fx * xx + fy * yy) + phase)
    for _ in range(int(rng.integers(2, 5))):
        side_y = int(rng.integers(4, 13))
        side_x = int(rng.integers(4, 13))
        y0 = int(rng.integers(0, max(h - side_y, 1)))
        x0 = int(rng.integers(0, max(w - side_x, 1)))
        img[:, y0:y0 + side_y, x0:x0 + side_x] += rng.uniform(-0.5, 0.5, size=3)[:, None, None]
    lo, hi = img.min(), img.max()
    return ((img - lo) / max(hi - lo, 1e-6)).astype(np.float32)


def gen_synthetic_stereo(seed: int, h: int, w: int, max_disp: int) -> StereoSample:
    """Textured right view plus a piecewise-constant disparity field; the left
    view gathers right-view pixels at x - d. Masks start all-known."""
    if h % 4 or w % 4:
        raise ValueError(f"H, W must be divisible by 4, got {h}x{w}")
    if max_disp > w // 4:
        raise ValueError(f"max_disp {max_disp} too large for width {w} (limit {w // 4})")
    rng = np.random.default_rng(seed)
    right = _texture(rng, h, w)
    # depth layers snap to the encoder's 1/4 scale so correspondence stays
    # exactly representable by whole cost-volume slices
    quarter_steps = np.arange(0, max_disp + 1, 4) if max_disp >= 4 else np.arange(max_disp + 1)
    disp = np.full((h, w), int(rng.choice(quarter_steps)), dtype=np.int64)
    for _ in range(int(rng.integers(1, 4))):
        x0, x1 = np.sort(rng.integers(0, w, size=2))
        y0, y1 = np.sort(rng.integers(0, h, size=2))
        disp[y0:y1 + 1, x0:x1 + 1] = int(rng.choice(quarter_steps))
    cols = np.arange(w)
    src = cols[None, :] - disp
    fallback = cols[None, :] - int(disp.min())  # farthest layer fills occlusions
    src = np.where(src < 0, fallback, src)
    src = np.maximum(src, 0)
    left = right[:, np.arange(h)[:, None], src]
    ones = np.ones((1, h, w), dtype=np.float32)
    return assemble_sample(left.astype(np.float32), right,
                       disp[None].astype(np.float32), ones, ones.copy())


def _stroke(rng: np.random.Generator, h: int, w: int, spec: MaskSpec) -> np.ndarray:
    canvas = np.zeros((h, w), dtype=bool)
    yy, xx = np.mgrid[0:h, 0:w]
    x = rng.uniform(0, w - 1)
    y = rng.uniform(0, h - 1)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    radius = rng.integers(spec.width_range[0], spec.width_range[1] + 1) / 2.0
    r2 = max(radius, 0.5) ** 2
    for _ in range(int(rng.integers(spec.vertex_range[0], spec.vertex_range[1] + 1))):
        angle += rng.uniform(-1.0, 1.0)
        step = rng.uniform(*spec.step_range)
        nx = float(np.clip(x + step * math.cos(angle), 0, w - 1))
        ny = float(np.clip(y + step * math.sin(angle), 0, h - 1))
        n_stamps = int(math.hypot(nx - x, ny - y)) + 1
        for k in range(n_stamps + 1):
            cx = x + (nx - x) * k / n_stamps
            cy = y + (ny - y) * k / n_stamps
            canvas |= (xx - cx) ** 2 + (yy - cy) ** 2 <= r2
        x, y = nx, ny
    return canvas


def gen_irregular_mask(spec: MaskSpec, h: int, w: int) -> np.ndarray:
    """Seeded brush strokes accumulated until the missing ratio lands in the
    bucket (lo, hi]; raises if unreachable after bounded attempts."""
    if h < 32 or w < 32:
        raise ValueError(f"mask buckets need at least 32x32 images, got {h}x{w}")
    lo, hi = BUCKETS[spec.ratio_bucket]
    for attempt in range(16):
        rng = np.random.default_rng(derive_seed(spec.seed, attempt))
        missing = np.zeros((h, w), dtype=bool)
        for _ in range(spec.max_strokes):
            ratio = missing.mean()
            if lo < ratio <= hi:
                break
            candidate = missing | _stroke(rng, h, w, spec)
            if candidate.mean() > hi:
                continue  # overshoot; try a different stroke
            missing = candidate
        ratio = missing.mean()
        if lo < ratio <= hi:
            return (~missing).astype(np.float32)[None]
    raise ValueError(f"could not reach bucket {spec.ratio_bucket} within bounded attempts "
                     f"(seed {spec.seed}, {h}x{w})")


def mask_ratio(mask) -> float:
    """Missing-area fraction: zeros / all, on an internal 1 = known mask."""
    from .tensor import Tensor

    arr = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float32)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError("mask_ratio: mask entries must be exactly 0 or 1")
    return float(np.mean(arr == 0.0))


def make_dataset(seed: int, count: int, h: int, w: int, max_disp: int,
                 bucket: str) -> list[StereoSample]:
    """Independent masks per view; deterministic under (seed, index)."""
    samples = []
    for i in range(count):
        base = gen_synthetic_stereo(derive_seed(seed, i, 0), h, w, max_disp)
        m_left = gen_irregular_mask(MaskSpec(bucket, derive_seed(seed, i, 1)), h, w)
        m_right = gen_irregular_mask(MaskSpec(bucket, derive_seed(seed, i, 2)), h, w)
        samples.append(assemble_sample(base.y_left, base.y_right, base.gt_disparity,
                                   m_left, m_right))
    return samples


# ---------------------------------------------------------------------------
# dataset directory layout: NNNN_left.ppm / NNNN_right.ppm / NNNN_mask_left.pgm
# / NNNN_mask_right.pgm / NNNN_disp.tnsr + manifest.txt


def save_dataset(samples, out_dir, *, seed: int, max_disp: int, bucket: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h, w = samples[0].y_left.shape[1:]
    for i, s in enumerate(samples):
        stem = f"{i:04d}"
        pnm.write_image(s.y_left, out / f"{stem}_left.ppm")
        pnm.write_image(s.y_right, out / f"{stem}_right.ppm")
        pnm.write_mask(s.m_left, out / f"{stem}_mask_left.pgm")
        pnm.write_mask(s.m_right, out / f"{stem}_mask_right.pgm")
        save_tensor(out / f"{stem}_disp.tnsr", s.gt_disparity)
    manifest = (f"count {len(samples)}\nheight {h}\nwidth {w}\n"
                f"max_disp {max_disp}\nseed {seed}\nbucket {bucket}\n")
    (out / "manifest.txt").write_text(manifest, encoding="ascii")


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.txt"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.txt in {dataset_dir}")
    meta = {}
    for line in path.read_text(encoding="ascii").splitlines():
        if not line.strip():
            continue
        key, value = line.split(None, 1)
        meta[key] = value.strip()
    for key in ("count", "height", "width", "max_disp", "seed"):
        meta[key] = int(meta[key])
    return meta


def load_dataset(dataset_dir) -> tuple[list[StereoSample], dict]:
    base = Path(dataset_dir)
    meta = load_manifest(base)
    samples = []
    for i in range(meta["count"]):
        stem = f"{i:04d}"
        y_left = pnm.read_image(base / f"{stem}_left.ppm")
        y_right = pnm.read_image(base / f"{stem}_right.ppm")
        m_left = pnm.read_mask(base / f"{stem}_mask_left.pgm")
        m_right = pnm.read_mask(base / f"{stem}_mask_right.pgm")
        disp = load_tensor(base / f"{stem}_disp.tnsr")
        samples.append(assemble_sample(y_left, y_right, disp, m_left, m_right))
    return samples, meta
