"""Report figures rendered next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curves(log, path) -> None:
    """Per-epoch training curves: reconstruction and the adversarial terms."""
    epochs = np.arange(1, len(log) + 1)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(epochs, [r.rec for r in log], label="rec", color="tab:blue")
    ax1.plot(epochs, [r.total for r in log], label="total", color="tab:orange", ls="--")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend()
    ax1.set_title("reconstruction")
    ax2.plot(epochs, [r.adv_gen for r in log], label="adv_gen", color="tab:green")
    ax2.plot(epochs, [r.adv_disc for r in log], label="adv_disc", color="tab:red")
    ax2.set_xlabel("epoch")
    ax2.legend()
    ax2.set_title("adversarial terms")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_metric_bars(rows, path) -> None:
    """Grouped PSNR/SSIM bars per bucket, model vs zero-fill baseline."""
    buckets = sorted({r.bucket for r in rows})
    sources = ("model", "zero_fill")
    colors = {"model": "tab:blue", "zero_fill": "tab:gray"}

    def value(bucket, source, field):
        for r in rows:
            if r.bucket == bucket and r.source == source and r.view == "avg":
                return getattr(r, field)
        return float("nan")

    x = np.arange(len(buckets))
    width = 0.35
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    for i, src in enumerate(sources):
        ax1.bar(x + (i - 0.5) * width, [value(b, src, "psnr") for b in buckets],
                width, label=src, color=colors[src])
        ax2.bar(x + (i - 0.5) * width, [value(b, src, "ssim") for b in buckets],
                width, label=src, color=colors[src])
    for ax, label in ((ax1, "PSNR [dB]"), (ax2, "SSIM")):
        ax.set_xticks(x)
        ax.set_xticklabels(buckets)
        ax.set_ylabel(label)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
