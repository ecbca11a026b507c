"""Shared oracles: naive nested-loop convolution references, independent of
the vectorized kernels they check."""

import os

# pin BLAS to one thread before numpy loads: keeps results reproducible and
# lets the acceptance suite parallelize training across processes instead
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def conv2d_oracle(x, w, b, stride=1, pad=0):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, co, ho, wo))
    for ni in range(n):
        for o in range(co):
            for i in range(ho):
                for j in range(wo):
                    acc = float(b[o])
                    for c in range(ci):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[ni, c, i * stride + u, j * stride + v] * w[o, c, u, v]
                    out[ni, o, i, j] = acc
    return out


def conv3d_oracle(x, w, b, stride=1, pad=0):
    n, ci, d, h, wd = x.shape
    co, _, kd, kh, kw = w.shape
    xp = np.pad(x.astype(np.float64),
                ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
    do = (d + 2 * pad - kd) // stride + 1
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, co, do, ho, wo))
    w64 = w.astype(np.float64)
    for ni in range(n):
        for o in range(co):
            for s in range(do):
                for i in range(ho):
                    for j in range(wo):
                        window = xp[ni, :, s * stride:s * stride + kd,
                                    i * stride:i * stride + kh,
                                    j * stride:j * stride + kw]
                        out[ni, o, s, i, j] = np.sum(window * w64[o]) + b[o]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(0)
