"""Checkpoint format: plain-text manifest header followed by TNSR blobs.

Header lines:
    STEREOPAINT-CKPT 1
    meta <key> <value>          model hyperparameters
    tensor <name> <offset> <d0,d1,...>
    end
Offsets are relative to the first byte after the "end" line.
"""

from __future__ import annotations

import io
from pathlib import Path

from .network import ModelParams, build_model, named_buffers, named_parameters
from .tensor import read_tnsr, write_tnsr

MAGIC = "STEREOPAINT-CKPT 1"


def _named_arrays(params: ModelParams):
    for name, tensor in named_parameters(params):
        yield name, tensor.data
    for name, buf in named_buffers(params):
        yield name, buf


def _fmt_widths(tup) -> str:
    return ",".join(str(v) for v in tup)


def save_checkpoint(path, params: ModelParams) -> None:
    blobs = []
    offset = 0
    for name, arr in _named_arrays(params):
        buf = io.BytesIO()
        write_tnsr(arr, buf)
        raw = buf.getvalue()
        blobs.append((name, offset, arr.shape, raw))
        offset += len(raw)
    lines = [MAGIC]
    lines.append(f"meta ablation {params.ablation}")
    lines.append(f"meta iterations {params.iterations}")
    lines.append(f"meta d_levels {params.gaa_cfg.max_disparity}")
    lines.append(f"meta lambda_adv {params.lambda_adv!r}")
    for key in ("enc_channels", "dec_channels", "fullres_channels", "disc_channels"):
        lines.append(f"meta {key} {_fmt_widths(params.widths[key])}")
    for name, off, shape, _ in blobs:
        dims = ",".join(str(d) for d in shape)
        lines.append(f"tensor {name} {off} {dims}")
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for _, _, _, raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> ModelParams:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0 or raw[:nl].decode("ascii", "replace") != MAGIC:
        raise ValueError(f"{path}: not a stereopaint checkpoint")
    meta: dict[str, str] = {}
    entries = []
    pos = nl + 1
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise ValueError(f"{path}: unterminated checkpoint header")
        line = raw[pos:nl].decode("ascii")
        pos = nl + 1
        if line == "end":
            break
        kind, rest = line.split(" ", 1)
        if kind == "meta":
            key, value = rest.split(" ", 1)
            meta[key] = value
        elif kind == "tensor":
            name, off, dims = rest.split(" ")
            shape = tuple(int(d) for d in dims.split(",")) if dims else ()
            entries.append((name, int(off), shape))
        else:
            raise ValueError(f"{path}: unknown header line {line!r}")
    body = raw[pos:]

    widths = {
        key: tuple(int(v) for v in meta[key].split(","))
        for key in ("enc_channels", "dec_channels", "fullres_channels", "disc_channels")
    }
    params = build_model(
        seed=0,
        d_levels=int(meta["d_levels"]),
        iterations=int(meta["iterations"]),
        lambda_adv=float(meta["lambda_adv"]),
        ablation=meta["ablation"],
        widths=widths,
    )
    tensors = dict(named_parameters(params))
    buffers = {name for name, _ in named_buffers(params)}
    for name, off, shape in entries:
        arr = read_tnsr(io.BytesIO(body[off:]))
        if arr.shape != shape:
            raise ValueError(f"{path}: tensor {name} shape {arr.shape} != manifest {shape}")
        if name in tensors:
            if tensors[name].data.shape != arr.shape:
                raise ValueError(f"{path}: tensor {name} shape {arr.shape} does not fit model")
            tensors[name].data = arr
        elif name in buffers:
            params.disc[int(name.split(".")[1])].state.u_vector = arr
        else:
            raise ValueError(f"{path}: unknown tensor {name!r}")
    return params
