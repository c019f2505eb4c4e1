"""Single-file tensor archive used for training checkpoints.

Layout::

    8 bytes   magic b"ODCGAN01"
    8 bytes   header length N, little-endian uint64
    N bytes   UTF-8 JSON header: {"meta": {...}, "tensors": [{name, dtype,
              shape, offset, nbytes}, ...]}
    ...       tensor payload; offsets are relative to the payload start

Tensors are stored C-contiguous and little-endian. Floating point tensors are
``<f4``; integer counters ``<i8``; the RNG state ``|u1``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

MAGIC = b"ODCGAN01"

_DTYPES = {
    torch.float32: "<f4",
    torch.int64: "<i8",
    torch.uint8: "|u1",
}
_NP = {"<f4": np.float32, "<i8": np.int64, "|u1": np.uint8}


class CheckpointError(RuntimeError):
    pass


def save_archive(path, tensors: "OrderedDict[str, torch.Tensor]", meta: dict) -> None:
    """Write ``tensors`` plus ``meta`` atomically (temp file + rename)."""
    entries, chunks, offset = [], [], 0
    for name, t in tensors.items():
        t = t.detach().cpu()
        if t.dtype not in _DTYPES:
            raise CheckpointError(f"{name}: unsupported dtype {t.dtype}")
        code = _DTYPES[t.dtype]
        raw = np.ascontiguousarray(t.numpy().astype(_NP[code], copy=False)).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(t.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".ckpt")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for c in chunks:
                fh.write(c)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_archive(path) -> tuple["OrderedDict[str, torch.Tensor]", dict]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint archive")
    (n,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + n].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    payload = memoryview(data)[16 + n:]
    tensors = OrderedDict()
    for e in header["tensors"]:
        buf = payload[e["offset"]:e["offset"] + e["nbytes"]]
        if len(buf) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated tensor {e['name']}")
        arr = np.frombuffer(buf, dtype=_NP[e["dtype"]]).reshape(e["shape"])
        tensors[e["name"]] = torch.from_numpy(arr.copy())
    return tensors, header["meta"]


def optimizer_tensors(opt: torch.optim.Optimizer, module: torch.nn.Module, prefix: str):
    """Flatten Adam moments of ``module``'s parameters into named tensors."""
    out = OrderedDict()
    for name, p in module.named_parameters():
        state = opt.state.get(p)
        if not state:
            continue
        for key in ("step", "exp_avg", "exp_avg_sq"):
            v = state[key]
            if not torch.is_tensor(v):
                v = torch.tensor(float(v))
            out[f"{prefix}/{name}/{key}"] = v.to(torch.float32)
    return out


def restore_optimizer(opt: torch.optim.Optimizer, module: torch.nn.Module, prefix: str, tensors) -> None:
    for name, p in module.named_parameters():
        key = f"{prefix}/{name}/step"
        if key not in tensors:
            opt.state.pop(p, None)
            continue
        opt.state[p] = {
            "step": tensors[key].clone().reshape(()),
            "exp_avg": tensors[f"{prefix}/{name}/exp_avg"].clone().reshape(p.shape),
            "exp_avg_sq": tensors[f"{prefix}/{name}/exp_avg_sq"].clone().reshape(p.shape),
        }


def module_tensors(module: torch.nn.Module, prefix: str):
    return OrderedDict((f"{prefix}/{k}", v) for k, v in module.state_dict().items())


def restore_module(module: torch.nn.Module, prefix: str, tensors) -> None:
    n = len(prefix) + 1
    state = OrderedDict((k[n:], v) for k, v in tensors.items() if k.startswith(prefix + "/"))
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint does not match the {prefix} architecture: {exc}") from exc
