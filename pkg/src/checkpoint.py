#!/usr/bin/env python3
"""
Versioned checkpoint container.

Layout (all integers little-endian):

    magic          8 bytes  b"DATCKPT\\0"
    version        u32
    header_length  u64, then a UTF-8 JSON header {"model_config", "step", "arrays"}
    arrays         repeated "arrays" times:
                   name_length u32, name (UTF-8)
                   dtype_length u8, numpy dtype string such as "<f4"
                   ndim u32, then ndim x u64 dimensions
                   payload_length u64, row-major payload

Model parameters are stored under their state-dict names; optimizer moments
under ``optim.<parameter>.<slot>``.
"""

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Dict, Optional

import numpy as np
import torch

from .errors import CheckpointError, ConfigError, VersionMismatchError
from .model import DagTransformer, ModelConfig, init_params

MAGIC = b"DATCKPT\x00"
FORMAT_VERSION = 1
OPTIM_PREFIX = "optim."


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: "OrderedDict[str, torch.Tensor]"
    step: int = 0
    optimizer_arrays: Dict[str, torch.Tensor] = field(default_factory=dict)

    def build_model(self) -> DagTransformer:
        model = init_params(self.model_config)
        model.load_state_dict(self.params)
        return model


def _write_array(f: BinaryIO, name: str, tensor: torch.Tensor) -> None:
    array = tensor.detach().cpu().numpy()
    # keeps 0-d shapes (AdamW step counters)
    array = array.astype(array.dtype.newbyteorder("<"), order="C", copy=False)
    encoded_name = name.encode("utf-8")
    tag = array.dtype.str.encode("ascii")
    payload = array.tobytes(order="C")
    f.write(struct.pack("<I", len(encoded_name)) + encoded_name)
    f.write(struct.pack("<B", len(tag)) + tag)
    f.write(struct.pack("<I", array.ndim) + struct.pack(f"<{array.ndim}Q", *array.shape))
    f.write(struct.pack("<Q", len(payload)) + payload)


def _read_exact(f: BinaryIO, size: int) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise CheckpointError("checkpoint is truncated")
    return data


def _read_array(f: BinaryIO):
    (name_length,) = struct.unpack("<I", _read_exact(f, 4))
    name = _read_exact(f, name_length).decode("utf-8")
    (tag_length,) = struct.unpack("<B", _read_exact(f, 1))
    dtype = np.dtype(_read_exact(f, tag_length).decode("ascii"))
    (ndim,) = struct.unpack("<I", _read_exact(f, 4))
    shape = struct.unpack(f"<{ndim}Q", _read_exact(f, 8 * ndim))
    (payload_length,) = struct.unpack("<Q", _read_exact(f, 8))
    payload = _read_exact(f, payload_length)
    array = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return name, torch.from_numpy(array.astype(dtype.newbyteorder("="), copy=True))


def optimizer_arrays(model: DagTransformer, optimizer: torch.optim.Optimizer) -> Dict[str, torch.Tensor]:
    """Flatten per-parameter optimizer state into named tensors."""
    arrays = {}
    for name, param in model.named_parameters():
        for slot, value in optimizer.state.get(param, {}).items():
            arrays[f"{OPTIM_PREFIX}{name}.{slot}"] = torch.as_tensor(value)
    return arrays


def restore_optimizer(model: DagTransformer, optimizer: torch.optim.Optimizer, arrays: Dict[str, torch.Tensor]) -> None:
    for name, param in model.named_parameters():
        prefix = f"{OPTIM_PREFIX}{name}."
        state = {key[len(prefix):]: value.clone() for key, value in arrays.items() if key.startswith(prefix)}
        if state:
            optimizer.state[param] = state


def save_checkpoint(
    model: DagTransformer,
    path: Path,
    step: int = 0,
    optimizer: Optional[torch.optim.Optimizer] = None,
) -> None:
    arrays = OrderedDict(model.state_dict())
    if optimizer is not None:
        arrays.update(optimizer_arrays(model, optimizer))
    header = json.dumps({
        "model_config": model.cfg.to_dict(),
        "step": step,
        "arrays": len(arrays),
    }, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header)) + header)
        for name, tensor in arrays.items():
            _write_array(f, name, tensor)
    tmp.replace(path)


def load_checkpoint(path: Path) -> Checkpoint:
    """
    Raises:
        VersionMismatchError: Wrong magic bytes, unknown version or unreadable header
        CheckpointError: Missing file or truncated payload
    """
    try:
        f = open(path, "rb")
    except OSError as e:
        raise CheckpointError(f"cannot open checkpoint {path}: {e}") from e
    with f:
        if f.read(len(MAGIC)) != MAGIC:
            raise VersionMismatchError(f"{path} is not a checkpoint")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"checkpoint version {version} is not supported (expected {FORMAT_VERSION})")
        (header_length,) = struct.unpack("<Q", _read_exact(f, 8))
        try:
            header = json.loads(_read_exact(f, header_length).decode("utf-8"))
            model_config = ModelConfig(**header["model_config"])
            count, step = int(header["arrays"]), int(header["step"])
        except (ValueError, KeyError, TypeError, ConfigError) as e:
            raise VersionMismatchError(f"corrupt checkpoint header in {path}: {e}") from e
        params: "OrderedDict[str, torch.Tensor]" = OrderedDict()
        optim: Dict[str, torch.Tensor] = {}
        for _ in range(count):
            name, tensor = _read_array(f)
            if name.startswith(OPTIM_PREFIX):
                optim[name] = tensor
            else:
                params[name] = tensor
    return Checkpoint(model_config=model_config, params=params, step=step, optimizer_arrays=optim)
