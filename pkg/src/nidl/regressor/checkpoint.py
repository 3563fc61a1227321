"""Model checkpoints and their self-describing container.

Layout::

    8 bytes   magic b"NIDLCKPT"
    4 bytes   header length H (uint32, little-endian)
    H bytes   UTF-8 JSON header
    ...       tensor payloads, little-endian, back to back

The header holds the network spec, training cursor, triggers and metrics,
plus one entry per tensor: name, dtype (``<f4`` or ``<f8``), shape, offset
relative to the payload start, byte length and CRC-32. Tensors are written
in the dtype they were trained in, so a reload is bit-exact.
"""

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError, NumericInvariantError
from .network import NetworkSpec, Normalization, Regressor

MAGIC = b"NIDLCKPT"
FORMAT_VERSION = 1

ERROR_BELOW_EPSILON = "error-below-epsilon"
EVERY_N_LOOPS = "every-10000-loops"
EPOCH_END = "epoch-end"
TRIGGERS = (ERROR_BELOW_EPSILON, EVERY_N_LOOPS, EPOCH_END)

_NORM_KEYS = ("norm.input_shift", "norm.input_scale")


@dataclass
class ModelCheckpoint:
    spec: NetworkSpec
    params: dict
    normalization: Normalization
    epoch: int = 0
    loop: int = 0
    step: int = 0
    triggers: tuple = ()
    metrics: dict = field(default_factory=dict)

    @property
    def trigger(self):
        return self.triggers[0] if self.triggers else None

    @classmethod
    def from_model(cls, model, **cursor):
        norm = Normalization(model.norm.input_shift.copy(), model.norm.input_scale.copy(),
                             model.norm.target_shift, model.norm.target_scale)
        return cls(model.spec, model.copy_params(), norm, **cursor)

    def to_model(self):
        model = Regressor(self.spec, init="zeros", normalization=self.normalization)
        model.load_params(self.params)
        return model


def _tensor_entry(name, arr, offset):
    data = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
    entry = {
        "name": name,
        "dtype": np.dtype(arr.dtype).newbyteorder("<").str,
        "shape": list(arr.shape),
        "offset": offset,
        "nbytes": len(data),
        "crc32": zlib.crc32(data),
    }
    return entry, data


def encode_checkpoint(ckpt):
    tensors = dict(ckpt.params)
    tensors["norm.input_shift"] = np.asarray(ckpt.normalization.input_shift, dtype=np.float64)
    tensors["norm.input_scale"] = np.asarray(ckpt.normalization.input_scale, dtype=np.float64)
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        entry, data = _tensor_entry(name, tensors[name], offset)
        entries.append(entry)
        blobs.append(data)
        offset += len(data)
    header = {
        "format": FORMAT_VERSION,
        "spec": ckpt.spec.to_dict(),
        "cursor": {"epoch": ckpt.epoch, "loop": ckpt.loop, "step": ckpt.step},
        "triggers": list(ckpt.triggers),
        "metrics": ckpt.metrics,
        "target_shift": float(ckpt.normalization.target_shift).hex(),
        "target_scale": float(ckpt.normalization.target_scale).hex(),
        "tensors": entries,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", len(head)) + head + b"".join(blobs)


def decode_checkpoint(blob):
    if blob[:8] != MAGIC:
        raise FormatError("not a checkpoint (bad magic)", offset=0)
    if len(blob) < 12:
        raise FormatError("truncated checkpoint header", offset=len(blob))
    (hlen,) = struct.unpack_from("<I", blob, 8)
    start = 12 + hlen
    if len(blob) < start:
        raise FormatError("truncated checkpoint header", offset=len(blob))
    try:
        header = json.loads(blob[12:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}", offset=12) from None
    if header.get("format") != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format {header.get('format')}", offset=12)
    tensors = {}
    for e in header["tensors"]:
        lo = start + e["offset"]
        data = blob[lo:lo + e["nbytes"]]
        if len(data) != e["nbytes"]:
            raise FormatError(f"tensor {e['name']} truncated", offset=lo)
        if zlib.crc32(data) != e["crc32"]:
            raise NumericInvariantError(f"checksum mismatch in tensor {e['name']}")
        tensors[e["name"]] = np.frombuffer(data, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    norm = Normalization(
        tensors.pop("norm.input_shift"), tensors.pop("norm.input_scale"),
        float.fromhex(header["target_shift"]), float.fromhex(header["target_scale"]),
    )
    spec = NetworkSpec.from_dict(header["spec"])
    native = np.dtype(spec.dtype)
    params = {k: v.astype(native, copy=False) for k, v in tensors.items()}
    cur = header["cursor"]
    return ModelCheckpoint(spec, params, norm, cur["epoch"], cur["loop"], cur["step"],
                           tuple(header["triggers"]), header["metrics"])


def save_checkpoint(ckpt, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(encode_checkpoint(ckpt))


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
