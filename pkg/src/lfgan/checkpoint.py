"""Checkpoint file format.

Layout: magic ``LFCK``, format version as little-endian u16, header length as
little-endian u32, a canonical-JSON header (iteration, κ, config echo, RNG
state, scalar fields, and the array manifest), then raw little-endian float32
blobs in manifest order.

Arrays are *snapped* to float32 resolution in memory at save time, so a run
that keeps going after saving and a run resumed from the file see bit-identical
parameters — float32 is exactly representable in the float64 working dtype.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"LFCK"
VERSION = 1


def snap_f32(arr):
    """Round to the nearest float32-representable value, staying float64."""
    return np.asarray(arr, dtype=np.float64).astype(np.float32).astype(np.float64)


@dataclass
class CheckpointData:
    version: int
    iteration: int
    kappa: float
    config: dict
    rng_state: dict
    scalars: dict
    arrays: dict  # name → float64 array (float32-exact values)


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def save_checkpoint(path, *, iteration, kappa, config, arrays,
                    rng_state=None, scalars=None, snap_live=None):
    """Write the file; returns the byte count.

    arrays: ordered {name: ndarray}. snap_live: optional {name: Var-or-array}
    whose in-memory values are replaced by their float32-snapped versions so
    the live process matches what a resume would load.
    """
    manifest = []
    blobs = []
    for name, arr in arrays.items():
        # astype keeps 0-d shapes (ascontiguousarray would promote to 1-d)
        a32 = np.asarray(arr, dtype=np.float64).astype("<f4", order="C")
        manifest.append({"name": name, "shape": list(a32.shape)})
        blobs.append(a32.tobytes())
    header = {
        "iteration": int(iteration),
        "kappa": float(kappa),
        "config": config,
        "rng": rng_state if rng_state is not None else {},
        "scalars": scalars if scalars is not None else {},
        "arrays": manifest,
    }
    head = _canonical_json(header)
    payload = (MAGIC + struct.pack("<H", VERSION)
               + struct.pack("<I", len(head)) + head + b"".join(blobs))
    with open(path, "wb") as fh:
        fh.write(payload)
    if snap_live is not None:
        for name, target in snap_live.items():
            dst = getattr(target, "value", target)
            dst[...] = snap_f32(dst)
    return len(payload)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"not a checkpoint file (magic {data[:4]!r})")
    version = struct.unpack("<H", data[4:6])[0]
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    head_len = struct.unpack("<I", data[6:10])[0]
    try:
        header = json.loads(data[10:10 + head_len])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValueError(f"corrupt checkpoint header: {exc}") from None
    offset = 10 + head_len
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(data):
            raise ValueError(f"checkpoint truncated in blob {entry['name']!r}")
        arr = np.frombuffer(data[offset:end], dtype="<f4").reshape(shape)
        arrays[entry["name"]] = arr.astype(np.float64)
        offset = end
    if offset != len(data):
        raise ValueError(f"{len(data) - offset} trailing bytes after blobs")
    return CheckpointData(version=version,
                          iteration=header["iteration"],
                          kappa=header["kappa"],
                          config=header["config"],
                          rng_state=header["rng"],
                          scalars=header["scalars"],
                          arrays=arrays)
