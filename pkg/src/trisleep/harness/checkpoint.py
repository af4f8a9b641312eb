"""Binary checkpoints: a named-tensor manifest plus one contiguous payload.

Entries are sorted by name and offsets are deterministic, so save -> load ->
save reproduces the file byte for byte. Loading validates the entire manifest
before any tensor is assigned; a truncated or mismatched file never leaves a
model half-loaded.
"""

import struct

import numpy as np

MAGIC = b"LBCK"
VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is malformed or incompatible with the model."""


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint: wanted {n} bytes, got {len(buf)}")
    return buf


def save_checkpoint(path, tensors: dict, config_hash: str = "") -> None:
    """tensors: name -> float32 array (Parameter.data works directly)."""
    names = sorted(tensors)
    hash_bytes = config_hash.encode("ascii")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HH", VERSION, len(hash_bytes)))
        f.write(hash_bytes)
        f.write(struct.pack("<I", len(names)))
        offset = 0
        for name in names:
            arr = np.asarray(tensors[name], dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(struct.pack("<Q", offset))
            offset += arr.size * 4
        for name in names:
            f.write(np.ascontiguousarray(tensors[name], dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (tensors dict name -> float32 array, config_hash)."""
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, hash_len = struct.unpack("<HH", _read_exact(f, 4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        config_hash = _read_exact(f, hash_len).decode("ascii")
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        manifest = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2))
            name = _read_exact(f, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1))
            shape = tuple(struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(ndim))
            (offset,) = struct.unpack("<Q", _read_exact(f, 8))
            manifest.append((name, shape, offset))
        payload = f.read()
    tensors = {}
    for name, shape, offset in manifest:
        size = int(np.prod(shape)) if shape else 1
        end = offset + size * 4
        if end > len(payload):
            raise CheckpointError(f"{path}: payload truncated for parameter {name!r}")
        tensors[name] = np.frombuffer(payload[offset:end], dtype="<f4").reshape(shape).copy()
    return tensors, config_hash


def load_into(params: dict, tensors: dict, source: str = "checkpoint") -> None:
    """Assign loaded tensors onto model parameters, strictly 1:1.

    Every model parameter must be present with a matching shape, and the
    checkpoint must not contain extras. Nothing is assigned until everything
    validates.
    """
    missing = sorted(set(params) - set(tensors))
    if missing:
        raise CheckpointError(f"{source} is missing parameters: {', '.join(missing[:5])}")
    extra = sorted(set(tensors) - set(params))
    if extra:
        raise CheckpointError(f"{source} has unknown parameters: {', '.join(extra[:5])}")
    _check_shapes(params, tensors, params.keys(), source)
    for name, p in params.items():
        p.data = tensors[name].astype(np.float32).copy()
        p.grad = None


def load_branch(params: dict, tensors: dict, modality: str, source: str = "checkpoint") -> int:
    """Load one branch's weights (parameters prefixed ``<modality>.``) from a
    pretraining checkpoint. Pretraining-only weights in the file are ignored,
    as are the model's fused key/value weights (``.cross.``) — pretraining is
    always single-branch, so those stay at their initialization. Every other
    branch parameter of the model must be covered.
    """
    wanted = {
        name: p
        for name, p in params.items()
        if name.startswith(modality + ".") and ".cross." not in name
    }
    if not wanted:
        raise CheckpointError(f"model has no parameters for branch {modality!r}")
    missing = sorted(set(wanted) - set(tensors))
    if missing:
        raise CheckpointError(f"{source} is missing branch parameters: {', '.join(missing[:5])}")
    _check_shapes(wanted, tensors, wanted.keys(), source)
    for name, p in wanted.items():
        p.data = tensors[name].astype(np.float32).copy()
        p.grad = None
    return len(wanted)


def _check_shapes(params, tensors, names, source):
    for name in names:
        want = params[name].data.shape
        got = tensors[name].shape
        if want != got:
            raise CheckpointError(
                f"{source}: parameter {name!r} has shape {got}, model expects {want}"
            )
