"""
Binary checkpoint container.

Layout: magic ``OCCSCHED``, little-endian uint32 header length, UTF-8 JSON
header, then the raw little-endian array blocks in header order. Every block
entry records shape, dtype, offset from the start of the data section and
the sha256 of its bytes.
"""

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"OCCSCHED"
CHECKPOINT_VERSION = 1
KINDS = ("generator", "imputer", "markov")


class CheckpointError(ValueError):
    pass


class ChecksumError(CheckpointError):
    pass


class KindMismatchError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def _model_class(kind: str):
    from schedule_models import GeneratorModel, ImputerModel, MarkovModel

    return {"generator": GeneratorModel, "imputer": ImputerModel, "markov": MarkovModel}[kind]


def write_container(path: Union[str, Path], kind: str, meta: dict, arrays: Dict[str, np.ndarray]) -> Path:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    blocks, payload, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        raw = arr.astype(dtype, copy=False).tobytes()
        blocks.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": dtype.str,
                "offset": offset,
                "nbytes": len(raw),
                "sha256": hashlib.sha256(raw).hexdigest(),
            }
        )
        payload.append(raw)
        offset += len(raw)
    header = {"version": CHECKPOINT_VERSION, "kind": kind, "meta": meta, "blocks": blocks}
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        for raw in payload:
            fh.write(raw)
    logger.debug("wrote %s checkpoint with %d blocks to %s", kind, len(blocks), path)
    return path


def read_container(path: Union[str, Path]) -> Tuple[str, dict, Dict[str, np.ndarray]]:
    """
    :return: (kind, meta, arrays)
    :raises CheckpointError: bad magic or truncated file
    :raises CheckpointVersionError: unknown container version
    :raises ChecksumError: a block does not match its recorded sha256
    """
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    start = len(MAGIC)
    if len(data) < start + 4:
        raise CheckpointError(f"{path} is truncated")
    (size,) = struct.unpack("<I", data[start : start + 4])
    try:
        header = json.loads(data[start + 4 : start + 4 + size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path}: unreadable header ({err})") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint version {header.get('version')} is not supported (expected {CHECKPOINT_VERSION})"
        )
    body = data[start + 4 + size :]
    arrays = {}
    for block in header["blocks"]:
        raw = body[block["offset"] : block["offset"] + block["nbytes"]]
        if len(raw) != block["nbytes"]:
            raise CheckpointError(f"{path}: block {block['name']!r} is truncated")
        if hashlib.sha256(raw).hexdigest() != block["sha256"]:
            raise ChecksumError(f"{path}: checksum mismatch in block {block['name']!r}")
        arr = np.frombuffer(raw, dtype=np.dtype(block["dtype"])).reshape(block["shape"])
        arrays[block["name"]] = arr.copy()
    return header["kind"], header["meta"], arrays


def save_checkpoint(model, path: Union[str, Path]) -> Path:
    """Store a generator, imputer or Markov model."""
    kind = getattr(model, "KIND", None)
    if kind not in KINDS:
        raise ValueError(f"cannot checkpoint object of type {type(model).__name__}")
    meta, arrays = model.to_state()
    return write_container(path, kind, meta, arrays)


def load_checkpoint(path: Union[str, Path], expected_kind: str = None):
    """
    Rebuild the stored model.

    :param expected_kind: "generator", "imputer" or "markov"; a different
        stored kind raises KindMismatchError
    """
    kind, meta, arrays = read_container(path)
    if expected_kind is not None and kind != expected_kind:
        raise KindMismatchError(f"{path} holds a {kind} checkpoint, expected {expected_kind}")
    if kind not in KINDS:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    return _model_class(kind).from_state(meta, arrays)
