"""Binary checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic b"MARLCKPT"
    uint32    format version (currently 1)
    uint32    header length H
    H bytes   UTF-8 JSON header (sorted keys)
    ...       payload: float32 little-endian blocks in header order

The header names the algorithm, the learner's constructor spec, the
hyperparameters, every network's architecture, the optimiser states, the RNG
state, counters and a CRC-32 of the payload. Network parameters are stored
in declared layer order (W0, b0, W1, b1, ...), followed by the Adam moments.
Runtime arithmetic is double precision, so a loaded learner reproduces the
single-precision-rounded parameters exactly, not the in-memory doubles.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from ..algorithms import LEARNERS
from ..errors import CheckpointError
from ..nn import Hyperparams

MAGIC = b"MARLCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


def _blocks(learner):
    """(name, array) pairs in payload order."""
    out = []
    for name, net in learner.networks().items():
        for k, p in enumerate(net.parameters()):
            out.append((f"{name}.p{k}", p))
    for name, opt in learner.optimizers().items():
        for k, (m, v) in enumerate(zip(opt.m, opt.v)):
            out.append((f"{name}.m{k}", m))
            out.append((f"{name}.v{k}", v))
    return out


def checkpoint_bytes(learner, counters=None):
    blocks = _blocks(learner)
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in blocks)
    header = {
        "algorithm": learner.algorithm,
        "spec": learner.spec(),
        "hyperparams": learner.hp.to_dict(),
        "architecture": {n: net.architecture for n, net in learner.networks().items()},
        "optimizers": {n: {"kind": o.kind, "learning_rate": o.learning_rate, "beta1": o.beta1,
                           "beta2": o.beta2, "epsilon_stab": o.epsilon_stab, "step_count": o.step_count}
                       for n, o in learner.optimizers().items()},
        "blocks": [[n, list(a.shape)] for n, a in blocks],
        "rng_state": learner.rng.bit_generator.state,
        "counters": dict(counters or {}),
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + payload


def save_checkpoint(learner, path, counters=None):
    """Write atomically (temp file + rename) so a crash never leaves a half-written checkpoint."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(learner, counters))
    os.replace(tmp, path)


def read_header(data):
    if len(data) < _PREFIX.size:
        raise CheckpointError("file is truncated (no header)")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic bytes {magic!r}; not a checkpoint")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (this build reads {VERSION})")
    end = _PREFIX.size + hlen
    if len(data) < end:
        raise CheckpointError("file is truncated inside the header")
    try:
        header = json.loads(data[_PREFIX.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header: {exc}") from exc
    return header, data[end:]


def load_checkpoint(path):
    """Rebuild the learner stored at ``path``; returns ``(learner, counters)``."""
    data = Path(path).read_bytes()
    header, payload = read_header(data)
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"payload is {len(payload)} bytes, header declares {header['payload_bytes']}"
                              " (file truncated?)")
    if zlib.crc32(payload) != header["payload_crc32"]:
        raise CheckpointError("payload checksum mismatch")
    cls = LEARNERS.get(header["algorithm"])
    if cls is None:
        raise CheckpointError(f"unknown algorithm {header['algorithm']!r}")
    hp = Hyperparams(**header["hyperparams"])
    learner = cls.from_spec(header["spec"], hp)
    for name, arch in header["architecture"].items():
        if learner.networks()[name].architecture != arch:
            raise CheckpointError(f"network {name}: stored architecture does not match the rebuilt learner")
    for name, st in header["optimizers"].items():
        opt = learner.optimizers()[name]
        for k, v in st.items():
            setattr(opt, k, v)
    targets = dict(_blocks(learner))
    offset = 0
    for name, shape in header["blocks"]:
        dst = targets.get(name)
        if dst is None or list(dst.shape) != shape:
            raise CheckpointError(f"block {name} does not fit the rebuilt learner")
        n = int(np.prod(shape)) * 4
        dst[...] = np.frombuffer(payload, dtype="<f4", count=n // 4, offset=offset).reshape(shape)
        offset += n
    learner.rng.bit_generator.state = header["rng_state"]
    return learner, header["counters"]
