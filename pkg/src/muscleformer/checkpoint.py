"""Versioned binary checkpoints.

Layout::

    8 bytes   magic b"MFCKPT\\0\\0"
    uint32    format version (little-endian)
    uint64    header length in bytes
    header    UTF-8 JSON: policy kind and spec, vocabulary, signature
              registry, standardizer and reward-normalizer state, metadata,
              and an index of the arrays that follow
    arrays    raw little-endian buffers at the offsets named in the index
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .policy.mlp import MLPPolicy, MLPSpec
from .policy.spec import PolicySpec
from .policy.transformer import MuscleTransformer
from .trainer.normalize import ReturnNormalizer, RunningStandardizer
from .vocab import Signature, SignatureRegistry, Vocabulary

MAGIC = b"MFCKPT\0\0"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass
class Checkpoint:
    policy: object
    standardizer: RunningStandardizer
    reward_norm: ReturnNormalizer | None = None
    metadata: dict = field(default_factory=dict)


def _le(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<"))


def _policy_header(policy) -> dict:
    if isinstance(policy, MuscleTransformer):
        return {
            "kind": "transformer",
            "spec": policy.spec.to_dict(),
            "vocab": policy.vocab.words,
            "signatures": [[list(s.words), s.kind] for s in policy.registry.signatures],
        }
    if isinstance(policy, MLPPolicy):
        return {"kind": "mlp", "spec": policy.spec.to_dict()}
    raise TypeError(f"cannot checkpoint {type(policy).__name__}")


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Write atomically (temp file + rename)."""
    arrays: dict[str, np.ndarray] = {f"param/{k}": v.data for k, v in ckpt.policy.parameters().items()}
    std = ckpt.standardizer.state_dict()
    for k in ("count", "mean", "m2"):
        arrays[f"standardizer/{k}"] = std.pop(k)
    index, blobs, offset = [], [], 0
    for name, a in arrays.items():
        a = _le(np.asarray(a))
        index.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset, "nbytes": a.nbytes})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "policy": _policy_header(ckpt.policy),
        "standardizer": std,
        "reward_norm": ckpt.reward_norm.state_dict() if ckpt.reward_norm is not None else None,
        "metadata": ckpt.metadata,
        "arrays": index,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", FORMAT_VERSION, len(hbytes)))
        f.write(hbytes)
        for b in blobs:
            f.write(b)
    os.replace(tmp, path)


def read_header(path) -> tuple[dict, int]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic)")
        version, hlen = struct.unpack("<IQ", f.read(12))
        if version != FORMAT_VERSION:
            raise CheckpointFormatError(
                f"{path}: checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
            )
        header = json.loads(f.read(hlen).decode("utf-8"))
    return header, 20 + hlen


def _build_policy(ph: dict):
    if ph["kind"] == "transformer":
        vocab = Vocabulary.from_words(ph["vocab"])
        registry = SignatureRegistry(vocab)
        for words, kind in ph["signatures"][1:]:
            registry.register(Signature(tuple(words), kind), grow_vocab=False)
        return MuscleTransformer(PolicySpec.from_dict(ph["spec"]), vocab, registry)
    if ph["kind"] == "mlp":
        return MLPPolicy(MLPSpec.from_dict(ph["spec"]))
    raise CheckpointFormatError(f"unknown policy kind {ph['kind']!r}")


def load_checkpoint(path) -> Checkpoint:
    header, start = read_header(path)
    with open(path, "rb") as f:
        f.seek(start)
        payload = f.read()
    arrays = {}
    for e in header["arrays"]:
        a = np.frombuffer(payload, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)), offset=e["offset"])
        arrays[e["name"]] = a.reshape(e["shape"]).astype(np.dtype(e["dtype"]).newbyteorder("="))
    policy = _build_policy(header["policy"])
    params = policy.parameters()
    for name, p in params.items():
        key = f"param/{name}"
        if key not in arrays:
            raise CheckpointFormatError(f"{path}: missing parameter {name}")
        if tuple(arrays[key].shape) != p.shape:
            raise CheckpointFormatError(f"{path}: parameter {name} has shape {arrays[key].shape}, expected {p.shape}")
        p.data = arrays[key].astype(p.dtype)
    std_state = dict(header["standardizer"])
    for k in ("count", "mean", "m2"):
        std_state[k] = arrays[f"standardizer/{k}"]
    std = RunningStandardizer.from_state(std_state)
    rn = ReturnNormalizer.from_state(header["reward_norm"]) if header.get("reward_norm") else None
    return Checkpoint(policy, std, rn, header.get("metadata", {}))
