import struct

import numpy as np
import pytest

from muscleformer.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    Checkpoint,
    CheckpointFormatError,
    load_checkpoint,
    read_header,
    save_checkpoint,
)
from muscleformer.sim import get_task
from muscleformer.trainer.evaluate import evaluate_policy
from muscleformer.trainer.train import Trainer, build_policy

from helpers import tiny_config


@pytest.fixture(scope="module")
def trained():
    tr = Trainer(tiny_config(tasks=("ElbowPose", "ReachNear")))
    tr.run()
    return tr.checkpoint()


def test_roundtrip_exact(tmp_path, trained):
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, trained)
    back = load_checkpoint(path)
    for k, p in trained.policy.parameters().items():
        q = back.policy.parameters()[k]
        assert q.data.dtype == p.data.dtype and q.data.tobytes() == p.data.tobytes()
    assert back.standardizer.keys == trained.standardizer.keys
    np.testing.assert_array_equal(back.standardizer.m2, trained.standardizer.m2)
    assert back.reward_norm.state_dict() == trained.reward_norm.state_dict()
    assert back.metadata["tasks"] == ["ElbowPose", "ReachNear"]
    assert back.policy.registry.signatures == trained.policy.registry.signatures


def test_roundtrip_same_actions(tmp_path, trained):
    path = tmp_path / "b.ckpt"
    save_checkpoint(path, trained)
    back = load_checkpoint(path)
    task = get_task("ReachNear")
    a = evaluate_policy(trained.policy, trained.standardizer, task, 4, 0, record=True)
    b = evaluate_policy(back.policy, back.standardizer, task, 4, 0, record=True)
    assert a.activations.tobytes() == b.activations.tobytes()


def test_mlp_roundtrip(tmp_path):
    pol = build_policy(tiny_config("ppo", policy="mlp"))
    from muscleformer.trainer.normalize import RunningStandardizer
    save_checkpoint(tmp_path / "m.ckpt", Checkpoint(pol, RunningStandardizer()))
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert back.reward_norm is None
    for k, p in pol.parameters().items():
        np.testing.assert_array_equal(back.policy.parameters()[k].data, p.data)


def test_header_layout(tmp_path, trained):
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, trained)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    version, hlen = struct.unpack("<IQ", raw[8:20])
    assert version == FORMAT_VERSION == 1
    header, start = read_header(path)
    assert start == 20 + hlen
    assert header["policy"]["kind"] == "transformer"
    assert not (tmp_path / "c.ckpt.tmp").exists()


def test_version_mismatch_rejected(tmp_path, trained):
    path = tmp_path / "d.ckpt"
    save_checkpoint(path, trained)
    raw = bytearray(path.read_bytes())
    raw[8:12] = struct.pack("<I", 2)
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointFormatError, match="version 2"):
        load_checkpoint(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "e.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointFormatError, match="bad magic"):
        load_checkpoint(path)
