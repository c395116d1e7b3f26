"""Variable-length token batches and observation history windows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class TooManyChannelsError(ValueError):
    pass


@dataclass
class TokenBatch:
    """Padded policy input.

    ``sensor_ids`` and ``actuator_ids`` index a :class:`SignatureRegistry`;
    id 0 is the padding signature. Padded positions hold zero values.
    """

    values: np.ndarray          # (B, T, W)
    sensor_ids: np.ndarray      # (B, T)
    sensor_mask: np.ndarray     # (B, T) bool
    actuator_ids: np.ndarray    # (B, A)
    actuator_mask: np.ndarray   # (B, A) bool
    task_id: np.ndarray         # (B,)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def window(self) -> int:
        return self.values.shape[2]

    def take(self, rows: np.ndarray) -> "TokenBatch":
        """Select rows and crop padding to the maxima of the selection."""
        sm = self.sensor_mask[rows]
        am = self.actuator_mask[rows]
        t = max(int(sm.sum(axis=1).max()), 1)
        a = max(int(am.sum(axis=1).max()), 1)
        return TokenBatch(
            self.values[rows, :t],
            self.sensor_ids[rows, :t],
            sm[:, :t],
            self.actuator_ids[rows, :a],
            am[:, :a],
            self.task_id[rows],
        )


def tokenize_row(window: np.ndarray, sensor_ids: Sequence[int], actuator_ids: Sequence[int], max_tokens: int | None = None):
    """Validate one observation (channels x W history) for batching."""
    window = np.asarray(window)
    if window.ndim != 2 or window.shape[0] != len(sensor_ids):
        raise ValueError(f"window shape {window.shape} does not match {len(sensor_ids)} channels")
    if max_tokens is not None and window.shape[0] > max_tokens:
        raise TooManyChannelsError(f"{window.shape[0]} sensor channels exceed the configured maximum {max_tokens}")
    return window, np.asarray(sensor_ids, dtype=np.int64), np.asarray(actuator_ids, dtype=np.int64)


def stack_rows(rows, task_ids: Sequence[int] | None = None, max_tokens: int | None = None, dtype=np.float32) -> TokenBatch:
    """Pad per-observation ``(window, sensor_ids, actuator_ids)`` rows into a batch."""
    rows = [tokenize_row(w, s, a, max_tokens) for w, s, a in rows]
    b = len(rows)
    t = max(r[0].shape[0] for r in rows)
    a = max(len(r[2]) for r in rows)
    win = rows[0][0].shape[1]
    values = np.zeros((b, t, win), dtype=dtype)
    sids = np.zeros((b, t), dtype=np.int64)
    aids = np.zeros((b, a), dtype=np.int64)
    smask = np.zeros((b, t), dtype=bool)
    amask = np.zeros((b, a), dtype=bool)
    for i, (w, s, ac) in enumerate(rows):
        values[i, : len(s)] = w
        sids[i, : len(s)] = s
        smask[i, : len(s)] = True
        aids[i, : len(ac)] = ac
        amask[i, : len(ac)] = True
    tid = np.zeros(b, dtype=np.int64) if task_ids is None else np.asarray(task_ids, dtype=np.int64)
    return TokenBatch(values, sids, smask, aids, amask, tid)


def concat_batches(batches: Sequence[TokenBatch]) -> TokenBatch:
    """Concatenate batches along rows, padding to the common maxima."""
    t = max(b.values.shape[1] for b in batches)
    a = max(b.actuator_ids.shape[1] for b in batches)

    def pad(x, n, axis=1):
        extra = n - x.shape[axis]
        if extra == 0:
            return x
        widths = [(0, 0)] * x.ndim
        widths[axis] = (0, extra)
        return np.pad(x, widths)

    return TokenBatch(
        np.concatenate([pad(b.values, t) for b in batches]),
        np.concatenate([pad(b.sensor_ids, t) for b in batches]),
        np.concatenate([pad(b.sensor_mask, t) for b in batches]),
        np.concatenate([pad(b.actuator_ids, a) for b in batches]),
        np.concatenate([pad(b.actuator_mask, a) for b in batches]),
        np.concatenate([b.task_id for b in batches]),
    )


class HistoryWindow:
    """Rolling W-step history of raw channel values for a group of envs.

    A freshly reset env repeats its first observation across the whole
    window.
    """

    def __init__(self, n_envs: int, n_channels: int, window: int, dtype=np.float64):
        self.window = window
        self.data = np.zeros((n_envs, n_channels, window), dtype=dtype)

    def reset(self, env_ids, obs: np.ndarray) -> None:
        self.data[env_ids] = np.asarray(obs)[..., None]

    def push(self, obs: np.ndarray) -> None:
        self.data[..., :-1] = self.data[..., 1:]
        self.data[..., -1] = obs
