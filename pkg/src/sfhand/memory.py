"""ROI-biased FIFO attention memory.

A fixed-capacity queue holds the most recent concatenated visual+hand
token embeddings together with a binary region-of-interest mask snapshot
taken at enqueue time. The layer refines the current tokens by attending
into the flattened queue, with the scores optionally biased by a learnable
scalar times a hand-region mask.

Three bias modes ship:

* ``key_broadcast`` (default): each stored key token k gets ``alpha *
  mask_k`` added to its score column, so hand-region history attracts
  attention from every query.
* ``query_broadcast_literal``: ``alpha * mask_q`` is added across query
  row q. Because row-wise softmax is shift invariant this is provably a
  no-op on the output; the mode exists so that property stays testable.
* ``off``: no bias; alpha unused.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import Config
from .errors import DimensionError, UsageError
from .hand import HandState
from .tensor import Tape, Tensor

KEY_BROADCAST = "key_broadcast"
QUERY_BROADCAST_LITERAL = "query_broadcast_literal"
OFF = "off"
MODES = (KEY_BROADCAST, QUERY_BROADCAST_LITERAL, OFF)


def roi_mask(states, cfg: Config) -> np.ndarray:
    """Binary mask over the memory token layout.

    A visual token is set iff its patch rectangle overlaps any visible
    hand's box with positive area; a hand token is set iff its hand is
    visible. Layout follows the active modality flags (visual tokens
    first, then the two hand slots).
    """
    parts = []
    visible = [s for s in (states or []) if s is not None and s.visible]
    if cfg.use_video:
        g = cfg.grid
        vis_mask = np.zeros(g * g, dtype=np.uint8)
        for s in visible:
            x1, y1, x2, y2 = s.bbox.corners()
            for i in range(g):
                py1, py2 = i / g, (i + 1) / g
                if min(y2, py2) - max(y1, py1) <= 0:
                    continue
                for j in range(g):
                    px1, px2 = j / g, (j + 1) / g
                    if min(x2, px2) - max(x1, px1) > 0:
                        vis_mask[i * g + j] = 1
        parts.append(vis_mask)
    if cfg.use_hand:
        hand_mask = np.zeros(2, dtype=np.uint8)
        for s in visible:
            hand_mask[s.hand_type.value] = 1
        parts.append(hand_mask)
    if not parts:
        return np.zeros(0, dtype=np.uint8)
    return np.concatenate(parts)


@dataclass
class MemoryEntry:
    embedding: np.ndarray  # (tokens, d), detached values
    roi_mask: np.ndarray   # (tokens,), binary snapshot from enqueue time
    step_index: int


@dataclass
class MemoryQueue:
    """FIFO of the N most recent token embeddings, oldest first."""

    capacity: int
    token_count: int
    dim: int
    entries: list[MemoryEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity <= 0:
            raise UsageError("memory capacity must be positive")

    def __len__(self):
        return len(self.entries)

    def enqueue(self, embedding: np.ndarray, mask: np.ndarray, step_index: int) -> None:
        embedding = np.asarray(embedding)
        mask = np.asarray(mask)
        if embedding.shape != (self.token_count, self.dim):
            raise DimensionError(
                f"entry shape {embedding.shape} != queue layout "
                f"({self.token_count}, {self.dim})"
            )
        if mask.shape != (self.token_count,):
            raise DimensionError(f"mask length {mask.shape} != {self.token_count}")
        if not np.all((mask == 0) | (mask == 1)):
            raise UsageError("roi mask entries must be 0 or 1")
        self.entries.append(
            MemoryEntry(embedding.copy(), mask.astype(np.uint8).copy(), step_index)
        )
        if len(self.entries) > self.capacity:
            del self.entries[0]

    def reset(self) -> None:
        self.entries.clear()

    def flat_keys(self, dtype) -> np.ndarray:
        return np.concatenate([e.embedding for e in self.entries], axis=0).astype(
            dtype, copy=False
        )

    def flat_masks(self) -> np.ndarray:
        return np.concatenate([e.roi_mask for e in self.entries])


class MemoryLayer:
    """Owns the learnable bias scale; stateless across sessions."""

    def __init__(self, tape: Tape, cfg: Config):
        self.cfg = cfg
        self.alpha = tape.parameter("memory.alpha", np.asarray(1.0))

    def forward(self, queue: MemoryQueue, e_t: Tensor, m_t: np.ndarray,
                mode: str | None = None) -> Tensor:
        """Residual attention of current tokens into the queue.

        An empty queue skips attention and returns ``e_t`` unchanged.
        """
        mode = self.cfg.memory_mode if mode is None else mode
        if mode not in MODES:
            raise UsageError(f"unknown memory mode {mode!r}")
        n, d = e_t.value.shape
        if n != queue.token_count or d != queue.dim:
            raise DimensionError(
                f"current tokens {e_t.value.shape} != queue layout "
                f"({queue.token_count}, {queue.dim})"
            )
        m_t = np.asarray(m_t)
        if m_t.shape != (n,):
            raise DimensionError(f"roi mask length {m_t.shape} != token count {n}")
        if len(queue) == 0:
            return e_t

        tape = e_t.tape
        kv = tape.constant(queue.flat_keys(tape.dtype))
        heads = self.cfg.memory_heads
        dh = d // heads
        outs = []
        for h in range(heads):
            cols = slice(h * dh, (h + 1) * dh)
            scores = T.mul(
                T.matmul(e_t[:, cols], T.transpose(kv[:, cols])), 1.0 / np.sqrt(dh)
            )
            if mode == KEY_BROADCAST:
                key_mask = queue.flat_masks().astype(np.float64)
                scores = T.add(scores, T.mul(self.alpha, tape.constant(key_mask)))
            elif mode == QUERY_BROADCAST_LITERAL:
                # The written form: mask over the current step's visual
                # tokens only, broadcast along each query row.
                q_mask = m_t.astype(np.float64).copy()
                if self.cfg.use_hand:
                    q_mask[queue.token_count - 2 :] = 0.0
                scores = T.add(scores, T.mul(self.alpha, tape.constant(q_mask[:, None])))
            outs.append(T.matmul(T.softmax_rows(scores), kv[:, cols]))
        agg = outs[0] if heads == 1 else T.concat(outs, axis=1)
        return T.add(e_t, agg)
