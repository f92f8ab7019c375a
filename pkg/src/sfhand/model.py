"""DETR-style decoder with learnable queries plus the full forward step.

One forward step encodes the inputs, refines the visual+hand tokens
through the FIFO memory, concatenates the text tokens in front, and
decodes a fixed set of query predictions (type logits, box, pose,
trajectory). The box head is sigmoid-bounded; pose and trajectory heads
are linear in natural units (radians, centimeters).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import blocks, tensor as T
from .config import Config
from .encoders import (
    HandEncoder,
    Role,
    TextEncoder,
    TokenSequence,
    VisualEncoder,
    concat_tokens,
    tokenize_text,
)
from .errors import DimensionError, UsageError
from .hand import BBox, HandPose, HandState, HandType, Trajectory3D
from .memory import MemoryLayer, MemoryQueue, roi_mask
from .tensor import Tape, Tensor

TRAJ_BOUND = 9999.0  # clamp head output inside the Trajectory3D sanity range
TRAJ_SCALE = 100.0   # head learns meters; outputs are centimeters


@dataclass
class DecodedStep:
    """Per-query prediction heads, still attached to the tape."""

    type_logits: Tensor  # (Q, 3) left/right/background
    boxes: Tensor        # (Q, 4) sigmoid cx cy w h
    pose: Tensor         # (Q, P)
    traj: Tensor         # (Q, 3) centimeters

    def stacked_values(self) -> np.ndarray:
        """All head outputs as one (Q, 3+4+P+3) array, detached."""
        return np.concatenate(
            [self.type_logits.value, self.boxes.value, self.pose.value, self.traj.value],
            axis=1,
        )


@dataclass(frozen=True)
class QueryPrediction:
    type_probs: np.ndarray
    bbox: BBox
    pose: HandPose
    traj: Trajectory3D


@dataclass
class StepResult:
    decoded: DecodedStep
    f_me: TokenSequence
    e_value: Optional[np.ndarray]  # pre-augmentation current tokens (detached)
    roi: np.ndarray


def _softmax_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class ForecastModel:
    """Encoders + memory layer + query decoder over one shared tape."""

    def __init__(self, cfg: Config, seed: Optional[int] = None):
        self.cfg = cfg
        self.tape = Tape(dtype=cfg.precision)
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self.text = TextEncoder(self.tape, cfg, rng)
        self.visual = VisualEncoder(self.tape, cfg, rng)
        self.hand = HandEncoder(self.tape, cfg, rng)
        self.memory = MemoryLayer(self.tape, cfg)
        d = cfg.d
        self.queries = self.tape.parameter(
            "decoder.queries", rng.normal(0.0, 0.5, (cfg.num_queries, d))
        )
        max_tokens = cfg.text_len + cfg.num_visual_tokens + 2
        self.mem_pos = blocks.init_table(self.tape, rng, "decoder.mem_pos", max_tokens, d)
        self.blocks = [
            blocks.init_block(self.tape, rng, f"decoder.block{i}", d, cfg.mlp_ratio, cross=True)
            for i in range(cfg.decoder_layers)
        ]
        self.ln_out = blocks.init_layernorm(self.tape, "decoder.ln_out", d)
        self.head_type = blocks.init_linear(self.tape, rng, "decoder.head_type", d, 3)
        self.head_box = blocks.init_linear(self.tape, rng, "decoder.head_box", d, 4)
        self.head_pose = blocks.init_linear(self.tape, rng, "decoder.head_pose", d, cfg.pose_dim)
        self.head_traj = blocks.init_linear(self.tape, rng, "decoder.head_traj", d, 3)

    # -- construction helpers -------------------------------------------------

    def new_queue(self) -> MemoryQueue:
        return MemoryQueue(
            capacity=self.cfg.memory_size,
            token_count=self.cfg.memory_token_count(),
            dim=self.cfg.d,
        )

    def encode_instruction(self, instruction: str) -> np.ndarray:
        """Detached text token values for caching across a streaming session."""
        ids = tokenize_text(instruction, self.cfg.text_len)
        return self.text(ids).emb.value.copy()

    def encode_current(self, frame: Optional[np.ndarray], hands):
        """Detached current-step tokens and ROI mask, as the queue stores them."""
        parts = []
        if self.cfg.use_video:
            parts.append(self.visual(frame))
        if self.cfg.use_hand:
            parts.append(self.hand(hands))
        if not parts:
            return None, roi_mask(hands, self.cfg)
        e_t = parts[0] if len(parts) == 1 else concat_tokens(parts)
        return e_t.emb.value.copy(), roi_mask(hands, self.cfg)

    # -- decoding --------------------------------------------------------------

    def decode(self, f_me: TokenSequence) -> DecodedStep:
        n, d = f_me.emb.value.shape
        if d != self.cfg.d:
            raise DimensionError(f"memory-augmented tokens have dim {d}, expected {self.cfg.d}")
        if n > self.mem_pos.value.shape[0]:
            raise DimensionError(f"{n} tokens exceed positional table")
        pos = self.mem_pos[0:n]
        x = self.queries
        for p in self.blocks:
            x = blocks.decoder_block(x, f_me.emb, p, self.cfg.heads, mem_pos=pos)
        x = blocks.layer_norm(x, self.ln_out)
        return DecodedStep(
            type_logits=blocks.linear(x, self.head_type),
            boxes=T.sigmoid(blocks.linear(x, self.head_box)),
            pose=blocks.linear(x, self.head_pose),
            # linear in centimeters; the meter-scale parameterization keeps
            # optimizer steps commensurate with the other heads
            traj=T.mul(blocks.linear(x, self.head_traj), TRAJ_SCALE),
        )

    # -- the full per-frame forward -------------------------------------------

    def forward_step(
        self,
        frame: Optional[np.ndarray],
        hands,
        queue: MemoryQueue,
        *,
        instruction_ids: Optional[np.ndarray] = None,
        instruction_values: Optional[np.ndarray] = None,
        memory_mode: Optional[str] = None,
        step_index: int = 0,
        enqueue: bool = True,
    ) -> StepResult:
        """Encode inputs, run the memory layer, decode, enqueue.

        Text enters either as ids (re-encoded on the tape; needed when
        training) or as cached detached values (streaming inference).
        """
        cfg = self.cfg
        parts: list[TokenSequence] = []
        if cfg.use_video:
            if frame is None:
                raise UsageError("video enabled but no frame given")
            parts.append(self.visual(frame))
        if cfg.use_hand:
            parts.append(self.hand(hands))

        mask = roi_mask(hands, cfg)
        if parts:
            e_t = concat_tokens(parts)
            if cfg.use_memory:
                aug_emb = self.memory.forward(queue, e_t.emb, mask, memory_mode)
            else:
                aug_emb = e_t.emb
            aug = TokenSequence(aug_emb, e_t.roles, e_t.patch_index)
            e_value = e_t.emb.value
        else:
            e_t, aug, e_value = None, None, None

        f_parts: list[TokenSequence] = []
        if cfg.use_text:
            if instruction_ids is not None:
                f_parts.append(self.text(instruction_ids))
            elif instruction_values is not None:
                n = cfg.text_len
                f_parts.append(
                    TokenSequence(
                        self.tape.constant(instruction_values), [Role.TEXT] * n, [None] * n
                    )
                )
            else:
                raise UsageError("text enabled but no instruction given")
        if aug is not None:
            f_parts.append(aug)
        if not f_parts:
            raise UsageError("all modalities disabled; nothing to decode from")
        f_me = f_parts[0] if len(f_parts) == 1 else concat_tokens(f_parts)

        decoded = self.decode(f_me)
        if enqueue and cfg.use_memory and e_value is not None:
            queue.enqueue(e_value, mask, step_index)
        return StepResult(decoded=decoded, f_me=f_me, e_value=e_value, roi=mask)

    # -- prediction -> hand states ---------------------------------------------

    def select_hands(self, decoded: DecodedStep, threshold: Optional[float] = None) -> list[HandState]:
        """At most one state per hand type: the query with the highest class
        probability, emitted only when it clears the confidence threshold.
        Ties break to the lower query index."""
        thr = self.cfg.confidence_threshold if threshold is None else threshold
        probs = _softmax_np(decoded.type_logits.value.astype(np.float64))
        boxes = decoded.boxes.value
        pose = decoded.pose.value
        traj = decoded.traj.value
        out: list[HandState] = []
        for hand_type in (HandType.LEFT, HandType.RIGHT):
            col = probs[:, hand_type.value]
            q = int(np.argmax(col))
            if col[q] < thr:
                continue
            cx, cy, w, h = (float(np.clip(v, 1e-6, 1.0)) for v in boxes[q])
            t = np.clip(traj[q].astype(np.float64), -TRAJ_BOUND, TRAJ_BOUND)
            out.append(
                HandState(
                    hand_type=hand_type,
                    bbox=BBox(float(np.clip(cx, 0.0, 1.0)), float(np.clip(cy, 0.0, 1.0)), w, h),
                    pose=HandPose(pose[q].astype(np.float64)),
                    traj=Trajectory3D(float(t[0]), float(t[1]), float(t[2])),
                    visible=True,
                )
            )
        return out
