"""Streaming inference: sessions, rollouts, baselines, and correctness probes.

A session consumes one frame per step and forecasts the next hand state,
feeding back either its own prediction (self-feed) or the ground truth
(oracle). ``batch_replay_check`` is the correctness oracle for the FIFO
memory: it recomputes every step from scratch over the visible window and
compares against the incremental stream. ``bench`` measures per-step cost
and checks it stays flat over long streams.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import ClipSample
from .errors import UsageError
from .hand import HandState
from .metrics import MetricAccumulator, MetricReport
from .model import ForecastModel
from .stream_math import slope_statistics

SELF_FEED = "self"
ORACLE = "oracle"


@dataclass
class StepRecord:
    frame: np.ndarray
    hands_in: list[HandState]
    outputs: np.ndarray  # decoded head values, stacked
    predictions: list[HandState]


@dataclass
class Session:
    """One autoregressive stream over a single instruction."""

    model: ForecastModel
    instruction: str
    mode: str = SELF_FEED
    memory_mode: Optional[str] = None
    record: bool = False
    steps: int = 0
    last_states: list[HandState] = field(default_factory=list)
    trace: list[StepRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in (SELF_FEED, ORACLE):
            raise UsageError(f"unknown session mode {self.mode!r}")
        self.queue = self.model.new_queue()
        self.instruction_values = (
            self.model.encode_instruction(self.instruction)
            if self.model.cfg.use_text
            else None
        )

    def prime(self, initial_states: list[HandState]) -> None:
        """Provide the observed hand state for the first step."""
        self.last_states = list(initial_states)

    def step(self, frame: np.ndarray, gt_hands: Optional[list[HandState]] = None) -> list[HandState]:
        """Consume one frame, return the forecast hand states for the next."""
        if self.mode == ORACLE:
            if gt_hands is None:
                raise UsageError("oracle mode requires ground-truth hand states")
            hands_in = list(gt_hands)
        else:
            hands_in = list(self.last_states)
        self.model.tape.reset()
        res = self.model.forward_step(
            frame,
            hands_in,
            self.queue,
            instruction_values=self.instruction_values,
            memory_mode=self.memory_mode,
            step_index=self.steps,
        )
        preds = self.model.select_hands(res.decoded)
        if self.record:
            self.trace.append(
                StepRecord(frame, hands_in, res.decoded.stacked_values(), preds)
            )
        self.last_states = preds
        self.steps += 1
        return preds


def rollout(model: ForecastModel, clip: ClipSample, mode: str = SELF_FEED,
            memory_mode: Optional[str] = None, record: bool = False):
    """Forecast frames 2..T from frames 1..T-1; returns (per-frame states,
    metric report, session)."""
    if clip.num_frames < 2:
        raise UsageError("rollout needs a clip with at least 2 frames")
    session = Session(model, clip.instruction, mode=mode, memory_mode=memory_mode,
                      record=record)
    session.prime(clip.gt[0])
    forecasts = []
    for i in range(clip.num_frames - 1):
        forecasts.append(session.step(clip.frames[i], gt_hands=clip.gt[i]))
    acc = MetricAccumulator()
    acc.add_clip(forecasts, clip.gt[1:], clip.gt_joints[1:])
    return forecasts, acc.report(), session


def static_baseline(clip: ClipSample):
    """Every forecast equals the first observed frame's ground truth."""
    if clip.num_frames < 2:
        raise UsageError("baseline needs a clip with at least 2 frames")
    forecasts = [list(clip.gt[0]) for _ in range(clip.num_frames - 1)]
    acc = MetricAccumulator()
    acc.add_clip(forecasts, clip.gt[1:], clip.gt_joints[1:])
    return forecasts, acc.report()


def batch_replay_check(model: ForecastModel, clip: ClipSample, mode: str = SELF_FEED,
                       memory_mode: Optional[str] = None) -> float:
    """Max |streaming - from-scratch| over all steps of a clip.

    Every step t is recomputed by re-encoding the window of frames the
    queue could have seen, rebuilding the queue, and decoding once. The
    recorded per-step inputs (frames and fed-back hand states) are reused
    so both computations see identical inputs.
    """
    _, _, session = rollout(model, clip, mode=mode, memory_mode=memory_mode,
                            record=True)
    n = model.cfg.memory_size
    worst = 0.0
    for t, rec in enumerate(session.trace):
        fresh = model.new_queue()
        if model.cfg.use_memory:
            for s in range(max(0, t - n), t):
                past = session.trace[s]
                model.tape.reset()
                e_val, mask = model.encode_current(past.frame, past.hands_in)
                fresh.enqueue(e_val, mask, s)
        model.tape.reset()
        res = model.forward_step(
            rec.frame,
            rec.hands_in,
            fresh,
            instruction_values=session.instruction_values,
            memory_mode=memory_mode,
            step_index=t,
            enqueue=False,
        )
        diff = np.abs(res.decoded.stacked_values() - rec.outputs)
        worst = max(worst, float(diff.max()) if diff.size else 0.0)
    return worst


@dataclass
class BenchResult:
    steps: int
    steps_per_sec: float
    mean_latency_s: float
    median_latency_s: float
    max_queue_len: int
    slope_s_per_step: float
    slope_p_value: float
    drift_fraction: float  # |slope| * steps relative to the median latency
    tape_nodes_per_step: int

    def flat_latency(self) -> bool:
        """Slope statistically indistinguishable from zero, or negligible."""
        return self.slope_p_value >= 0.01 or abs(self.drift_fraction) <= 0.1

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "steps", "steps_per_sec", "mean_latency_s", "median_latency_s",
            "max_queue_len", "slope_s_per_step", "slope_p_value",
            "drift_fraction", "tape_nodes_per_step")}


def bench(model: ForecastModel, length: int, *, instruction: str = "reach the object",
          warmup: int = 8, seed: int = 0) -> BenchResult:
    """Throughput over a synthetic endless stream; asserts the capacity bound."""
    if length < 2:
        raise UsageError("bench needs at least 2 steps")
    cfg = model.cfg
    rng = np.random.default_rng(seed)
    frames = [rng.uniform(0, 1, (cfg.raster, cfg.raster, 3)) for _ in range(8)]
    session = Session(model, instruction, mode=SELF_FEED)
    session.prime([])
    for i in range(warmup):
        session.step(frames[i % len(frames)])
    max_queue = len(session.queue)
    latencies = np.empty(length)
    nodes = 0
    for i in range(length):
        t0 = time.perf_counter()
        session.step(frames[i % len(frames)])
        latencies[i] = time.perf_counter() - t0
        nodes = max(nodes, len(model.tape.nodes))
        qlen = len(session.queue)
        if qlen > cfg.memory_size:
            raise UsageError(f"queue exceeded capacity: {qlen} > {cfg.memory_size}")
        max_queue = max(max_queue, qlen)
    slope, p_value = slope_statistics(latencies)
    med = float(np.median(latencies))
    total = float(latencies.sum())
    return BenchResult(
        steps=length,
        steps_per_sec=length / total if total > 0 else math.inf,
        mean_latency_s=float(latencies.mean()),
        median_latency_s=med,
        max_queue_len=max_queue,
        slope_s_per_step=slope,
        slope_p_value=p_value,
        drift_fraction=(slope * length / med) if med > 0 else 0.0,
        tape_nodes_per_step=nodes,
    )
