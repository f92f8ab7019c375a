"""Synthetic clip generation and the clip file format.

Clips are 16-frame desk-scale scenes: a bright rectangular hand blob over
a static noise background, moving along a smooth cubic-eased waypoint
path inside a 40 cm workspace cube, with a templated English instruction
naming the scenario and the target position bucket. All randomness comes
from the package PRNG and all arithmetic in the data path is polynomial,
so generation is byte-identical across platforms. Float fields are
rounded through float32 at creation time, which makes file round-trips
bitwise lossless.

On disk a dataset is a JSON manifest plus one binary blob (little-endian,
row-major); see FORMATS.md for the exact layout.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumError,
    DataFormatError,
    TruncationError,
    UsageError,
    VersionError,
)
from .hand import (
    BBox,
    HandPose,
    HandState,
    HandType,
    JointSet,
    NUM_JOINTS,
    Trajectory3D,
    synthetic_joints,
)
from .rng import Xorshift64Star, derive_seed

FORMAT_VERSION = 1
SCENARIOS = ("reach", "pick_and_return", "two_hands", "idle")

VIEW_WIDTH_CM = 80.0   # normalized u = 0.5 + x / VIEW_WIDTH_CM
BOX_SIDE_REF = 0.14    # box side at reference depth
DEPTH_REF_CM = 60.0


@dataclass
class ClipSample:
    id: str
    instruction: str
    frames: np.ndarray                      # (T, R, R, 3) float32 in [0, 1]
    gt: list[list[HandState]]               # per frame, visible states only
    gt_joints: list[dict[HandType, JointSet]] = field(default_factory=list)
    camera_note: str = ""

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[3] != 3:
            raise UsageError(f"frames must be (T, R, R, 3), got {self.frames.shape}")
        if len(self.gt) != self.frames.shape[0]:
            raise UsageError("ground-truth frame count disagrees with frames")
        if not self.gt_joints:
            self.gt_joints = [{} for _ in self.gt]

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def clips_equal(a: ClipSample, b: ClipSample) -> bool:
    """Field-by-field equality with bitwise tensor comparison."""
    if (a.id, a.instruction, a.camera_note) != (b.id, b.instruction, b.camera_note):
        return False
    if a.frames.shape != b.frames.shape or not np.array_equal(a.frames, b.frames):
        return False
    if len(a.gt) != len(b.gt):
        return False
    for fa, fb, ja, jb in zip(a.gt, b.gt, a.gt_joints, b.gt_joints):
        if len(fa) != len(fb) or set(ja) != set(jb):
            return False
        for sa, sb in zip(fa, fb):
            if sa.hand_type is not sb.hand_type or sa.visible != sb.visible:
                return False
            if sa.bbox.as_array().tobytes() != sb.bbox.as_array().tobytes():
                return False
            if sa.pose.theta.tobytes() != sb.pose.theta.tobytes():
                return False
            if sa.traj.as_array().tobytes() != sb.traj.as_array().tobytes():
                return False
        for ht in ja:
            if not np.array_equal(ja[ht].joints, jb[ht].joints):
                return False
    return True


# ---------------------------------------------------------------------------
# generation


def _ease(t: float) -> float:
    """Cubic smoothstep on [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    return t * t * (3.0 - 2.0 * t)


def _path_point(segments, t: float) -> np.ndarray:
    """Piecewise cubic-eased interpolation through (t0, t1, P0, P1) segments."""
    for i, (t0, t1, p0, p1) in enumerate(segments):
        if t <= t1 or i == len(segments) - 1:
            if t < t0:
                return p0.copy()
            local = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            return p0 + (p1 - p0) * _ease(local)
    raise AssertionError("unreachable")


def _bucket(p: np.ndarray) -> str:
    xs = "left" if p[0] < -7 else ("right" if p[0] > 7 else "center")
    ys = "top" if p[1] < -7 else ("bottom" if p[1] > 7 else "middle")
    return f"{ys} {xs}"


def _sample_point(rng: Xorshift64Star, lo, hi) -> np.ndarray:
    return np.array([rng.uniform(lo[k], hi[k]) for k in range(3)])


def _sample_far_point(rng, lo, hi, start, min_dist=15.0) -> np.ndarray:
    for _ in range(64):
        p = _sample_point(rng, lo, hi)
        if np.linalg.norm(p - start) >= min_dist:
            return p
    return p  # workspace is large enough that this is effectively unreachable


def _project(p: np.ndarray, raster: int):
    """Weak-perspective projection to a pixel-snapped rectangle.

    Returns ((px1, py1, px2, py2), BBox): the pixel extent that gets
    rendered and the identical normalized box stored as ground truth.
    """
    u = 0.5 + p[0] / VIEW_WIDTH_CM
    v = 0.5 + p[1] / VIEW_WIDTH_CM
    side = BOX_SIDE_REF * DEPTH_REF_CM / p[2]
    x1 = int(np.floor((u - side / 2) * raster + 0.5))
    y1 = int(np.floor((v - side / 2) * raster + 0.5))
    x2 = int(np.floor((u + side / 2) * raster + 0.5))
    y2 = int(np.floor((v + side / 2) * raster + 0.5))
    x1 = min(max(x1, 0), raster - 1)
    y1 = min(max(y1, 0), raster - 1)
    x2 = min(max(x2, x1 + 1), raster)
    y2 = min(max(y2, y1 + 1), raster)
    box = BBox.from_corners(x1 / raster, y1 / raster, x2 / raster, y2 / raster)
    return (x1, y1, x2, y2), box


_HAND_COLOR = {
    HandType.LEFT: np.array([1.0, 0.35, 0.25], dtype=np.float32),
    HandType.RIGHT: np.array([0.25, 1.0, 0.35], dtype=np.float32),
}


def _f32(x) -> float:
    return float(np.float32(x))


@dataclass
class _HandScript:
    hand_type: HandType
    traj_segments: list
    theta0: np.ndarray
    theta1: np.ndarray

    def state_at(self, t: float, raster: int) -> tuple[HandState, tuple]:
        p = _path_point(self.traj_segments, t)
        theta = self.theta0 + (self.theta1 - self.theta0) * _ease(t)
        rect, box = _project(p, raster)
        traj32 = np.array([_f32(v) for v in p])
        state = HandState(
            hand_type=self.hand_type,
            bbox=box,
            pose=HandPose(theta.astype(np.float32).astype(np.float64)),
            traj=Trajectory3D(*traj32),
            visible=True,
        )
        return state, rect


def _make_scripts(rng: Xorshift64Star, scenario: str, pose_dim: int) -> list[_HandScript]:
    lo = np.array([-20.0, -20.0, 40.0])
    hi = np.array([20.0, 20.0, 80.0])

    def thetas():
        t0 = np.array([rng.uniform(-0.5, 0.5) for _ in range(pose_dim)])
        if scenario == "idle":
            return t0, t0.copy()
        t1 = np.array([rng.uniform(-0.5, 0.5) for _ in range(pose_dim)])
        return t0, t1

    if scenario == "two_hands":
        scripts = []
        for ht, xlo, xhi in ((HandType.LEFT, -18.0, -9.0), (HandType.RIGHT, 9.0, 18.0)):
            side_lo = np.array([xlo, -20.0, 50.0])
            side_hi = np.array([xhi, 20.0, 80.0])
            p0 = _sample_point(rng, side_lo, side_hi)
            p1 = _sample_far_point(rng, side_lo, side_hi, p0, min_dist=10.0)
            t0, t1 = thetas()
            scripts.append(_HandScript(ht, [(0.0, 1.0, p0, p1)], t0, t1))
        return scripts

    ht = HandType.LEFT if rng.randint(2) == 0 else HandType.RIGHT
    p0 = _sample_point(rng, lo, hi)
    t0, t1 = thetas()
    if scenario == "idle":
        return [_HandScript(ht, [(0.0, 1.0, p0, p0.copy())], t0, t1)]
    p1 = _sample_far_point(rng, lo, hi, p0)
    if scenario == "reach":
        return [_HandScript(ht, [(0.0, 1.0, p0, p1)], t0, t1)]
    if scenario == "pick_and_return":
        segments = [
            (0.0, 0.4, p0, p1),
            (0.4, 0.6, p1, p1.copy()),
            (0.6, 1.0, p1, p0.copy()),
        ]
        return [_HandScript(ht, segments, t0, t1)]
    raise UsageError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")


def _instruction(scenario: str, scripts: list[_HandScript]) -> str:
    if scenario == "idle":
        return "hold the hand still"
    if scenario == "reach":
        target = _bucket(scripts[0].traj_segments[-1][3])
        return f"reach the object at the {target}"
    if scenario == "pick_and_return":
        target = _bucket(scripts[0].traj_segments[0][3])
        return f"pick the object at the {target} and return it to where it started"
    first = _bucket(scripts[0].traj_segments[-1][3])
    second = _bucket(scripts[1].traj_segments[-1][3])
    return f"move the left hand to the {first} and the right hand to the {second}"


def generate_synthetic(seed: int, scenario: str, count: int, *, frames: int = 16,
                       raster: int = 64, pose_dim: int = 48) -> list[ClipSample]:
    """Deterministic synthetic clips for one scenario."""
    if scenario not in SCENARIOS:
        raise UsageError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    if count < 0:
        raise UsageError("count must be non-negative")
    if frames < 2:
        raise UsageError("clips need at least 2 frames")
    clips = []
    for idx in range(count):
        rng = Xorshift64Star(derive_seed(seed, idx))
        scripts = _make_scripts(rng, scenario, pose_dim)
        background = np.empty((raster, raster, 3), dtype=np.float32)
        for i in range(raster):
            for j in range(raster):
                for c in range(3):
                    background[i, j, c] = np.float32(rng.uniform(0.0, 0.35))
        frames_arr = np.empty((frames, raster, raster, 3), dtype=np.float32)
        gt, gtj = [], []
        for f in range(frames):
            t = f / (frames - 1)
            img = background.copy()
            states, joints = [], {}
            for script in scripts:
                state, (x1, y1, x2, y2) = script.state_at(t, raster)
                img[y1:y2, x1:x2, :] = _HAND_COLOR[state.hand_type]
                states.append(state)
                js = synthetic_joints(state.pose, state.traj)
                joints[state.hand_type] = JointSet(
                    js.joints.astype(np.float32).astype(np.float64)
                )
            frames_arr[f] = img
            gt.append(states)
            gtj.append(joints)
        clips.append(
            ClipSample(
                id=f"{scenario}-{seed:016x}-{idx:04d}",
                instruction=_instruction(scenario, scripts),
                frames=frames_arr,
                gt=gt,
                gt_joints=gtj,
                camera_note=(
                    f"synthetic weak-perspective camera: u=0.5+x/{VIEW_WIDTH_CM:g}cm, "
                    f"v=0.5+y/{VIEW_WIDTH_CM:g}cm, box side {BOX_SIDE_REF:g}*"
                    f"{DEPTH_REF_CM:g}/z, workspace 40cm cube"
                ),
            )
        )
    return clips


# ---------------------------------------------------------------------------
# file format


def _hand_record_size(pose_dim: int) -> int:
    # type u8, visible u8, bbox 4f32, theta Pf32, traj 3f32,
    # joints-present u8, joints 63f32
    return 1 + 1 + 16 + 4 * pose_dim + 12 + 1 + 4 * NUM_JOINTS * 3


def _pack_hand(state: HandState | None, joints: JointSet | None, slot: HandType,
               pose_dim: int) -> bytes:
    parts = [bytes([slot.value])]
    if state is None or not state.visible:
        parts.append(b"\x00")
        parts.append(b"\x00" * (16 + 4 * pose_dim + 12))
        parts.append(b"\x00")
        parts.append(b"\x00" * (4 * NUM_JOINTS * 3))
        return b"".join(parts)
    if state.pose.dim != pose_dim:
        raise DataFormatError(f"pose dim {state.pose.dim} != manifest pose_dim {pose_dim}")
    parts.append(b"\x01")
    parts.append(state.bbox.as_array().astype("<f4").tobytes())
    parts.append(state.pose.theta.astype("<f4").tobytes())
    parts.append(state.traj.as_array().astype("<f4").tobytes())
    if joints is not None:
        parts.append(b"\x01")
        parts.append(joints.joints.astype("<f4").tobytes())
    else:
        parts.append(b"\x00")
        parts.append(b"\x00" * (4 * NUM_JOINTS * 3))
    return b"".join(parts)


def _unpack_hand(buf: bytes, off: int, pose_dim: int):
    type_code = buf[off]
    visible = buf[off + 1]
    off += 2
    bbox = np.frombuffer(buf, "<f4", 4, off).astype(np.float64)
    off += 16
    theta = np.frombuffer(buf, "<f4", pose_dim, off).astype(np.float64)
    off += 4 * pose_dim
    traj = np.frombuffer(buf, "<f4", 3, off).astype(np.float64)
    off += 12
    joints_present = buf[off]
    off += 1
    joints = np.frombuffer(buf, "<f4", NUM_JOINTS * 3, off).astype(np.float64)
    off += 4 * NUM_JOINTS * 3
    if type_code > 1:
        raise DataFormatError(f"invalid hand type code {type_code}")
    if not visible:
        return None, None, off
    state = HandState(
        hand_type=HandType(type_code),
        bbox=BBox(*bbox),
        pose=HandPose(theta),
        traj=Trajectory3D(*traj),
        visible=True,
    )
    js = JointSet(joints.reshape(NUM_JOINTS, 3)) if joints_present else None
    return state, js, off


def _clip_blob(clip: ClipSample, pose_dim: int) -> bytes:
    parts = [np.ascontiguousarray(clip.frames, dtype="<f4").tobytes()]
    for states, joints in zip(clip.gt, clip.gt_joints):
        by_type = {s.hand_type: s for s in states}
        for slot in (HandType.LEFT, HandType.RIGHT):
            s = by_type.get(slot)
            parts.append(_pack_hand(s, joints.get(slot) if s else None, slot, pose_dim))
    return b"".join(parts)


def _paths(base) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix == ".json":
        base = base.with_suffix("")
    return base.with_suffix(".json"), base.with_suffix(".bin")


def write_clipfile(clips: list[ClipSample], base) -> tuple[Path, Path]:
    """Write manifest (<base>.json) and blob (<base>.bin)."""
    manifest_path, blob_path = _paths(base)
    pose_dim = clips[0].gt[0][0].pose.dim if clips and clips[0].gt and clips[0].gt[0] else 48
    records = []
    blob = bytearray()
    for clip in clips:
        seg = _clip_blob(clip, pose_dim)
        records.append(
            {
                "id": clip.id,
                "instruction": clip.instruction,
                "frames": clip.num_frames,
                "raster": list(clip.frames.shape[1:]),
                "blob_offset": len(blob),
                "blob_length": len(seg),
                "checksum": zlib.crc32(seg),
                "camera_note": clip.camera_note,
            }
        )
        blob.extend(seg)
    manifest = {
        "format_version": FORMAT_VERSION,
        "blob_file": blob_path.name,
        "pose_dim": pose_dim,
        "clips": records,
    }
    try:
        blob_path.write_bytes(bytes(blob))
        manifest_path.write_text(json.dumps(manifest, indent=1))
    except OSError as e:
        raise DataFormatError(f"cannot write clip files at {base}: {e}") from e
    return manifest_path, blob_path


def read_clipfile(base) -> list[ClipSample]:
    """Read and validate a clip dataset; raises distinct error kinds for
    version, truncation, and checksum violations."""
    manifest_path, blob_path = _paths(base)
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as e:
        raise DataFormatError(f"cannot read manifest {manifest_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataFormatError(f"manifest {manifest_path} is not valid JSON: {e}") from e
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"unsupported clip format version {version}; this build reads {FORMAT_VERSION}"
        )
    pose_dim = int(manifest.get("pose_dim", 48))
    try:
        blob = blob_path.read_bytes()
    except OSError as e:
        raise DataFormatError(f"cannot read blob {blob_path}: {e}") from e

    clips = []
    prev_end = 0
    for rec in manifest.get("clips", []):
        off, length = int(rec["blob_offset"]), int(rec["blob_length"])
        if off < prev_end:
            raise DataFormatError(f"clip {rec['id']}: overlapping blob segment")
        if off + length > len(blob):
            raise TruncationError(
                f"clip {rec['id']}: segment ends at {off + length} but blob has "
                f"{len(blob)} bytes"
            )
        prev_end = off + length
        seg = blob[off : off + length]
        if zlib.crc32(seg) != rec["checksum"]:
            raise ChecksumError(f"clip {rec['id']}: checksum mismatch")
        t = int(rec["frames"])
        r1, r2, ch = rec["raster"]
        frame_bytes = t * r1 * r2 * ch * 4
        expect = frame_bytes + t * 2 * _hand_record_size(pose_dim)
        if length != expect:
            raise TruncationError(
                f"clip {rec['id']}: segment length {length} != expected {expect}"
            )
        frames = (
            np.frombuffer(seg, "<f4", t * r1 * r2 * ch).reshape(t, r1, r2, ch).copy()
        )
        gt, gtj = [], []
        pos = frame_bytes
        for _ in range(t):
            states, joints = [], {}
            for _slot in range(2):
                state, js, pos = _unpack_hand(seg, pos, pose_dim)
                if state is not None:
                    states.append(state)
                    if js is not None:
                        joints[state.hand_type] = js
            gt.append(states)
            gtj.append(joints)
        clips.append(
            ClipSample(
                id=rec["id"],
                instruction=rec["instruction"],
                frames=frames,
                gt=gt,
                gt_joints=gtj,
                camera_note=rec.get("camera_note", ""),
            )
        )
    return clips
