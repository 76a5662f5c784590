"""Voxel-volume reconstruction from posed 2D frames.

Forward "dot projection" mapping: every pixel center is transformed by its
frame pose and written to the nearest voxel of an axis-aligned grid whose
bounds are the hull of all transformed frame corners padded by one voxel.
Intensity volumes average colliding writes in a floating accumulator and
finalize to 8 bit (round half away from zero); label volumes take the max
and are hole-filled by nearest neighbor so no fractional classes appear.
Also provides the naive pseudo-volume baseline that stacks frames as
parallel slabs by projected center position, ignoring orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pose import PoseSequence, quat_to_matrix


@dataclass(frozen=True)
class Frame:
    """Single 2D grayscale frame; intensities indexed [row v, column u]."""

    intensities: np.ndarray
    pixel_spacing: float

    def __post_init__(self):
        img = np.asarray(self.intensities)
        if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
            raise ValueError("frame must be a non-empty 2D raster")
        if not self.pixel_spacing > 0:
            raise ValueError("pixel spacing must be > 0")
        object.__setattr__(self, "intensities", np.ascontiguousarray(img, dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def height(self) -> int:
        return self.intensities.shape[0]


@dataclass(frozen=True)
class MaskPair:
    """Per-frame binary rasters for the wall (MAB) and lumen (LIB) regions."""

    mab: np.ndarray
    lib: np.ndarray

    def __post_init__(self):
        mab = np.asarray(self.mab, dtype=bool)
        lib = np.asarray(self.lib, dtype=bool)
        if mab.shape != lib.shape:
            raise ValueError("MAB and LIB rasters must share geometry")
        if np.any(lib & ~mab):
            raise ValueError("LIB region must be contained in MAB region")
        object.__setattr__(self, "mab", mab)
        object.__setattr__(self, "lib", lib)

    def labels(self) -> np.ndarray:
        """0 background, 1 wall (MAB minus LIB), 2 lumen (LIB)."""
        out = np.zeros(self.mab.shape, dtype=np.uint8)
        out[self.mab] = 1
        out[self.lib] = 2
        return out


@dataclass
class FrameSequence:
    frames: list
    poses: PoseSequence
    frame_rate: float = 24.0

    def __post_init__(self):
        if len(self.frames) != len(self.poses):
            raise ValueError("frame and pose counts differ")
        if len(self.frames) < 1:
            raise ValueError("sequence must contain at least one frame")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class ReconConfig:
    spacing: float = 0.2
    hole_fill_radius: int = 3
    label_mode: bool = False

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("voxel spacing must be > 0")
        if self.hole_fill_radius < 0:
            raise ValueError("hole fill radius must be >= 0")


@dataclass
class Volume:
    """Axis-aligned voxel grid; voxels indexed [ix, iy, iz]."""

    origin: np.ndarray
    spacing: float
    voxels: np.ndarray
    label_mode: bool = False
    fill_mask: np.ndarray | None = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        if not self.spacing > 0:
            raise ValueError("voxel spacing must be > 0")
        if self.voxels.ndim != 3:
            raise ValueError("voxel grid must be 3D")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def world_to_index(self, pts: np.ndarray) -> np.ndarray:
        """Nearest voxel index for world point(s), mm."""
        rel = (np.asarray(pts, dtype=float) - self.origin) / self.spacing
        return np.floor(rel + 0.5).astype(np.int64)

    def index_to_world(self, idx: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(idx, dtype=float) * self.spacing

    def slice_z(self, iz: int) -> np.ndarray:
        return self.voxels[:, :, iz]

    def aligned_with(self, other: "Volume") -> bool:
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and bool(np.all(self.origin == other.origin))
        )


def pixel_to_world(frame_index: int, pixel, seq: FrameSequence) -> np.ndarray:
    """World position of in-plane point (u, v): pose applied to
    (u * pixel_spacing, v * pixel_spacing, 0)."""
    frame = seq.frames[frame_index]
    u, v = float(pixel[0]), float(pixel[1])
    if not (0 <= u <= frame.width - 1 and 0 <= v <= frame.height - 1):
        raise ValueError(f"pixel ({u}, {v}) outside frame bounds")
    pose = seq.poses.pose(frame_index)
    return pose.apply(np.array([u * frame.pixel_spacing, v * frame.pixel_spacing, 0.0]))


def _frame_corner_points(frame: Frame, pose_q, pose_t) -> np.ndarray:
    ps = frame.pixel_spacing
    w, h = frame.width, frame.height
    corners = np.array(
        [
            [0.0, 0.0, 0.0],
            [(w - 1) * ps, 0.0, 0.0],
            [0.0, (h - 1) * ps, 0.0],
            [(w - 1) * ps, (h - 1) * ps, 0.0],
        ]
    )
    return corners @ quat_to_matrix(pose_q).T + pose_t


def _grid_from_bounds(lo: np.ndarray, hi: np.ndarray, spacing: float):
    """Origin and dims of a voxel grid covering [lo, hi] padded by one voxel."""
    origin = lo - spacing
    dims = np.floor((hi + spacing - origin) / spacing + 0.5).astype(int) + 1
    return origin, tuple(int(d) for d in dims)


def _frame_world_points(frame: Frame, pose_q, pose_t) -> np.ndarray:
    ps = frame.pixel_spacing
    u, v = np.meshgrid(np.arange(frame.width), np.arange(frame.height))
    plane = np.stack(
        [u.ravel() * ps, v.ravel() * ps, np.zeros(frame.width * frame.height)], axis=-1
    )
    return plane @ quat_to_matrix(pose_q).T + pose_t


class _VoxelBinner:
    """Accumulates forward-mapped pixel writes into a flat voxel grid."""

    def __init__(self, origin, dims, spacing, label_mode):
        self.origin = origin
        self.dims = dims
        self.spacing = spacing
        self.label_mode = label_mode
        n = int(np.prod(dims))
        self.counts = np.zeros(n, dtype=np.int64)
        self.acc = np.zeros(n, dtype=np.uint8 if label_mode else np.float64)

    def add(self, pts: np.ndarray, vals: np.ndarray) -> None:
        idx = np.floor((pts - self.origin) / self.spacing + 0.5).astype(np.int64)
        np.clip(idx, 0, np.array(self.dims) - 1, out=idx)
        flat = np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), self.dims)
        n = len(self.counts)
        self.counts += np.bincount(flat, minlength=n)
        if self.label_mode:
            np.maximum.at(self.acc, flat, vals)
        else:
            self.acc += np.bincount(flat, weights=vals.astype(np.float64), minlength=n)

    def finalize(self) -> Volume:
        filled = self.counts > 0
        if self.label_mode:
            voxels = self.acc
        else:
            voxels = np.zeros_like(self.counts, dtype=np.uint8)
            means = self.acc[filled] / self.counts[filled]
            voxels[filled] = np.floor(means + 0.5).astype(np.uint8)
        return Volume(
            origin=self.origin,
            spacing=self.spacing,
            voxels=voxels.reshape(self.dims),
            label_mode=self.label_mode,
            fill_mask=filled.reshape(self.dims),
        )


def fdp_reconstruct(seq: FrameSequence, cfg: ReconConfig) -> Volume:
    """Forward-map every pixel to its nearest voxel and bin-fill the grid.

    Colliding writes average in intensity mode and take the max label in
    label mode; fill_mask marks voxels that received at least one write.
    """
    if len(seq) < 1:
        raise ValueError("empty frame sequence")
    if not (np.all(np.isfinite(seq.poses.quats)) and np.all(np.isfinite(seq.poses.trans))):
        raise ValueError("poses must be finite")

    corners = np.concatenate(
        [
            _frame_corner_points(f, seq.poses.quats[i], seq.poses.trans[i])
            for i, f in enumerate(seq.frames)
        ]
    )
    origin, dims = _grid_from_bounds(corners.min(axis=0), corners.max(axis=0), cfg.spacing)
    binner = _VoxelBinner(origin, dims, cfg.spacing, cfg.label_mode)
    for i, frame in enumerate(seq.frames):
        pts = _frame_world_points(frame, seq.poses.quats[i], seq.poses.trans[i])
        binner.add(pts, frame.intensities.ravel())
    return binner.finalize()


def _chebyshev_offsets(radius: int) -> list[tuple[tuple[int, int, int], float]]:
    """Non-zero offsets within the Chebyshev ball, sorted by Euclidean distance
    (ties by lexicographic offset) so nearest-neighbor filling is deterministic."""
    offs = []
    for dx in range(-radius, radius + 1):
        for dy in range(-radius, radius + 1):
            for dz in range(-radius, radius + 1):
                if dx == dy == dz == 0:
                    continue
                offs.append(((dx, dy, dz), math.sqrt(dx * dx + dy * dy + dz * dz)))
    offs.sort(key=lambda o: (o[1], o[0]))
    return offs


def _shift_slices(shape, off):
    """Slice pairs (dst, src) realizing a clipped shift by `off`."""
    dst, src = [], []
    for size, d in zip(shape, off):
        if d >= 0:
            dst.append(slice(d, size))
            src.append(slice(0, size - d))
        else:
            dst.append(slice(0, size + d))
            src.append(slice(-d, size))
    return tuple(dst), tuple(src)


def hole_fill(vol: Volume, radius: int) -> Volume:
    """Fill unwritten voxels from written neighbors within a Chebyshev ball.

    Intensity volumes take the inverse-distance-weighted mean of filled
    neighbors; label volumes copy the nearest filled neighbor (never
    averaging classes).  Written voxels are unchanged; radius 0 is the
    identity.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if vol.fill_mask is None:
        raise ValueError("volume has no fill mask; cannot hole-fill")
    voxels = vol.voxels.copy()
    filled = vol.fill_mask.copy()
    if radius == 0:
        return Volume(vol.origin.copy(), vol.spacing, voxels, vol.label_mode, filled)

    holes = ~filled
    if vol.label_mode:
        assigned = np.zeros(vol.dims, dtype=bool)
        for off, _dist in _chebyshev_offsets(radius):
            dst, src = _shift_slices(vol.dims, off)
            targets = np.zeros(vol.dims, dtype=bool)
            targets[dst] = filled[src]
            take = holes & ~assigned & targets
            if not np.any(take):
                continue
            shifted = np.zeros_like(voxels)
            shifted[dst] = vol.voxels[src]
            voxels[take] = shifted[take]
            assigned |= take
        newly = assigned
    else:
        num = np.zeros(vol.dims, dtype=np.float64)
        den = np.zeros(vol.dims, dtype=np.float64)
        for off, dist in _chebyshev_offsets(radius):
            dst, src = _shift_slices(vol.dims, off)
            w = 1.0 / dist
            num[dst] += w * (filled[src] * vol.voxels[src].astype(np.float64))
            den[dst] += w * filled[src]
        newly = holes & (den > 0)
        voxels[newly] = np.floor(num[newly] / den[newly] + 0.5).astype(voxels.dtype)
    return Volume(vol.origin.copy(), vol.spacing, voxels, vol.label_mode, filled | newly)


def reconstruct_mask_volume(
    masks: list[MaskPair],
    poses: PoseSequence,
    pixel_spacing: float,
    cfg: ReconConfig,
) -> Volume:
    """Label volume from per-frame MAB/LIB rasters.

    Uses the same forward mapping as fdp_reconstruct in label mode
    (max-write) followed by nearest-neighbor hole filling; output voxels
    are 0 background, 1 wall, 2 lumen.
    """
    if len(masks) != len(poses):
        raise ValueError("one mask pair per pose required")
    shape = masks[0].mab.shape
    for m in masks:
        if m.mab.shape != shape:
            raise ValueError("mask geometry differs between frames")
    frames = [Frame(intensities=m.labels(), pixel_spacing=pixel_spacing) for m in masks]
    seq = FrameSequence(frames=frames, poses=poses)
    label_cfg = ReconConfig(spacing=cfg.spacing, hole_fill_radius=cfg.hole_fill_radius, label_mode=True)
    vol = fdp_reconstruct(seq, label_cfg)
    return hole_fill(vol, cfg.hole_fill_radius)


def stack_pseudo_volume(seq: FrameSequence, cfg: ReconConfig | None = None) -> Volume:
    """Baseline volume: frames stacked as parallel slabs by the projection of
    each frame's center position onto the mean sweep direction, ignoring
    rotation and in-plane offsets."""
    if len(seq) < 2:
        raise ValueError("pseudo volume needs at least 2 frames")
    cfg = cfg or ReconConfig()

    centers = []
    for i, f in enumerate(seq.frames):
        c = np.array(
            [(f.width - 1) / 2.0 * f.pixel_spacing, (f.height - 1) / 2.0 * f.pixel_spacing, 0.0]
        )
        centers.append(quat_to_matrix(seq.poses.quats[i]) @ c + seq.poses.trans[i])
    centers = np.stack(centers)
    direction = (centers[-1] - centers[0]) / (len(seq) - 1)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise ValueError("sweep direction is degenerate (coincident frame centers)")
    direction = direction / norm
    z_proj = centers @ direction

    ps = seq.frames[0].pixel_spacing
    w, h = seq.frames[0].width, seq.frames[0].height
    lo = np.array([0.0, 0.0, float(z_proj.min())])
    hi = np.array([(w - 1) * ps, (h - 1) * ps, float(z_proj.max())])
    origin, dims = _grid_from_bounds(lo, hi, cfg.spacing)

    binner = _VoxelBinner(origin, dims, cfg.spacing, cfg.label_mode)
    u, v = np.meshgrid(np.arange(w), np.arange(h))
    for i, frame in enumerate(seq.frames):
        if frame.width != w or frame.height != h:
            raise ValueError("pseudo stacking requires uniform frame geometry")
        pts = np.stack(
            [u.ravel() * ps, v.ravel() * ps, np.full(w * h, z_proj[i])], axis=-1
        )
        binner.add(pts, frame.intensities.ravel())
    return binner.finalize()
