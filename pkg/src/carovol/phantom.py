"""Synthetic carotid tube phantoms with analytic ground truth.

A phantom is a straight tube along world z: an outer vessel-wall disk
(MAB) and an inner lumen disk (LIB) per cross-section, with an optional
rectangular lumen-narrowing bump that creates a plaque of known length,
thickness and diameter-stenosis grade.  Sweeps are rendered by evaluating
tube membership at the world position of every pixel, so oblique (tilted)
frames are exact too.  Pose noise and fallback (reversed-run) models are
deterministic per seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .pose import (
    MetricWeights,
    PoseSequence,
    quat_from_rotvec,
    quat_mul,
    quat_to_matrix,
    sequence_distances,
)
from .recon import Frame, FrameSequence, MaskPair


@dataclass(frozen=True)
class BumpSpec:
    """Rectangular lumen narrowing: lib radius drops by depth over a window."""

    center_mm: float
    length_mm: float
    depth_mm: float


@dataclass(frozen=True)
class PhantomSpec:
    length_mm: float = 50.0
    mab_radius_mm: float = 4.0
    lib_radius_mm: float = 3.2
    bump: BumpSpec | None = None
    wall_intensity: int = 180
    lumen_intensity: int = 10
    background_intensity: int = 40
    frame_width: int = 96
    frame_height: int = 96
    pixel_spacing_mm: float = 0.2
    lumen_offset_mm: tuple[float, float] = (0.0, 0.0)
    pixel_noise_sigma: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if not 0 < self.lib_radius_mm <= self.mab_radius_mm:
            raise ValueError("need 0 < lib_radius <= mab_radius")
        if self.bump is not None:
            if not 0 < self.bump.depth_mm < self.lib_radius_mm:
                raise ValueError("bump depth must leave a positive lumen")
            if self.bump.length_mm <= 0:
                raise ValueError("bump length must be positive")
        off = float(np.hypot(*self.lumen_offset_mm))
        if off + self.lib_radius_mm > self.mab_radius_mm:
            raise ValueError("lumen disk must stay inside the wall disk")
        half_w = (self.frame_width - 1) / 2.0 * self.pixel_spacing_mm
        half_h = (self.frame_height - 1) / 2.0 * self.pixel_spacing_mm
        if self.mab_radius_mm >= min(half_w, half_h):
            raise ValueError("vessel radius must fit inside the frame")
        for v in (self.wall_intensity, self.lumen_intensity, self.background_intensity):
            if not 0 <= v <= 255:
                raise ValueError("intensities must be 8-bit values")

    def mab_radius(self, z):
        """Outer wall radius at axial position z (mm); vectorized over z."""
        z = np.asarray(z, dtype=float)
        r = np.full(z.shape, self.mab_radius_mm)
        return float(r) if r.ndim == 0 else r

    def lib_radius(self, z):
        """Lumen radius at axial position z (mm); vectorized over z."""
        z = np.asarray(z, dtype=float)
        r = np.full(z.shape, self.lib_radius_mm)
        if self.bump is not None:
            half = self.bump.length_mm / 2.0
            inside = np.abs(z - self.bump.center_mm) <= half
            r = np.where(inside, self.lib_radius_mm - self.bump.depth_mm, r)
        return float(r) if r.ndim == 0 else r

    def designed_grade(self) -> float:
        """Diameter stenosis of the concentric design: 1 - lib/mab at the bump."""
        lib_min = self.lib_radius_mm
        if self.bump is not None:
            lib_min -= self.bump.depth_mm
        return 1.0 - lib_min / self.mab_radius_mm

    def designed_wall_mm(self, at_bump: bool = False) -> float:
        lib = self.lib_radius_mm - (self.bump.depth_mm if at_bump and self.bump else 0.0)
        return self.mab_radius_mm - lib

    def axis_xy(self) -> tuple[float, float]:
        """In-plane tube axis position: the frame's central pixel, in mm."""
        return (
            (self.frame_width - 1) / 2.0 * self.pixel_spacing_mm,
            (self.frame_height - 1) / 2.0 * self.pixel_spacing_mm,
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Pose corruption: i.i.d. Gaussian jitter plus an optional reversed run."""

    sigma_trans: float = 0.0
    sigma_rot: float = 0.0
    fallback: tuple[int, int] | None = None  # (start index, run length)
    seed: int = 0

    def __post_init__(self):
        if self.sigma_trans < 0 or self.sigma_rot < 0:
            raise ValueError("noise sigmas must be >= 0")


def spec_from_dict(d: dict) -> tuple[PhantomSpec, dict]:
    """Build a PhantomSpec from the documented JSON schema.

    Returns the spec plus the sweep parameters {n_frames, frame_pitch_mm,
    tilt_deg} carried alongside it in the file.
    """
    d = dict(d)
    sweep = {
        "n_frames": int(d.pop("n_frames", 200)),
        "frame_pitch_mm": float(d.pop("frame_pitch_mm", 0.25)),
        "tilt_deg": float(d.pop("tilt_deg", 0.0)),
    }
    bump = d.pop("bump", None)
    if bump is not None:
        bump = BumpSpec(
            center_mm=float(bump["center_mm"]),
            length_mm=float(bump["length_mm"]),
            depth_mm=float(bump["depth_mm"]),
        )
    offset = tuple(d.pop("lumen_offset_mm", (0.0, 0.0)))
    known = {f for f in PhantomSpec.__dataclass_fields__}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown phantom spec fields: {sorted(unknown)}")
    return PhantomSpec(bump=bump, lumen_offset_mm=offset, **d), sweep


def load_spec(path) -> tuple[PhantomSpec, dict]:
    with open(path, "r", encoding="utf-8") as f:
        return spec_from_dict(json.load(f))


def generate_sweep(
    spec: PhantomSpec,
    n_frames: int,
    frame_pitch_mm: float,
    tilt_deg: float = 0.0,
) -> tuple[FrameSequence, list[MaskPair], PoseSequence]:
    """Render a posed sweep of the analytic tube.

    Frames sit at equispaced z with exact pure-translation poses (plus an
    optional constant tilt about x); masks are exact membership
    rasterizations, so LIB is contained in MAB on every frame.
    """
    if n_frames < 2:
        raise ValueError("need at least 2 frames")
    if not frame_pitch_mm > 0:
        raise ValueError("frame pitch must be > 0")

    ps = spec.pixel_spacing_mm
    w_px, h_px = spec.frame_width, spec.frame_height
    ax, ay = spec.axis_xy()
    ox, oy = spec.lumen_offset_mm

    tilt = np.deg2rad(tilt_deg)
    quat = quat_from_rotvec(np.array([tilt, 0.0, 0.0]))
    rot = quat_to_matrix(quat)

    u, v = np.meshgrid(np.arange(w_px), np.arange(h_px))  # (h, w), u = column
    plane = np.stack([u * ps, v * ps, np.zeros_like(u, dtype=float)], axis=-1)
    plane_rot = plane @ rot.T

    rng = np.random.default_rng(spec.noise_seed)
    frames, masks, quats, trans = [], [], [], []
    for i in range(n_frames):
        t = np.array([0.0, 0.0, i * frame_pitch_mm])
        pts = plane_rot + t
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        in_z = (z >= 0.0) & (z <= spec.length_mm)
        r2_wall = (x - ax) ** 2 + (y - ay) ** 2
        r2_lum = (x - ax - ox) ** 2 + (y - ay - oy) ** 2
        mab = in_z & (r2_wall <= spec.mab_radius(z) ** 2)
        lib = in_z & (r2_lum <= spec.lib_radius(z) ** 2)

        img = np.full((h_px, w_px), float(spec.background_intensity))
        img[mab] = spec.wall_intensity
        img[lib] = spec.lumen_intensity
        if spec.pixel_noise_sigma > 0:
            img += rng.normal(0.0, spec.pixel_noise_sigma, img.shape)
        img = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)

        frames.append(Frame(intensities=img, pixel_spacing=ps))
        masks.append(MaskPair(mab=mab, lib=lib))
        quats.append(quat)
        trans.append(t)

    poses = PoseSequence(np.stack(quats), np.stack(trans))
    return FrameSequence(frames=frames, poses=poses), masks, poses


def perturb_poses(gt: PoseSequence, noise: NoiseSpec) -> PoseSequence:
    """Corrupt ground-truth poses: reversed fallback run, then i.i.d. jitter."""
    k = len(gt)
    quats = gt.quats.copy()
    trans = gt.trans.copy()
    if noise.fallback is not None:
        start, run = noise.fallback
        if not (0 <= start and start + run <= k and run >= 1):
            raise ValueError("fallback run out of range")
        sl = slice(start, start + run)
        quats[sl] = quats[sl][::-1]
        trans[sl] = trans[sl][::-1]
    rng = np.random.default_rng(noise.seed)
    trans = trans + rng.normal(0.0, noise.sigma_trans, (k, 3))
    rotvecs = rng.normal(0.0, noise.sigma_rot, (k, 3))
    quats = quat_mul(quat_from_rotvec(rotvecs), quats)
    return PoseSequence(quats, trans)


def trajectory_rmse(a: PoseSequence, b: PoseSequence, w: MetricWeights) -> float:
    """Root-mean-square geodesic distance over frames."""
    d = sequence_distances(a, b, w)
    return float(np.sqrt(np.mean(d * d)))
