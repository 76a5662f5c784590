"""Clinical quantification on reconstructed label volumes.

Per transverse slice the wall (MAB) and lumen (LIB) rasters are measured
with chords through the MAB centroid at 1 degree steps: samples are taken
every 0.1 pixel, bilinearly interpolated, and run lengths are refined by
linear interpolation of the 0.5 boundary crossings.  Diameter stenosis is
S = L_wall / (L_wall + L_lumen) maximized over chord directions; wall
thickness is resolved per side by splitting each chord at the centroid.
Longitudinal images resample the volume along in-plane lines through the
per-slice centroid path at a chosen angle from the y-axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .recon import Volume

SAMPLE_STEP_PX = 0.1
CUT_EXTENT_MM = 20.0  # symmetric extent of longitudinal cut lines
PLAQUE_IMT_MM = 1.5
DIAGNOSIS_RUN = 5


class VesselNotFoundError(Exception):
    """No slice of the volume contains a vessel cross-section."""


@dataclass
class CentroidPath:
    """One centroid per transverse slice (mm, world); valid where MAB exists."""

    points: np.ndarray  # (k, 3), undefined rows are NaN
    valid: np.ndarray  # (k,) bool

    def __post_init__(self):
        if len(self.points) != len(self.valid):
            raise ValueError("points and validity mask lengths differ")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class LongitudinalImage:
    """Resampled vessel-axis image: one column per transverse slice."""

    image: np.ndarray  # (n_samples, n_slices) float
    theta_deg: float
    sample_step_mm: float
    extent_mm: float
    centroids: np.ndarray
    valid: np.ndarray


@dataclass
class StenosisReport:
    per_slice: list  # S in [0, 1] or None where no vessel
    grade: float
    argmax_slice: int
    argmax_angle_deg: float
    bifurcation_slices: list = field(default_factory=list)


@dataclass
class PlaqueMeasurement:
    length_mm: float
    thickness_mm: float
    slice_range: tuple[int, int] | None  # [start, end) of the longest run
    runs: list = field(default_factory=list)  # all runs: (start, end, length, thickness)


@dataclass
class ScanDiagnosis:
    per_slice_flags: np.ndarray
    diseased: bool


# ---------------------------------------------------------------------------
# raster measurements

def slice_centroid(mab_mask: np.ndarray, pixel_mm: float = 1.0):
    """Arithmetic mean of mask pixel centers in mm, or None for empty masks.

    Returned as (cx, cy) with x along columns, matching pixel_to_world.
    """
    rows, cols = np.nonzero(np.asarray(mab_mask, dtype=bool))
    if len(rows) == 0:
        return None
    return np.array([cols.mean() * pixel_mm, rows.mean() * pixel_mm])


def _run_lengths(values: np.ndarray, step: float) -> np.ndarray:
    """Total above-0.5 run length per row, boundaries linearly interpolated.

    values is (rows, samples); both end samples of every row must be below
    0.5 so every run has an interior entry and exit crossing.
    """
    pres = values >= 0.5
    rows_n = values.shape[0]
    d = np.diff(pres.astype(np.int8), axis=1)
    er, ec = np.nonzero(d > 0)  # entry between ec and ec+1
    xr, xc = np.nonzero(d < 0)  # exit between xc and xc+1
    v0 = values[er, ec]
    v1 = values[er, ec + 1]
    t_in = (ec + (0.5 - v0) / (v1 - v0)) * step
    w0 = values[xr, xc]
    w1 = values[xr, xc + 1]
    t_out = (xc + (w0 - 0.5) / (w0 - w1)) * step
    return np.bincount(xr, weights=t_out, minlength=rows_n) - np.bincount(
        er, weights=t_in, minlength=rows_n
    )


def _chord_profiles(
    mab: np.ndarray, lib: np.ndarray, pixel_mm: float, angles_deg: np.ndarray
):
    """Chord lengths of both masks through the MAB centroid per direction.

    Returns (L_mab, L_lib, wall_side_max) in mm, each shaped like angles;
    wall_side_max is the larger per-side wall length obtained by splitting
    the chord at the centroid.
    """
    mab = np.asarray(mab, dtype=bool)
    lib = np.asarray(lib, dtype=bool)
    if mab.shape != lib.shape:
        raise ValueError("MAB and LIB rasters must share geometry")
    if not mab.any():
        raise ValueError("empty MAB mask")
    if np.any(lib & ~mab):
        raise ValueError("LIB region must be contained in MAB region")

    c = slice_centroid(mab, 1.0)  # pixel units: (cx, cy) = (col, row)
    rows, cols = np.nonzero(mab)
    reach = np.sqrt((rows - c[1]) ** 2 + (cols - c[0]) ** 2).max() + 2.0

    n_half = int(math.ceil(reach / SAMPLE_STEP_PX)) + 1
    s = np.arange(-n_half, n_half + 1) * SAMPLE_STEP_PX  # signed chord parameter
    phi = np.deg2rad(np.asarray(angles_deg, dtype=float))
    dx = np.cos(phi)[:, None] * s[None, :]
    dy = np.sin(phi)[:, None] * s[None, :]
    coords = np.stack([c[1] + dy, c[0] + dx])  # (row, col) for map_coordinates

    v_mab = ndimage.map_coordinates(
        mab.astype(np.float64), coords.reshape(2, -1), order=1, cval=0.0
    ).reshape(len(phi), len(s))
    v_lib = ndimage.map_coordinates(
        lib.astype(np.float64), coords.reshape(2, -1), order=1, cval=0.0
    ).reshape(len(phi), len(s))

    step_mm = SAMPLE_STEP_PX * pixel_mm
    l_mab = _run_lengths(v_mab, step_mm)
    l_lib = _run_lengths(v_lib, step_mm)

    # per-side wall: split each chord at the centroid (sample index n_half)
    pad = np.zeros((len(phi), 1))
    pos_mab = np.concatenate([pad, v_mab[:, n_half:], pad], axis=1)
    pos_lib = np.concatenate([pad, v_lib[:, n_half:], pad], axis=1)
    neg_mab = np.concatenate([pad, v_mab[:, n_half::-1], pad], axis=1)
    neg_lib = np.concatenate([pad, v_lib[:, n_half::-1], pad], axis=1)
    wall_pos = _run_lengths(pos_mab, step_mm) - _run_lengths(pos_lib, step_mm)
    wall_neg = _run_lengths(neg_mab, step_mm) - _run_lengths(neg_lib, step_mm)
    wall_side = np.maximum(wall_pos, wall_neg)

    return l_mab, l_lib, np.maximum(wall_side, 0.0)


def stenosis_diameter(
    mab: np.ndarray, lib: np.ndarray, pixel_mm: float = 1.0
) -> tuple[float, float]:
    """ECST diameter stenosis S = L_wall / (L_wall + L_lumen), maximized over
    chord directions through the MAB centroid (1 degree steps over [0, 180))."""
    angles = np.arange(0.0, 180.0)
    l_mab, l_lib, _ = _chord_profiles(mab, lib, pixel_mm, angles)
    ok = l_mab > 0
    if not ok.any():
        raise ValueError("no chord intersects the MAB mask")
    s = np.full(len(angles), -1.0)
    s[ok] = np.clip((l_mab[ok] - l_lib[ok]) / l_mab[ok], 0.0, 1.0)
    best = int(np.argmax(s))
    return float(s[best]), float(angles[best])


def wall_thickness_profile(
    mab: np.ndarray, lib: np.ndarray, pixel_mm: float = 1.0
) -> np.ndarray:
    """Max-side wall thickness (mm) per chord direction, 1 degree steps."""
    angles = np.arange(0.0, 180.0)
    _, _, wall_side = _chord_profiles(mab, lib, pixel_mm, angles)
    return wall_side


def _slice_masks(label_slice: np.ndarray):
    """MAB/LIB rasters of one transverse slice, restricted to the largest
    connected MAB component.  Returns (mab, lib, is_bifurcation) or None."""
    mab = label_slice >= 1
    if not mab.any():
        return None
    labels, n = ndimage.label(mab)
    bifurcation = n > 1
    if bifurcation:
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
        keep = int(np.argmax(sizes)) + 1
        mab = labels == keep
    lib = (label_slice == 2) & mab
    return mab, lib, bifurcation


def centroid_path(label_volume: Volume) -> CentroidPath:
    """World-frame centroid of the largest MAB component per transverse slice."""
    nz = label_volume.dims[2]
    points = np.full((nz, 3), np.nan)
    valid = np.zeros(nz, dtype=bool)
    for iz in range(nz):
        parts = _slice_masks(label_volume.slice_z(iz).T)  # (row y, col x)
        if parts is None:
            continue
        c = slice_centroid(parts[0], label_volume.spacing)
        points[iz, 0] = label_volume.origin[0] + c[0]
        points[iz, 1] = label_volume.origin[1] + c[1]
        points[iz, 2] = label_volume.origin[2] + iz * label_volume.spacing
        valid[iz] = True
    return CentroidPath(points=points, valid=valid)


def cut_longitudinal(
    vol: Volume,
    path: CentroidPath,
    theta_deg: float,
    extent_mm: float = CUT_EXTENT_MM,
    step_mm: float = 0.2,
) -> LongitudinalImage:
    """Oblique longitudinal image: slice i contributes the intensities along
    the in-plane line through centroid C_i at angle theta from the y-axis.

    Bilinear in-plane interpolation, fixed symmetric extent about C_i,
    zero padding outside the volume and on invalid slices.
    """
    if not -90.0 <= theta_deg < 90.0:
        raise ValueError("theta must lie in [-90, 90) degrees")
    if len(path) != vol.dims[2]:
        raise ValueError("centroid path length must match the slice count")
    if not path.valid.any():
        raise ValueError("centroid path is empty")

    theta = math.radians(theta_deg)
    direction = np.array([math.sin(theta), math.cos(theta)])  # (x, y)
    s = np.arange(-extent_mm / 2.0, extent_mm / 2.0 + step_mm / 2.0, step_mm)
    image = np.zeros((len(s), len(path)))
    for iz in range(len(path)):
        if not path.valid[iz]:
            continue
        cx, cy = path.points[iz, 0], path.points[iz, 1]
        x = (cx + s * direction[0] - vol.origin[0]) / vol.spacing
        y = (cy + s * direction[1] - vol.origin[1]) / vol.spacing
        image[:, iz] = ndimage.map_coordinates(
            vol.slice_z(iz).astype(np.float64), np.stack([x, y]), order=1, cval=0.0
        )
    return LongitudinalImage(
        image=image,
        theta_deg=theta_deg,
        sample_step_mm=step_mm,
        extent_mm=extent_mm,
        centroids=path.points.copy(),
        valid=path.valid.copy(),
    )


# ---------------------------------------------------------------------------
# per-volume aggregation

def stenosis_grade(label_volume: Volume) -> StenosisReport:
    """Per-slice diameter stenosis and its maximum over the volume."""
    nz = label_volume.dims[2]
    per_slice: list = [None] * nz
    best = (-1.0, -1, 0.0)
    bifurcations = []
    for iz in range(nz):
        parts = _slice_masks(label_volume.slice_z(iz).T)
        if parts is None:
            continue
        mab, lib, bif = parts
        if bif:
            bifurcations.append(iz)
        s, angle = stenosis_diameter(mab, lib, label_volume.spacing)
        per_slice[iz] = s
        if s > best[0]:
            best = (s, iz, angle)
    if best[1] < 0:
        raise VesselNotFoundError("no slice contains a vessel")
    return StenosisReport(
        per_slice=per_slice,
        grade=best[0],
        argmax_slice=best[1],
        argmax_angle_deg=best[2],
        bifurcation_slices=bifurcations,
    )


def detect_plaque_slices(profiles, threshold_mm: float = PLAQUE_IMT_MM) -> np.ndarray:
    """Flag slices whose max wall thickness strictly exceeds the threshold.

    profiles is a sequence with one thickness profile (or None) per slice.
    """
    flags = np.zeros(len(profiles), dtype=bool)
    for i, prof in enumerate(profiles):
        if prof is not None and len(prof) > 0:
            flags[i] = float(np.max(prof)) > threshold_mm
    return flags


def _true_runs(flags: np.ndarray):
    """Maximal runs of consecutive True as (start, end) half-open pairs."""
    padded = np.concatenate([[False], np.asarray(flags, dtype=bool), [False]])
    d = np.diff(padded.astype(np.int8))
    starts = np.nonzero(d > 0)[0]
    ends = np.nonzero(d < 0)[0]
    return list(zip(starts.tolist(), ends.tolist()))


def scan_diagnosis(flags, k: int = DIAGNOSIS_RUN) -> ScanDiagnosis:
    """Diseased iff some run of at least k consecutive flagged slices exists."""
    if k < 1:
        raise ValueError("run length must be >= 1")
    flags = np.asarray(flags, dtype=bool)
    diseased = any(e - s >= k for s, e in _true_runs(flags))
    return ScanDiagnosis(per_slice_flags=flags, diseased=diseased)


def plaque_size(flags, profiles, slice_spacing_mm: float) -> PlaqueMeasurement:
    """Plaque extent from the longest flagged run: length = run * spacing,
    thickness = max wall thickness inside the run."""
    if not slice_spacing_mm > 0:
        raise ValueError("slice spacing must be > 0")
    flags = np.asarray(flags, dtype=bool)
    runs = []
    for s, e in _true_runs(flags):
        thick = 0.0
        for i in range(s, e):
            if profiles[i] is not None and len(profiles[i]) > 0:
                thick = max(thick, float(np.max(profiles[i])))
        runs.append((s, e, (e - s) * slice_spacing_mm, thick))
    if not runs:
        return PlaqueMeasurement(length_mm=0.0, thickness_mm=0.0, slice_range=None, runs=[])
    longest = max(runs, key=lambda r: (r[1] - r[0], -r[0]))
    return PlaqueMeasurement(
        length_mm=longest[2],
        thickness_mm=longest[3],
        slice_range=(longest[0], longest[1]),
        runs=runs,
    )


def measure_label_volume(
    label_volume: Volume,
    thickness_threshold_mm: float = PLAQUE_IMT_MM,
    consecutive: int = DIAGNOSIS_RUN,
    external_flags=None,
) -> dict:
    """Full measurement report for one label volume, JSON-ready.

    Per-slice plaque flags come from the wall-thickness criterion unless
    external per-slice flags (e.g. from a classifier) are supplied.
    """
    nz = label_volume.dims[2]
    angles = np.arange(0.0, 180.0)
    per_slice: list = [None] * nz
    profiles: list = [None] * nz
    bifurcations = []
    best = (-1.0, -1, 0.0)
    for iz in range(nz):
        parts = _slice_masks(label_volume.slice_z(iz).T)
        if parts is None:
            continue
        mab, lib, bif = parts
        if bif:
            bifurcations.append(iz)
        l_mab, l_lib, wall_side = _chord_profiles(mab, lib, label_volume.spacing, angles)
        ok = l_mab > 0
        if not ok.any():
            continue
        s = np.full(len(angles), -1.0)
        s[ok] = np.clip((l_mab[ok] - l_lib[ok]) / l_mab[ok], 0.0, 1.0)
        a = int(np.argmax(s))
        per_slice[iz] = float(s[a])
        profiles[iz] = wall_side
        if s[a] > best[0]:
            best = (float(s[a]), iz, float(angles[a]))
    if best[1] < 0:
        raise VesselNotFoundError("no slice contains a vessel")
    report = StenosisReport(
        per_slice=per_slice,
        grade=best[0],
        argmax_slice=best[1],
        argmax_angle_deg=best[2],
        bifurcation_slices=bifurcations,
    )

    if external_flags is not None:
        flags = np.asarray(external_flags, dtype=bool)
        if len(flags) != nz:
            raise ValueError("external flags must provide one value per slice")
        flags_source = "external"
    else:
        flags = detect_plaque_slices(profiles, thickness_threshold_mm)
        flags_source = "thickness"

    diagnosis = scan_diagnosis(flags, consecutive)
    plaque = plaque_size(flags, profiles, label_volume.spacing)
    thickness = [
        float(np.max(p)) if p is not None and len(p) else None for p in profiles
    ]
    return {
        "grade": float(report.grade),
        "argmax_slice": int(report.argmax_slice),
        "argmax_angle_deg": float(report.argmax_angle_deg),
        "per_slice_stenosis": [None if v is None else float(v) for v in report.per_slice],
        "per_slice_thickness_mm": thickness,
        "per_slice_flags": [bool(f) for f in flags],
        "flags_source": flags_source,
        "diseased": bool(diagnosis.diseased),
        "plaque_length_mm": float(plaque.length_mm),
        "plaque_thickness_mm": float(plaque.thickness_mm),
        "plaque_slice_range": list(plaque.slice_range) if plaque.slice_range else None,
        "plaque_runs": [
            {"start": s, "end": e, "length_mm": l, "thickness_mm": t}
            for s, e, l, t in plaque.runs
        ],
        "bifurcation_slices": report.bifurcation_slices,
        "slice_spacing_mm": float(label_volume.spacing),
        "thickness_threshold_mm": float(thickness_threshold_mm),
        "consecutive_rule": int(consecutive),
    }
