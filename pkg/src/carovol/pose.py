"""Rigid-transform algebra on SE(3).

Rotations are unit quaternions in (w, x, y, z) order, renormalized and
canonicalized to w >= 0 after every operation.  Translations are in mm.
Distances use a weighted product metric combining Euclidean translation
distance with the SO(3) geodesic angle; geodesics split into slerp on the
rotation and lerp on the translation, which keeps proximal steps closed
form.  The coupled SE(3) exp/log maps are provided as well for pose I/O.

Quaternion helpers accept stacked (..., 4) arrays so sequence-level code
can batch them; the Pose-level API works on single transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT2 = math.sqrt(2.0)
HUBER_KNEE = 1.0 / SQRT2


# ---------------------------------------------------------------------------
# quaternion helpers (batch-capable, scalar-first convention)

def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Renormalize and flip sign so w >= 0 (q and -q are the same rotation)."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("zero quaternion cannot be normalized")
    q = q / n
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    flip = (w < 0) | (
        (w == 0) & ((x < 0) | ((x == 0) & ((y < 0) | ((y == 0) & (z < 0)))))
    )
    return np.where(flip[..., None], -q, q)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate 3-vectors v by unit quaternions q (broadcasting on both)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + q[..., :1] * t + np.cross(u, t)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def quat_from_rotvec(phi: np.ndarray) -> np.ndarray:
    """Exponential coordinates (axis * angle, radians) -> unit quaternion."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi, axis=-1)
    half = 0.5 * angle
    # sin(a/2)/a with the series limit 1/2 - a^2/48 near zero
    safe = np.where(angle > 1e-8, angle, 1.0)
    s = np.where(angle > 1e-8, np.sin(half) / safe, 0.5 - angle * angle / 48.0)
    q = np.concatenate([np.cos(half)[..., None], s[..., None] * phi], axis=-1)
    return quat_canonical(q)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Unit quaternion -> exponential coordinates with angle in [0, pi]."""
    q = quat_canonical(q)
    w = q[..., 0]
    u = q[..., 1:]
    n = np.linalg.norm(u, axis=-1)
    angle = 2.0 * np.arctan2(n, w)
    # angle/n, second-order series for the near-zero axis extraction
    safe_n = np.where(n > 1e-8, n, 1.0)
    series = (2.0 / np.where(w > 0, w, 1.0)) * (1.0 - n * n / (3.0 * w * w + 1e-300))
    scale = np.where(n > 1e-8, angle / safe_n, series)
    return scale[..., None] * u


def quat_slerp(qa: np.ndarray, qb: np.ndarray, t) -> np.ndarray:
    """Spherical interpolation along the shorter arc; t broadcasts."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    t = np.asarray(t, dtype=float)
    d = np.sum(qa * qb, axis=-1)
    qb = np.where(d[..., None] < 0, -qb, qb)
    d = np.clip(np.abs(d), -1.0, 1.0)
    theta = np.arccos(d)
    small = theta < 1e-8
    sin_theta = np.where(small, 1.0, np.sin(theta))
    wa = np.where(small, 1.0 - t, np.sin((1.0 - t) * theta) / sin_theta)
    wb = np.where(small, t, np.sin(t * theta) / sin_theta)
    return quat_canonical(wa[..., None] * qa + wb[..., None] * qb)


def rotation_angle(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """SO(3) geodesic angle between two unit quaternions, in [0, pi]."""
    d = np.abs(np.sum(np.asarray(qa, float) * np.asarray(qb, float), axis=-1))
    return 2.0 * np.arccos(np.clip(d, 0.0, 1.0))


def _hat(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class Rotation:
    """Rotation stored as a unit quaternion (w, x, y, z), w >= 0."""

    q: np.ndarray

    def __post_init__(self):
        q = quat_canonical(np.asarray(self.q, dtype=float).reshape(4))
        object.__setattr__(self, "q", q)

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_rotvec(phi) -> "Rotation":
        return Rotation(quat_from_rotvec(np.asarray(phi, dtype=float)))

    @staticmethod
    def from_axis_angle(axis, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise ValueError("rotation axis must be non-zero")
        return Rotation.from_rotvec(axis * (angle / n))

    def rotvec(self) -> np.ndarray:
        return quat_to_rotvec(self.q)

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def rotate(self, v) -> np.ndarray:
        return quat_rotate(self.q, np.asarray(v, dtype=float))

    def angle(self) -> float:
        return float(rotation_angle(self.q, np.array([1.0, 0.0, 0.0, 0.0])))


@dataclass(frozen=True)
class Pose:
    """Element of SE(3): rotation plus translation in mm."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        t = np.array(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(Rotation.identity(), np.zeros(3))

    @staticmethod
    def from_translation(t) -> "Pose":
        return Pose(Rotation.identity(), np.asarray(t, dtype=float))

    def apply(self, v) -> np.ndarray:
        """Transform point(s) v: R v + t."""
        return self.rotation.rotate(v) + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix()
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class Twist:
    """Tangent-space coordinates: rho translational (mm), phi rotational (rad)."""

    rho: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rho", np.array(self.rho, dtype=float).reshape(3))
        object.__setattr__(self, "phi", np.array(self.phi, dtype=float).reshape(3))


@dataclass(frozen=True)
class MetricWeights:
    """Scales mixing translation (mm) and rotation (rad) in one distance.

    The default w_rot = 10 makes 0.1 rad of rotation cost as much as 1 mm
    of translation, so realistic hand-jitter magnitudes in both parts
    contribute comparably.
    """

    w_trans: float = 1.0
    w_rot: float = 10.0

    def __post_init__(self):
        if not self.w_trans > 0:
            raise ValueError("w_trans must be > 0")
        if self.w_rot < 0:
            raise ValueError("w_rot must be >= 0")


class PoseSequence:
    """Ordered pose signal stored as stacked (k, 4) / (k, 3) arrays."""

    __slots__ = ("quats", "trans")

    def __init__(self, quats: np.ndarray, trans: np.ndarray):
        quats = quat_canonical(np.asarray(quats, dtype=float).reshape(-1, 4))
        trans = np.array(trans, dtype=float).reshape(-1, 3)
        if len(quats) != len(trans):
            raise ValueError("quaternion and translation counts differ")
        if len(quats) < 1:
            raise ValueError("pose sequence must contain at least one pose")
        self.quats = quats
        self.trans = trans

    @classmethod
    def from_poses(cls, poses) -> "PoseSequence":
        poses = list(poses)
        return cls(
            np.stack([p.rotation.q for p in poses]),
            np.stack([p.translation for p in poses]),
        )

    @classmethod
    def identity(cls, k: int) -> "PoseSequence":
        q = np.zeros((k, 4))
        q[:, 0] = 1.0
        return cls(q, np.zeros((k, 3)))

    def __len__(self) -> int:
        return len(self.quats)

    def pose(self, i: int) -> Pose:
        return Pose(Rotation(self.quats[i]), self.trans[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self.pose(i)

    def copy(self) -> "PoseSequence":
        return PoseSequence(self.quats.copy(), self.trans.copy())

    def permute(self, perm) -> "PoseSequence":
        perm = np.asarray(perm, dtype=int)
        if sorted(perm.tolist()) != list(range(len(self))):
            raise ValueError("permutation must be a bijection on frame indices")
        return PoseSequence(self.quats[perm], self.trans[perm])


# ---------------------------------------------------------------------------
# group operations

def compose(a: Pose, b: Pose) -> Pose:
    """Group product: the homogeneous-matrix product of a and b."""
    return Pose(
        Rotation(quat_mul(a.rotation.q, b.rotation.q)),
        a.rotation.rotate(b.translation) + a.translation,
    )


def inverse(p: Pose) -> Pose:
    qi = quat_conj(p.rotation.q)
    return Pose(Rotation(qi), -quat_rotate(qi, p.translation))


def _so3_V(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi)
    W = _hat(phi)
    if theta < 1e-6:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    a = (1.0 - math.cos(theta)) / theta**2
    b = (theta - math.sin(theta)) / theta**3
    return np.eye(3) + a * W + b * (W @ W)


def _so3_V_inv(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi)
    W = _hat(phi)
    if theta < 1e-6:
        return np.eye(3) - 0.5 * W + (W @ W) / 12.0
    # stable through theta -> pi via the (1 - cos) form
    a = (1.0 - theta * math.sin(theta) / (2.0 * (1.0 - math.cos(theta)))) / theta**2
    return np.eye(3) - 0.5 * W + a * (W @ W)


def exp_map(v: Twist) -> Pose:
    """Coupled SE(3) exponential: rotation from phi, translation V(phi) rho."""
    return Pose(Rotation.from_rotvec(v.phi), _so3_V(v.phi) @ v.rho)


def log_map(p: Pose) -> Twist:
    """Coupled SE(3) logarithm; ||phi|| <= pi after canonicalization."""
    phi = p.rotation.rotvec()
    return Twist(_so3_V_inv(phi) @ p.translation, phi)


def pose_distances(
    quats_a: np.ndarray,
    trans_a: np.ndarray,
    quats_b: np.ndarray,
    trans_b: np.ndarray,
    w: MetricWeights,
) -> np.ndarray:
    """Weighted product-metric distances between stacked pose arrays."""
    dt = np.linalg.norm(np.asarray(trans_a) - np.asarray(trans_b), axis=-1)
    theta = rotation_angle(quats_a, quats_b)
    return np.sqrt((w.w_trans * dt) ** 2 + (w.w_rot * theta) ** 2)


def sequence_distances(a: PoseSequence, b: PoseSequence, w: MetricWeights) -> np.ndarray:
    if len(a) != len(b):
        raise ValueError("pose sequences must have equal length")
    return pose_distances(a.quats, a.trans, b.quats, b.trans, w)


def geodesic_distance(a: Pose, b: Pose, w: MetricWeights) -> float:
    """d = sqrt(w_trans^2 ||t_a - t_b||^2 + w_rot^2 theta^2)."""
    return float(
        pose_distances(a.rotation.q, a.translation, b.rotation.q, b.translation, w)
    )


def geodesic_interpolate(a: Pose, b: Pose, t: float) -> Pose:
    """Point at fraction t on the product geodesic (slerp + lerp)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation parameter must be in [0, 1], got {t}")
    return Pose(
        Rotation(quat_slerp(a.rotation.q, b.rotation.q, t)),
        (1.0 - t) * a.translation + t * b.translation,
    )


def huber(s):
    """Huber penalty: s^2 below 1/sqrt(2), sqrt(2) s - 1/2 above."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("huber argument must be non-negative")
    out = np.where(s < HUBER_KNEE, s * s, SQRT2 * s - 0.5)
    return float(out) if out.ndim == 0 else out
