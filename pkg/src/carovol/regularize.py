"""Total-variation denoising of SE(3) pose signals.

Minimizes  E(x) = sum_i h(d(x_i, p_i)) + alpha * sum_i h(d(x_i, x_{i+1}))
with h the Huber penalty and d the weighted product metric, using a cyclic
proximal point algorithm: every cycle applies the exact data prox at each
index, then the exact pairwise prox on disjoint pair sweeps, with step
lambda_n = lambda0 / (n + 1).  Also provides the PCA centroid re-rank that
repairs out-of-order (fallback) frames before denoising.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pose import (
    HUBER_KNEE,
    SQRT2,
    MetricWeights,
    Pose,
    PoseSequence,
    Rotation,
    huber,
    pose_distances,
    quat_slerp,
    sequence_distances,
)


@dataclass
class RegConfig:
    """Solver settings; defaults were tuned on the synthetic phantom suite."""

    alpha: float = 0.5
    lambda0: float = 1.0
    n_cycles: int = 200
    weights: MetricWeights = field(default_factory=MetricWeights)
    tol: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be > 0")
        if self.n_cycles < 1:
            raise ValueError("n_cycles must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


@dataclass(frozen=True)
class RerankResult:
    """Frame permutation sorting signed projections along the principal axis."""

    permutation: np.ndarray
    projections: np.ndarray


# ---------------------------------------------------------------------------
# objective

def data_term(x: PoseSequence, p: PoseSequence, w: MetricWeights) -> float:
    """Deviation penalty: sum of Huber distances between x and the anchor p."""
    return float(np.sum(huber(sequence_distances(x, p, w))))


def reg_term(x: PoseSequence, w: MetricWeights) -> float:
    """First-order forward-difference penalty; zero for constant sequences."""
    if len(x) < 2:
        return 0.0
    d = pose_distances(x.quats[:-1], x.trans[:-1], x.quats[1:], x.trans[1:], w)
    return float(np.sum(huber(d)))


def tv_objective(x: PoseSequence, p: PoseSequence, cfg: RegConfig) -> float:
    return data_term(x, p, cfg.weights) + cfg.alpha * reg_term(x, cfg.weights)


# ---------------------------------------------------------------------------
# proximal maps

def _data_pull(s: np.ndarray, lam: float) -> np.ndarray:
    """Fraction of the geodesic to the attractor for the prox of h(d(., a)).

    Exact prox of the Huber-of-distance term with step lam: below the
    posterior knee the quadratic branch applies (constant fraction), above
    it the linear branch pulls by a fixed arc length, clamped at the
    attractor.
    """
    s = np.asarray(s, dtype=float)
    s_safe = np.where(s > 0, s, 1.0)
    quad = 2.0 * lam / (1.0 + 2.0 * lam)
    lin = np.minimum(lam * SQRT2 / s_safe, 1.0)
    t = np.where(s < (1.0 + 2.0 * lam) * HUBER_KNEE, quad, lin)
    return np.where(s > 0, t, 0.0)


def _pair_pull(s: np.ndarray, lam: float) -> np.ndarray:
    """Per-endpoint pull fraction for the prox of h(d(x_i, x_j)).

    Both endpoints move symmetrically toward each other, so the fraction is
    clamped at the midpoint (1/2).
    """
    s = np.asarray(s, dtype=float)
    s_safe = np.where(s > 0, s, 1.0)
    quad = 2.0 * lam / (1.0 + 4.0 * lam)
    lin = np.minimum(lam * SQRT2 / s_safe, 0.5)
    t = np.where(s < (1.0 + 4.0 * lam) * HUBER_KNEE, quad, lin)
    return np.where(s > 0, t, 0.0)


def _move_toward(
    quats: np.ndarray, trans: np.ndarray, aq: np.ndarray, at: np.ndarray, frac
) -> tuple[np.ndarray, np.ndarray]:
    """Move stacked poses toward attractors by per-element geodesic fractions."""
    frac = np.asarray(frac, dtype=float)
    f = frac[..., None]
    return quat_slerp(quats, aq, frac), (1.0 - f) * trans + f * at


def prox_data(x_i: Pose, p_i: Pose, step: float, w: MetricWeights) -> Pose:
    """Proximal map of h(d(., p_i)): pull x_i along the geodesic toward p_i."""
    if not step > 0:
        raise ValueError("step must be > 0")
    s = pose_distances(x_i.rotation.q, x_i.translation, p_i.rotation.q, p_i.translation, w)
    t = float(_data_pull(s, step))
    q, tr = _move_toward(x_i.rotation.q, x_i.translation, p_i.rotation.q, p_i.translation, t)
    return Pose(Rotation(q), tr)


def prox_pair(x_i: Pose, x_j: Pose, step: float, w: MetricWeights) -> tuple[Pose, Pose]:
    """Proximal map of h(d(., .)): symmetric pull of both poses toward each other."""
    if not step > 0:
        raise ValueError("step must be > 0")
    s = pose_distances(x_i.rotation.q, x_i.translation, x_j.rotation.q, x_j.translation, w)
    t = float(_pair_pull(s, step))
    qi, ti = _move_toward(x_i.rotation.q, x_i.translation, x_j.rotation.q, x_j.translation, t)
    qj, tj = _move_toward(x_j.rotation.q, x_j.translation, x_i.rotation.q, x_i.translation, t)
    return Pose(Rotation(qi), ti), Pose(Rotation(qj), tj)


# ---------------------------------------------------------------------------
# solver

def cppa_denoise(
    p: PoseSequence,
    cfg: RegConfig,
    x0: PoseSequence | None = None,
    cycle_offset: int = 0,
) -> PoseSequence:
    """Denoise the pose signal p by cyclic proximal point iteration.

    Deterministic given cfg.  Returns the iterate with the lowest objective
    seen (including the start), so the result is never worse than the
    input.  x0/cycle_offset allow continuing a previous run: the step
    schedule resumes at lambda0 / (cycle_offset + n + 1).
    """
    if len(p) < 2:
        raise ValueError("pose sequence must contain at least two poses")
    start = p if x0 is None else x0
    if len(start) != len(p):
        raise ValueError("x0 must match the length of p")
    k = len(p)
    w = cfg.weights
    aq, at = p.quats.copy(), p.trans.copy()
    xq, xt = start.quats.copy(), start.trans.copy()

    # pair sweeps on disjoint index pairs: starts 0,2,4,... then 1,3,5,...
    sweeps = [np.arange(0, k - 1, 2), np.arange(1, k - 1, 2)]

    def objective(q, t):
        d_data = pose_distances(q, t, aq, at, w)
        d_reg = pose_distances(q[:-1], t[:-1], q[1:], t[1:], w)
        return float(np.sum(huber(d_data)) + cfg.alpha * np.sum(huber(d_reg)))

    best_obj = objective(xq, xt)
    best_q, best_t = xq.copy(), xt.copy()
    prev_obj = best_obj

    for n in range(cfg.n_cycles):
        lam = cfg.lambda0 / (cycle_offset + n + 1)

        s = pose_distances(xq, xt, aq, at, w)
        xq, xt = _move_toward(xq, xt, aq, at, _data_pull(s, lam))

        for idx in sweeps:
            if len(idx) == 0:
                continue
            i, j = idx, idx + 1
            s = pose_distances(xq[i], xt[i], xq[j], xt[j], w)
            t = _pair_pull(s, lam * cfg.alpha)
            qi, ti = _move_toward(xq[i], xt[i], xq[j], xt[j], t)
            qj, tj = _move_toward(xq[j], xt[j], xq[i], xt[i], t)
            xq[i], xt[i] = qi, ti
            xq[j], xt[j] = qj, tj

        obj = objective(xq, xt)
        if obj < best_obj:
            best_obj = obj
            best_q, best_t = xq.copy(), xt.copy()
        if abs(prev_obj - obj) < cfg.tol:
            break
        prev_obj = obj

    return PoseSequence(best_q, best_t)


# ---------------------------------------------------------------------------
# centroid re-rank

def rerank(centroids, poses: PoseSequence | None = None) -> RerankResult:
    """Order frames by signed centroid projection along the PCA sweep axis.

    The principal axis comes from the SVD of the centered centroid cloud;
    its sign is fixed so projections correlate positively with acquisition
    order.  Sorting is stable, so ties keep the original frame order and
    applying the permutation to an already monotone sweep is the identity.
    """
    c = np.asarray(centroids, dtype=float).reshape(-1, 3)
    k = len(c)
    if k < 3:
        raise ValueError("re-rank requires at least 3 frames")
    if poses is not None and len(poses) != k:
        raise ValueError("one centroid per pose required")
    dev = c - c.mean(axis=0)
    _, sv, vt = np.linalg.svd(dev, full_matrices=False)
    if sv[0] < 1e-12:
        raise ValueError("no principal direction: centroids are coincident")
    proj = dev @ vt[0]
    idx = np.arange(k) - (k - 1) / 2.0
    if float(proj @ idx) < 0.0:
        proj = -proj
    perm = np.argsort(proj, kind="stable")
    return RerankResult(permutation=perm, projections=proj)
