"""
Relocalization against a prior map.

A query keyframe is matched against stored node keyframes, the best
candidates are verified geometrically with RANSAC-PnP on depth-lifted
correspondences, and accepted fixes reset the map-from-odom correction
that turns odometry poses into map poses.

Poses returned by PnP are camera-in-map (optical camera frame).

"""
import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from terrainmaker import se3
from terrainmaker.exceptions import (ConfigError, NoConsensusError, TimestampError,
                                     TooFewPointsError)
from terrainmaker.keyframe import CameraIntrinsics, Keyframe
from terrainmaker.pr_extensions import BruteForceRetriever

logger = logging.getLogger(__name__)

# Largest accepted ratio of extreme singular values of a minimal sample.
_MAX_CONDITION = 1e8

_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


@dataclass
class RansacConfig:
    iterations: int = 500
    reproj_threshold: float = 3.0
    min_inliers: int = 15

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("RansacConfig - 'iterations' must be >= 1")
        if not self.reproj_threshold > 0:
            raise ConfigError("RansacConfig - 'reproj_threshold' must be > 0")
        if self.min_inliers < 4:
            raise ConfigError("RansacConfig - 'min_inliers' must be >= 4")


@dataclass
class Correspondence2D3D:
    image_point: np.ndarray
    world_point: np.ndarray


@dataclass
class PnPResult:
    pose: np.ndarray
    inliers: np.ndarray
    mean_reprojection_error: float

    @property
    def inlier_count(self):
        return int(self.inliers.sum())


@dataclass
class LocalizationFix:
    matched_node: int
    pose: np.ndarray
    inlier_count: int
    mean_reprojection_error: float
    stamp: float


@dataclass
class MapCorrection:
    T_map_odom: np.ndarray = field(default_factory=lambda: np.eye(4))
    last_fix_stamp: Optional[float] = None


def stack_correspondences(correspondences):
    """``(uv, xyz)`` arrays from a list of :class:`Correspondence2D3D`."""
    uv = np.array([c.image_point for c in correspondences], dtype=float).reshape(-1, 2)
    xyz = np.array([c.world_point for c in correspondences], dtype=float).reshape(-1, 3)
    return uv, xyz


def retrieve_candidates(query, map_keyframes, k=3, retriever=None, query_room=None, node_rooms=None):
    """Ranked ``(node_id, score)`` place candidates for ``query``.

    :raises EmptyInputError: if ``map_keyframes`` is empty.
    """
    retriever = retriever or BruteForceRetriever()
    candidates = retriever.retrieve(query, map_keyframes, k, query_room, node_rooms)
    logger.debug("retrieve_candidates - %s", candidates)
    return candidates


# ----------------------------------------------------------------------
# Minimal and closed-form solver (control-point formulation)

def _reprojection_errors(R, t, uv, X, K):
    pc = X @ R.T + t
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K[0, 0] * pc[:, 0] / z + K[0, 2]
        v = K[1, 1] * pc[:, 1] / z + K[1, 2]
    err = np.hypot(u - uv[:, 0], v - uv[:, 1])
    return np.where(z > 0, err, np.inf)


def _control_points(X):
    c0 = X.mean(axis=0)
    A = X - c0
    w, V = np.linalg.eigh(A.T @ A)
    if w[0] <= 0 or w[-1] / w[0] > _MAX_CONDITION:
        return None
    k = np.sqrt(w / X.shape[0])
    return np.vstack([c0, c0 + k[0] * V[:, 0], c0 + k[1] * V[:, 1], c0 + k[2] * V[:, 2]])


def _kabsch(pw, pc):
    cw, cc = pw.mean(axis=0), pc.mean(axis=0)
    Hm = (pc - cc).T @ (pw - cw)
    U, _, Vt = np.linalg.svd(Hm)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    R = U @ D @ Vt
    return R, cc - R @ cw


def _betas_gauss_newton(L, rho, betas, iterations=5):
    for _ in range(iterations):
        b0, b1, b2, b3 = betas
        b10 = np.array([b0 * b0, b0 * b1, b1 * b1, b0 * b2, b1 * b2, b2 * b2, b0 * b3, b1 * b3, b2 * b3, b3 * b3])
        r = rho - L @ b10
        A = np.stack([2 * L[:, 0] * b0 + L[:, 1] * b1 + L[:, 3] * b2 + L[:, 6] * b3,
                      L[:, 1] * b0 + 2 * L[:, 2] * b1 + L[:, 4] * b2 + L[:, 7] * b3,
                      L[:, 3] * b0 + L[:, 4] * b1 + 2 * L[:, 5] * b2 + L[:, 8] * b3,
                      L[:, 6] * b0 + L[:, 7] * b1 + L[:, 8] * b2 + 2 * L[:, 9] * b3], axis=1)
        betas = betas + np.linalg.lstsq(A, r, rcond=None)[0]
    return betas


def solve_pnp(uv, X, K):
    """Closed-form camera-from-world ``(R, t)`` from ``n >= 4`` correspondences.

    This is EPnP (points expressed in four control points, whose camera
    coordinates come from the null space of a ``2n x 12`` system), used as the
    RANSAC minimal solver in place of a 4-point DLT. The control-point
    conditioning check stands in for the DLT singular-value ratio test.

    Returns ``None`` for degenerate configurations (near-planar or
    near-collinear points).
    """
    n = X.shape[0]
    cw = _control_points(X)
    if cw is None:
        return None
    Ch = np.vstack([cw.T, np.ones(4)])
    if np.linalg.cond(Ch) > _MAX_CONDITION:
        return None
    alphas = np.linalg.solve(Ch, np.vstack([X.T, np.ones(n)])).T

    fx, fy, cx, cy = K[0, 0], K[1, 1], K[0, 2], K[1, 2]
    M = np.zeros((2 * n, 12))
    for j in range(4):
        M[0::2, 3 * j] = alphas[:, j] * fx
        M[0::2, 3 * j + 2] = alphas[:, j] * (cx - uv[:, 0])
        M[1::2, 3 * j + 1] = alphas[:, j] * fy
        M[1::2, 3 * j + 2] = alphas[:, j] * (cy - uv[:, 1])
    _, _, Vt = np.linalg.svd(M.T @ M)
    v = [Vt[11 - i] for i in range(4)]

    dv = [[v[i][3 * a:3 * a + 3] - v[i][3 * b:3 * b + 3] for a, b in _PAIRS] for i in range(4)]
    L = np.zeros((6, 10))
    for p in range(6):
        d0, d1, d2, d3 = dv[0][p], dv[1][p], dv[2][p], dv[3][p]
        L[p] = [d0 @ d0, 2 * d0 @ d1, d1 @ d1, 2 * d0 @ d2, 2 * d1 @ d2,
                d2 @ d2, 2 * d0 @ d3, 2 * d1 @ d3, 2 * d2 @ d3, d3 @ d3]
    rho = np.array([np.sum((cw[a] - cw[b])**2) for a, b in _PAIRS])

    def pose_from_betas(betas):
        ccs = sum(betas[i] * v[i] for i in range(4)).reshape(4, 3)
        pcs = alphas @ ccs
        if pcs[:, 2].mean() < 0:
            pcs = -pcs
        return _kabsch(X, pcs)

    candidates = []
    b4 = np.linalg.lstsq(L[:, [0, 1, 3, 6]], rho, rcond=None)[0]
    s = np.sign(b4[0]) if b4[0] != 0 else 1.0
    b0 = np.sqrt(abs(b4[0]))
    if b0 > 0:
        candidates.append(np.array([b0, s * b4[1] / b0, s * b4[2] / b0, s * b4[3] / b0]))

    b3 = np.linalg.lstsq(L[:, [0, 1, 2]], rho, rcond=None)[0]
    if b3[0] < 0:
        beta = [np.sqrt(-b3[0]), np.sqrt(-b3[2]) if b3[2] < 0 else 0.0]
    else:
        beta = [np.sqrt(b3[0]), np.sqrt(b3[2]) if b3[2] > 0 else 0.0]
    if b3[1] < 0:
        beta[0] = -beta[0]
    candidates.append(np.array([beta[0], beta[1], 0.0, 0.0]))

    b5 = np.linalg.lstsq(L[:, [0, 1, 2, 3, 4]], rho, rcond=None)[0]
    if b5[0] < 0:
        beta = [np.sqrt(-b5[0]), np.sqrt(-b5[2]) if b5[2] < 0 else 0.0]
    else:
        beta = [np.sqrt(b5[0]), np.sqrt(b5[2]) if b5[2] > 0 else 0.0]
    if b5[1] < 0:
        beta[0] = -beta[0]
    b2 = b5[3] / beta[0] if beta[0] != 0 else 0.0
    candidates.append(np.array([beta[0], beta[1], b2, 0.0]))

    best, best_err = None, np.inf
    for betas in candidates:
        betas = _betas_gauss_newton(L, rho, betas)
        if not np.all(np.isfinite(betas)):
            continue
        R, t = pose_from_betas(betas)
        err = np.mean(_reprojection_errors(R, t, uv, X, K))
        if err < best_err:
            best, best_err = (R, t), err
    return best


def _refine(R, t, uv, X, K):
    x0 = np.concatenate([Rotation.from_matrix(R).as_rotvec(), t])

    def residuals(x):
        pc = X @ Rotation.from_rotvec(x[:3]).as_matrix().T + x[3:]
        u = K[0, 0] * pc[:, 0] / pc[:, 2] + K[0, 2]
        v = K[1, 1] * pc[:, 1] / pc[:, 2] + K[1, 2]
        return np.concatenate([u - uv[:, 0], v - uv[:, 1]])

    sol = least_squares(residuals, x0, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=200)
    if not np.all(np.isfinite(sol.x)):
        return R, t
    return Rotation.from_rotvec(sol.x[:3]).as_matrix(), sol.x[3:]


def pnp_ransac(image_points, world_points, intrinsics, config=None, seed=0):
    """Camera-in-map pose from 2D-3D correspondences with RANSAC.

    Minimal samples of four correspondences are solved in closed form
    (degenerate samples are redrawn), scored by the number of
    correspondences reprojecting within ``reproj_threshold`` pixels, and the
    best model is refined by nonlinear least squares on its inliers.

    :raises TooFewPointsError: for fewer than four correspondences.
    :raises NoConsensusError: when fewer than ``min_inliers`` inliers are found.
    """
    config = config or RansacConfig()
    assert isinstance(intrinsics, CameraIntrinsics), \
        "pnp_ransac - 'intrinsics' should be an instance of CameraIntrinsics"
    uv = np.asarray(image_points, dtype=float).reshape(-1, 2)
    X = np.asarray(world_points, dtype=float).reshape(-1, 3)
    n = uv.shape[0]
    if n < 4 or X.shape[0] != n:
        raise TooFewPointsError(f"pnp_ransac - need at least 4 correspondences, got {n}")
    K = intrinsics.K
    thr = config.reproj_threshold
    rng = np.random.Generator(np.random.Philox(seed))

    best_inliers, best_err = None, np.inf
    draws, iterations = 0, 0
    while iterations < config.iterations and draws < 10 * config.iterations:
        draws += 1
        sample = rng.choice(n, 4, replace=False)
        model = solve_pnp(uv[sample], X[sample], K)
        if model is None:
            continue
        iterations += 1
        err = _reprojection_errors(*model, uv, X, K)
        inliers = err <= thr
        score = np.sum(err[inliers])
        if best_inliers is None or inliers.sum() > best_inliers.sum() or \
                (inliers.sum() == best_inliers.sum() and score < best_err):
            best_inliers, best_err = inliers, score
            if inliers.all():
                break

    if best_inliers is None or best_inliers.sum() < max(config.min_inliers, 4):
        found = 0 if best_inliers is None else int(best_inliers.sum())
        raise NoConsensusError(f"pnp_ransac - {found} inliers, {config.min_inliers} required")

    inliers = best_inliers
    R, t = None, None
    for _ in range(3):
        model = solve_pnp(uv[inliers], X[inliers], K) if R is None else (R, t)
        if model is None:
            raise NoConsensusError("pnp_ransac - inlier set is degenerate")
        R, t = _refine(*model, uv[inliers], X[inliers], K)
        err = _reprojection_errors(R, t, uv, X, K)
        updated = err <= thr
        if np.array_equal(updated, inliers):
            break
        inliers = updated
    if inliers.sum() < max(config.min_inliers, 4):
        raise NoConsensusError(f"pnp_ransac - {int(inliers.sum())} inliers after refinement")

    pose = se3.inverse(se3.make_pose(R, t))
    return PnPResult(pose, inliers, float(np.mean(err[inliers])))


def verify_and_fix(query, candidate, candidate_node_pose, config=None, retriever=None, seed=0):
    """Metric pose of ``query`` from a candidate keyframe, or ``None``.

    Matched candidate keypoints with known depth are lifted into the map
    frame through the candidate node pose (a camera pose) and passed to
    :func:`pnp_ransac`.
    """
    config = config or RansacConfig()
    assert isinstance(query, Keyframe) and isinstance(candidate, Keyframe), \
        "verify_and_fix - 'query' and 'candidate' should be instances of Keyframe"
    retriever = retriever or BruteForceRetriever()
    pairs = retriever.matches(query, candidate)
    if pairs.shape[0]:
        pairs = pairs[np.isfinite(candidate.depths[pairs[:, 1]])]
    if pairs.shape[0] < config.min_inliers:
        logger.debug("verify_and_fix - node %d: %d usable matches", candidate.node_id, pairs.shape[0])
        return None
    pts_cam = candidate.intrinsics.backproject(candidate.keypoints[pairs[:, 1]], candidate.depths[pairs[:, 1]])
    pts_map = se3.transform_points(candidate_node_pose, pts_cam)
    try:
        result = pnp_ransac(query.keypoints[pairs[:, 0]], pts_map, query.intrinsics, config, seed)
    except (NoConsensusError, TooFewPointsError) as err:
        logger.debug("verify_and_fix - node %d: %s", candidate.node_id, err)
        return None
    if result.inlier_count < config.min_inliers or result.mean_reprojection_error > config.reproj_threshold:
        return None
    return LocalizationFix(candidate.node_id, result.pose, result.inlier_count,
                           result.mean_reprojection_error, query.stamp)


def update_correction(corr, fix, odom_pose_at_fix, odom_stamp, window=0.5):
    """New correction ``fix.pose @ inv(odom_pose_at_fix)``, applied as a jump.

    ``odom_stamp`` is the stamp of ``odom_pose_at_fix``; a fix older than the
    one behind ``corr`` never replaces it.

    :raises TimestampError: when the odometry stamp is more than ``window``
        seconds from the fix stamp, or the fix predates ``corr.last_fix_stamp``.
    """
    if abs(fix.stamp - odom_stamp) > window:
        raise TimestampError(f"update_correction - fix at {fix.stamp} s and odometry at {odom_stamp} s "
                             f"differ by more than {window} s")
    if corr.last_fix_stamp is not None and fix.stamp < corr.last_fix_stamp:
        raise TimestampError(f"update_correction - fix at {fix.stamp} s is older than the applied fix "
                             f"at {corr.last_fix_stamp} s")
    T = se3.orthonormalize(fix.pose @ se3.inverse(se3.check_pose(odom_pose_at_fix, tol=1e-6)))
    return MapCorrection(T, float(fix.stamp))


def localized_pose(corr, odom_pose):
    """Map-frame pose ``T_map_odom @ odom_pose``."""
    return corr.T_map_odom @ odom_pose


def detect_loop_closures(graph, node_id, retriever=None, config=None, k=3, exclusion=10,
                         base_information=None, seed=0):
    """Verify the live node's keyframe against older nodes and add loop factors.

    Nodes within ``exclusion`` ids of ``node_id`` are not considered. Each
    accepted fix adds a factor from the candidate node to the live node whose
    information is ``base_information`` scaled by the inlier count.

    :returns: ids of the added factors.
    """
    retriever = retriever or BruteForceRetriever()
    base_information = np.eye(6) if base_information is None else base_information
    live = graph.get_node_by_id(node_id)
    if live.keyframe is None:
        return []
    older = [n.keyframe for n in graph if n.keyframe is not None and n.id < node_id - exclusion]
    if not older:
        return []
    added = []
    for cand_id, score in retrieve_candidates(live.keyframe, older, k, retriever):
        cand = graph.get_node_by_id(cand_id)
        fix = verify_and_fix(live.keyframe, cand.keyframe, cand.pose, config, retriever, seed)
        if fix is None:
            continue
        rel = se3.orthonormalize(se3.inverse(cand.pose) @ fix.pose)
        added.append(graph.add_loop_closure(cand_id, node_id, rel, base_information * fix.inlier_count))
    return added


def write_fix_log(filename, fixes):
    """CSV with one row per fix: stamp, node, pose 7-vector, inliers, reprojection error."""
    with open(filename, "w", newline="") as fid:
        writer = csv.writer(fid)
        writer.writerow(["stamp", "node", "tx", "ty", "tz", "qx", "qy", "qz", "qw", "inliers", "reproj"])
        for fix in fixes:
            writer.writerow([f"{fix.stamp:.6f}", fix.matched_node]
                            + [f"{v:.9f}" for v in se3.to_tum(fix.pose)]
                            + [fix.inlier_count, f"{fix.mean_reprojection_error:.6f}"])
