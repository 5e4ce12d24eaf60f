"""Pose from 2-D/3-D correspondences: EPnP with a RANSAC wrapper.

The solver expresses the target points as fixed barycentric combinations of
four control points (three for planar clouds), recovers the control points
in the camera frame from the null space of the reprojection constraints,
and closes with an absolute-orientation fit. The RANSAC wrapper consumes
the dense per-keypoint location estimates produced by the displacement
decoder: each keypoint contributes one vote per estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .displacement import CELLS, KeypointPredictions
from .errors import DegenerateConfiguration, NoDetection, SolutionBehindCamera
from .geometry import BEHIND_EPS, CameraModel, Pose, Quaternion
from .keypoints import KeypointSet
from .roi import RoI, from_crop

# Relative singular-value thresholds for rank decisions on the point cloud.
_PLANAR_TOL = 1e-7
_COLLINEAR_TOL = 1e-7

_GN_MAX_STEPS = 10
# Stop refining once every beta case's step is this small relative to its betas.
_GN_STEP_TOL = 1e-9

# RANSAC minimal samples solved per batched call.
_CHUNK = 8

# Pairs of control-point indices whose distances constrain the betas.
_PAIRS4 = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
_PAIRS3 = np.array([(0, 1), (0, 2), (1, 2)])


@dataclass(frozen=True)
class Correspondence:
    """One target-frame point and its observed pixel location."""

    point3d: np.ndarray
    point2d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point3d", np.asarray(self.point3d, dtype=float).reshape(3))
        object.__setattr__(self, "point2d", np.asarray(self.point2d, dtype=float).reshape(2))


@dataclass(frozen=True)
class RansacParams:
    """Consensus-loop parameters.

    ``min_inliers`` counts individual location estimates; ``None`` resolves
    to ``max(6, 0.25 * estimates_per_keypoint * n)`` at solve time.
    """

    max_iterations: int = 300
    reproj_threshold_px: float = 8.0
    confidence: float = 0.99
    min_inliers: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.reproj_threshold_px <= 0:
            raise ValueError("reproj_threshold_px must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.min_inliers is not None and self.min_inliers < 4:
            raise ValueError("min_inliers must be at least 4")


@dataclass(frozen=True)
class PnPResult:
    """Solved pose with per-estimate inlier flags (n, estimates_per_keypoint)."""

    pose: Pose
    inlier_mask: np.ndarray
    mean_reproj_error: float

    @property
    def n_inliers(self) -> int:
        return int(self.inlier_mask.sum())


def _control_points(pw: np.ndarray) -> tuple[np.ndarray, bool]:
    """Centroid plus principal directions; planar clouds get 3 points."""
    centroid = pw.mean(axis=0)
    centered = pw - centroid
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    scales = sv / math.sqrt(len(pw))
    if scales[0] <= 0.0 or scales[1] / scales[0] <= _COLLINEAR_TOL:
        raise DegenerateConfiguration("points are collinear or coincident")
    if scales[2] / scales[0] <= _PLANAR_TOL:
        ctrl = np.vstack(
            [centroid + scales[0] * vt[0], centroid + scales[1] * vt[1], centroid]
        )
        return ctrl, True
    ctrl = np.vstack([centroid + scales[:, None] * vt, centroid[None, :]])
    return ctrl, False


def _alphas(ctrl: np.ndarray, pw: np.ndarray, planar: bool) -> np.ndarray:
    """Barycentric coordinates of each point w.r.t. the control points, (m, k)."""
    if planar:
        origin = ctrl[2]
        e1 = ctrl[0] - origin
        e2 = ctrl[1] - origin
        s1 = np.linalg.norm(e1)
        s2 = np.linalg.norm(e2)
        rel = pw - origin
        a1 = rel @ (e1 / s1) / s1
        a2 = rel @ (e2 / s2) / s2
        return np.column_stack([a1, a2, 1.0 - a1 - a2])
    aug = np.vstack([ctrl.T, np.ones(4)])
    rhs = np.vstack([pw.T, np.ones(len(pw))])
    try:
        return np.linalg.solve(aug, rhs).T
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfiguration("control points are affinely dependent") from exc


def _null_basis(alphas: np.ndarray, uv: np.ndarray, cam: CameraModel, k: int) -> np.ndarray:
    """Eigenvectors of M^T M for the smallest eigenvalues, shape (3k, k)."""
    m = len(uv)
    f = cam.focal_px
    du = cam.cx - uv[:, 0]
    dv = cam.cy - uv[:, 1]
    M = np.zeros((2 * m, 3 * k))
    for a in range(k):
        col = alphas[:, a]
        M[0::2, 3 * a] = col * f
        M[0::2, 3 * a + 2] = col * du
        M[1::2, 3 * a + 1] = col * f
        M[1::2, 3 * a + 2] = col * dv
    mtm = M.T @ M
    _, vecs = np.linalg.eigh(mtm)
    return vecs[:, :k]


def _distance_products(basis: np.ndarray, pairs: np.ndarray, k: int) -> np.ndarray:
    """Per-pair Gram matrices D[p][a, b] = s_a . s_b of basis differences."""
    nb = basis.shape[1]
    vs = basis.T.reshape(nb, k, 3)  # candidate control points per basis vector
    diffs = np.transpose(vs[:, pairs[:, 0]] - vs[:, pairs[:, 1]], (1, 0, 2))  # (P, nb, 3)
    return diffs @ np.swapaxes(diffs, 1, 2)


def _batch_solve(
    A: np.ndarray, b: np.ndarray, fa: Optional[np.ndarray] = None, fb: Optional[np.ndarray] = None
) -> np.ndarray:
    """Solve a stack of square systems; least-squares per item if any is singular.

    fa/fb override the matrices used in the fallback (the unsquared design
    matrix when A holds normal equations).
    """
    try:
        return np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        fa = A if fa is None else fa
        fb = b if fb is None else fb
        out = np.zeros(b.shape)
        for j in range(len(A)):
            out[j] = np.linalg.lstsq(fa[j], fb[j], rcond=None)[0]
        return out


def _betas_case1(D: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Single-vector scale fit in distance (not squared-distance) space."""
    d_basis = np.sqrt(np.maximum(D[:, :, 0, 0], 0.0))
    d_true = np.sqrt(rho)
    denom = np.einsum("sp,sp->s", d_basis, d_basis)
    num = np.einsum("sp,sp->s", d_basis, d_true)
    betas = np.zeros((len(D), D.shape[-1]))
    betas[:, 0] = np.divide(num, denom, out=np.zeros(len(D)), where=denom > 0)
    return betas


def _betas_case2(D: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Two-vector fit from products [b11, b12, b22]."""
    L = np.stack([D[:, :, 0, 0], 2.0 * D[:, :, 0, 1], D[:, :, 1, 1]], axis=2)
    sol = _batch_solve(
        np.einsum("spi,spj->sij", L, L), np.einsum("spi,sp->si", L, rho), L, rho
    )
    b11, b12, b22 = sol[:, 0], sol[:, 1], sol[:, 2]
    betas = np.zeros((len(D), D.shape[-1]))
    beta0 = np.sqrt(np.abs(b11))
    betas[:, 0] = np.where(b12 < 0.0, -beta0, beta0)
    betas[:, 1] = np.where(b11 * b22 >= 0.0, np.sqrt(np.abs(b22)), 0.0)
    return betas


def _betas_case3(D: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Three-vector fit from products [b11, b12, b13, b22, b23, b33]."""
    L = np.stack(
        [
            D[:, :, 0, 0],
            2.0 * D[:, :, 0, 1],
            2.0 * D[:, :, 0, 2],
            D[:, :, 1, 1],
            2.0 * D[:, :, 1, 2],
            D[:, :, 2, 2],
        ],
        axis=2,
    )
    sol = _batch_solve(L, rho)
    b11, b12, b13, b22 = sol[:, 0], sol[:, 1], sol[:, 2], sol[:, 3]
    betas = np.zeros((len(D), D.shape[-1]))
    beta0 = np.sqrt(np.abs(b11))
    beta0 = np.where(b12 < 0.0, -beta0, beta0)
    betas[:, 0] = beta0
    betas[:, 1] = np.where(b11 * b22 >= 0.0, np.sqrt(np.abs(b22)), 0.0)
    betas[:, 2] = np.divide(b13, beta0, out=np.zeros(len(D)), where=beta0 != 0.0)
    return betas


def _gauss_newton(D: np.ndarray, rho: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Refine stacked beta cases so control distances match the cloud.

    D is (S, P, nb, nb), rho (S, P), B (S, C, nb): S independent problems,
    C beta cases each. Runs at most _GN_MAX_STEPS full Gauss-Newton steps,
    keeps the best iterate per case, and stops early only when every case's
    step has effectively converged.
    """
    S, C, nb = B.shape
    P = D.shape[1]
    D_flat = D.reshape(S, P * nb, nb)
    best = B.copy()

    def derivs(B):
        Db = (D_flat @ np.swapaxes(B, 1, 2)).reshape(S, P, nb, C).transpose(0, 3, 1, 2)
        res = rho[:, None, :] - (Db @ B[..., None])[..., 0]
        return Db, res, (res * res).sum(axis=2)

    Db, res, best_cost = derivs(B)
    for _ in range(_GN_MAX_STEPS):
        Jt = np.swapaxes(Db, 2, 3)
        JtJ = Jt @ Db
        rhs = (Jt @ res[..., None])[..., 0]
        # J = 2 Db, so the normal equations carry a factor 1/2.
        step = 0.5 * _batch_solve(
            JtJ.reshape(S * C, nb, nb), rhs.reshape(S * C, nb)
        ).reshape(S, C, nb)
        B = B + step
        Db, res, cost = derivs(B)
        keep = cost < best_cost
        best[keep] = B[keep]
        best_cost[keep] = cost[keep]
        scale = np.maximum(1.0, np.abs(B).max(axis=2))
        if (np.abs(step).max(axis=2) <= _GN_STEP_TOL * scale).all():
            break
    return best


def _poses_from_betas(
    pw: np.ndarray, alphas: np.ndarray, basis: np.ndarray, B: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form absolute orientation for stacked beta cases.

    pw (S, m, 3), alphas (S, m, k), basis (S, 3k, nb), B (S, C, nb).
    Returns rotations (S, C, 3, 3), translations (S, C, 3), and a validity
    flag (camera-frame depths all positive after the global sign fix).
    """
    S, C, _ = B.shape
    k = basis.shape[1] // 3
    ctrl_cam = np.swapaxes(basis @ np.swapaxes(B, 1, 2), 1, 2).reshape(S, C, k, 3)
    pc = alphas[:, None] @ ctrl_cam
    # Betas are determined only up to a global sign; keep depths positive.
    flip = (pc[..., 2] < 0.0).any(axis=2)
    pc = np.where(flip[..., None, None], -pc, pc)
    valid = (pc[..., 2] > 0.0).all(axis=2)

    cw = pw.mean(axis=1)
    aw = pw - cw[:, None, :]
    cc = pc.mean(axis=2)
    H = np.swapaxes(aw, 1, 2)[:, None] @ (pc - cc[:, :, None, :])
    U, _, Vt = np.linalg.svd(H)
    UVt = U @ Vt
    neg = np.linalg.det(UVt) < 0.0
    if neg.any():
        Vt = Vt.copy()
        Vt[neg] = Vt[neg] * np.array([1.0, 1.0, -1.0])[:, None]
        UVt[neg] = U[neg] @ Vt[neg]
    R = np.swapaxes(UVt, -1, -2)
    t = cc - (R @ cw[:, None, :, None])[..., 0]
    return R, t, valid


def _reproj_errors(
    R: np.ndarray, t: np.ndarray, pw: np.ndarray, uv: np.ndarray, cam: CameraModel
) -> np.ndarray:
    """Mean reprojection error for stacked poses, (S, C); inf behind camera."""
    pc = pw[:, None] @ np.swapaxes(R, 2, 3) + t[:, :, None, :]
    z = pc[..., 2]
    front = (z > BEHIND_EPS).all(axis=2)
    z_safe = np.where(z > BEHIND_EPS, z, 1.0)
    u = cam.focal_px * pc[..., 0] / z_safe + cam.cx
    v = cam.focal_px * pc[..., 1] / z_safe + cam.cy
    err = np.hypot(u - uv[:, None, :, 0], v - uv[:, None, :, 1]).mean(axis=2)
    return np.where(front, err, math.inf)


def _epnp(pw: np.ndarray, uv: np.ndarray, cam: CameraModel) -> tuple[Pose, float]:
    """Core solver on arrays; returns the pose and its mean reprojection error."""
    if len(pw) < 4:
        raise DegenerateConfiguration(f"need at least 4 correspondences, got {len(pw)}")
    ctrl, planar = _control_points(pw)
    k = 3 if planar else 4
    alphas = _alphas(ctrl, pw, planar)
    basis = _null_basis(alphas, uv, cam, k)
    pairs = _PAIRS3 if planar else _PAIRS4
    D = _distance_products(basis, pairs, k)[None]
    diffs = ctrl[pairs[:, 0]] - ctrl[pairs[:, 1]]
    rho = (diffs * diffs).sum(axis=1)[None]

    cases = [_betas_case1, _betas_case2] if planar else [_betas_case1, _betas_case2, _betas_case3]
    B = _gauss_newton(D, rho, np.stack([case(D, rho) for case in cases], axis=1))
    R, t, valid = _poses_from_betas(pw[None], alphas[None], basis[None], B)
    errs = np.where(valid, _reproj_errors(R, t, pw[None], uv[None], cam), math.inf)[0]
    best = int(np.argmin(errs))
    if not math.isfinite(errs[best]):
        raise SolutionBehindCamera("no candidate keeps every point in front of the camera")
    return Pose(Quaternion.from_matrix(R[0, best]), t[0, best]), float(errs[best])


def _solve_minimal_batch(
    pw: np.ndarray, uv: np.ndarray, cam: CameraModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """EPnP over a stack of minimal 4-point samples at once.

    pw (S, 4, 3), uv (S, 4, 2). Returns per-sample rotations, translations,
    and an ok flag; degenerate or behind-camera samples come back not-ok.
    Planar samples take the scalar path (different control-point count).
    """
    S = len(pw)
    R_out = np.zeros((S, 3, 3))
    t_out = np.zeros((S, 3))
    ok = np.zeros(S, dtype=bool)

    centroid = pw.mean(axis=1)
    centered = pw - centroid[:, None, :]
    _, sv, Vt = np.linalg.svd(centered, full_matrices=False)
    scales = sv / 2.0  # sqrt(m) with m = 4
    lead = np.maximum(scales[:, 0], 1e-300)
    usable = (scales[:, 0] > 0.0) & (scales[:, 1] / lead > _COLLINEAR_TOL)
    planar = usable & (scales[:, 2] / lead <= _PLANAR_TOL)

    for j in np.nonzero(planar)[0]:
        try:
            pose, _ = _epnp(pw[j], uv[j], cam)
        except (DegenerateConfiguration, SolutionBehindCamera):
            continue
        R_out[j] = pose.rotation.to_matrix()
        t_out[j] = pose.translation
        ok[j] = True

    idx = np.nonzero(usable & ~planar)[0]
    if len(idx) == 0:
        return R_out, t_out, ok
    G = len(idx)
    pwg, uvg = pw[idx], uv[idx]
    ctrl = np.concatenate(
        [centroid[idx, None] + scales[idx, :, None] * Vt[idx], centroid[idx, None]], axis=1
    )

    aug = np.concatenate([ctrl.transpose(0, 2, 1), np.ones((G, 1, 4))], axis=1)
    rhs = np.concatenate([pwg.transpose(0, 2, 1), np.ones((G, 1, 4))], axis=1)
    try:
        alphas = np.linalg.solve(aug, rhs).transpose(0, 2, 1)
    except np.linalg.LinAlgError:
        for j in idx:  # rare: some control set affinely dependent
            try:
                pose, _ = _epnp(pw[j], uv[j], cam)
            except (DegenerateConfiguration, SolutionBehindCamera):
                continue
            R_out[j] = pose.rotation.to_matrix()
            t_out[j] = pose.translation
            ok[j] = True
        return R_out, t_out, ok

    f = cam.focal_px
    du = cam.cx - uvg[..., 0]
    dv = cam.cy - uvg[..., 1]
    M = np.zeros((G, 8, 12))
    for a in range(4):
        col = alphas[..., a]
        M[:, 0::2, 3 * a] = col * f
        M[:, 0::2, 3 * a + 2] = col * du
        M[:, 1::2, 3 * a + 1] = col * f
        M[:, 1::2, 3 * a + 2] = col * dv
    mtm = M.transpose(0, 2, 1) @ M
    _, vecs = np.linalg.eigh(mtm)
    basis = vecs[..., :4]

    pi, pj = _PAIRS4[:, 0], _PAIRS4[:, 1]
    vs = basis.transpose(0, 2, 1).reshape(G, 4, 4, 3)
    diffs = np.transpose(vs[:, :, pi] - vs[:, :, pj], (0, 2, 1, 3))
    D = diffs @ np.swapaxes(diffs, 2, 3)
    dc = ctrl[:, pi] - ctrl[:, pj]
    rho = (dc * dc).sum(axis=2)

    B = np.stack([_betas_case1(D, rho), _betas_case2(D, rho), _betas_case3(D, rho)], axis=1)
    B = _gauss_newton(D, rho, B)
    R, t, valid = _poses_from_betas(pwg, alphas, basis, B)
    errs = np.where(valid, _reproj_errors(R, t, pwg, uvg, cam), math.inf)
    cbest = np.argmin(errs, axis=1)
    rows = np.arange(G)
    found = np.isfinite(errs[rows, cbest])
    R_out[idx] = R[rows, cbest]
    t_out[idx] = t[rows, cbest]
    ok[idx] = found
    return R_out, t_out, ok


def epnp_solve(correspondences: Sequence[Correspondence], cam: CameraModel) -> Pose:
    """Solve a calibrated PnP instance.

    Parameters
    ----------
    correspondences : at least four target-point / pixel pairs.
    cam : pinhole intrinsics.

    Returns the pose taking target-frame points into the camera frame.
    Raises DegenerateConfiguration for unusable geometry and
    SolutionBehindCamera when no candidate keeps the points in front.
    """
    pw = np.array([c.point3d for c in correspondences], dtype=float)
    uv = np.array([c.point2d for c in correspondences], dtype=float)
    pose, _ = _epnp(pw, uv, cam)
    return pose


def _required_iterations(inlier_ratio: float, confidence: float) -> float:
    if inlier_ratio >= 1.0:
        return 0.0
    good = inlier_ratio**4
    if good <= 0.0:
        return math.inf
    denom = math.log1p(-good)
    return math.log1p(-confidence) / denom if denom < 0.0 else math.inf


def ransac_pnp(
    pred: KeypointPredictions,
    kps: KeypointSet,
    roi: RoI,
    cam: CameraModel,
    params: RansacParams = RansacParams(),
) -> PnPResult:
    """Robust pose from dense keypoint location estimates.

    Each RANSAC iteration samples four distinct keypoints and one location
    estimate for each, solves the minimal EPnP instance, and scores it by
    how many of the ``n * estimates_per_keypoint`` votes reproject within
    the threshold (full-image pixels). The loop exits early once the usual
    confidence bound says enough iterations have been seen, and the best
    consensus set is refit with all its inlier votes.

    Raises NoDetection('ransac_failed') when consensus never reaches
    ``min_inliers`` or every minimal solve degenerates.
    """
    n = kps.n
    if pred.n_keypoints != n:
        raise ValueError(f"predictions carry {pred.n_keypoints} keypoints, expected {n}")
    if n < 4:
        raise DegenerateConfiguration("need at least 4 keypoints for PnP")

    est_full = from_crop(roi, pred.estimates.reshape(-1, 2)).reshape(n, CELLS, 2)
    total = n * CELLS
    min_inliers = params.min_inliers
    if min_inliers is None:
        min_inliers = max(6, math.ceil(0.25 * total))

    rng = np.random.default_rng(params.seed)
    pts3 = kps.points
    thr2 = params.reproj_threshold_px**2
    f, cx, cy = cam.focal_px, cam.cx, cam.cy

    def score(R: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
        pc = pts3 @ R.T + t
        z = pc[:, 2]
        if np.any(z <= BEHIND_EPS):
            return None
        proj = np.column_stack([f * pc[:, 0] / z + cx, f * pc[:, 1] / z + cy])
        e2 = ((est_full - proj[:, None, :]) ** 2).sum(axis=2)
        return e2 < thr2, e2

    best_count = 0
    best_R: Optional[np.ndarray] = None
    best_t: Optional[np.ndarray] = None
    best_mask: Optional[np.ndarray] = None
    needed = math.inf
    iteration = 0
    # Minimal solves run batched a chunk at a time; scoring stays sequential
    # so the confidence early-exit sees the same iteration order. The first
    # chunk is small because clean data usually stops after one sample.
    chunk_size = 2
    while iteration < params.max_iterations:
        remaining = params.max_iterations - iteration
        if math.isfinite(needed):
            remaining = min(remaining, max(1, math.ceil(needed) - iteration))
        chunk = min(chunk_size, remaining)
        chunk_size = _CHUNK
        ki = np.argsort(rng.random((chunk, n)), axis=1)[:, :4]
        ej = rng.integers(0, CELLS, size=(chunk, 4))
        R_b, t_b, ok_b = _solve_minimal_batch(pts3[ki], est_full[ki, ej], cam)
        for j in range(chunk):
            iteration += 1
            if not ok_b[j]:
                continue
            scored = score(R_b[j], t_b[j])
            if scored is None:
                continue
            mask, _ = scored
            count = int(mask.sum())
            if count > best_count:
                best_count = count
                best_R, best_t = R_b[j], t_b[j]
                best_mask = mask
                needed = _required_iterations(count / total, params.confidence)
            if iteration >= needed:
                break
        if iteration >= needed:
            break

    if best_R is None or best_count < min_inliers:
        raise NoDetection(
            "ransac_failed",
            f"best consensus {best_count} of {total} is below min_inliers {min_inliers}",
        )

    ki_idx, ej_idx = np.nonzero(best_mask)
    refined: Optional[Pose] = None
    scored = None
    try:
        refined, _ = _epnp(pts3[ki_idx], est_full[ki_idx, ej_idx], cam)
        scored = score(refined.rotation.to_matrix(), refined.translation)
    except (DegenerateConfiguration, SolutionBehindCamera):
        pass
    if refined is None or scored is None or not scored[0].any():
        refined = Pose(Quaternion.from_matrix(best_R), best_t)
        scored = score(best_R, best_t)
        assert scored is not None  # the best sample already passed this check
    final_mask, err2 = scored
    mean_err = float(np.sqrt(err2[final_mask]).mean())
    return PnPResult(pose=refined, inlier_mask=final_mask, mean_reproj_error=mean_err)
