"""Closed-form multi-view geometry under the weak-perspective camera model.

Projection, orthographic-N-point camera solving, similarity (Procrustes)
alignment, per-point linear triangulation, and rank-3 measurement-matrix
factorization.  All functions are pure and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateConfiguration

# relative singular-value cutoff used for all rank decisions
_RANK_RTOL = 1e-9


@dataclass
class Landmarks2D:
    """P 2D image points plus a per-point missing mask.

    ``points`` is (P, 2) float64; coordinates at missing rows are zero-filled
    and meaningless.  ``missing`` is (P,) bool, True where unknown.
    """

    points: np.ndarray
    missing: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValueError(f"points must be (P, 2), got {pts.shape}")
        if self.missing is None:
            miss = np.zeros(pts.shape[0], dtype=bool)
        else:
            miss = np.asarray(self.missing, dtype=bool)
            if miss.shape != (pts.shape[0],):
                raise ValueError("missing mask must be (P,)")
        if not np.isfinite(pts[~miss]).all():
            raise ValueError("present points must be finite")
        pts = pts.copy()
        pts[miss] = 0.0
        self.points = pts
        self.missing = miss

    @property
    def num_points(self):
        return self.points.shape[0]

    @property
    def all_present(self):
        return not self.missing.any()

    @classmethod
    def from_nan(cls, points):
        """Build from an array where missing points carry NaN coordinates."""
        pts = np.asarray(points, dtype=np.float64)
        miss = ~np.isfinite(pts).all(axis=1)
        pts = np.where(miss[:, None], 0.0, pts)
        return cls(pts, miss)

    def to_nan(self):
        """(P, 2) array with NaN at missing rows."""
        out = self.points.copy()
        out[self.missing] = np.nan
        return out


@dataclass
class Shape3D:
    """P 3D points in the canonical world frame (up-to-scale)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"points must be (P, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("shape points must be finite")
        self.points = pts

    @property
    def num_points(self):
        return self.points.shape[0]


def _check_rotation(rotation):
    rot = np.asarray(rotation, dtype=np.float64)
    if rot.shape != (3, 3):
        raise ValueError("rotation must be 3x3")
    if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-9:
        raise ValueError("rotation is not orthonormal within 1e-9")
    if np.linalg.det(rot) < 0:
        raise ValueError("rotation has negative determinant")
    return rot


@dataclass
class WeakPerspectiveCamera:
    """Rotation + isotropic scale + 2D translation (image units)."""

    rotation: np.ndarray
    scale: float
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = _check_rotation(self.rotation)
        self.scale = float(self.scale)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive and finite")
        t = np.asarray(self.translation, dtype=np.float64).reshape(2)
        if not np.isfinite(t).all():
            raise ValueError("translation must be finite")
        self.translation = t


@dataclass
class SimilarityTransform:
    """x -> scale * rotation @ x + translation, in 3D."""

    rotation: np.ndarray
    scale: float
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = _check_rotation(self.rotation)
        self.scale = float(self.scale)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive and finite")
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.isfinite(t).all():
            raise ValueError("translation must be finite")
        self.translation = t

    def apply(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * pts @ self.rotation.T + self.translation


def project(shape, cam):
    """Weak-perspective projection: scale * R[:2] @ x + t, per point."""
    pts = cam.scale * shape.points @ cam.rotation[:2].T + cam.translation
    return Landmarks2D(pts)


def project_points(points, rot2, scale, translation):
    """Array form of :func:`project` (no wrapping), rot2 is the 2x3 block."""
    return scale * points @ rot2.T + translation


def solve_onp(obs, shape):
    """Recover the weak-perspective camera aligning ``shape`` to ``obs``.

    Centers both point sets over the non-missing rows, solves the 2x3
    least-squares affine map, projects it to a scaled partial rotation via
    SVD (scale = mean of the two retained singular values), completes the
    rotation with a cross product, and reads the translation off the
    centroids.  Returns (camera, residual) with residual the Frobenius norm
    of the reprojection error over usable rows.
    """
    usable = ~obs.missing
    n_usable = int(usable.sum())
    if n_usable < 3:
        raise DegenerateConfiguration(f"need >= 3 usable points, got {n_usable}")
    w = obs.points[usable]
    x = shape.points[usable]
    w_mean = w.mean(axis=0)
    x_mean = x.mean(axis=0)
    wc = w - w_mean
    xc = x - x_mean
    sv = np.linalg.svd(xc, compute_uv=False)
    if sv[1] <= _RANK_RTOL * max(sv[0], 1.0):
        raise DegenerateConfiguration("shape points are collinear (covariance rank < 2)")
    affine, *_ = np.linalg.lstsq(xc, wc, rcond=None)  # (3, 2): wc ~ xc @ affine
    u, s, vt = np.linalg.svd(affine.T, full_matrices=False)
    rot2 = u @ vt
    scale = float(s.mean())
    if scale <= _RANK_RTOL * max(s[0], 1.0):
        raise DegenerateConfiguration("camera scale collapsed to zero")
    rot = np.vstack([rot2, np.cross(rot2[0], rot2[1])])
    translation = w_mean - scale * rot2 @ x_mean
    cam = WeakPerspectiveCamera(rot, scale, translation)
    residual = float(np.linalg.norm(wc - scale * xc @ rot2.T))
    return cam, residual


def solve_onp_batch(obs, shapes):
    """Vectorized OnP for complete observations.

    obs: (B, P, 2), shapes: (B, P, 3).  Returns (rot2 (B, 2, 3), scale (B,),
    translation (B, 2), residual (B,)).  Agrees with :func:`solve_onp` on
    every item; falls back to the per-item path when a normal system is
    singular.
    """
    obs = np.asarray(obs, dtype=np.float64)
    shapes = np.asarray(shapes, dtype=np.float64)
    w_mean = obs.mean(axis=1, keepdims=True)
    x_mean = shapes.mean(axis=1, keepdims=True)
    wc = obs - w_mean
    xc = shapes - x_mean
    gram = np.einsum("bpi,bpj->bij", xc, xc)
    cross = np.einsum("bpi,bpj->bij", xc, wc)
    try:
        affine = np.linalg.solve(gram, cross)  # (B, 3, 2)
    except np.linalg.LinAlgError:
        out_r = np.empty((obs.shape[0], 2, 3))
        out_s = np.empty(obs.shape[0])
        out_t = np.empty((obs.shape[0], 2))
        out_res = np.empty(obs.shape[0])
        for i in range(obs.shape[0]):
            cam, res = solve_onp(Landmarks2D(obs[i]), Shape3D(shapes[i]))
            out_r[i] = cam.rotation[:2]
            out_s[i] = cam.scale
            out_t[i] = cam.translation
            out_res[i] = res
        return out_r, out_s, out_t, out_res
    u, s, vt = np.linalg.svd(np.swapaxes(affine, 1, 2))
    rot2 = u @ vt[:, :2, :]
    scale = s.mean(axis=1)
    translation = w_mean[:, 0, :] - scale[:, None] * np.einsum(
        "bij,bj->bi", rot2, x_mean[:, 0, :]
    )
    proj = scale[:, None, None] * np.einsum("bpk,bqk->bpq", xc, rot2)
    residual = np.linalg.norm((wc - proj).reshape(obs.shape[0], -1), axis=1)
    return rot2, scale, translation, residual


def reprojection_score(obs, shape, cam):
    """Frobenius norm of obs minus the reprojection of ``shape`` (all points)."""
    return float(np.linalg.norm(obs.points - project(shape, cam).points))


def procrustes_align(pred, ref):
    """Best similarity transform of ``pred`` onto ``ref`` (least squares).

    Scale is included because reconstructions are up-to-scale.  Returns the
    aligned shape and the transform.  Raises DegenerateConfiguration when the
    cross-covariance rank makes the rotation sign ambiguous or either shape
    is collapsed.
    """
    p = pred.points
    r = ref.points
    if p.shape != r.shape or p.shape[0] < 3:
        raise DegenerateConfiguration("need matching shapes with >= 3 points")
    mu_p = p.mean(axis=0)
    mu_r = r.mean(axis=0)
    pc = p - mu_p
    rc = r - mu_r
    var_p = (pc**2).sum() / p.shape[0]
    if var_p <= _RANK_RTOL**2:
        raise DegenerateConfiguration("pred points are all coincident")
    cov = rc.T @ pc / p.shape[0]
    u, d, vt = np.linalg.svd(cov)
    if d[1] <= _RANK_RTOL * max(d[0], 1.0):
        raise DegenerateConfiguration("cross-covariance rank < 2: rotation ambiguous")
    sign = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    flip = np.ones(3)
    flip[-1] = sign
    rot = (u * flip) @ vt
    scale = float((d * flip).sum() / var_p)
    if scale <= 0:
        raise DegenerateConfiguration("alignment scale is not positive")
    translation = mu_r - scale * rot @ mu_p
    transform = SimilarityTransform(rot, scale, translation)
    return Shape3D(transform.apply(p)), transform


def triangulate(views):
    """Per-point least squares over stacked weak-perspective projections.

    ``views`` is a sequence of (Landmarks2D, WeakPerspectiveCamera).  For
    each point the equations  scale_v * R_v[:2] @ X = w_v - t_v  are stacked
    over the views observing it and solved for X.
    """
    if len(views) < 2:
        raise DegenerateConfiguration("triangulation needs >= 2 views")
    P = views[0][0].num_points
    rows = [cam.scale * cam.rotation[:2] for _, cam in views]
    solved = np.empty((P, 3))
    for p in range(P):
        a_blocks = []
        b_blocks = []
        for (obs, cam), block in zip(views, rows):
            if obs.missing[p]:
                continue
            a_blocks.append(block)
            b_blocks.append(obs.points[p] - cam.translation)
        if len(a_blocks) < 2:
            raise DegenerateConfiguration(f"point {p} observed in < 2 views")
        a = np.vstack(a_blocks)
        b = np.concatenate(b_blocks)
        sv = np.linalg.svd(a, compute_uv=False)
        if sv[2] <= _RANK_RTOL * max(sv[0], 1.0):
            raise DegenerateConfiguration(f"point {p}: stacked system rank-deficient")
        solved[p], *_ = np.linalg.lstsq(a, b, rcond=None)
    return Shape3D(solved)


def _fix_svd_signs(u, vt):
    """Flip singular-vector signs so each left vector's largest entry is positive."""
    idx = np.abs(u).argmax(axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, vt * signs[:, None]


def tomasi_kanade(frame_views):
    """Rigid-world factorization of centered weak-perspective measurements.

    ``frame_views`` is a list over frames of per-view Landmarks2D (no missing
    points).  Stacks each centered 2xP block into the measurement matrix,
    factorizes at rank 3, then solves the orthonormality constraints for the
    3x3 corrective Gram matrix and applies its symmetric square root.

    Returns (shape, cams) with one Shape3D and a flat camera list in
    frame-major, view-minor order.  Raises DegenerateConfiguration when the
    Gram system is not positive definite.
    """
    blocks = [lm for per_frame in frame_views for lm in per_frame]
    if len(blocks) < 3:
        raise DegenerateConfiguration("need >= 3 frame-views")
    P = blocks[0].num_points
    if P < 4:
        raise DegenerateConfiguration("need >= 4 points")
    for lm in blocks:
        if not lm.all_present:
            raise DegenerateConfiguration("factorization requires complete data")
    centroids = np.array([lm.points.mean(axis=0) for lm in blocks])
    measurement = np.vstack(
        [(lm.points - c).T for lm, c in zip(blocks, centroids)]
    )  # (2F, P)
    u, s, vt = np.linalg.svd(measurement, full_matrices=False)
    u, vt = _fix_svd_signs(u, vt)
    root = np.sqrt(s[:3])
    motion = u[:, :3] * root  # (2F, 3)
    shape_flat = root[:, None] * vt[:3]  # (3, P)

    # orthonormality constraints on G = A A^T:   u G u^T = v G v^T,  u G v^T = 0
    def quad(a, b):
        return np.array(
            [
                a[0] * b[0],
                a[0] * b[1] + a[1] * b[0],
                a[0] * b[2] + a[2] * b[0],
                a[1] * b[1],
                a[1] * b[2] + a[2] * b[1],
                a[2] * b[2],
            ]
        )

    n_fv = len(blocks)
    system = np.empty((2 * n_fv, 6))
    for f in range(n_fv):
        iu, iv = motion[2 * f], motion[2 * f + 1]
        system[2 * f] = quad(iu, iu) - quad(iv, iv)
        system[2 * f + 1] = quad(iu, iv)
    _, _, vt_sys = np.linalg.svd(system)
    g = vt_sys[-1]
    gram = np.array(
        [
            [g[0], g[1], g[2]],
            [g[1], g[3], g[4]],
            [g[2], g[4], g[5]],
        ]
    )
    if np.trace(gram) < 0:
        gram = -gram
    eigval, eigvec = np.linalg.eigh(gram)
    if eigval.min() <= 1e-12 * max(eigval.max(), 1e-300):
        raise DegenerateConfiguration("metric-upgrade Gram matrix is not positive definite")
    corrective = (eigvec * np.sqrt(eigval)) @ eigvec.T  # symmetric square root
    motion = motion @ corrective
    shape_flat = np.linalg.solve(corrective, shape_flat)

    cams = []
    for f in range(n_fv):
        pair = motion[2 * f : 2 * f + 2]
        uu, ss, vv = np.linalg.svd(pair, full_matrices=False)
        rot2 = uu @ vv
        scale = float(ss.mean())
        if scale <= _RANK_RTOL:
            raise DegenerateConfiguration(f"frame-view {f}: camera scale collapsed")
        rot = np.vstack([rot2, np.cross(rot2[0], rot2[1])])
        cams.append(WeakPerspectiveCamera(rot, scale, centroids[f]))
    return Shape3D(shape_flat.T), cams


def nearest_rotation(m):
    """Orthogonal Procrustes projection of a 3x3 matrix, det forced to +1."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.isfinite(m).all():
        raise ValueError("input must be a finite 3x3 matrix")
    u, _, vt = np.linalg.svd(m)
    flip = np.ones(3)
    flip[-1] = np.sign(np.linalg.det(u @ vt))
    return (u * flip) @ vt
