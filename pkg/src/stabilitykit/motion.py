"""Inter-frame motion: corners, pyramidal Lucas-Kanade, robust model fits,
dense grid flow, and camera-trajectory accumulation.

Coordinates are (x, y) in pixels with the origin at the top-left pixel
center.  Motion estimation runs at native resolution.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    ConfigError,
    DegenerateScene,
    DimensionMismatch,
    ParseError,
    TrackingFailure,
    UnderDetermined,
)
from .media import to_luma


@dataclass
class FlowField:
    """Coarse dense flow: per-cell displacement in pixels."""

    width: int
    height: int
    u: np.ndarray
    v: np.ndarray


@dataclass
class MotionParams:
    """One inter-frame motion estimate.

    ``dx``/``dy`` are the displacement of the frame-center point, so pure
    rotation about the center reports (0, 0); ``theta`` is radians CCW in
    image coordinates.  ``h`` is only set for the homography model.
    """

    model_kind: str
    dx: float
    dy: float
    theta: float = 0.0
    scale: float = 1.0
    h: np.ndarray | None = None
    inlier_ratio: float = 1.0


@dataclass
class Trajectory:
    """Cumulative camera path; index 0 is the reference frame (all zeros)."""

    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray

    @property
    def length(self) -> int:
        return len(self.x)


@dataclass
class RansacParams:
    iters: int = 500
    inlier_px: float = 2.0
    seed: int = 0


# ---------------------------------------------------------------------------
# Corner detection (minimum-eigenvalue response)
# ---------------------------------------------------------------------------


def corner_response(luma: np.ndarray) -> np.ndarray:
    """Shi-Tomasi response: smaller eigenvalue of the 5x5 structure tensor."""
    gy, gx = np.gradient(luma.astype(np.float64))
    sxx = ndimage.uniform_filter(gx * gx, size=5, mode="nearest")
    syy = ndimage.uniform_filter(gy * gy, size=5, mode="nearest")
    sxy = ndimage.uniform_filter(gx * gy, size=5, mode="nearest")
    half_trace = 0.5 * (sxx + syy)
    root = np.sqrt(np.maximum(0.25 * (sxx - syy) ** 2 + sxy * sxy, 0.0))
    return half_trace - root


def detect_corners(
    luma: np.ndarray,
    max_n: int = 200,
    quality: float = 0.01,
    nms_radius: int = 8,
    min_corners: int = 8,
    border: int = 3,
) -> np.ndarray:
    """Strongest corners as (n, 2) sub-pixel (x, y), sorted by score descending."""
    h, w = luma.shape
    if h < 32 or w < 32:
        raise DimensionMismatch("corner detection needs a plane of at least 32x32")
    border = max(border, 3)
    resp = corner_response(luma)
    resp[:border, :] = 0.0
    resp[-border:, :] = 0.0
    resp[:, :border] = 0.0
    resp[:, -border:] = 0.0
    peak = float(resp.max())
    if peak <= 1e-9:
        raise DegenerateScene("no texture: flat corner response")
    size = 2 * nms_radius + 1
    is_max = resp >= ndimage.maximum_filter(resp, size=size, mode="nearest")
    cand = is_max & (resp >= quality * peak) & (resp > 0)
    ys, xs = np.nonzero(cand)
    scores = resp[ys, xs]
    order = np.argsort(-scores, kind="stable")[:max_n]
    ys, xs, scores = ys[order], xs[order], scores[order]
    if len(xs) < min_corners:
        raise DegenerateScene(f"only {len(xs)} corners found, need {min_corners}")

    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    # parabolic sub-pixel refinement along each axis
    interior = (xs > 0) & (xs < w - 1) & (ys > 0) & (ys < h - 1)
    ii = np.nonzero(interior)[0]
    for axis, (da, db) in ((0, (0, 1)), (1, (1, 0))):
        lo = resp[ys[ii] - db, xs[ii] - da]
        hi = resp[ys[ii] + db, xs[ii] + da]
        mid = scores[ii]
        denom = lo - 2.0 * mid + hi
        off = np.zeros(len(ii))
        curved = denom < -1e-12
        off[curved] = 0.5 * (lo - hi)[curved] / denom[curved]
        pts[ii, axis] += np.clip(off, -0.5, 0.5)
    return pts


# ---------------------------------------------------------------------------
# Pyramidal Lucas-Kanade
# ---------------------------------------------------------------------------

_LK_WIN = 7  # window radius -> 15x15
_LK_MAX_ITER = 30
_LK_EPS = 0.01
_LK_MAX_RESIDUAL = 25.0  # RMS gray levels over the window

_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    out = [img.astype(np.float64)]
    for _ in range(levels - 1):
        prev = out[-1]
        if min(prev.shape) // 2 < 2 * _LK_WIN + 3:
            break
        blurred = ndimage.correlate1d(prev, _BINOMIAL5, axis=0, mode="nearest")
        blurred = ndimage.correlate1d(blurred, _BINOMIAL5, axis=1, mode="nearest")
        out.append(blurred[::2, ::2])
    return out


def _sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear gather with edge clamping (hand-rolled: called in the LK inner
    loop where scipy's per-call overhead dominates)."""
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = xs.astype(np.intp)
    y0 = ys.astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    flat = img.ravel()
    i00 = flat[y0 * w + x0]
    i01 = flat[y0 * w + x1]
    i10 = flat[y1 * w + x0]
    i11 = flat[y1 * w + x1]
    top = i00 + (i01 - i00) * fx
    bot = i10 + (i11 - i10) * fx
    return top + (bot - top) * fy


def _track_points(
    prev: np.ndarray,
    nxt: np.ndarray,
    pts: np.ndarray,
    levels: int = 3,
    max_iter: int = _LK_MAX_ITER,
    eps: float = _LK_EPS,
    max_residual: float = _LK_MAX_RESIDUAL,
    pyramids: tuple[list[np.ndarray], list[np.ndarray]] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Track pts (n, 2) from prev to nxt; returns (new_pts, ok, residual_rms)."""
    n = len(pts)
    h, w = prev.shape
    if pyramids is None:
        pyr_p = _pyramid(prev, levels)
        pyr_n = _pyramid(nxt, levels)
    else:
        pyr_p, pyr_n = pyramids
    off = np.arange(-_LK_WIN, _LK_WIN + 1, dtype=np.float64)
    off_x = np.tile(off, 2 * _LK_WIN + 1)
    off_y = np.repeat(off, 2 * _LK_WIN + 1)

    def win_inside(p):
        return (
            (p[:, 0] - _LK_WIN >= 0)
            & (p[:, 0] + _LK_WIN <= w - 1)
            & (p[:, 1] - _LK_WIN >= 0)
            & (p[:, 1] + _LK_WIN <= h - 1)
        )

    d = np.zeros((n, 2))
    # template windows that leave the image are dropped at the end anyway;
    # excluding them up front keeps them out of the iteration loop
    ok = win_inside(pts)
    converged = np.zeros(n, dtype=bool)

    for lev in range(len(pyr_p) - 1, -1, -1):
        scale = 2.0**lev
        p_img, n_img = pyr_p[lev], pyr_n[lev]
        gy, gx = np.gradient(p_img)
        p_lev = pts / scale
        d_lev = d / scale

        tx = p_lev[:, 0:1] + off_x[None, :]
        ty = p_lev[:, 1:2] + off_y[None, :]
        tmpl = _sample(p_img, tx, ty)
        gxs = _sample(gx, tx, ty)
        gys = _sample(gy, tx, ty)
        gxx = np.sum(gxs * gxs, axis=1)
        gxy = np.sum(gxs * gys, axis=1)
        gyy = np.sum(gys * gys, axis=1)
        det = gxx * gyy - gxy * gxy
        trackable = det > 1e-9
        ok &= trackable
        det = np.where(trackable, det, 1.0)

        converged[:] = False
        rows = np.nonzero(ok)[0]
        for _ in range(max_iter):
            if len(rows) == 0:
                break
            cur = _sample(n_img, tx[rows] + d_lev[rows, 0:1], ty[rows] + d_lev[rows, 1:2])
            err = cur - tmpl[rows]
            bx = -np.sum(gxs[rows] * err, axis=1)
            by = -np.sum(gys[rows] * err, axis=1)
            step_x = (gyy[rows] * bx - gxy[rows] * by) / det[rows]
            step_y = (gxx[rows] * by - gxy[rows] * bx) / det[rows]
            d_lev[rows, 0] += step_x
            d_lev[rows, 1] += step_y
            done = np.hypot(step_x, step_y) < eps
            converged[rows[done]] = True
            rows = rows[~done]
        d = d_lev * scale

    cur = _sample(pyr_n[0], pts[:, 0:1] + d[:, 0:1] + off_x[None, :],
                  pts[:, 1:2] + d[:, 1:2] + off_y[None, :])
    tmpl0 = _sample(pyr_p[0], pts[:, 0:1] + off_x[None, :], pts[:, 1:2] + off_y[None, :])
    resid = np.sqrt(np.mean((cur - tmpl0) ** 2, axis=1))

    # Both the template window and the tracked window must stay inside the
    # image; clamped edge samples bias the estimate toward zero motion.
    new_pts = pts + d
    ok &= converged & win_inside(new_pts) & (resid <= max_residual)
    return new_pts, ok, resid


def track_lk(
    prev: np.ndarray, nxt: np.ndarray, points: np.ndarray
) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Pyramidal LK tracking; returns surviving ((x0, y0), (x1, y1)) pairs."""
    if prev.shape != nxt.shape:
        raise DimensionMismatch("planes must share dimensions")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 1:
        raise ValueError("need at least one point")
    new_pts, ok, _ = _track_points(prev, nxt, pts)
    if not ok.any():
        raise TrackingFailure("no point survived tracking")
    return [
        ((float(p[0]), float(p[1])), (float(q[0]), float(q[1])))
        for p, q in zip(pts[ok], new_pts[ok])
    ]


def _grid_points(shape: tuple[int, int], grid: int) -> np.ndarray:
    h, w = shape
    cx = (np.arange(grid) + 0.5) * (w / grid)
    cy = (np.arange(grid) + 0.5) * (h / grid)
    gx, gy = np.meshgrid(cx, cy)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _grid_field(pts, new_pts, ok, grid) -> FlowField:
    if not ok.any():
        raise TrackingFailure("flow failed in every grid cell")
    disp = new_pts - pts
    if not ok.all():
        good = np.nonzero(ok)[0]
        bad = np.nonzero(~ok)[0]
        dist = np.sum((pts[bad][:, None, :] - pts[good][None, :, :]) ** 2, axis=2)
        disp[bad] = disp[good[np.argmin(dist, axis=1)]]
    u = disp[:, 0].reshape(grid, grid)
    v = disp[:, 1].reshape(grid, grid)
    return FlowField(width=grid, height=grid, u=u, v=v)


def _as_luma(frame: np.ndarray) -> np.ndarray:
    return to_luma(frame) if frame.ndim == 3 else frame.astype(np.float64)


def grid_flow(prev_frame: np.ndarray, next_frame: np.ndarray, grid: int = 8) -> FlowField:
    """LK flow seeded at grid-cell centers; failed cells take the nearest
    successful neighbor's displacement."""
    if not 4 <= grid <= 32:
        raise ConfigError(f"grid must be in [4, 32], got {grid}")
    if prev_frame.shape != next_frame.shape:
        raise DimensionMismatch("frames must share dimensions")
    prev = _as_luma(prev_frame)
    nxt = _as_luma(next_frame)
    pts = _grid_points(prev.shape, grid)
    new_pts, ok, _ = _track_points(prev, nxt, pts)
    return _grid_field(pts, new_pts, ok, grid)


def grid_flow_sequence(lumas: np.ndarray, grid: int = 8) -> list[FlowField]:
    """grid_flow over every adjacent pair of a (T, H, W) luma stack, sharing
    pyramid construction between the pairs."""
    if not 4 <= grid <= 32:
        raise ConfigError(f"grid must be in [4, 32], got {grid}")
    pts = _grid_points(lumas[0].shape, grid)
    pyramids = [_pyramid(np.asarray(lumas[t], dtype=np.float64), 3) for t in range(len(lumas))]
    fields = []
    for t in range(len(lumas) - 1):
        try:
            new_pts, ok, _ = _track_points(
                lumas[t], lumas[t + 1], pts, pyramids=(pyramids[t], pyramids[t + 1])
            )
            fields.append(_grid_field(pts, new_pts, ok, grid))
        except TrackingFailure:
            g = np.zeros((grid, grid))
            fields.append(FlowField(width=grid, height=grid, u=g, v=g.copy()))
    return fields


# ---------------------------------------------------------------------------
# Robust parametric motion
# ---------------------------------------------------------------------------


def _ransac_pick(counts: np.ndarray) -> int:
    return int(np.argmax(counts))  # ties resolve to the earliest iteration


def _fit_similarity(z0: np.ndarray, z1: np.ndarray) -> tuple[complex, complex]:
    """Least-squares a, t with z1 ~ a*z0 + t (a encodes rotation+scale)."""
    m0 = z0.mean()
    m1 = z1.mean()
    c0 = z0 - m0
    c1 = z1 - m1
    denom = np.sum(c0 * np.conj(c0)).real
    a = np.sum(np.conj(c0) * c1) / denom if denom > 1e-12 else 1.0 + 0.0j
    return a, m1 - a * m0


def _ransac_similarity(
    z0: np.ndarray, z1: np.ndarray, ransac: RansacParams, rng: np.random.Generator
) -> tuple[complex, complex, float]:
    """Seeded 2-point RANSAC plus least squares over the inliers."""
    m = len(z0)
    i0 = rng.integers(0, m, ransac.iters)
    i1 = (i0 + 1 + rng.integers(0, m - 1, ransac.iters)) % m
    base = z0[i1] - z0[i0]
    safe = np.abs(base) > 1e-9
    a_cand = np.where(safe, (z1[i1] - z1[i0]) / np.where(safe, base, 1.0), 1.0)
    t_cand = z1[i0] - a_cand * z0[i0]
    err = np.abs(a_cand[:, None] * z0[None, :] + t_cand[:, None] - z1[None, :])
    inl = (err <= ransac.inlier_px) & safe[:, None]
    best = inl[_ransac_pick(inl.sum(axis=1))]
    if best.sum() < 2:
        best = np.ones(m, dtype=bool)
    a, t = _fit_similarity(z0[best], z1[best])
    return a, t, float(best.mean())


def _refine_similarity(
    prev: np.ndarray,
    nxt: np.ndarray,
    z0: np.ndarray,
    a: complex,
    t: complex,
    ransac: RansacParams,
    rng: np.random.Generator,
) -> tuple[complex, complex, float] | None:
    """Re-track corners against prev warped by the current model; residual
    displacements then carry no rotation and the refit is nearly unbiased."""
    h, w = prev.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    ainv = 1.0 / a
    tinv = -t * ainv
    src = ainv * (xs + 1j * ys) + tinv
    prev_w = ndimage.map_coordinates(prev, [src.imag, src.real], order=1, mode="nearest")
    zw = a * z0 + t
    pw = np.stack([zw.real, zw.imag], axis=1)
    new_pts, ok, _ = _track_points(prev_w, nxt, pw)
    if ok.sum() < 2:
        return None
    z1r = new_pts[ok, 0] + 1j * new_pts[ok, 1]
    tight = RansacParams(ransac.iters, min(ransac.inlier_px, 0.75), ransac.seed)
    a2, t2, ratio = _ransac_similarity(zw[ok], z1r, tight, rng)
    # compose the residual fit with the incoming model
    return a2 * a, a2 * t + t2, ratio


def _homography_dlt(p0: np.ndarray, p1: np.ndarray) -> np.ndarray | None:
    """Normalized DLT; p0, p1 are (m, 2) with m >= 4."""

    def normalize(p):
        c = p.mean(axis=0)
        d = np.sqrt(((p - c) ** 2).sum(axis=1)).mean()
        if d < 1e-9:
            return None, None
        s = np.sqrt(2.0) / d
        t = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
        return (p - c) * s, t

    n0, t0 = normalize(p0)
    n1, t1 = normalize(p1)
    if n0 is None or n1 is None:
        return None
    m = len(p0)
    a = np.zeros((2 * m, 9))
    x, y = n0[:, 0], n0[:, 1]
    u, v = n1[:, 0], n1[:, 1]
    a[0::2] = np.c_[x, y, np.ones(m), np.zeros((m, 3)), -u * x, -u * y, -u]
    a[1::2] = np.c_[np.zeros((m, 3)), x, y, np.ones(m), -v * x, -v * y, -v]
    _, s, vt = np.linalg.svd(a)
    if s[-2] < 1e-12:  # rank-deficient configuration
        return None
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t1) @ hn @ t0
    if abs(h[2, 2]) < 1e-12:
        return None
    return h / h[2, 2]


def _apply_h(h: np.ndarray, p: np.ndarray) -> np.ndarray:
    q = np.c_[p, np.ones(len(p))] @ h.T
    return q[:, :2] / q[:, 2:3]


def estimate_motion(
    prev_frame: np.ndarray,
    next_frame: np.ndarray,
    model_kind: str = "similarity",
    ransac: RansacParams | None = None,
) -> MotionParams:
    """Corner matching + seeded RANSAC fit of the requested motion model."""
    if prev_frame.shape != next_frame.shape:
        raise DimensionMismatch("frames must share dimensions")
    if model_kind not in ("translation", "similarity", "homography"):
        raise ConfigError(f"unknown motion model {model_kind!r}")
    ransac = ransac or RansacParams()
    prev = to_luma(prev_frame) if prev_frame.ndim == 3 else prev_frame.astype(np.float64)
    nxt = to_luma(next_frame) if next_frame.ndim == 3 else next_frame.astype(np.float64)

    try:
        corners = detect_corners(prev, border=_LK_WIN + 1)
    except DegenerateScene:
        # small frames starve under the default 8 px suppression radius
        corners = detect_corners(prev, border=_LK_WIN + 1, nms_radius=4, quality=0.005)
    new_pts, ok, _ = _track_points(prev, nxt, corners)
    if not ok.any():
        raise TrackingFailure("no corner survived tracking")
    p0 = corners[ok]
    p1 = new_pts[ok]
    m = len(p0)
    rng = np.random.default_rng(ransac.seed)
    h, w = prev.shape
    center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])

    if model_kind == "translation":
        disp = p1 - p0
        idx = rng.integers(0, m, ransac.iters)
        err = np.linalg.norm(disp[None, :, :] - disp[idx, None, :], axis=2)
        inl = err <= ransac.inlier_px
        best = inl[_ransac_pick(inl.sum(axis=1))]
        dx, dy = np.median(disp[best], axis=0)
        return MotionParams("translation", float(dx), float(dy),
                            inlier_ratio=float(best.mean()))

    if model_kind == "similarity":
        if m < 2:
            raise UnderDetermined("similarity needs at least 2 matches")
        z0 = p0[:, 0] + 1j * p0[:, 1]
        z1 = p1[:, 0] + 1j * p1[:, 1]
        a, t, ratio = _ransac_similarity(z0, z1, ransac, rng)
        # Model-conditioned refinement: translational LK is biased when the
        # window itself rotates, so re-track against a warped template and
        # refit.  Two passes are enough to push the bias below 0.01 px.
        for _ in range(2):
            a, t, ratio = _refine_similarity(prev, nxt, z0, a, t, ransac, rng) or (a, t, ratio)
        c = center[0] + 1j * center[1]
        delta = a * c + t - c
        return MotionParams(
            "similarity",
            float(delta.real),
            float(delta.imag),
            theta=float(np.arctan2(a.imag, a.real)),
            scale=float(abs(a)),
            inlier_ratio=ratio,
        )

    # homography
    if m < 4:
        raise UnderDetermined(f"homography needs 4 matches, have {m}")
    best_count = -1
    best_inl = None
    keys = rng.random((ransac.iters, m))
    samples = np.argpartition(keys, 3, axis=1)[:, :4]
    for row in samples:
        h_cand = _homography_dlt(p0[row], p1[row])
        if h_cand is None:
            continue
        err = np.linalg.norm(_apply_h(h_cand, p0) - p1, axis=1)
        inl = err <= ransac.inlier_px
        count = int(inl.sum())
        if count > best_count:
            best_count = count
            best_inl = inl
    if best_inl is None or best_count < 4:
        raise UnderDetermined("fewer than 4 inlier matches for homography")
    h_final = _homography_dlt(p0[best_inl], p1[best_inl])
    if h_final is None:
        raise UnderDetermined("degenerate inlier configuration")
    cxy = _apply_h(h_final, center[None, :])[0]
    # affine Jacobian at the frame center
    x, y = center
    den = h_final[2, 0] * x + h_final[2, 1] * y + h_final[2, 2]
    nu = h_final[0, 0] * x + h_final[0, 1] * y + h_final[0, 2]
    nv = h_final[1, 0] * x + h_final[1, 1] * y + h_final[1, 2]
    j = np.array(
        [
            [h_final[0, 0] * den - nu * h_final[2, 0], h_final[0, 1] * den - nu * h_final[2, 1]],
            [h_final[1, 0] * den - nv * h_final[2, 0], h_final[1, 1] * den - nv * h_final[2, 1]],
        ]
    ) / (den * den)
    theta = float(np.arctan2(j[1, 0] - j[0, 1], j[0, 0] + j[1, 1]))
    det_j = float(np.linalg.det(j))
    return MotionParams(
        "homography",
        float(cxy[0] - x),
        float(cxy[1] - y),
        theta=theta,
        scale=float(np.sqrt(max(det_j, 1e-12))),
        h=h_final,
        inlier_ratio=float(best_inl.mean()),
    )


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


def accumulate_trajectory(params: list[MotionParams]) -> Trajectory:
    """Prefix-sum per-pair motion into a camera path anchored at zero."""
    if not params:
        raise ValueError("empty parameter list")
    kinds = {p.model_kind for p in params}
    if len(kinds) > 1:
        raise ConfigError(f"mixed motion models: {sorted(kinds)}")
    dx = np.array([p.dx for p in params])
    dy = np.array([p.dy for p in params])
    dth = np.array([p.theta for p in params])
    zero = np.zeros(1)
    return Trajectory(
        x=np.concatenate([zero, np.cumsum(dx)]),
        y=np.concatenate([zero, np.cumsum(dy)]),
        theta=np.concatenate([zero, np.cumsum(dth)]),
    )


def video_trajectory(
    seq,
    model_kind: str = "similarity",
    ransac: RansacParams | None = None,
) -> tuple[Trajectory, list[MotionParams]]:
    """Per-pair motion over a FrameSequence, accumulated into a Trajectory."""
    params = [
        estimate_motion(seq.frames[i], seq.frames[i + 1], model_kind, ransac)
        for i in range(len(seq) - 1)
    ]
    return accumulate_trajectory(params), params


# ---------------------------------------------------------------------------
# Export formats
# ---------------------------------------------------------------------------

_FLOW_MAGIC = b"STKFLOW\x00"


def save_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("frame,x,y,theta\n")
        for i in range(traj.length):
            fh.write(f"{i},{traj.x[i]:.9g},{traj.y[i]:.9g},{traj.theta[i]:.9g}\n")


def load_trajectory_csv(path: str | Path) -> Trajectory:
    rows = Path(path).read_text(encoding="ascii").strip().splitlines()
    if not rows or rows[0] != "frame,x,y,theta":
        raise ParseError("bad trajectory CSV header")
    vals = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    return Trajectory(x=vals[:, 1], y=vals[:, 2], theta=vals[:, 3])


def save_flow(flow: FlowField, path: str | Path) -> None:
    """Binary flow grid: 16-byte header (magic, u32 width, u32 height), then
    u and v as little-endian f32, row-major."""
    with open(path, "wb") as fh:
        fh.write(_FLOW_MAGIC)
        fh.write(struct.pack("<II", flow.width, flow.height))
        fh.write(flow.u.astype("<f4").tobytes())
        fh.write(flow.v.astype("<f4").tobytes())


def load_flow(path: str | Path) -> FlowField:
    data = Path(path).read_bytes()
    if data[:8] != _FLOW_MAGIC:
        raise ParseError("not a stabilitykit flow file")
    width, height = struct.unpack("<II", data[8:16])
    n = width * height
    grid = np.frombuffer(data, "<f4", 2 * n, 16)
    u = grid[:n].reshape(height, width).astype(np.float64)
    v = grid[n:].reshape(height, width).astype(np.float64)
    return FlowField(width=width, height=height, u=u, v=v)
