import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import textured_frame, textured_plane
from stabilitykit import motion
from stabilitykit.errors import (
    ConfigError,
    DegenerateScene,
    DimensionMismatch,
    TrackingFailure,
    UnderDetermined,
)
from stabilitykit.motion import (
    FlowField,
    MotionParams,
    RansacParams,
    Trajectory,
    accumulate_trajectory,
    detect_corners,
    estimate_motion,
    grid_flow,
    track_lk,
)
from stabilitykit.synth import render_shaky


def naive_min_eig(luma):
    """Exhaustive oracle for the corner response: explicit loops over the
    same 5x5 structure tensor that the detector vectorizes."""
    luma = luma.astype(np.float64)
    gy, gx = np.gradient(luma)
    h, w = luma.shape
    resp = np.zeros((h, w))
    for y in range(2, h - 2):
        for x in range(2, w - 2):
            sxx = syy = sxy = 0.0
            for dy in range(-2, 3):
                for dx in range(-2, 3):
                    a = gx[y + dy, x + dx]
                    b = gy[y + dy, x + dx]
                    sxx += a * a
                    syy += b * b
                    sxy += a * b
            sxx /= 25.0
            syy /= 25.0
            sxy /= 25.0
            tr = 0.5 * (sxx + syy)
            resp[y, x] = tr - np.sqrt(max(0.25 * (sxx - syy) ** 2 + sxy * sxy, 0.0))
    return resp


def shift_pair(seed=0, shift=(3, 0), size=(128, 96)):
    """Wrap-free shifted frame pair cropped out of one larger base; the
    content of ``nxt`` sits ``shift`` pixels further along than in ``prev``."""
    w, h = size
    dx, dy = shift
    base = textured_plane(seed, w + 2 * abs(dx) + 4, h + 2 * abs(dy) + 4)
    x0, y0 = abs(dx) + 2, abs(dy) + 2
    prev = base[y0 : y0 + h, x0 : x0 + w]
    nxt = base[y0 - dy : y0 - dy + h, x0 - dx : x0 - dx + w]
    return prev, nxt


def to_rgb(plane):
    return np.repeat(plane.astype(np.uint8)[..., None], 3, axis=2)


class TestDetectCorners:
    def test_constant_plane_is_degenerate(self):
        with pytest.raises(DegenerateScene):
            detect_corners(np.full((48, 48), 120.0))

    def test_small_square_corners_match_oracle(self):
        luma = np.zeros((48, 48))
        luma[20:23, 20:23] = 255.0
        resp = naive_min_eig(luma)
        oracle_peaks = np.argwhere(resp >= 0.999 * resp.max())
        square_corners = {(20, 20), (20, 22), (22, 20), (22, 22)}

        def near_corner(y, x):  # within +-1 px per axis of some square corner
            return min(max(abs(y - cy), abs(x - cx)) for cy, cx in square_corners) <= 1

        assert all(near_corner(y, x) for y, x in oracle_peaks)
        pts = detect_corners(luma, max_n=4, nms_radius=1, min_corners=1)
        assert all(near_corner(y, x) for x, y in pts)

    def test_checkerboard_cap_respected(self):
        tile = np.kron(np.indices((8, 8)).sum(axis=0) % 2, np.ones((8, 8))) * 255
        pts = detect_corners(tile.astype(np.float64), max_n=20)
        assert len(pts) == 20

    def test_sorted_by_score_descending(self):
        plane = textured_plane(3, 96, 96)
        pts = detect_corners(plane, max_n=50)
        resp = motion.corner_response(plane)
        scores = [resp[int(round(y)), int(round(x))] for x, y in pts]
        # allow tiny wobble from sub-pixel refinement when reading back scores
        assert all(s1 >= s2 - 1e-6 * abs(s1) for s1, s2 in zip(scores, scores[1:]))

    def test_respects_quality_floor(self):
        plane = textured_plane(4, 96, 96)
        pts = detect_corners(plane, max_n=500, quality=0.5, min_corners=1)
        resp = motion.corner_response(plane)
        floor = 0.5 * resp.max()
        for x, y in pts:
            assert resp[int(round(y)), int(round(x))] >= floor * 0.9


class TestTrackLk:
    def test_identical_frames_zero_displacement(self):
        plane = textured_plane(1)
        pts = detect_corners(plane)
        for (x0, y0), (x1, y1) in track_lk(plane, plane, pts):
            assert abs(x1 - x0) <= 0.01 and abs(y1 - y0) <= 0.01

    def test_three_pixel_shift(self):
        prev, nxt = shift_pair(seed=2, shift=(3, 0))
        pts = detect_corners(prev)
        pairs = track_lk(prev, nxt, pts)
        disp = np.array([[x1 - x0, y1 - y0] for (x0, y0), (x1, y1) in pairs])
        med = np.median(disp, axis=0)
        assert med[0] == pytest.approx(3.0, abs=0.25)
        assert med[1] == pytest.approx(0.0, abs=0.25)

    def test_uncorrelated_noise_fails(self):
        rng = np.random.default_rng(5)
        a = rng.uniform(0, 255, (96, 96))
        b = rng.uniform(0, 255, (96, 96))
        pts = detect_corners(a)
        try:
            pairs = track_lk(a, b, pts)
            assert len(pairs) < 0.2 * len(pts)
        except TrackingFailure:
            pass

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            track_lk(np.zeros((32, 32)), np.zeros((32, 48)), np.array([[5.0, 5.0]]))


class TestEstimateMotion:
    def test_identity_on_identical_frames(self):
        frame = textured_frame(7)
        mp = estimate_motion(frame, frame, "similarity")
        assert abs(mp.dx) <= 0.05 and abs(mp.dy) <= 0.05
        assert abs(mp.theta) <= 0.001
        assert mp.scale == pytest.approx(1.0, abs=0.001)

    def test_known_vertical_shift(self):
        prev, nxt = shift_pair(seed=8, shift=(0, 5))
        mp = estimate_motion(to_rgb(prev), to_rgb(nxt), "similarity")
        assert mp.dy == pytest.approx(5.0, abs=0.25)
        assert mp.dx == pytest.approx(0.0, abs=0.25)

    def test_known_rotation(self):
        theta = np.deg2rad(2.0)
        traj = Trajectory(
            x=np.zeros(2), y=np.zeros(2), theta=np.array([0.0, theta])
        )
        base = textured_frame(9, 200, 160)
        seq = render_shaky(base, traj, (144, 112))
        mp = estimate_motion(seq.frames[0], seq.frames[1], "similarity")
        assert mp.theta == pytest.approx(theta, abs=0.002)

    def test_all_models_collapse_on_pure_translation(self):
        prev, nxt = shift_pair(seed=11, shift=(4, -2))
        for kind in ("translation", "similarity", "homography"):
            mp = estimate_motion(to_rgb(prev), to_rgb(nxt), kind)
            assert mp.dx == pytest.approx(4.0, abs=0.25), kind
            assert mp.dy == pytest.approx(-2.0, abs=0.25), kind

    def test_seeded_ransac_is_deterministic(self):
        prev, nxt = shift_pair(seed=13, shift=(2, 1))
        a = estimate_motion(prev, nxt, "similarity", RansacParams(seed=42))
        b = estimate_motion(prev, nxt, "similarity", RansacParams(seed=42))
        assert (a.dx, a.dy, a.theta, a.scale) == (b.dx, b.dy, b.theta, b.scale)

    def test_homography_underdetermined(self, monkeypatch):
        frame = textured_frame(14)
        few = np.array([[20.0, 20.0], [40.0, 30.0], [60.0, 50.0]])
        monkeypatch.setattr(motion, "detect_corners", lambda *a, **k: few)
        with pytest.raises(UnderDetermined):
            estimate_motion(frame, frame, "homography")

    def test_unknown_model(self):
        frame = textured_frame(1)
        with pytest.raises(ConfigError):
            estimate_motion(frame, frame, "affine")

    def test_grid_flow_agrees_with_estimate(self):
        prev, nxt = shift_pair(seed=15, shift=(3, 0))
        mp = estimate_motion(to_rgb(prev), to_rgb(nxt), "translation")
        flow = grid_flow(prev, nxt)
        assert abs(float(np.mean(flow.u)) - mp.dx) <= 0.5
        assert abs(float(np.mean(flow.v)) - mp.dy) <= 0.5


class TestGridFlow:
    def test_identical_frames_zero_field(self):
        plane = textured_plane(3)
        flow = grid_flow(plane, plane)
        assert np.all(flow.u == 0.0) and np.all(flow.v == 0.0)

    def test_global_shift(self):
        prev, nxt = shift_pair(seed=21, shift=(3, 0))
        flow = grid_flow(prev, nxt)
        assert np.all(np.abs(flow.u - 3.0) <= 0.5)
        assert np.all(np.abs(flow.v) <= 0.5)

    def test_split_scene(self):
        left_prev, left_next = textured_plane(30, 64, 96), textured_plane(30, 64, 96)
        right_prev, right_next = shift_pair(seed=31, shift=(4, 0), size=(64, 96))
        prev = np.concatenate([left_prev, right_prev], axis=1)
        nxt = np.concatenate([left_next, right_next], axis=1)
        flow = grid_flow(prev, nxt, grid=8)
        left_mean = float(np.mean(flow.u[:, :3]))
        right_mean = float(np.mean(flow.u[:, 5:]))
        assert right_mean - left_mean == pytest.approx(4.0, abs=0.6)

    def test_all_cells_fail(self):
        rng = np.random.default_rng(6)
        a = rng.uniform(0, 255, (96, 96))
        b = rng.uniform(0, 255, (96, 96))
        with pytest.raises(TrackingFailure):
            grid_flow(a, b)

    def test_failed_cells_take_nearest_neighbor(self):
        flat = np.full((96, 64), 128.0)
        tex_prev, tex_next = shift_pair(seed=33, shift=(2, 0), size=(64, 96))
        prev = np.concatenate([flat, tex_prev], axis=1)
        nxt = np.concatenate([flat, tex_next], axis=1)
        flow = grid_flow(prev, nxt, grid=8)
        # flat-half cells borrow the nearest textured cell's displacement
        for row in range(8):
            assert flow.u[row, 0] == pytest.approx(flow.u[row, 4], abs=1.0)

    def test_grid_bounds(self):
        plane = textured_plane(1)
        with pytest.raises(ConfigError):
            grid_flow(plane, plane, grid=3)
        with pytest.raises(ConfigError):
            grid_flow(plane, plane, grid=33)


class TestTrajectory:
    def mk(self, dxs, dys=None, thetas=None):
        dys = dys or [0.0] * len(dxs)
        thetas = thetas or [0.0] * len(dxs)
        return [
            MotionParams("similarity", dx, dy, theta=th)
            for dx, dy, th in zip(dxs, dys, thetas)
        ]

    def test_zero_params(self):
        traj = accumulate_trajectory(self.mk([0.0, 0.0]))
        assert np.all(traj.x == 0) and np.all(traj.y == 0) and np.all(traj.theta == 0)

    def test_prefix_sum(self):
        traj = accumulate_trajectory(self.mk([1.0, 1.0, 1.0]))
        assert list(traj.x) == [0.0, 1.0, 2.0, 3.0]

    def test_alternating(self):
        traj = accumulate_trajectory(self.mk([2.0, -2.0, 2.0, -2.0]))
        assert list(traj.x) == [0.0, 2.0, 0.0, 2.0, 0.0]

    def test_mixed_models_rejected(self):
        params = [MotionParams("similarity", 1, 0), MotionParams("translation", 1, 0)]
        with pytest.raises(ConfigError):
            accumulate_trajectory(params)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20))
    def test_composition_is_exact_prefix_sum(self, dxs):
        traj = accumulate_trajectory(self.mk(dxs))
        assert traj.x[0] == 0.0
        assert np.array_equal(traj.x[1:], np.cumsum(dxs))


class TestExports:
    def test_trajectory_csv_roundtrip(self, tmp_path):
        traj = Trajectory(
            x=np.array([0.0, 1.25, -0.5]),
            y=np.array([0.0, 0.5, 2.0]),
            theta=np.array([0.0, 0.01, -0.02]),
        )
        path = tmp_path / "traj.csv"
        motion.save_trajectory_csv(traj, path)
        back = motion.load_trajectory_csv(path)
        assert np.allclose(back.x, traj.x, atol=1e-6)
        assert np.allclose(back.theta, traj.theta, atol=1e-9)
        assert path.read_text().splitlines()[0] == "frame,x,y,theta"

    def test_flow_binary_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        flow = FlowField(8, 8, rng.normal(size=(8, 8)), rng.normal(size=(8, 8)))
        path = tmp_path / "field.flow"
        motion.save_flow(flow, path)
        back = motion.load_flow(path)
        assert back.width == 8 and back.height == 8
        assert np.allclose(back.u, flow.u, atol=1e-6)
        assert np.allclose(back.v, flow.v, atol=1e-6)
        assert path.stat().st_size == 16 + 2 * 8 * 8 * 4
