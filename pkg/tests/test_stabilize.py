import math
import time

import numpy as np
import pytest

from barsrate.errors import DegenerateGeometry, LengthMismatch, TooFewPoints
from barsrate.regularize import FlowSamples, MotionTrajectory
from barsrate.stabilize import (
    PointCorrespondences,
    SimilarityTransform,
    background_correspondences,
    cumulative_transforms,
    estimate_similarity,
    stabilize_flows,
    stabilize_track,
    stabilize_trajectories,
    try_stabilize,
    unstabilize_track,
)
from tests.helpers import make_track


def random_transform(rng):
    return SimilarityTransform(
        scale=float(rng.uniform(0.5, 2.0)),
        rotation=float(rng.uniform(-3.0, 3.0)),
        tx=float(rng.uniform(-100, 100)),
        ty=float(rng.uniform(-100, 100)),
    )


class TestSimilarityTransform:
    """Тесты преобразования подобия"""

    def test_identity(self):
        """Тест тождественного преобразования"""
        points = np.array([[1.0, 2.0], [3.0, -4.0]])
        np.testing.assert_array_equal(SimilarityTransform.identity().apply(points), points)

    def test_inverse(self, rng):
        """Тест обратного преобразования"""
        points = rng.normal(size=(10, 2)) * 50
        for _ in range(20):
            t = random_transform(rng)
            np.testing.assert_allclose(t.inverse().apply(t.apply(points)), points, atol=1e-9)

    def test_compose_order(self):
        """Тест порядка композиции: сначала аргумент, затем self"""
        shift = SimilarityTransform(tx=1.0)
        turn = SimilarityTransform(rotation=math.pi / 2)
        point = np.array([[1.0, 0.0]])
        np.testing.assert_allclose(turn.compose(shift).apply(point), [[0.0, 2.0]], atol=1e-12)
        np.testing.assert_allclose(shift.compose(turn).apply(point), [[1.0, 1.0]], atol=1e-12)

    def test_cumulative_starts_with_identity(self):
        """Тест цепочки накопленных преобразований"""
        steps = [SimilarityTransform(tx=1.0)] * 3
        chain = cumulative_transforms(steps)
        assert len(chain) == 4
        assert chain[0] == SimilarityTransform.identity()
        assert chain[3].tx == pytest.approx(3.0)


class TestEstimateSimilarity:
    """Тесты оценки подобия по соответствиям"""

    def test_pure_translation(self):
        """Тест восстановления чистого сдвига"""
        src = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
        fit = estimate_similarity(PointCorrespondences(src, src + [5, -3]))
        t = fit.transform
        assert t.scale == pytest.approx(1.0)
        assert t.rotation == pytest.approx(0.0, abs=1e-12)
        assert (t.tx, t.ty) == pytest.approx((5.0, -3.0))
        assert fit.rms == pytest.approx(0.0, abs=1e-9)

    def test_rotation_and_scale(self):
        """Тест поворота на 90 градусов с масштабом 2"""
        src = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
        dst = np.array([[0, 2], [-2, 0], [0, -2], [2, 0]], dtype=float)
        t = estimate_similarity(PointCorrespondences(src, dst)).transform
        assert t.scale == pytest.approx(2.0)
        assert t.rotation == pytest.approx(math.pi / 2)
        assert (t.tx, t.ty) == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_too_few_points(self):
        """Тест ошибки для одной точки"""
        with pytest.raises(TooFewPoints):
            estimate_similarity(PointCorrespondences([[0, 0]], [[1, 1]]))

    def test_coincident_points(self):
        """Тест ошибки для совпадающих исходных точек"""
        with pytest.raises(DegenerateGeometry):
            estimate_similarity(PointCorrespondences([[1, 1], [1, 1]], [[0, 0], [2, 2]]))

    def test_outlier_rejected(self, rng):
        """Тест отсева одной сильно смещенной точки"""
        truth = SimilarityTransform(1.1, 0.2, 3.0, -2.0)
        src = rng.uniform(0, 100, size=(20, 2))
        dst = truth.apply(src) + rng.normal(0, 0.01, size=(20, 2))
        dst[4] += [40.0, -25.0]
        fit = estimate_similarity(PointCorrespondences(src, dst))
        assert not fit.inlier_mask[4]
        assert fit.inlier_mask.sum() == 19
        assert fit.transform.scale == pytest.approx(1.1, abs=1e-3)
        assert fit.transform.rotation == pytest.approx(0.2, abs=1e-3)

    def test_random_recovery(self):
        """Тест восстановления 1000 случайных преобразований без шума"""
        rng = np.random.default_rng(7)
        start = time.perf_counter()
        for _ in range(1000):
            truth = random_transform(rng)
            src = rng.uniform(-200, 200, size=(int(rng.integers(2, 20)), 2))
            fit = estimate_similarity(PointCorrespondences(src, truth.apply(src)))
            t = fit.transform
            assert abs(t.scale - truth.scale) < 1e-9
            assert abs(math.remainder(t.rotation - truth.rotation, 2 * math.pi)) < 1e-9
            assert abs(t.tx - truth.tx) < 1e-9
            assert abs(t.ty - truth.ty) < 1e-9
        assert time.perf_counter() - start < 5.0


class TestStabilizeTrack:
    """Тесты переноса треков в систему координат кадра 0"""

    def test_length_mismatch(self):
        """Тест ошибки при неверном числе преобразований"""
        track = make_track("wrist", [0.0, 1.0, 2.0])
        with pytest.raises(LengthMismatch):
            stabilize_track(track, [SimilarityTransform()])

    def test_static_point_under_drift(self):
        """Тест неподвижной в мире точки, снятой движущейся камерой"""
        steps = [SimilarityTransform(1.01, 0.01, 2.0, -1.0)] * 9
        chain = cumulative_transforms(steps)
        world = np.array([[50.0, 80.0]])
        image = np.vstack([c.apply(world) for c in chain])
        track = make_track("head", image[:, 0], image[:, 1])
        stable = stabilize_track(track, steps)
        np.testing.assert_allclose(stable.x, 50.0, atol=1e-9)
        np.testing.assert_allclose(stable.y, 80.0, atol=1e-9)

    def test_round_trip(self, rng):
        """Тест обратимости стабилизации"""
        steps = [
            SimilarityTransform(rng.uniform(0.95, 1.05), rng.uniform(-0.2, 0.2), rng.uniform(-5, 5), rng.uniform(-5, 5))
            for _ in range(19)
        ]
        track = make_track("wrist", rng.normal(size=20) * 30, rng.normal(size=20) * 30)
        back = unstabilize_track(stabilize_track(track, steps), steps)
        np.testing.assert_allclose(back.x, track.x, atol=1e-9)
        np.testing.assert_allclose(back.y, track.y, atol=1e-9)


class TestTryStabilize:
    """Тесты стабилизации с откатом"""

    def _scene(self, n_frames=10, n_points=6):
        rng = np.random.default_rng(1)
        steps = [SimilarityTransform(1.002, 0.003, 1.5, 0.5)] * (n_frames - 1)
        chain = cumulative_transforms(steps)
        world = rng.uniform(0, 400, size=(n_points, 2))
        background = []
        for k, point in enumerate(world):
            img = np.vstack([c.apply(point[None]) for c in chain])
            background.append(make_track(f"bg{k}", img[:, 0], img[:, 1]))
        wrist_world = np.column_stack([np.linspace(100, 200, n_frames), np.full(n_frames, 150.0)])
        wrist_img = np.vstack([c.apply(p[None]) for c, p in zip(chain, wrist_world)])
        tracks = {
            "wrist": make_track("wrist", wrist_img[:, 0], wrist_img[:, 1]),
            "head": make_track("head", np.full(n_frames, 100.0), np.full(n_frames, 100.0)),
        }
        return tracks, background, wrist_world

    def test_recovers_world_track(self):
        """Тест восстановления трека в мировых координатах"""
        tracks, background, wrist_world = self._scene()
        result = try_stabilize(tracks, background_correspondences(background))
        assert result.stabilized
        assert len(result.fits) == 9
        np.testing.assert_allclose(result.tracks["wrist"].x, wrist_world[:, 0], atol=1e-6)

    def test_passthrough_on_missing_points(self):
        """Тест отката при нехватке фоновых точек"""
        tracks, background, _ = self._scene(n_points=1)
        result = try_stabilize(tracks, background_correspondences(background))
        assert not result.stabilized
        assert result.tracks["wrist"] is tracks["wrist"]
        assert "usable points" in result.reason

    def test_passthrough_on_wrong_count(self):
        """Тест отката при неверном числе наборов соответствий"""
        tracks, background, _ = self._scene()
        result = try_stabilize(tracks, background_correspondences(background)[:-1])
        assert not result.stabilized

    def test_low_confidence_points_skipped(self):
        """Тест пропуска фоновых точек с низкой уверенностью"""
        tracks, background, _ = self._scene(n_points=3)
        low = background[0].replace(confidence=np.full(len(background[0]), 0.1))
        corr = background_correspondences([low] + background[1:], conf_floor=0.2)
        assert all(len(c) == 2 for c in corr)


class TestStabilizeMotionInputs:
    """Тесты пересчета потока и траекторий"""

    def test_flows_of_static_point_vanish(self):
        """Тест нулевого потока для неподвижной в мире точки"""
        steps = [SimilarityTransform(1.01, 0.02, 3.0, 1.0)] * 5
        chain = cumulative_transforms(steps)
        img = np.vstack([c.apply(np.array([[40.0, 60.0]])) for c in chain])
        track = make_track("wrist", img[:, 0], img[:, 1])
        image_flow = np.diff(img, axis=0)
        flows = stabilize_flows(track, FlowSamples(image_flow[:, 0], image_flow[:, 1]), steps)
        np.testing.assert_allclose(flows.dx, 0.0, atol=1e-9)
        np.testing.assert_allclose(flows.dy, 0.0, atol=1e-9)

    def test_trajectories_mapped(self):
        """Тест переноса траектории в координаты кадра 0"""
        steps = [SimilarityTransform(tx=2.0)] * 5
        traj = MotionTrajectory("t", 2, [4.0, 6.0, 8.0], [1.0, 1.0, 1.0])
        out = stabilize_trajectories([traj], steps)[0]
        np.testing.assert_allclose(out.x, [0.0, 0.0, 0.0])
        assert out.start_frame == 2

    def test_trajectory_beyond_video(self):
        """Тест ошибки для траектории длиннее видео"""
        traj = MotionTrajectory("t", 4, [0.0, 1.0, 2.0], [0.0, 0.0, 0.0])
        with pytest.raises(LengthMismatch):
            stabilize_trajectories([traj], [SimilarityTransform()] * 3)
