import numpy as np
import pytest

from ssmotion.grid import MotionField
from ssmotion.synthworld import (SMALL_GRID, SceneConfig, evaluate, generate,
                                 load_scene, save_scene)


def test_config_fractions_must_sum():
    with pytest.raises(ValueError, match="sum to 1"):
        SceneConfig(static_fraction=0.5, slow_fraction=0.5, fast_fraction=0.5)


def test_generate_deterministic():
    a = generate(SceneConfig(seed=9))
    b = generate(SceneConfig(seed=9))
    for fa, fb in zip(a.seq.frames, b.seq.frames):
        assert np.array_equal(fa.occupancy, fb.occupancy)
    assert np.array_equal(a.gt.displacement, b.gt.displacement)
    assert np.array_equal(a.future.occupancy, b.future.occupancy)


def test_scene_shape_and_frames():
    scene = generate(SceneConfig(seed=0))
    assert len(scene.seq) == 5
    assert scene.seq.current.occupancy.shape == (40, 40, 4)
    assert scene.seq.horizon_seconds == 1.0


def test_object_speeds_in_buckets():
    speeds = [obj.speed
              for seed in range(10)
              for obj in generate(SceneConfig(seed=seed)).objects]
    for s in speeds:
        assert s == 0.0 or 0.5 <= s <= 4.5 or 5.0 <= s <= 6.5


def test_gt_matches_object_velocity():
    scene = generate(SceneConfig(seed=3))
    for obj in scene.objects:
        expected = obj.velocity_mps * 1.0 / 0.5  # horizon over cell size
        cells = obj.current_cells.coords
        got = scene.gt.displacement[cells[:, 0], cells[:, 1]]
        assert np.allclose(got, expected)
        assert scene.gt.validity[cells[:, 0], cells[:, 1]].all()


def test_gt_valid_exactly_on_pillars():
    scene = generate(SceneConfig(seed=4))
    assert np.array_equal(scene.gt.validity, scene.seq.current.pillar_mask)


def test_warped_cells_land_near_future_cells():
    # constant-velocity boxes: current cells pushed by the ground-truth
    # displacement sit within one cell (quantization + noise) of a future cell
    for seed in range(8):
        scene = generate(SceneConfig(seed=seed))
        for obj in scene.objects:
            warped = obj.current_cells.coords + obj.velocity_mps / 0.5
            fut = obj.future_cells.coords.astype(float)
            d = np.abs(warped[:, None, :] - fut[None, :, :]).max(axis=2).min(axis=1)
            assert d.max() <= 1.0


def test_ground_mask_disjoint_from_objects():
    scene = generate(SceneConfig(seed=5))
    for obj in scene.objects:
        cells = obj.current_cells.coords
        assert not scene.ground_mask[cells[:, 0], cells[:, 1]].any()
    assert scene.ground_mask.sum() > 0


def _field(entries, shape=(40, 40)):
    disp = np.zeros((*shape, 2))
    valid = np.zeros(shape, bool)
    for (r, c), vec in entries:
        disp[r, c] = vec
        valid[r, c] = True
    return MotionField(disp, valid)


def test_evaluate_perfect_prediction():
    gt = _field([((0, 0), (0.0, 0.0)), ((1, 1), (4.0, 0.0)), ((2, 2), (12.0, 0.0))])
    report = evaluate(gt, gt, SMALL_GRID)
    assert report.static.mean == 0.0 and report.static.count == 1
    assert report.slow.mean == 0.0 and report.slow.count == 1
    assert report.fast.mean == 0.0 and report.fast.count == 1


def test_evaluate_errors_in_meters():
    gt = _field([((1, 1), (4.0, 0.0))])  # 2 m/s, slow bucket
    pred = _field([((1, 1), (6.0, 0.0))])  # off by 2 cells = 1 meter
    report = evaluate(pred, gt, SMALL_GRID)
    assert report.slow.mean == pytest.approx(1.0)
    assert report.static is None and report.fast is None


def test_evaluate_bucket_boundaries():
    # 5 m/s is fast (>= limit), just below stays slow; 0.2 m/s leaves static
    gt = _field([((0, 0), (10.0, 0.0)), ((1, 1), (9.98, 0.0)),
                 ((2, 2), (0.4, 0.0)), ((3, 3), (0.39, 0.0))])
    report = evaluate(gt, gt, SMALL_GRID)
    assert report.fast.count == 1
    assert report.slow.count == 2
    assert report.static.count == 1


def test_evaluate_shape_mismatch():
    gt = _field([((0, 0), (1.0, 0.0))])
    pred = _field([((0, 0), (1.0, 0.0))], shape=(20, 20))
    with pytest.raises(ValueError):
        evaluate(pred, gt, SMALL_GRID)


def test_save_load_round_trip(tmp_path):
    scene = generate(SceneConfig(seed=6))
    path = tmp_path / "scene.bmt1"
    save_scene(path, scene)
    loaded = load_scene(path)
    for fa, fb in zip(loaded.seq.frames, scene.seq.frames):
        assert np.array_equal(fa.occupancy, fb.occupancy)
    assert np.array_equal(loaded.future.occupancy, scene.future.occupancy)
    assert np.allclose(loaded.gt.displacement, scene.gt.displacement, atol=1e-6)
    assert np.array_equal(loaded.gt.validity, scene.gt.validity)
    assert np.array_equal(loaded.ground_mask, scene.ground_mask)
    assert loaded.seq.spec == scene.seq.spec
    assert loaded.seq.horizon_seconds == 1.0
