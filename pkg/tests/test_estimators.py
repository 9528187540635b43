import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ssmotion.estimators import (MotionRegressor, PseudoLabelRefiner,
                                 SemiSupervisedMotionRegressor)
from ssmotion.grid import MotionField
from ssmotion.synthworld import SceneConfig, generate

FAST_SCENE = dict(n_objects=1, ground_density=0.5, object_density=15.0)


def _scenes(seeds):
    return [generate(SceneConfig(seed=s, **FAST_SCENE)) for s in seeds]


def test_get_params_round_trip():
    est = MotionRegressor(hidden=(8, 8), epochs=3, seed=5)
    params = est.get_params()
    assert params["epochs"] == 3 and params["seed"] == 5
    cloned = clone(est)
    assert cloned.get_params() == params


def test_set_params_chains():
    est = SemiSupervisedMotionRegressor()
    est.set_params(mu=2.0, gamma=0.5)
    assert est.mu == 2.0 and est.gamma == 0.5


def test_predict_before_fit_raises():
    with pytest.raises(NotFittedError):
        MotionRegressor().predict(_scenes([0]))


def test_fit_predict_on_scenes():
    scenes = _scenes([0, 1])
    est = MotionRegressor(hidden=(8, 8), epochs=4).fit(scenes)
    preds = est.predict(scenes)
    assert len(preds) == 2
    for pred, scene in zip(preds, scenes):
        assert isinstance(pred, MotionField)
        assert pred.displacement.shape == scene.gt.displacement.shape
        assert np.array_equal(pred.validity, scene.seq.current.pillar_mask)


def test_fit_with_sequences_and_targets():
    scenes = _scenes([2, 3])
    X = [s.seq for s in scenes]
    y = [s.gt for s in scenes]
    est = MotionRegressor(hidden=(8, 8), epochs=2).fit(X, y)
    assert hasattr(est, "params_")
    with pytest.raises(ValueError, match="lengths differ"):
        MotionRegressor().fit(X, y[:1])


def test_fit_rejects_wrong_types():
    with pytest.raises(TypeError):
        MotionRegressor().fit([np.zeros((4, 4))], [np.zeros((4, 4, 2))])


def test_semi_supervised_default_hyperparameters():
    est = SemiSupervisedMotionRegressor()
    assert (est.k, est.mu, est.beta, est.gamma) == (5, 1.0, 10.0, 0.6)
    assert (est.theta_c, est.theta_w, est.alpha) == (3.0, 5.0, 0.999)


def test_semi_supervised_fit_with_unlabeled():
    labeled = _scenes([0])
    unlabeled = _scenes([10, 11])
    est = SemiSupervisedMotionRegressor(hidden=(8, 8), epochs=4, ssl_epochs=2)
    est.fit(labeled, unlabeled=unlabeled)
    preds = est.predict(unlabeled)
    assert len(preds) == 2
    assert np.all(np.isfinite(preds[0].displacement))


def test_refiner_transform_perfect_pseudo():
    scene = generate(SceneConfig(seed=7, **FAST_SCENE))
    out = PseudoLabelRefiner().fit().transform(
        [(scene.gt, scene.seq.current, scene.future)])
    assert len(out) == 1
    field = out[0]
    # refined labels live only on occupied cells
    assert not np.any(field.validity & ~scene.seq.current.pillar_mask)
    assert field.validity.sum() > 0


def test_refiner_rejects_bad_triples():
    scene = generate(SceneConfig(seed=8, **FAST_SCENE))
    with pytest.raises(TypeError):
        PseudoLabelRefiner().transform([(scene.gt, None, scene.future)])
