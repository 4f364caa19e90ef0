"""scikit-learn wrapper behavior: estimator protocol, validation, and a tiny
end-to-end fit/predict round."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import Pipeline

from rcdn.errors import ValidationError
from rcdn.estimator import RcdnDetector, SpectralTransformer
from rcdn.data import gen_fake, gen_real
from rcdn.spectral import spectral_preprocess

SIZE = 32


@pytest.fixture(scope="module")
def tiny_xy():
    reals = gen_real(3, 12, SIZE)
    fakes = gen_fake("T2I", 3, 12, SIZE)
    X = np.stack([s.pixels for s in reals + fakes])
    y = np.array([0] * 12 + [1] * 12)
    return X, y


class TestSpectralTransformer:
    def test_transform_matches_pipeline_function(self, tiny_xy):
        X, _ = tiny_xy
        out = SpectralTransformer().fit_transform(X[:2])
        assert out.shape == (2, SIZE, SIZE, 3)
        assert np.array_equal(out[0], spectral_preprocess(X[0]).data)

    def test_rejects_bad_input(self):
        with pytest.raises(ValidationError):
            SpectralTransformer().transform(np.zeros((2, 8, 8)))
        with pytest.raises(ValidationError):
            SpectralTransformer().transform(np.full((1, 8, 8, 3), 2.0))

    def test_works_in_sklearn_pipeline(self, tiny_xy):
        X, _ = tiny_xy
        pipe = Pipeline([("spec", SpectralTransformer())])
        assert pipe.fit_transform(X[:2]).shape == (2, SIZE, SIZE, 3)


class TestRcdnDetectorProtocol:
    def test_get_set_params_and_clone(self):
        det = RcdnDetector(image_size=SIZE, epochs=1, seed=9)
        params = det.get_params()
        assert params["image_size"] == SIZE
        assert params["seed"] == 9
        det.set_params(lr=0.01)
        assert det.lr == 0.01
        twin = clone(det)
        assert twin.get_params() == det.get_params()

    def test_unfitted_predict_raises(self, tiny_xy):
        X, _ = tiny_xy
        with pytest.raises(ValidationError, match="not fitted"):
            RcdnDetector(image_size=SIZE).predict(X)

    def test_label_validation(self, tiny_xy):
        X, _ = tiny_xy
        with pytest.raises(ValidationError):
            RcdnDetector(image_size=SIZE, epochs=1).fit(X, np.full(len(X), 2))

    def test_image_size_mismatch(self, tiny_xy):
        X, y = tiny_xy
        with pytest.raises(ValidationError):
            RcdnDetector(image_size=64, epochs=1).fit(X, y)


@pytest.fixture(scope="module")
def fitted(tiny_xy):
    X, y = tiny_xy
    det = RcdnDetector(image_size=SIZE, epochs=2, batch_size=8, seed=0)
    return det.fit(X, y), X, y


class TestRcdnDetectorFit:
    def test_fit_attributes(self, fitted):
        det, X, y = fitted
        assert np.array_equal(det.classes_, [0, 1])
        assert len(det.trace_) == 2

    def test_predict_shapes_and_values(self, fitted):
        det, X, y = fitted
        preds = det.predict(X)
        assert preds.shape == (len(X),)
        assert set(np.unique(preds)) <= {0, 1}

    def test_predict_proba_rows_sum_to_one(self, fitted):
        det, X, y = fitted
        proba = det.predict_proba(X)
        assert proba.shape == (len(X), 2)
        assert np.allclose(proba.sum(axis=1), 1.0)
        assert np.array_equal(det.decision_function(X), proba[:, 1])

    def test_score_is_accuracy(self, fitted):
        det, X, y = fitted
        assert det.score(X, y) == pytest.approx((det.predict(X) == y).mean())

    def test_refit_same_seed_reproduces(self, fitted, tiny_xy):
        det, X, y = fitted
        twin = clone(det).fit(X, y)
        assert np.array_equal(twin.predict(X), det.predict(X))
        assert twin.trace_ == det.trace_
