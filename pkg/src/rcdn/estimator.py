"""scikit-learn style wrappers so the detector composes with the wider
ecosystem: a transformer for the spectral preprocessing and a classifier
exposing fit / predict / predict_proba / score with get_params support.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .errors import ValidationError
from .model import ModelConfig
from .spectral import spectral_preprocess
from .train_eval import TrainConfig, fit_arrays, _predict_arrays


def _check_images(X):
    """Validate an (n, H, W, 3) float image stack in [0, 1]."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise ValidationError(f"expected images of shape (n, H, W, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("images contain non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError("pixel values must lie in [0, 1]")
    return arr


class SpectralTransformer(BaseEstimator, TransformerMixin):
    """Stateless transformer: images -> standardized log-magnitude spectra.

    Input and output are both (n, H, W, 3); fit is a no-op since the
    standardization statistics are per image.
    """

    def fit(self, X, y=None):
        _check_images(X)
        return self

    def transform(self, X, y=None):
        arr = _check_images(X)
        return np.stack([spectral_preprocess(img).data for img in arr])


class RcdnDetector(BaseEstimator, ClassifierMixin):
    """Binary real-vs-fake image classifier around the dual-branch network.

    X is an (n, H, W, 3) array in [0, 1]; y holds labels 0 (real) / 1 (fake).
    """

    def __init__(self, image_size=64, d_s=256, d_f=64, d_e=128,
                 middle_flow_blocks=2, margin=0.5, lambda_c=0.5, lambda_s=0.5,
                 epochs=30, batch_size=16, lr=2e-4, seed=0):
        self.image_size = image_size
        self.d_s = d_s
        self.d_f = d_f
        self.d_e = d_e
        self.middle_flow_blocks = middle_flow_blocks
        self.margin = margin
        self.lambda_c = lambda_c
        self.lambda_s = lambda_s
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _train_config(self):
        model_cfg = ModelConfig(
            image_size=self.image_size, d_s=self.d_s, d_f=self.d_f, d_e=self.d_e,
            middle_flow_blocks=self.middle_flow_blocks, margin=self.margin,
            lambda_c=self.lambda_c, lambda_s=self.lambda_s, seed=self.seed)
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           lr=self.lr, seed=self.seed, model=model_cfg)

    def _prepare(self, X):
        arr = _check_images(X)
        if arr.shape[1] != self.image_size or arr.shape[2] != self.image_size:
            raise ValidationError(
                f"images are {arr.shape[1]}x{arr.shape[2]}, configured "
                f"image_size is {self.image_size}")
        images = arr.transpose(0, 3, 1, 2)
        spectral = np.stack([spectral_preprocess(img).data for img in arr]) \
            .transpose(0, 3, 1, 2)
        return images, spectral

    def fit(self, X, y):
        y = np.asarray(y)
        if set(np.unique(y)) - {0, 1}:
            raise ValidationError("labels must be 0 (real) or 1 (fake)")
        images, spectral = self._prepare(X)
        if len(y) != len(images):
            raise ValidationError("X and y length mismatch")
        self.model_, self.trace_ = fit_arrays(images, spectral, y,
                                              self._train_config())
        self.classes_ = np.array([0, 1])
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise ValidationError("this detector is not fitted yet; call fit first")

    def predict(self, X):
        self._require_fitted()
        images, spectral = self._prepare(X)
        preds, _ = _predict_arrays(self.model_, images, spectral,
                                   np.zeros(len(images), dtype=int))
        return preds

    def predict_proba(self, X):
        self._require_fitted()
        images, spectral = self._prepare(X)
        _, scores = _predict_arrays(self.model_, images, spectral,
                                    np.zeros(len(images), dtype=int))
        return np.stack([1.0 - scores, scores], axis=1)

    def decision_function(self, X):
        return self.predict_proba(X)[:, 1]
