"""Scikit-learn style wrappers around the functional core.

The estimators operate on plain arrays: X rows are complex fingerprints
of length L, y rows are (t1_ms, t2_ms) pairs. They exist so the pieces
compose with sklearn tooling (pipelines, grid search over k or s); the
functional API in the sibling modules remains the primary surface.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .dictionary import align_rows
from .errors import DegenerateSignalError
from .mrfnet import TrainConfig, init_model, predict_signals, train
from .subspace import Subspace, compute_subspace, lift, project

__all__ = ["SubspaceCompressor", "DictionaryMatcher", "MRFNetRegressor"]


def _check_signals(x, n_frames=None):
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError("X must be 2-D (n_samples, n_frames)")
    if n_frames is not None and x.shape[1] != n_frames:
        raise ValueError(f"X has {x.shape[1]} frames, expected {n_frames}")
    if not np.all(np.isfinite(x)):
        raise ValueError("X must be finite")
    return np.ascontiguousarray(x, dtype=np.complex128)


def _check_params(y, n_rows):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n_rows, 2):
        raise ValueError(f"y must be (n_samples, 2) of (t1, t2), got {y.shape}")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("y entries must be positive finite times in ms")
    return y


class SubspaceCompressor(BaseEstimator, TransformerMixin):
    """Dominant-subspace projection fitted on fingerprint rows.

    Parameters
    ----------
    n_components : int
        Subspace width s.
    seed : int
        Starting-block seed for the eigensolver.
    max_iter, tol : iteration controls passed through to compute_subspace.
    """

    def __init__(self, n_components=10, seed=0, max_iter=500, tol=1e-10):
        self.n_components = n_components
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        X = _check_signals(X)
        self.subspace_ = compute_subspace(
            X, self.n_components, seed=self.seed,
            max_iter=self.max_iter, tol=self.tol,
        )
        self.basis_ = self.subspace_.basis
        self.eigenvalues_ = self.subspace_.eigenvalues
        self.n_features_in_ = X.shape[1]
        return self

    def _fitted(self):
        if not hasattr(self, "subspace_"):
            raise NotFittedError("SubspaceCompressor is not fitted yet")
        return self.subspace_

    def transform(self, X):
        sub = self._fitted()
        return project(sub, _check_signals(X, sub.n_frames))

    def inverse_transform(self, Y):
        return lift(self._fitted(), np.asarray(Y))


class DictionaryMatcher(BaseEstimator, RegressorMixin):
    """Nearest-atom parameter lookup in the fitted compressed domain.

    fit() learns the subspace from the atoms themselves (or accepts a
    prefitted one) and stores the unit-norm compressed templates.
    """

    def __init__(self, n_components=10, seed=0, subspace=None):
        self.n_components = n_components
        self.seed = seed
        self.subspace = subspace

    def fit(self, X, y):
        X = _check_signals(X)
        y = _check_params(y, X.shape[0])
        aligned, ok = align_rows(X)
        if not np.all(ok):
            raise DegenerateSignalError("atom rows must have nonzero temporal sum")
        norms = np.linalg.norm(aligned, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateSignalError("atom rows must be nonzero")
        aligned /= norms[:, None]
        sub = self.subspace if self.subspace is not None else compute_subspace(
            aligned, self.n_components, seed=self.seed
        )
        coeffs = project(sub, aligned)
        cnorms = np.linalg.norm(coeffs, axis=1)
        if np.any(cnorms == 0.0):
            raise DegenerateSignalError("an atom has no subspace component")
        self.subspace_ = sub
        self.templates_ = coeffs / cnorms[:, None]
        self.params_ = y.copy()
        self.n_features_in_ = X.shape[1]
        return self

    def match(self, X):
        """Indices and correlations of the best atom per row."""
        if not hasattr(self, "templates_"):
            raise NotFittedError("DictionaryMatcher is not fitted yet")
        X = _check_signals(X, self.n_features_in_)
        aligned, _ = align_rows(X)
        norms = np.linalg.norm(aligned, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateSignalError("cannot match all-zero rows")
        coeffs = project(self.subspace_, aligned / norms[:, None])
        cnorms = np.linalg.norm(coeffs, axis=1)
        cnorms[cnorms == 0.0] = 1.0
        scores = (coeffs / cnorms[:, None] @ self.templates_.conj().T).real
        idx = np.argmax(scores, axis=1)
        return idx, scores[np.arange(len(idx)), idx]

    def predict(self, X):
        idx, _ = self.match(X)
        return self.params_[idx]


class MRFNetRegressor(BaseEstimator, RegressorMixin):
    """Trains the compact network on atom rows and predicts (t1, t2) in ms.

    Accepts the training hyperparameters as constructor arguments;
    noise augmentation and relabeling follow the package training recipe
    (fit builds an in-memory dictionary-like training set from X, y).
    """

    def __init__(self, hidden=(200, 30), n_components=10, epochs=30,
                 batch_size=50, step_size=1e-2, decay=0.8,
                 snr_db_range=(40.0, 60.0), augmentation_factor=100,
                 noise_domain="subspace", seed=0,
                 target_scale=(1000.0, 100.0), subspace=None):
        self.hidden = hidden
        self.n_components = n_components
        self.epochs = epochs
        self.batch_size = batch_size
        self.step_size = step_size
        self.decay = decay
        self.snr_db_range = snr_db_range
        self.augmentation_factor = augmentation_factor
        self.noise_domain = noise_domain
        self.seed = seed
        self.target_scale = target_scale
        self.subspace = subspace

    def fit(self, X, y):
        X = _check_signals(X)
        y = _check_params(y, X.shape[0])
        aligned, ok = align_rows(X)
        if not np.all(ok):
            raise DegenerateSignalError("atom rows must have nonzero temporal sum")
        norms = np.linalg.norm(aligned, axis=1)
        aligned /= norms[:, None]
        sub = self.subspace if self.subspace is not None else compute_subspace(
            aligned, self.n_components, seed=self.seed
        )
        cfg = TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            step_size=self.step_size,
            decay=self.decay,
            snr_db_range=self.snr_db_range,
            augmentation_factor=self.augmentation_factor,
            rng_seed=self.seed,
            noise_domain=self.noise_domain,
        )
        training = _array_training_set(aligned, y, sub, cfg)
        layout = (X.shape[1], sub.n_components, *self.hidden, 2)
        model = init_model(sub, layout, seed=self.seed,
                           target_scale=self.target_scale)
        self.model_, self.loss_history_ = train(model, training, cfg)
        self.subspace_ = sub
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("MRFNetRegressor is not fitted yet")
        X = _check_signals(X, self.n_features_in_)
        return predict_signals(self.model_, X)


class _ArrayGrid:
    """Minimal grid stand-in: entries() returning the given (n, 2) params."""

    def __init__(self, params):
        self._params = params

    def entries(self):
        return self._params


class _ArrayDictionary:
    """Minimal dictionary stand-in over prealigned unit-norm atom rows."""

    def __init__(self, atoms, params):
        self.atoms = np.ascontiguousarray(atoms, dtype=np.complex64)
        self.grid = _ArrayGrid(params)
        self.n_atoms = atoms.shape[0]


def _array_training_set(aligned_unit_atoms, params, sub, cfg):
    from .mrfnet import TrainingSet

    return TrainingSet(_ArrayDictionary(aligned_unit_atoms, params), sub, cfg)
