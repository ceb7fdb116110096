"""scikit-learn style wrappers for batch use.

Nothing here is learned from data: ``fit`` validates the parameters, builds the
underlying map and records the input width, so the objects can sit in a
Pipeline or be cloned and grid-searched over their tolerances.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from . import whitney
from .classify import DEFAULT_TOLERANCES, Tolerances, classify_point
from .opcore import oracle_from_key
from .realroots import DEFAULT_TOL


class SingularityClassifier(ClassifierMixin, BaseEstimator):
    """Label each row of X (a point) with the singularity type of ``map`` there.

    Parameters
    ----------
    map : str
        Oracle key, e.g. ``"wk:3"`` or ``"fn:2:5"``.
    range_in, range_out, kernel : float
        Classifier thresholds; see :class:`morinkit.classify.Tolerances`.
    """

    def __init__(self, map: str = "wk:1", range_in: float = DEFAULT_TOLERANCES.range_in,
                 range_out: float = DEFAULT_TOLERANCES.range_out,
                 kernel: float = DEFAULT_TOLERANCES.kernel, seed: int = 0):
        self.map = map
        self.range_in = range_in
        self.range_out = range_out
        self.kernel = kernel
        self.seed = seed

    def fit(self, X, y=None):
        X = validate_data(self, X, reset=True)
        self.oracle_ = oracle_from_key(self.map)
        if X.shape[1] != self.oracle_.dim:
            raise ValueError(f"X has {X.shape[1]} columns, {self.map} acts on R^{self.oracle_.dim}")
        if not 0 < self.range_in < self.range_out:
            raise ValueError("need 0 < range_in < range_out")
        self.tolerances_ = Tolerances(kernel=self.kernel, range_in=self.range_in,
                                      range_out=self.range_out, seed=self.seed)
        self.classes_ = np.array(["Regular", "Fold", "Cusp", "SwallowsTail", "Butterfly"])
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "oracle_")
        X = validate_data(self, X, reset=False)
        labels = [classify_point(self.oracle_, x, self.tolerances_, diagnostics=False)[0].label
                  for x in X]
        return np.array(labels, dtype=object)

    def score(self, X, y, sample_weight=None):
        pred = self.predict(X)
        y = np.asarray(y, dtype=object)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        return float(np.sum(w * (pred == y)) / np.sum(w))


class WhitneyRootCounter(TransformerMixin, BaseEstimator):
    """Map each target row (s, s_1, ..., s_{k-1}) to [count, regular_count] of w_k preimages."""

    def __init__(self, k: int = 2, tol: float = DEFAULT_TOL):
        self.k = k
        self.tol = tol

    def fit(self, X=None, y=None):
        self.map_ = whitney.WhitneyMap(self.k)
        self.n_features_in_ = self.k
        if X is not None:
            X = check_array(X)
            if X.shape[1] != self.k:
                raise ValueError(f"targets of w_{self.k} have {self.k} coordinates, got {X.shape[1]}")
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "map_")
        X = check_array(X)
        if X.shape[1] != self.k:
            raise ValueError(f"targets of w_{self.k} have {self.k} coordinates, got {X.shape[1]}")
        out = np.empty((X.shape[0], 2), dtype=int)
        for i, row in enumerate(X):
            v = whitney.classify_region(self.map_, whitney.PointK.from_vector(row), self.tol)
            out[i] = (v.count, v.regular_count)
        return out
