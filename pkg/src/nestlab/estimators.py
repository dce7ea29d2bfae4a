"""scikit-learn adapter: parameters in, critical-orbit features out."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .maps import QuadraticMap
from .numerics import PrecisionContext
from .orbitstats import CriticalHit, ce_exponent, recurrence_exponent
from .renorm import classify


class CriticalOrbitFeatures(BaseEstimator, TransformerMixin):
    """Map parameters ``a`` to ``[ce_proxy, recurrence_proxy, is_sink, period]``.

    Undefined values (critical hits) become NaN.  Stateless: ``fit`` only
    validates its input.
    """

    feature_names = ("ce_liminf_proxy", "rec_exponent_proxy", "is_sink", "period")

    def __init__(self, n_max=1000, alpha=0.01, iter_budget=4000, bits=256):
        self.n_max = n_max
        self.alpha = alpha
        self.iter_budget = iter_budget
        self.bits = bits

    def _params(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError("expected a single column of parameters")
            X = X[:, 0]
        return X

    def fit(self, X, y=None):
        self._params(X)
        self.n_features_in_ = 1
        return self

    def _row(self, a):
        fmap = QuadraticMap(repr(float(a)), PrecisionContext(bits=self.bits))
        cls = classify(fmap, iter_budget=self.iter_budget)
        try:
            ce = ce_exponent(fmap, self.n_max).liminf_proxy
        except CriticalHit:
            ce = math.nan
        try:
            rec = recurrence_exponent(fmap, self.n_max, self.alpha).exponent_proxy
        except CriticalHit:
            rec = math.nan
        sink = cls.tag in ("RegularSink", "SuperstableCycle")
        return [ce, rec, float(sink), float(cls.period or 0)]

    def transform(self, X):
        return np.array([self._row(a) for a in self._params(X)], dtype=float).reshape(-1, 4)

    def get_feature_names_out(self, input_features=None):
        return np.array(self.feature_names, dtype=object)
