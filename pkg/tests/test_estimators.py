import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from nestlab.estimators import CriticalOrbitFeatures


def test_feature_rows():
    est = CriticalOrbitFeatures(n_max=200)
    F = est.fit_transform(np.array([[0.75], [2.0], [(1 + math.sqrt(5)) / 2]]))
    assert F.shape == (3, 4)
    assert F[0, 2:].tolist() == [1.0, 1.0] and F[0, 0] < 0
    assert F[1, 0] == pytest.approx(math.log(4), abs=1e-12) and F[1, 2] == 0.0
    # the float golden ratio is not exactly superstable, so only the sink flag is checked
    assert F[2, 2] == 1.0 and F[2, 3] == 2.0
    assert list(est.get_feature_names_out()) == list(CriticalOrbitFeatures.feature_names)


def test_sklearn_protocol():
    est = CriticalOrbitFeatures(n_max=100, bits=128)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    pipe = make_pipeline(FunctionTransformer(), est)
    assert pipe.fit_transform([1.9, 1.95]).shape == (2, 4)
    with pytest.raises(ValueError):
        est.fit(np.zeros((2, 2)))
