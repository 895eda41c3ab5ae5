"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.exceptions import NotFittedError

from .exceptions import ParameterError


def check_points(points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ParameterError(f"expected points of shape (M, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ParameterError("points contain non-finite values")
    return pts


def check_measurements(ms):
    # duck-typed so subclasses and look-alikes pass
    for attr in ("points", "frequencies", "fields", "components"):
        if not hasattr(ms, attr):
            raise ParameterError(f"expected a MeasurementSet, missing {attr!r}")
    if not np.all(np.isfinite(ms.fields)):
        raise ParameterError("measurement fields contain non-finite values")
    return ms


def check_unit(vec, name="vector", tol=1e-9):
    v = np.asarray(vec, dtype=float).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise ParameterError(f"{name} must have unit norm")
    return v


def check_is_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call 'fit' first."
        )
