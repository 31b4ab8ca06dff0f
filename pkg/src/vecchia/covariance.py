"""Matérn covariance models and dense covariance assembly."""

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import _backend
from .locations import LocationSet, as_locations

FAMILIES = ("matern-isotropic", "matern-spacetime")


class DuplicateLocationWarning(UserWarning):
    """Distinct observations share a location and there is no nugget."""


@dataclass(frozen=True)
class CovarianceModel:
    """Matérn covariance with additive nugget.

    For ``matern-spacetime`` the spatial range is ``range`` and the temporal
    range ``time_range``; the unit-range Matérn is evaluated at
    sqrt(|dx|^2 / range^2 + |dt|^2 / time_range^2).
    """

    variance: float = 1.0
    range: float = 0.1
    smoothness: float = 0.5
    nugget: float = 0.0
    family: str = "matern-isotropic"
    time_range: float | None = None
    mean: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")
        if not self.range > 0:
            raise ValueError(f"range must be positive, got {self.range}")
        if not self.smoothness > 0:
            raise ValueError(f"smoothness must be positive, got {self.smoothness}")
        if not self.nugget >= 0:
            raise ValueError(f"nugget must be nonnegative, got {self.nugget}")
        if self.family == "matern-spacetime":
            if self.time_range is None or not self.time_range > 0:
                raise ValueError("matern-spacetime needs a positive time_range")

    @property
    def param_names(self):
        if self.family == "matern-spacetime":
            return ("variance", "range", "time_range", "smoothness", "nugget")
        return ("variance", "range", "smoothness", "nugget")

    def get(self, name):
        return getattr(self, name)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def scaled_coords(self, locs):
        """Coordinates divided by their ranges.

        Euclidean distance between rows is then the scaled Matérn argument
        for either family.
        """
        locs = as_locations(locs)
        if self.family == "matern-spacetime":
            if locs.times is None:
                raise ValueError("matern-spacetime needs locations with times")
            return np.ascontiguousarray(
                np.hstack([locs.coords / self.range, locs.times[:, None] / self.time_range])
            )
        return np.ascontiguousarray(locs.coords / self.range)

    def correlation(self, t):
        """Unit-variance Matérn correlation at scaled distance ``t``."""
        return _backend.impl().matern_corr(np.asarray(t, dtype=float), self.smoothness)


def bessel_k(nu, x, scaled=False):
    """Modified Bessel function of the second kind K_nu(x).

    Parameters
    ----------
    nu : float
        Order, positive.
    x : float
        Argument, positive.
    scaled : bool
        Return ``exp(x) * K_nu(x)`` instead, which stays finite for large x.

    Raises
    ------
    ValueError
        If ``nu <= 0`` or ``x <= 0``.
    OverflowError
        If the value is not representable (tiny x with large nu).
    """
    if not (nu > 0) or not (x > 0):
        raise ValueError(f"bessel_k requires nu > 0 and x > 0, got nu={nu}, x={x}")
    return _backend.impl().bessel_k(float(nu), float(x), scaled)


def _as_point(p, has_time):
    if has_time:
        coords, t = p
        return np.atleast_1d(np.asarray(coords, dtype=float)), float(t)
    return np.atleast_1d(np.asarray(p, dtype=float)), None


def kernel(model, p1, p2):
    """Covariance between two points.

    For the spacetime family each point is a ``(coords, time)`` pair.
    The nugget is added when the two points coincide.
    """
    spacetime = model.family == "matern-spacetime"
    x1, t1 = _as_point(p1, spacetime)
    x2, t2 = _as_point(p2, spacetime)
    if x1.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x1.shape} vs {x2.shape}")
    d2 = float(np.sum((x1 - x2) ** 2)) / model.range**2
    if spacetime:
        d2 += (t1 - t2) ** 2 / model.time_range**2
    if d2 == 0.0:
        return model.variance + model.nugget
    return model.variance * float(model.correlation(math.sqrt(d2)))


def build_cov_matrix(model, locs, index=None, jitter=0.0):
    """Dense covariance matrix of the selected locations.

    The nugget (and optional ``jitter``) is added to the diagonal only, so
    coincident but distinct observations share ``variance`` off-diagonal.
    """
    locs = as_locations(locs)
    if index is not None:
        locs = locs.subset(index)
    X = model.scaled_coords(locs)
    dist = cdist(X, X)
    C = model.variance * model.correlation(dist)
    np.fill_diagonal(C, model.variance + model.nugget + jitter)
    if model.nugget == 0 and jitter == 0 and locs.n > 1:
        offdiag = dist + np.eye(locs.n)
        if np.any(offdiag == 0.0):
            warnings.warn(
                "coincident locations with zero nugget give a singular covariance; "
                "set a nugget or jitter",
                DuplicateLocationWarning,
                stacklevel=2,
            )
    return C


def cross_cov_matrix(model, locs_a, locs_b):
    """Covariance between two location sets (no nugget)."""
    Xa = model.scaled_coords(locs_a)
    Xb = model.scaled_coords(locs_b)
    return model.variance * model.correlation(cdist(Xa, Xb))


__all__ = [
    "CovarianceModel",
    "DuplicateLocationWarning",
    "LocationSet",
    "bessel_k",
    "build_cov_matrix",
    "cross_cov_matrix",
    "kernel",
]
