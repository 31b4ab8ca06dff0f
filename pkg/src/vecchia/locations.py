"""Observation locations: Euclidean points with an optional time coordinate."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class LocationSet:
    """n points in R^d, optionally paired with a time per point.

    Sphere-time data are stored with ``coords`` as unit 3-vectors so that
    chordal distance is the Euclidean distance between rows.
    """

    coords: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2:
            raise ValueError("coords must be a 1-D or 2-D array")
        if coords.shape[0] == 0:
            raise ValueError("need at least one point")
        if not 1 <= coords.shape[1] <= 4:
            raise ValueError(f"dimension must be 1 to 4, got {coords.shape[1]}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        object.__setattr__(self, "coords", np.ascontiguousarray(coords))
        if self.times is not None:
            times = np.asarray(self.times, dtype=float).ravel()
            if times.shape[0] != coords.shape[0]:
                raise ValueError(
                    f"times has {times.shape[0]} entries but there are {coords.shape[0]} points"
                )
            if not np.all(np.isfinite(times)):
                raise ValueError("times must be finite")
            object.__setattr__(self, "times", times)

    @classmethod
    def from_lonlat(cls, lon, lat, times=None):
        """Build from longitude/latitude in degrees (converted to unit vectors)."""
        return cls(lonlat_to_xyz(lon, lat), times)

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def d(self):
        return self.coords.shape[1]

    @property
    def has_time(self):
        return self.times is not None

    def __len__(self):
        return self.n

    def points(self, spatial_only=False):
        """Coordinates used for geometry (orderings, neighbor search)."""
        if self.times is None or spatial_only:
            return self.coords
        return np.hstack([self.coords, self.times[:, None]])

    def subset(self, idx):
        idx = np.asarray(idx)
        return LocationSet(self.coords[idx], None if self.times is None else self.times[idx])

    def concat(self, other):
        other = as_locations(other)
        if other.d != self.d or other.has_time != self.has_time:
            raise ValueError("cannot concatenate location sets of different layout")
        times = None if self.times is None else np.concatenate([self.times, other.times])
        return LocationSet(np.vstack([self.coords, other.coords]), times)


def as_locations(locs):
    if isinstance(locs, LocationSet):
        return locs
    return LocationSet(np.asarray(locs, dtype=float))


def lonlat_to_xyz(lon, lat):
    lon = np.radians(np.asarray(lon, dtype=float))
    lat = np.radians(np.asarray(lat, dtype=float))
    return np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def regular_grid(side, d=2):
    """``side**d`` points on a regular grid over the unit cube [0, 1]^d.

    Points are listed with the last coordinate varying fastest.
    """
    axis = np.linspace(0.0, 1.0, side)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return LocationSet(np.column_stack([m.ravel() for m in mesh]))


def parse_grid(text):
    """Parse ``"30x30"`` or ``"19x19x19"`` into a regular grid."""
    sides = [int(s) for s in str(text).lower().split("x")]
    if len(set(sides)) == 1:
        return regular_grid(sides[0], len(sides))
    axes = [np.linspace(0.0, 1.0, s) for s in sides]
    mesh = np.meshgrid(*axes, indexing="ij")
    return LocationSet(np.column_stack([m.ravel() for m in mesh]))
