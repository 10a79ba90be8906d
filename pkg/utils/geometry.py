'''
Point-cloud and box primitives.

Boxes are axis-aligned, size[i] is the extent along axis i.
'''
from dataclasses import dataclass

import numpy as np

from utils.errors import DataError, ContractError


@dataclass
class PointCloud:
    ''' coords : (N x 3) meters, features : (N x F), color in [0,1] then height '''
    coords: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3 or self.coords.shape[0] < 1:
            raise DataError("point cloud coords must be (N x 3) with N >= 1, got {}".format(self.coords.shape))
        if self.features.ndim != 2 or self.features.shape[0] != self.coords.shape[0]:
            raise DataError("point cloud features must have {} rows, got {}".format(self.coords.shape[0], self.features.shape))
        if not np.isfinite(self.coords).all():
            raise DataError("point cloud coords must be finite")

    def __len__(self):
        return self.coords.shape[0]

    @classmethod
    def from_xyzrgb(cls, xyzrgb):
        ''' builds the F=4 feature layout: rgb plus height above the scene floor '''
        xyzrgb = np.asarray(xyzrgb, dtype=np.float64)
        coords = xyzrgb[:, :3]
        height = coords[:, 2:3] - coords[:, 2].min()
        return cls(coords, np.concatenate([xyzrgb[:, 3:6], height], axis=1))

    def permuted(self, order):
        return PointCloud(self.coords[order], self.features[order])


@dataclass(frozen=True)
class Click:
    point: tuple

    def __post_init__(self):
        object.__setattr__(self, 'point', tuple(float(v) for v in self.point))
        if len(self.point) != 3:
            raise DataError("a click needs 3 coordinates, got {}".format(len(self.point)))


@dataclass(frozen=True)
class Box3D:
    center: tuple
    size: tuple

    def __post_init__(self):
        object.__setattr__(self, 'center', tuple(float(v) for v in self.center))
        object.__setattr__(self, 'size', tuple(float(v) for v in self.size))
        if len(self.center) != 3 or len(self.size) != 3:
            raise DataError("a box needs a 3-vector center and size")
        if not all(s > 0 for s in self.size):
            raise DataError("box size components must be positive, got {}".format(self.size))

    @property
    def min_corner(self):
        return np.array(self.center) - np.array(self.size) / 2

    @property
    def max_corner(self):
        return np.array(self.center) + np.array(self.size) / 2

    @property
    def volume(self):
        return float(np.prod(self.size))

    def as_list(self):
        return list(self.center) + list(self.size)


@dataclass(frozen=True)
class SceneBounds:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, 'lo', tuple(float(v) for v in self.lo))
        object.__setattr__(self, 'hi', tuple(float(v) for v in self.hi))
        if any(h < l for l, h in zip(self.lo, self.hi)):
            raise DataError("scene bounds max must be >= min, got {} / {}".format(self.lo, self.hi))

    @classmethod
    def from_points(cls, coords):
        coords = np.asarray(coords, dtype=np.float64)
        return cls(coords.min(axis=0), coords.max(axis=0))

    @property
    def extent(self):
        return np.array(self.hi) - np.array(self.lo)

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.extent))

    def axis(self, i):
        return self.lo[i], self.hi[i]

    def contains(self, p):
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= np.array(self.lo)) and np.all(p <= np.array(self.hi)))


def farthest_point_sampling(coords, k):
    '''
    Greedy max-min-distance sampling over coords (N x 3).
    Seed is the lexicographically smallest point; ties on the min-distance are broken by
    lexicographically smallest coordinates, then by lowest index, so the selected
    coordinate set depends only on the set of input points.
    '''
    coords = coords.coords if isinstance(coords, PointCloud) else np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if not 1 <= k <= n:
        raise ContractError("farthest point sampling needs 1 <= k <= N, got k={} N={}".format(k, n))
    index = np.arange(n)

    def lexicographic_first(candidates):
        c = coords[candidates]
        order = np.lexsort((candidates, c[:, 2], c[:, 1], c[:, 0]))
        return int(candidates[order[0]])

    selected = [lexicographic_first(index)]
    min_dist = np.full(n, np.inf)
    for _ in range(k - 1):
        diff = coords - coords[selected[-1]]
        dist = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
        min_dist = np.minimum(min_dist, dist)
        min_dist[selected[-1]] = -1.0
        candidates = np.flatnonzero(min_dist == min_dist.max())
        selected.append(lexicographic_first(candidates))
    return selected


def box_iou_3d(a, b):
    lo = np.maximum(a.min_corner, b.min_corner)
    hi = np.minimum(a.max_corner, b.max_corner)
    inter = float(np.prod(np.clip(hi - lo, 0, None)))
    if inter <= 0:
        return 0.0
    union = a.volume + b.volume - inter
    return min(1.0, inter / union)


def points_in_box(coords, box):
    ''' indices of points with |coord - center| <= size / 2 on every axis (closed boundary) '''
    coords = coords.coords if isinstance(coords, PointCloud) else np.asarray(coords, dtype=np.float64)
    inside = np.all(np.abs(coords - np.array(box.center)) <= np.array(box.size) / 2, axis=1)
    return np.flatnonzero(inside)


def normalize_point(p, bounds):
    extent = bounds.extent
    if np.any(extent <= 0):
        raise DataError("degenerate scene bounds {} / {}".format(bounds.lo, bounds.hi))
    return np.clip((np.asarray(p, dtype=np.float64) - np.array(bounds.lo)) / extent, 0.0, 1.0)
