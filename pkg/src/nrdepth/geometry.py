"""Cameras, rays, depth decoding, back-projection and Euclidean distance matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DimensionError, DomainError

#: Dense EDMs above this many points are refused; use :func:`edge_distances`.
DENSE_EDM_CAP = 2000


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DomainError("principal point must lie inside the image")

    @classmethod
    def default(cls, width: int = 640, height: int = 480, focal: float = 500.0) -> "CameraIntrinsics":
        return cls(focal, focal, width / 2.0, height / 2.0, width, height)

    def rays_from_pixels(self, pixels) -> np.ndarray:
        """Homogeneous normalized coordinates ``((px-cx)/fx, (py-cy)/fy, 1)``."""
        pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
        rays = np.ones((len(pixels), 3))
        rays[:, 0] = (pixels[:, 0] - self.cx) / self.fx
        rays[:, 1] = (pixels[:, 1] - self.cy) / self.fy
        return rays

    def pixels_from_rays(self, rays) -> np.ndarray:
        rays = np.asarray(rays, dtype=np.float64)
        return np.column_stack([rays[:, 0] * self.fx + self.cx, rays[:, 1] * self.fy + self.cy])

    def project(self, points) -> np.ndarray:
        """Pinhole projection of camera-frame points to pixels."""
        points = np.asarray(points, dtype=np.float64)
        return self.pixels_from_rays(points / points[:, 2:3])

    def contains(self, pixels) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=np.float64)
        return (
            (pixels[:, 0] >= 0) & (pixels[:, 0] <= self.width - 1)
            & (pixels[:, 1] >= 0) & (pixels[:, 1] <= self.height - 1)
        )

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


@dataclass(frozen=True)
class ViewObservation:
    """Rays of the tracked points seen in one view."""

    intrinsics: CameraIntrinsics
    rays: np.ndarray
    point_ids: np.ndarray

    def __post_init__(self):
        rays = np.asarray(self.rays, dtype=np.float64)
        ids = np.asarray(self.point_ids, dtype=np.int64)
        if rays.ndim != 2 or rays.shape[1] != 3:
            raise DimensionError(f"rays must be (n, 3), got {rays.shape}")
        if len(rays) != len(ids):
            raise DimensionError(f"{len(rays)} rays but {len(ids)} point ids")
        if not np.all(rays[:, 2] == 1.0):
            raise DomainError("rays must be homogeneous with third component exactly 1")
        if len(np.unique(ids)) != len(ids):
            raise DomainError("point ids must be unique within a view")
        object.__setattr__(self, "rays", rays)
        object.__setattr__(self, "point_ids", ids)

    @classmethod
    def from_pixels(cls, intrinsics: CameraIntrinsics, pixels, point_ids=None) -> "ViewObservation":
        rays = intrinsics.rays_from_pixels(pixels)
        if point_ids is None:
            point_ids = np.arange(len(rays))
        return cls(intrinsics, rays, point_ids)

    @property
    def n_points(self) -> int:
        return len(self.rays)

    @property
    def pixels(self) -> np.ndarray:
        return self.intrinsics.pixels_from_rays(self.rays)


def inverse_depth_map(d_min: float, d_max: float) -> tuple[float, float]:
    """Slope and offset ``(a, b)`` of the sigmoid -> inverse depth map."""
    if not d_min > 0:
        raise ConfigurationError(f"d_min must be positive, got {d_min}")
    if not d_max > d_min:
        raise ConfigurationError(f"d_max ({d_max}) must exceed d_min ({d_min})")
    return 1.0 / d_min - 1.0 / d_max, 1.0 / d_max


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class DepthField:
    """Unconstrained per-point parameters decoding to depths in ``(d_min, d_max)``."""

    raw: np.ndarray
    d_min: float = 0.1
    d_max: float = 10.0

    def __post_init__(self):
        inverse_depth_map(self.d_min, self.d_max)
        object.__setattr__(self, "raw", np.asarray(self.raw, dtype=np.float64).ravel())

    @classmethod
    def constant(cls, n: int, d_min: float = 0.1, d_max: float = 10.0, raw: float = 0.0) -> "DepthField":
        return cls(np.full(n, raw), d_min, d_max)

    @classmethod
    def from_depths(cls, depths, d_min: float = 0.1, d_max: float = 10.0) -> "DepthField":
        """Inverse of :func:`decode_depth`; depths must lie strictly inside the bounds."""
        depths = np.asarray(depths, dtype=np.float64)
        if np.any(depths <= d_min) or np.any(depths >= d_max):
            raise DomainError("depths must lie strictly inside (d_min, d_max)")
        a, b = inverse_depth_map(d_min, d_max)
        s = (1.0 / depths - b) / a
        return cls(np.log(s) - np.log1p(-s), d_min, d_max)

    def decode(self) -> np.ndarray:
        return decode_depth(self)


def decode_depth(field: DepthField) -> np.ndarray:
    """Depth ``1 / (a*sigmoid(raw) + b)``, decreasing in ``raw``.

    ``raw -> -inf`` approaches ``d_max`` and ``raw -> +inf`` approaches ``d_min``.
    """
    a, b = inverse_depth_map(field.d_min, field.d_max)
    s = sigmoid(field.raw)
    depth = 1.0 / (a * s + b)
    # keep the open interval under saturation
    return np.clip(depth, np.nextafter(field.d_min, np.inf), np.nextafter(field.d_max, -np.inf))


def decode_depth_grad(field: DepthField) -> tuple[np.ndarray, np.ndarray]:
    """Depths and their derivative with respect to ``raw``."""
    a, b = inverse_depth_map(field.d_min, field.d_max)
    s = sigmoid(field.raw)
    depth = 1.0 / (a * s + b)
    return depth, -a * s * (1.0 - s) * depth * depth


@dataclass(frozen=True)
class PointCloud:
    coords: np.ndarray
    point_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        ids = np.arange(len(coords)) if self.point_ids is None else np.asarray(self.point_ids, dtype=np.int64)
        if len(ids) != len(coords):
            raise DimensionError("coords and point_ids differ in length")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "point_ids", ids)

    def __len__(self):
        return len(self.coords)


def back_project(view: ViewObservation, depths) -> PointCloud:
    depths = np.asarray(depths, dtype=np.float64).ravel()
    if len(depths) != view.n_points:
        raise DimensionError(f"{len(depths)} depths for {view.n_points} rays")
    if np.any(depths <= 0):
        raise DomainError("depths must be positive")
    return PointCloud(depths[:, None] * view.rays, view.point_ids)


@dataclass(frozen=True)
class Edm:
    """Squared pairwise distances of a point set."""

    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _coords(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.coords
    return np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def compute_edm(cloud, cap: int = DENSE_EDM_CAP) -> Edm:
    """EDM via the Gram identity ``diag(G) 1^T - 2G + 1 diag(G)^T``.

    The upper triangle is mirrored so the result is exactly symmetric, and
    cancellation below zero is clipped.
    """
    x = _coords(cloud)
    n = len(x)
    if n == 0:
        raise DimensionError("cannot build an EDM of an empty cloud")
    if n > cap:
        raise DimensionError(f"{n} points exceeds the dense EDM cap of {cap}")
    # centering is free (EDMs are translation invariant) and limits cancellation
    x = x - x.mean(axis=0)
    gram = x @ x.T
    sq = np.diag(gram)
    e = sq[:, None] - 2.0 * gram + sq[None, :]
    e = np.triu(e, 1)
    e = e + e.T
    np.maximum(e, 0.0, out=e)
    return Edm(e)


def edm_difference(e_k: Edm, e_l: Edm) -> np.ndarray:
    if e_k.entries.shape != e_l.entries.shape:
        raise DimensionError(f"EDM shapes differ: {e_k.entries.shape} vs {e_l.entries.shape}")
    return e_k.entries - e_l.entries


def edge_distances(cloud, edges) -> np.ndarray:
    """Squared distances for an ``(m, 2)`` array of index pairs."""
    x = _coords(cloud)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= len(x)):
        raise IndexError("edge index out of range")
    diff = x[edges[:, 0]] - x[edges[:, 1]]
    return np.einsum("ij,ij->i", diff, diff)
