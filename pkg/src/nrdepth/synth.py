"""Synthetic scenes with complete ground truth for each prior regime."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import ConfigurationError, InputError
from .geometry import CameraIntrinsics, ViewObservation, compute_edm
from .priors import LowRankStructure
from .solver.loss import CorrespondenceMap

SCENARIOS = ("rigid", "multibody", "isometric", "lowrank")
MAX_RETRIES = 50
# generated depths stay inside this band, well within the default (0.1, 10) bounds
DEPTH_BAND = (1.0, 9.0)


@dataclass
class SyntheticScene:
    views: list
    gt_depths: list
    corrs: list
    motion_labels: np.ndarray
    scenario: str
    rigid_instant_pairs: list = field(default_factory=list)
    points: list = field(default_factory=list)  # camera-frame 3D points per view
    pixels: list = field(default_factory=list)  # noise-free projections per view
    meta: dict = field(default_factory=dict)

    @property
    def n_views(self) -> int:
        return len(self.views)


def _random_rotation(rng, max_angle_deg):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(max_angle_deg) * rng.uniform(-1, 1)
    return Rotation.from_rotvec(axis * angle).as_matrix()


def _camera_poses(rng, m, rot_deg, trans):
    poses = [(np.eye(3), np.zeros(3))]
    for _ in range(1, m):
        t = rng.standard_normal(3)
        t *= trans / np.linalg.norm(t)
        poses.append((_random_rotation(rng, rot_deg), t))
    return poses


def _finish(intrinsics, cam_points, labels, scenario, rigid_instant, noise_px, rng, meta):
    """Project camera-frame points and assemble the scene; None when anything leaves the frustum."""
    views, depths, pixels = [], [], []
    for x in cam_points:
        if np.any(x[:, 2] <= DEPTH_BAND[0]) or np.any(x[:, 2] >= DEPTH_BAND[1]):
            return None
        px = intrinsics.project(x)
        if not np.all(intrinsics.contains(px)):
            return None
        pixels.append(px)
        depths.append(x[:, 2].copy())
    ids = np.arange(len(labels))
    for px in pixels:
        observed = px + noise_px * rng.standard_normal(px.shape) if noise_px > 0 else px
        views.append(ViewObservation.from_pixels(intrinsics, observed, ids))
    corrs = [CorrespondenceMap.from_point_ids(views[k], views[k + 1]) for k in range(len(views) - 1)]
    return SyntheticScene(views, depths, corrs, np.asarray(labels, dtype=np.int64), scenario,
                          list(rigid_instant), list(cam_points), pixels, meta)


def _retry(build, what):
    for attempt in range(MAX_RETRIES):
        scene = build(attempt)
        if scene is not None:
            return scene
    raise ConfigurationError(f"could not generate a {what} scene inside the frustum after {MAX_RETRIES} tries")


def _in_view_everywhere(intrinsics, cams) -> np.ndarray:
    """Mask of points inside the depth band and the image in every view."""
    ok = np.ones(len(cams[0]), dtype=bool)
    for x in cams:
        ok &= (x[:, 2] > DEPTH_BAND[0]) & (x[:, 2] < DEPTH_BAND[1])
        ok[ok] &= intrinsics.contains(intrinsics.project(x[ok]))
    return ok


def _frustum_points(rng, intrinsics, n, depth_range, margin=20.0):
    px = np.column_stack([
        rng.uniform(margin, intrinsics.width - 1 - margin, n),
        rng.uniform(margin, intrinsics.height - 1 - margin, n),
    ])
    z = rng.uniform(*depth_range, n)
    return intrinsics.rays_from_pixels(px) * z[:, None]


def make_rigid_scene(n_points=200, m_views=5, intrinsics=None, seed=0, rot_deg=4.0, trans=0.6,
                     noise_px=0.0) -> SyntheticScene:
    """Static point set seen by a moving camera.

    ``rot_deg = trans = 0`` gives identical views.
    """
    if n_points < 4 or m_views < 2:
        raise InputError("rigid scene needs n_points >= 4 and m_views >= 2")
    intrinsics = intrinsics or CameraIntrinsics.default()
    rng = np.random.default_rng(seed)

    def build(_):
        # oversample, then keep points that stay in frame in every view
        world = _frustum_points(rng, intrinsics, 3 * n_points, (2.5, 7.0))
        poses = _camera_poses(rng, m_views, rot_deg, trans)
        cams = [world @ r.T + t for r, t in poses]
        keep = np.nonzero(_in_view_everywhere(intrinsics, cams))[0][:n_points]
        if len(keep) < n_points:
            return None
        cams = [x[keep] for x in cams]
        return _finish(intrinsics, cams, np.zeros(n_points), "rigid", [], noise_px, rng,
                       {"seed": seed})

    return _retry(build, "rigid")


def make_multibody_scene(bodies=2, points_per_body=60, m_views=4, rigid_instant=None, seed=0,
                         relative_motion=0.5, intrinsics=None, rot_deg=4.0, trans=0.6,
                         body_rot_deg=0.0, noise_px=0.0) -> SyntheticScene:
    """Rigid bodies side by side in vertical image strips; body 0 is static.

    Bodies 1.. take a random-walk translation of length ``relative_motion`` per view
    plus a rotation of up to ``body_rot_deg`` about their centroid, while the camera
    moves as well.  ``rigid_instant=(k, l)`` freezes every body between views k and
    l, so that pair differs only by the camera motion.  ``relative_motion=0`` and
    ``body_rot_deg=0`` make the whole scene rigid.
    """
    if bodies < 2:
        raise InputError("multibody scene needs at least two bodies")
    if rigid_instant is not None:
        k, l = rigid_instant
        if not (0 <= k < m_views and 0 <= l < m_views and k != l):
            raise InputError(f"rigid instant {rigid_instant} is not a pair of distinct views")
    intrinsics = intrinsics or CameraIntrinsics.default()
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(bodies), points_per_body)
    n_cand = 3 * points_per_body
    cand_labels = np.repeat(np.arange(bodies), n_cand)
    edges_x = np.linspace(20.0, intrinsics.width - 21.0, bodies + 1)

    def build(_):
        parts = []
        for b in range(bodies):
            px = np.column_stack([rng.uniform(edges_x[b], edges_x[b + 1], n_cand),
                                  rng.uniform(20.0, intrinsics.height - 21.0, n_cand)])
            z = rng.uniform(3.0, 6.0, n_cand)
            parts.append(intrinsics.rays_from_pixels(px) * z[:, None])
        world0 = np.vstack(parts)
        # per-body world pose per view, identity at view 0
        body_poses = [[(np.eye(3), np.zeros(3))] for _ in range(bodies)]
        for b in range(1, bodies):
            for _v in range(1, m_views):
                r_prev, t_prev = body_poses[b][-1]
                step = rng.standard_normal(3)
                step *= relative_motion / np.linalg.norm(step)
                body_poses[b].append((_random_rotation(rng, body_rot_deg) @ r_prev, t_prev + step))
        for _v in range(1, m_views):
            body_poses[0].append((np.eye(3), np.zeros(3)))
        if rigid_instant is not None:
            k, l = rigid_instant
            for b in range(bodies):
                body_poses[b][l] = body_poses[b][k]
        cam_poses = _camera_poses(rng, m_views, rot_deg, trans)
        cams = []
        for v in range(m_views):
            world = np.empty_like(world0)
            for b in range(bodies):
                sel = cand_labels == b
                r, t = body_poses[b][v]
                c = world0[sel].mean(axis=0)
                world[sel] = (world0[sel] - c) @ r.T + c + t
            rc, tc = cam_poses[v]
            cams.append(world @ rc.T + tc)
        visible = _in_view_everywhere(intrinsics, cams)
        keep = []
        for b in range(bodies):
            idx = np.nonzero(visible & (cand_labels == b))[0][:points_per_body]
            if len(idx) < points_per_body:
                return None
            keep.append(idx)
        keep = np.concatenate(keep)
        return _finish(intrinsics, [x[keep] for x in cams], labels, "multibody",
                       [tuple(rigid_instant)] if rigid_instant is not None else [], noise_px, rng,
                       {"seed": seed, "relative_motion": relative_motion})

    return _retry(build, "multibody")


def roll_sheet(u, v, curvature):
    """Isometric roll of plane coordinates ``(u, v)`` onto a cylinder about the v axis."""
    if curvature == 0:
        return np.column_stack([u, v, np.zeros_like(u)])
    return np.column_stack([np.sin(curvature * u) / curvature, v, (1.0 - np.cos(curvature * u)) / curvature])


def make_isometric_scene(rows=12, cols=12, m_views=4, bend_amplitude=0.6, seed=0, spacing=0.2,
                         intrinsics=None, tilt_deg=0.0, distance=4.0, rot_deg=3.0, trans=0.3,
                         noise_px=0.0) -> SyntheticScene:
    """A planar grid bent onto cylinders whose curvature changes per view.

    Curvature of view v is ``bend_amplitude`` times a random factor in [0.2, 1];
    arc length along the sheet is preserved exactly.  The sheet is tilted by
    ``tilt_deg`` about the image x axis on top of a random orientation of up to 20 degrees.
    """
    if rows < 3 or cols < 3:
        raise InputError("isometric scene needs at least a 3x3 grid")
    half_width = 0.5 * (cols - 1) * spacing
    if bend_amplitude * half_width > np.pi:
        raise ConfigurationError("bend amplitude rolls the sheet past a full circle (self-intersection)")
    intrinsics = intrinsics or CameraIntrinsics.default()
    rng = np.random.default_rng(seed)
    gv, gu = np.mgrid[0:rows, 0:cols]
    u = (gu.ravel() - 0.5 * (cols - 1)) * spacing
    v = (gv.ravel() - 0.5 * (rows - 1)) * spacing

    def build(_):
        curv = bend_amplitude * rng.uniform(0.2, 1.0, m_views)
        base_rot = Rotation.from_euler("x", tilt_deg, degrees=True).as_matrix() @ _random_rotation(rng, 20.0)
        cams = []
        for k in range(m_views):
            sheet = roll_sheet(u, v, curv[k])
            sheet -= sheet.mean(axis=0)
            r = _random_rotation(rng, rot_deg) @ base_rot
            t = np.array([0.0, 0.0, distance]) + trans * rng.uniform(-1, 1, 3)
            cams.append(sheet @ r.T + t)
        scene = _finish(intrinsics, cams, np.zeros(rows * cols), "isometric", [], noise_px, rng,
                        {"seed": seed, "rows": rows, "cols": cols, "spacing": spacing,
                         "curvatures": curv.tolist()})
        if scene is not None:
            px = scene.pixels[0].reshape(rows, cols, 2)
            steps = np.concatenate([
                np.linalg.norm(np.diff(px, axis=0), axis=2).ravel(),
                np.linalg.norm(np.diff(px, axis=1), axis=2).ravel(),
            ])
            scene.meta["grid_spacing_px"] = float(np.median(steps))
        return scene

    return _retry(build, "isometric")


def grid_neighbour_pairs(rows, cols) -> np.ndarray:
    """4-connected neighbour index pairs of a row-major grid."""
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return np.vstack([horiz, vert])


def make_lowrank_scene(b=2, n=20, m=4, seed=0) -> LowRankStructure:
    if not n > b + 3:
        raise InputError(f"need n > b + 3, got n={n}, b={b}")
    if m < 2:
        raise InputError("need at least two views")
    rng = np.random.default_rng(seed)
    basis = rng.standard_normal((b, n))
    return LowRankStructure(basis, tuple(rng.standard_normal((3, b)) for _ in range(m)))


def audit_scene(scene: SyntheticScene, atol_px=1e-9) -> dict:
    """Check stored projections, depths and correspondences against the 3D points."""
    report = {"reprojection": True, "depths": True, "correspondences": True}
    for k, (x, view) in enumerate(zip(scene.points, scene.views)):
        px = view.intrinsics.project(x)
        if np.max(np.abs(px - scene.pixels[k])) > atol_px:
            report["reprojection"] = False
        if not np.array_equal(x[:, 2], scene.gt_depths[k]):
            report["depths"] = False
    for k, corr in enumerate(scene.corrs):
        if not np.array_equal(scene.views[k + 1].point_ids[corr.target], scene.views[k].point_ids):
            report["correspondences"] = False
    return report


def distance_drift(scene: SyntheticScene, sel_a, sel_b=None) -> float:
    """Largest change across views of any distance between the selected point sets."""
    dists = []
    for x in scene.points:
        a = x[sel_a]
        b = a if sel_b is None else x[sel_b]
        dists.append(np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2))
    dists = np.stack(dists)
    return float(np.max(dists.max(axis=0) - dists.min(axis=0)))


def edm_stack(scene: SyntheticScene) -> list:
    return [compute_edm(x) for x in scene.points]
