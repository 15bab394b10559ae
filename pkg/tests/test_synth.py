import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrdepth.exceptions import ConfigurationError, InputError
from nrdepth.geometry import DepthField, compute_edm, edm_difference
from nrdepth.priors import rank_check, rigid_weights
from nrdepth.solver.loss import ObjectiveSettings, all_pairs, compute_loss
from nrdepth.synth import (
    audit_scene,
    distance_drift,
    edm_stack,
    grid_neighbour_pairs,
    make_isometric_scene,
    make_lowrank_scene,
    make_multibody_scene,
    make_rigid_scene,
    roll_sheet,
)


def _max_edm_gap(scene, k, l):
    return np.abs(edm_difference(compute_edm(scene.points[k]), compute_edm(scene.points[l]))).max()


def test_rigid_scene_identity_motion():
    scene = make_rigid_scene(30, 3, seed=0, rot_deg=0.0, trans=0.0)
    e = edm_stack(scene)
    assert all(np.array_equal(e[0].entries, x.entries) for x in e[1:])


def test_rigid_scene_edms_agree():
    scene = make_rigid_scene(200, 5, seed=0)
    for k in range(5):
        for l in range(k + 1, 5):
            assert _max_edm_gap(scene, k, l) < 1e-9


def test_rigid_scene_reproducible_and_in_band():
    a, b = make_rigid_scene(50, 4, seed=9), make_rigid_scene(50, 4, seed=9)
    for x, y in zip(a.points, b.points):
        assert np.array_equal(x, y)
    for d in a.gt_depths:
        assert np.all((d > 1.0) & (d < 9.0))
    with pytest.raises(InputError):
        make_rigid_scene(3, 4)


@given(st.sampled_from(["rigid", "multibody", "isometric"]), st.integers(0, 1000))
@settings(max_examples=15)
def test_every_scene_passes_its_audit(kind, seed):
    build = {"rigid": lambda: make_rigid_scene(40, 3, seed=seed),
             "multibody": lambda: make_multibody_scene(points_per_body=20, m_views=3, seed=seed),
             "isometric": lambda: make_isometric_scene(8, 8, 3, seed=seed)}[kind]
    report = audit_scene(build())
    assert all(report.values()), report


def test_rigid_scene_zero_loss_at_ground_truth():
    scene = make_rigid_scene(200, 5, seed=0)
    edges = all_pairs(200)
    for k, corr in enumerate(scene.corrs):
        loss = compute_loss(DepthField.from_depths(scene.gt_depths[k]), DepthField.from_depths(scene.gt_depths[k + 1]),
                            scene.views[k], scene.views[k + 1], corr, rigid_weights(edges), ObjectiveSettings(0.0))
        assert loss.data_term < 1e-12


def test_multibody_without_relative_motion_is_rigid():
    scene = make_multibody_scene(points_per_body=30, m_views=4, seed=1, relative_motion=0.0)
    for k in range(3):
        assert _max_edm_gap(scene, k, k + 1) < 1e-9


def test_multibody_drift_audit():
    scene = make_multibody_scene(points_per_body=40, m_views=4, seed=0)
    a, b = scene.motion_labels == 0, scene.motion_labels == 1
    bound = 1e-9
    assert distance_drift(scene, a) < bound
    assert distance_drift(scene, b) < bound
    assert distance_drift(scene, a, b) > 10 * bound


def test_multibody_rigid_instant_zero_residual():
    scene = make_multibody_scene(points_per_body=40, m_views=4, rigid_instant=(0, 1), seed=3)
    assert scene.rigid_instant_pairs == [(0, 1)]
    assert _max_edm_gap(scene, 0, 1) < 1e-9
    # every normalized residual at the rigid instant is below 1e-9
    edges = all_pairs(80)
    loss = compute_loss(DepthField.from_depths(scene.gt_depths[0]), DepthField.from_depths(scene.gt_depths[1]),
                        scene.views[0], scene.views[1], scene.corrs[0], rigid_weights(edges),
                        ObjectiveSettings(0.0), keep_residuals=True)
    assert np.all(loss.residuals < 1e-9)
    assert _max_edm_gap(scene, 1, 2) > 1e-3


def test_multibody_validation():
    with pytest.raises(InputError):
        make_multibody_scene(bodies=1)
    with pytest.raises(InputError):
        make_multibody_scene(rigid_instant=(0, 9))


def test_isometric_flat_sheet_is_rigid():
    scene = make_isometric_scene(6, 6, 3, bend_amplitude=0.0, seed=0)
    for k in range(2):
        assert _max_edm_gap(scene, k, k + 1) < 1e-9


def test_isometric_chord_vs_arc_and_far_corners():
    rows = cols = 12
    spacing = 0.2
    scene = make_isometric_scene(rows, cols, 4, bend_amplitude=0.6, spacing=spacing, seed=0)
    assert max(scene.meta["curvatures"]) * spacing <= 0.3
    nb = grid_neighbour_pairs(rows, cols)
    lengths = np.stack([np.linalg.norm(x[nb[:, 0]] - x[nb[:, 1]], axis=1) for x in scene.points])
    spread = (lengths.max(axis=0) - lengths.min(axis=0)) / lengths.min(axis=0)
    assert spread.max() < 0.01
    corners = [0, cols - 1, (rows - 1) * cols, rows * cols - 1]
    d = np.stack([[np.linalg.norm(x[corners[0]] - x[c]) for c in corners[1:]] for x in scene.points])
    assert np.ptp(d, axis=0).max() > 1e-3


def test_roll_sheet_preserves_arc_length():
    kappa, h = 1.3, 0.2
    u = np.array([0.0, h])
    p = roll_sheet(u, np.zeros(2), kappa)
    chord = np.linalg.norm(p[1] - p[0])
    assert chord == pytest.approx(2 / kappa * np.sin(kappa * h / 2), rel=1e-12)


def test_isometric_validation():
    with pytest.raises(ConfigurationError):
        make_isometric_scene(12, 12, bend_amplitude=5.0)
    with pytest.raises(InputError):
        make_isometric_scene(2, 5)


def test_lowrank_scene():
    s = make_lowrank_scene(1, 10, 3, seed=7)
    assert s.basis.shape == (1, 10) and all(m.shape == (3, 1) for m in s.projections)
    again = make_lowrank_scene(1, 10, 3, seed=7)
    assert np.array_equal(s.basis, again.basis)
    for seed in range(100):
        assert rank_check(make_lowrank_scene(2, 20, 4, seed)).ok
    with pytest.raises(InputError):
        make_lowrank_scene(3, 5, 3)
