import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nrdepth.exceptions import ConfigurationError, DimensionError, DomainError
from nrdepth.geometry import (
    CameraIntrinsics,
    DepthField,
    PointCloud,
    ViewObservation,
    back_project,
    compute_edm,
    decode_depth,
    edge_distances,
    edm_difference,
)

from oracles import FROZEN_DECODE_1_2, back_project_loop, decode_scalar, edm_loop

coords = arrays(np.float64, st.tuples(st.integers(1, 25), st.just(3)),
                elements=st.floats(-100, 100, allow_nan=False))


def test_decode_midpoint():
    assert decode_depth(DepthField(np.array([0.0]))) == pytest.approx(1 / 5.05, rel=1e-15)


def test_decode_matches_scalar_oracle():
    assert decode_scalar(1.2) == pytest.approx(FROZEN_DECODE_1_2, rel=1e-15)
    assert decode_depth(DepthField(np.array([1.2])))[0] == pytest.approx(FROZEN_DECODE_1_2, rel=1e-14)


def test_decode_limits_follow_inverse_depth_map():
    # large raw saturates the sigmoid, so inverse depth is maximal: depth -> d_min
    d = decode_depth(DepthField(np.array([60.0, -60.0])))
    assert d[0] == pytest.approx(0.1, rel=1e-12)
    assert d[1] == pytest.approx(10.0, rel=1e-12)


@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-50, 50)))
def test_decode_stays_in_open_interval(raw):
    d = decode_depth(DepthField(raw))
    assert np.all(d > 0.1) and np.all(d < 10.0)


def test_from_depths_inverts_decode(rng):
    depths = rng.uniform(0.5, 9.0, 40)
    np.testing.assert_allclose(DepthField.from_depths(depths).decode(), depths, rtol=1e-12)
    with pytest.raises(DomainError):
        DepthField.from_depths([0.05])


def test_bad_depth_bounds():
    with pytest.raises(ConfigurationError):
        DepthField(np.zeros(2), d_min=2.0, d_max=1.0)
    with pytest.raises(ConfigurationError):
        DepthField(np.zeros(2), d_min=0.0)


def test_back_project_scalar_and_principal_ray():
    intr = CameraIntrinsics.default()
    view = ViewObservation(intr, np.array([[0.5, -0.25, 1.0]]), [0])
    np.testing.assert_array_equal(back_project(view, [2.0]).coords, [[1.0, -0.5, 2.0]])
    centre = ViewObservation.from_pixels(intr, [[320.0, 240.0]])
    np.testing.assert_array_equal(centre.rays, [[0.0, 0.0, 1.0]])
    np.testing.assert_array_equal(back_project(centre, [3.0]).coords, [[0.0, 0.0, 3.0]])


def test_back_project_matches_loop(rng):
    intr = CameraIntrinsics.default()
    view = ViewObservation.from_pixels(intr, rng.uniform(0, 479, (5, 2)))
    depths = rng.uniform(1, 9, 5)
    expected = back_project_loop(view.rays.tolist(), depths.tolist())
    np.testing.assert_allclose(back_project(view, depths).coords, expected, rtol=1e-15)


def test_back_project_validation():
    view = ViewObservation.from_pixels(CameraIntrinsics.default(), [[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(DimensionError):
        back_project(view, [1.0])
    with pytest.raises(DomainError):
        back_project(view, [1.0, -1.0])


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.just(2)), elements=st.floats(0, 600)),
       arrays(np.float64, 20, elements=st.floats(0.2, 9.0)))
def test_reprojection_recovers_rays(pixels, depths):
    view = ViewObservation.from_pixels(CameraIntrinsics.default(), pixels)
    x = back_project(view, depths[: view.n_points]).coords
    np.testing.assert_allclose(x / x[:, 2:3], view.rays, rtol=1e-12, atol=1e-15)


def test_view_validation():
    intr = CameraIntrinsics.default()
    with pytest.raises(DomainError):
        ViewObservation(intr, np.array([[0.0, 0.0, 2.0]]), [0])
    with pytest.raises(DomainError):
        ViewObservation.from_pixels(intr, [[1.0, 1.0], [2.0, 2.0]], [4, 4])
    with pytest.raises(DomainError):
        CameraIntrinsics(-1, 1, 1, 1, 10, 10)


def test_edm_hand_example():
    e = compute_edm(PointCloud([[0, 0, 0], [1, 0, 0], [0, 2, 0]])).entries
    np.testing.assert_array_equal(e, [[0, 1, 4], [1, 0, 5], [4, 5, 0]])
    assert compute_edm(PointCloud([[1.0, 2.0, 3.0]])).entries.tolist() == [[0.0]]


def test_edm_matches_loop(rng):
    x = rng.normal(size=(20, 3))
    expected = np.array(edm_loop(x.tolist()))
    e = compute_edm(x).entries
    np.testing.assert_allclose(e, expected, rtol=1e-12, atol=1e-12 * expected.max())


def test_edm_cap_and_empty():
    with pytest.raises(DimensionError):
        compute_edm(np.zeros((5, 3)), cap=4)
    with pytest.raises(DimensionError):
        compute_edm(np.zeros((0, 3)))


@given(coords)
def test_edm_structure(x):
    e = compute_edm(x).entries
    assert np.array_equal(e, e.T)
    assert np.all(np.diag(e) == 0)
    assert np.all(e >= 0)


@given(coords, st.floats(0.01, 100))
def test_edm_scales_quadratically(x, s):
    e = compute_edm(x).entries
    es = compute_edm(s * x).entries
    np.testing.assert_allclose(es, s * s * e, rtol=1e-10, atol=1e-10 * max(1.0, s * s * e.max()))


def test_edm_difference():
    a = compute_edm(np.array([[0, 0, 0], [1, 0, 0.0]]))
    b = compute_edm(np.array([[0, 0, 0], [2, 0, 0.0]]))
    np.testing.assert_array_equal(edm_difference(a, b), [[0, -3], [-3, 0]])
    np.testing.assert_array_equal(edm_difference(a, a), np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        edm_difference(a, compute_edm(np.zeros((3, 3))))


def test_edm_difference_matches_elementwise(rng):
    a, b = compute_edm(rng.normal(size=(7, 3))), compute_edm(rng.normal(size=(7, 3)))
    d = edm_difference(a, b)
    for i in range(7):
        for j in range(7):
            assert d[i, j] == a.entries[i, j] - b.entries[i, j]


def test_edge_distances_examples(rng):
    assert edge_distances(np.array([[0, 0, 0], [1, 0, 0.0]]), [(0, 1)]).tolist() == [1.0]
    assert edge_distances(np.zeros((3, 3)), np.zeros((0, 2))).shape == (0,)
    with pytest.raises(IndexError):
        edge_distances(np.zeros((3, 3)), [(0, 3)])


def test_edge_distances_agree_with_brute_force(rng):
    x = rng.normal(size=(40, 3))
    edges = rng.integers(0, 40, (100, 2))
    expected = [sum((x[i, c] - x[j, c]) ** 2 for c in range(3)) for i, j in edges]
    np.testing.assert_allclose(edge_distances(x, edges), expected, rtol=1e-13)


def test_edge_distances_equal_dense_entries_exactly(rng):
    # integer cloud with exactly zero mean: every Gram and difference term is exact
    half = rng.integers(-50, 50, (15, 3)).astype(float)
    x = np.vstack([half, -half])
    e = compute_edm(x).entries
    edges = rng.integers(0, 30, (100, 2))
    assert np.array_equal(edge_distances(x, edges), e[edges[:, 0], edges[:, 1]])
