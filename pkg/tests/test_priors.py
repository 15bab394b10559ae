import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nrdepth.exceptions import DimensionError, DomainError, InputError
from nrdepth.priors import (
    LowRankStructure,
    WeightAssignment,
    apply_score_overrides,
    build_low_rank_views,
    isometric_weights,
    low_rank_bounds,
    neighbour_edges,
    numerical_rank,
    rank_check,
    rigid_weights,
)
from nrdepth.solver.loss import all_pairs
from nrdepth.synth import make_lowrank_scene

from oracles import matmul_loop


def test_rigid_weights():
    w = rigid_weights([(0, 1), (1, 2), (0, 2)])
    assert w.weights.tolist() == [1.0, 1.0, 1.0] and w.source == "rigid"
    assert len(rigid_weights([])) == 0
    big = rigid_weights(all_pairs(448)[:100_000])
    assert len(big) == 100_000 and np.all(big.weights == 1.0)


def test_weight_assignment_validation():
    with pytest.raises(DomainError):
        WeightAssignment([(0, 1)], [1.5], "rigid")
    with pytest.raises(DomainError):
        WeightAssignment([(0, 1), (1, 0)], [1.0, 1.0], "rigid")
    with pytest.raises(DimensionError):
        WeightAssignment([(0, 1)], [1.0, 1.0], "rigid")
    with pytest.raises(DomainError):
        WeightAssignment([(0, 1)], [1.0], "psychic")


def test_isometric_345():
    pts = [(0.0, 0.0), (3.0, 4.0)]
    assert isometric_weights(pts, 5.0, [(0, 1)]).weights.tolist() == [1.0]
    assert isometric_weights(pts, 4.9, [(0, 1)]).weights.tolist() == [0.0]
    with pytest.raises(DomainError):
        isometric_weights(pts, 0.0, [(0, 1)])


def test_isometric_brute_force(rng):
    pts = rng.uniform(0, 40, (50, 2))
    edges = all_pairs(50)
    w = isometric_weights(pts, 10.0, edges).weights
    expected = [1.0 if np.hypot(*(pts[i] - pts[j])) <= 10.0 else 0.0 for i, j in edges]
    assert w.tolist() == expected
    near = neighbour_edges(pts, 10.0)
    assert {tuple(e) for e in near} == {tuple(e) for e, x in zip(edges, expected) if x}


@given(st.integers(0, 2**31 - 1))
def test_isometric_symmetric(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 30, (12, 2))
    edges = all_pairs(12)
    fwd = isometric_weights(pts, 8.0, edges).weights
    rev = isometric_weights(pts, 8.0, edges[:, ::-1]).weights
    assert np.array_equal(fwd, rev)


def test_score_overrides():
    base = rigid_weights([(0, 1), (1, 2), (0, 2)])
    out = apply_score_overrides(base, [((1, 0), 0.2)])
    assert out.weights.tolist() == [0.2, 1.0, 1.0]
    assert apply_score_overrides(base, []) is base
    with pytest.raises(KeyError):
        apply_score_overrides(base, [((0, 3), 0.5)])
    with pytest.raises(DomainError):
        apply_score_overrides(base, [((0, 1), 1.5)])


def test_score_overrides_diff_count(rng):
    base = rigid_weights(all_pairs(15)[:100])
    pick = rng.choice(100, 10, replace=False)
    out = apply_score_overrides(base, [(tuple(base.edges[i]), 0.5) for i in pick])
    assert int(np.sum(out.weights != base.weights)) == 10


def test_low_rank_views_examples(rng):
    s = LowRankStructure(np.ones((1, 3)), (np.array([[0.0], [0.0], [1.0]]),))
    np.testing.assert_array_equal(build_low_rank_views(s)[0].coords, [[0, 0, 1]] * 3)
    z = LowRankStructure(rng.normal(size=(2, 4)), (np.zeros((3, 2)),))
    np.testing.assert_array_equal(build_low_rank_views(z)[0].coords, np.zeros((4, 3)))
    r = make_lowrank_scene(2, 10, 4, seed=3)
    for m, cloud in zip(r.projections, build_low_rank_views(r)):
        np.testing.assert_allclose(cloud.coords.T, matmul_loop(m.tolist(), r.basis.tolist()), rtol=1e-13)


def test_low_rank_bounds():
    assert low_rank_bounds(1) == (3, 3)
    assert low_rank_bounds(2) == (4, 6)
    assert low_rank_bounds(7) == (8, 36)


def test_rank_check_b1():
    report = rank_check(make_lowrank_scene(1, 10, 3, seed=7))
    assert report.ok
    assert all(r <= 3 for r in report.per_pair_ranks.values()) and report.stacked_rank <= 3


def test_rank_check_identical_views(rng):
    m = rng.normal(size=(3, 2))
    report = rank_check(LowRankStructure(rng.normal(size=(2, 12)), (m, m.copy())))
    assert report.per_pair_ranks[(0, 1)] == 0


def test_rank_check_b2_monte_carlo():
    for seed in range(100):
        report = rank_check(make_lowrank_scene(2, 15, 5, seed))
        assert max(report.per_pair_ranks.values()) <= 4 and report.stacked_rank <= 6, seed


def test_rank_saturates_at_eight():
    for seed in range(10):
        report = rank_check(make_lowrank_scene(7, 40, 3, seed))
        assert max(report.per_pair_ranks.values()) <= 8


def test_rank_check_needs_two_views():
    with pytest.raises(InputError):
        rank_check(LowRankStructure(np.ones((1, 5)), (np.ones((3, 1)),)))


def test_numerical_rank():
    assert numerical_rank(np.zeros((3, 3))) == 0
    assert numerical_rank(np.diag([1.0, 1e-3, 1e-12])) == 2
    assert numerical_rank(np.diag([1.0, 1e-3, 1e-12]), tol=1e-2) == 1
