"""Feasible-set membership, projections against grid oracles, serialization."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from streampoison import (
    CentroidDefense,
    CentroidStats,
    NormBallDefense,
    SlabDefense,
    Stream,
    calibrate_threshold,
    defense_from_config,
    fit_centroid_stats,
    make_defense,
    ogd_run,
)
from streampoison.defenses import (
    LabelingOracleDefense,
    linear_threshold_oracle,
    project_nearest_batch,
)
from streampoison.errors import UnsupportedDefenseError

STATS = CentroidStats(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))


def all_kinds():
    return [
        NormBallDefense(radius=4.0),
        CentroidDefense.from_stats(STATS, radius=4.0, threshold=2.0),
        SlabDefense.from_stats(STATS, radius=4.0, threshold=1.5),
        LabelingOracleDefense(radius=4.0, label_fn=linear_threshold_oracle(np.array([1.0, 0.0]))),
    ]


# -- stats ------------------------------------------------------------------


def test_centroid_stats_axis_and_lookup():
    np.testing.assert_array_equal(STATS.axis, [2.0, 0.0])
    np.testing.assert_array_equal(STATS.centroid(1), [1.0, 0.0])
    np.testing.assert_array_equal(STATS.centroid(-1), [-1.0, 0.0])


def test_fit_centroid_stats_matches_class_means():
    X = np.array([[1.0, 0.0], [3.0, 2.0], [-1.0, 1.0], [-3.0, -1.0]])
    y = np.array([1, 1, -1, -1])
    stats = fit_centroid_stats(X, y)
    np.testing.assert_allclose(stats.centroid_pos, [2.0, 1.0])
    np.testing.assert_allclose(stats.centroid_neg, [-2.0, 0.0])


def test_fit_centroid_stats_needs_both_labels():
    X = np.ones((3, 2))
    y = np.array([1, 1, 1])
    with pytest.raises(ValueError):
        fit_centroid_stats(X, y)


# -- membership -------------------------------------------------------------


def test_norm_ball_boundary_is_inclusive():
    d = NormBallDefense(radius=2.0)
    assert d.contains(np.array([2.0, 0.0]), 1)
    assert d.contains(np.array([2.0 * (1 + 1e-13), 0.0]), 1)  # inside the round-off slack
    assert not d.contains(np.array([2.002, 0.0]), 1)


@given(hnp.arrays(np.float64, (3,), elements=st.floats(-10, 10)).filter(lambda v: np.linalg.norm(v) > 1e-6))
def test_norm_boundary_slack_absorbs_rescaling_roundoff(x):
    # scaling any direction to land exactly on the sphere must stay feasible
    d = NormBallDefense(radius=3.0)
    scaled = x * (3.0 / np.linalg.norm(x))
    assert d.contains(scaled, 1)


def test_centroid_membership_geometry():
    d = CentroidDefense.from_stats(STATS, radius=10.0, threshold=2.0)
    assert d.contains(np.array([2.5, 0.0]), 1)       # dist to mu+ is 1.5
    assert not d.contains(np.array([2.5, 0.0]), -1)  # dist to mu- is 3.5
    assert d.contains(np.array([1.0, 2.0]), 1)       # boundary: dist exactly 2
    assert not d.contains(np.array([1.0, 2.1]), 1)


def test_centroid_respects_norm_cap():
    d = CentroidDefense.from_stats(CentroidStats(np.array([5.0, 0.0]), np.array([-5.0, 0.0])),
                                   radius=3.0, threshold=4.0)
    # within threshold of mu+ but outside the ball
    assert not d.contains(np.array([4.0, 0.0]), 1)


def test_slab_membership_geometry():
    d = SlabDefense.from_stats(STATS, radius=10.0, threshold=1.0)
    # axis is [2, 0]; score for (x, +1) is |2 * (x0 - 1)|
    assert d.contains(np.array([1.4, 3.0]), 1)
    assert d.contains(np.array([1.5, 3.0]), 1)       # boundary: score exactly 1
    assert not d.contains(np.array([1.6, 3.0]), 1)
    # same x under the other label measures from mu-
    assert not d.contains(np.array([1.4, 3.0]), -1)


def test_oracle_membership_requires_label_agreement():
    d = LabelingOracleDefense(radius=5.0, label_fn=linear_threshold_oracle(np.array([1.0, 0.0])))
    assert d.contains(np.array([2.0, 1.0]), 1)
    assert not d.contains(np.array([2.0, 1.0]), -1)
    assert d.contains(np.array([-2.0, 1.0]), -1)
    assert not d.contains(np.array([6.0, 0.0]), 1)  # outside the ball


def test_one_sided_membership_covers_label_flip():
    stats = CentroidStats(np.array([1.0, 0.0]), np.array([5.0, 5.0]))
    d = CentroidDefense.from_stats(stats, radius=20.0, threshold=0.5)
    assert d.one_sided_contains(np.array([1.1, 0.0]))    # direct: near mu+
    assert d.one_sided_contains(np.array([-5.0, -5.0]))  # flipped: -z lands on mu-
    assert not d.one_sided_contains(np.array([5.0, 5.0]))
    assert not d.one_sided_contains(np.array([0.0, 9.0]))


def test_accept_mask_matches_scalar_contains(rng):
    X = rng.normal(scale=2.0, size=(200, 2))
    y = rng.choice([-1, 1], size=200).astype(np.int64)
    for d in all_kinds():
        mask = d.accept_mask(X, y)
        want = np.array([d.contains(x, int(lbl)) for x, lbl in zip(X, y)])
        np.testing.assert_array_equal(mask, want)


# -- calibration ------------------------------------------------------------


def test_calibrate_threshold_frozen_values():
    sc = np.array([5.0, 1.0, 3.0, 2.0, 4.0])
    assert calibrate_threshold(sc, percentile=50) == 3.0
    assert calibrate_threshold(sc, percentile=100) == 5.0
    assert calibrate_threshold(sc, retention=0.8) == 4.0
    assert calibrate_threshold(sc, percentile=1e-9) == 1.0  # clamps to the smallest score


def test_calibrate_threshold_needs_exactly_one_mode():
    sc = np.array([1.0, 2.0])
    with pytest.raises(ValueError):
        calibrate_threshold(sc)
    with pytest.raises(ValueError):
        calibrate_threshold(sc, percentile=50, retention=0.5)


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=40),
       st.floats(1.0, 100.0), st.floats(1.0, 100.0))
def test_calibrate_threshold_monotone_in_percentile(scores, p1, p2):
    sc = np.asarray(scores)
    lo, hi = sorted((p1, p2))
    assert calibrate_threshold(sc, percentile=lo) <= calibrate_threshold(sc, percentile=hi)


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=40),
       st.floats(0.05, 1.0))
def test_calibrate_threshold_retention_guarantee(scores, keep):
    sc = np.asarray(scores)
    tau = calibrate_threshold(sc, retention=keep)
    assert np.mean(sc <= tau) >= keep - 1e-12


# -- projection vs grid oracle ----------------------------------------------


def grid_best_scale(defense, x, y, norm_cap, n_grid=100_001):
    """Dense scan over c in (0, cap]: feasible c closest to 1, or None."""
    cap = min(norm_cap, defense.radius) / np.linalg.norm(x)
    cs = np.linspace(0.0, cap, n_grid)[1:]
    best = None
    for c in cs:
        ok = defense.contains(c * x, y) or defense.contains(-c * x, -y)
        if ok and (best is None or abs(c - 1.0) < abs(best - 1.0)):
            best = float(c)
    return best, cap / (n_grid - 1)


@pytest.mark.parametrize("kind_idx", range(4))
def test_project_direction_matches_grid_oracle(kind_idx, rng):
    defense = all_kinds()[kind_idx]
    hits = 0
    for _ in range(8):
        x = rng.normal(size=2)
        y = int(rng.choice([-1, 1]))
        got = defense.project_direction(x, y, norm_cap=4.0)
        want, spacing = grid_best_scale(defense, x, y, norm_cap=4.0, n_grid=20_001)
        if want is None:
            assert got is None
            continue
        hits += 1
        assert got is not None
        # oracle-defense scans a 4096-point grid internally; allow its spacing
        tol = max(2 * spacing, 2 * (4.0 / np.linalg.norm(x)) / 4096)
        assert abs(got.scale - want) <= tol
        assert defense.contains(got.point, got.label)
        expected_point = (-got.scale) * x if got.flipped else got.scale * x
        np.testing.assert_allclose(got.point, expected_point, rtol=0, atol=1e-12)
    assert hits > 0  # the sample must exercise the feasible branch


def test_project_direction_prefer_largest():
    d = NormBallDefense(radius=3.0)
    got = d.project_direction(np.array([1.0, 0.0]), 1, norm_cap=10.0, prefer="largest")
    assert got.scale == pytest.approx(3.0, rel=1e-12)
    closest = d.project_direction(np.array([1.0, 0.0]), 1, norm_cap=10.0)
    assert closest.scale == pytest.approx(1.0, rel=1e-12)


def test_project_direction_infeasible_returns_none():
    # slab band far from the origin-aligned direction
    stats = CentroidStats(np.array([0.0, 10.0]), np.array([0.0, -10.0]))
    d = SlabDefense.from_stats(stats, radius=20.0, threshold=0.5)
    # x along e2: slab score for (c*x, +1) is |20 * (c*x1 - 10)|; needs c near 10/x1
    assert d.project_direction(np.array([1.0, 0.0]), 1, norm_cap=20.0) is None


def test_project_direction_rejects_zero_vector():
    with pytest.raises(ValueError):
        NormBallDefense(3.0).project_direction(np.zeros(2), 1, norm_cap=1.0)


def test_project_nearest_norm_ball_closed_form():
    d = NormBallDefense(radius=2.0)
    x = np.array([3.0, 4.0])
    got = d.project_nearest(x, 1)
    np.testing.assert_allclose(got, x * (2.0 / 5.0), rtol=1e-12)
    inside = np.array([0.5, 0.5])
    np.testing.assert_allclose(d.project_nearest(inside, 1), inside, rtol=0, atol=0)


def test_project_nearest_lands_in_set_or_none(rng):
    for d in all_kinds()[:3]:
        for _ in range(10):
            x = rng.normal(scale=3.0, size=2)
            y = int(rng.choice([-1, 1]))
            got = d.project_nearest(x, y)
            if got is not None:
                assert d.contains(got, y)
                if d.contains(x, y):
                    np.testing.assert_allclose(got, x, rtol=0, atol=1e-12)


def test_project_nearest_empty_set_is_none():
    stats = CentroidStats(np.array([100.0, 0.0]), np.array([-100.0, 0.0]))
    d = CentroidDefense.from_stats(stats, radius=5.0, threshold=1.0)
    assert d.project_nearest(np.array([1.0, 0.0]), 1) is None


def test_project_nearest_batch_matches_scalar(rng):
    X = rng.normal(scale=3.0, size=(30, 2))
    for d in all_kinds()[:3]:
        P, ok = project_nearest_batch(d, X, 1)
        for i in range(X.shape[0]):
            want = d.project_nearest(X[i], 1)
            assert ok[i] == (want is not None)
            if want is not None:
                np.testing.assert_allclose(P[i], want, rtol=0, atol=1e-9)


# -- filtering --------------------------------------------------------------


def test_filtered_run_is_inert_on_feasible_stream(rng):
    # every example feasible: the defended run must be bit-identical to undefended
    X = rng.normal(scale=0.5, size=(50, 2))
    y = rng.choice([-1, 1], size=50).astype(np.int64)
    stream = Stream(X, y)
    generous = NormBallDefense(radius=1e6)
    defended = ogd_run(np.zeros(2), stream, 0.2, defense=generous)
    plain = ogd_run(np.zeros(2), stream, 0.2)
    assert defended.accepted.all()
    assert defended.final.tobytes() == plain.final.tobytes()
    assert defended.models.tobytes() == plain.models.tobytes()


def test_filtered_run_skips_infeasible_without_update():
    X = np.array([[1.0, 0.0], [50.0, 0.0], [0.0, 1.0]])
    y = np.array([1, 1, -1])
    d = NormBallDefense(radius=2.0)
    traj = ogd_run(np.zeros(2), Stream(X, y), 0.5, defense=d)
    np.testing.assert_array_equal(traj.accepted, [True, False, True])
    np.testing.assert_array_equal(traj.models[1], traj.models[2])  # no movement on the skip
    kept = Stream(X[[0, 2]], y[[0, 2]])
    np.testing.assert_array_equal(traj.final, ogd_run(np.zeros(2), kept, 0.5).final)


# -- serialization ----------------------------------------------------------


def test_config_keys_and_round_trip(rng):
    X = rng.normal(size=(40, 2))
    y = rng.choice([-1, 1], size=40).astype(np.int64)
    for d in all_kinds()[:3]:
        cfg = d.to_config()
        assert set(cfg) == {"kind", "R", "tau", "mu_plus", "mu_minus"}
        json.dumps(cfg)  # must be JSON-serializable as-is
        rebuilt = defense_from_config(json.loads(json.dumps(cfg)))
        np.testing.assert_array_equal(rebuilt.accept_mask(X, y), d.accept_mask(X, y))


def test_norm_ball_config_has_null_stats_fields():
    cfg = NormBallDefense(radius=2.5).to_config()
    assert cfg == {"kind": "l2", "R": 2.5, "tau": None, "mu_plus": None, "mu_minus": None}


def test_oracle_defense_not_serializable():
    d = LabelingOracleDefense(radius=1.0, label_fn=linear_threshold_oracle(np.array([1.0])))
    with pytest.raises(UnsupportedDefenseError):
        d.to_config()
    with pytest.raises(UnsupportedDefenseError):
        defense_from_config({"kind": "oracle", "R": 1.0})


def test_make_defense_dispatch():
    assert isinstance(make_defense("l2", radius=1.0), NormBallDefense)
    with pytest.raises(ValueError):
        make_defense("voting", radius=1.0)
