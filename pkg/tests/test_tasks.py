"""Task generators: sign-task bounds, sparse basis simulation, dataset plumbing."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from streampoison import (
    BasisTaskSpec,
    Stream,
    coordinate_suppression_point,
    gen_basis_indices,
    gen_gaussian_task,
    gen_sign_task,
    load_csv_dataset,
    ogd_run,
    run_suppression_trial,
)
from streampoison.errors import IngestionError
from streampoison.learner import ogd_step
from streampoison.tasks import (
    NormalizationRecord,
    basis_stream_dense,
    fit_normalization,
    make_bundle,
    sign_task_error_counts,
    sign_task_random_masks,
    sign_task_stream_from_mask,
    sign_task_tight_mask,
)


# -- sign task --------------------------------------------------------------


def test_gen_sign_task_labels_match_signs():
    stream = gen_sign_task(500, seed=0)
    assert stream.X.shape == (500, 1)
    assert set(np.unique(stream.X)) <= {-1.0, 1.0}
    np.testing.assert_array_equal(stream.y, np.sign(stream.X[:, 0]).astype(np.int64))


def test_gen_sign_task_deterministic_by_seed():
    a, b = gen_sign_task(100, seed=4), gen_sign_task(100, seed=4)
    np.testing.assert_array_equal(a.X, b.X)
    assert not np.array_equal(a.X, gen_sign_task(100, seed=5).X)


def test_tight_mask_alternates_from_the_start():
    mask = sign_task_tight_mask(50, 5)
    assert mask.shape == (55,)
    assert int(mask.sum()) == 5
    np.testing.assert_array_equal(mask[:11].astype(int), [0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0])
    assert not mask[11:].any()


def test_sign_task_error_counts_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    masks = rng.random((10, 30)) < 0.3
    got = sign_task_error_counts(masks)

    def scalar(mask):
        theta, errs = 0.0, 0
        for poisoned in mask:
            if poisoned:
                theta -= 1.0 / (1.0 + np.exp(-theta))
            else:
                errs += theta <= 0.0
                theta += 1.0 / (1.0 + np.exp(theta))
        return errs

    np.testing.assert_array_equal(got, [scalar(m) for m in masks])


def test_tight_attacker_achieves_budget_plus_one():
    assert sign_task_error_counts(sign_task_tight_mask(50, 5))[0] == 6
    assert sign_task_error_counts(sign_task_tight_mask(400, 40))[0] == 41


@given(st.integers(0, 2**32 - 1))
def test_random_adversaries_never_beat_the_bound(seed):
    budget = 6
    masks = sign_task_random_masks(8, 60, budget, seed=seed)
    assert np.all(masks.sum(axis=1) == budget)
    assert np.all(sign_task_error_counts(masks) <= budget + 1)


def test_sign_stream_from_mask_agrees_with_vectorized_counts():
    mask = sign_task_tight_mask(20, 3)
    stream = sign_task_stream_from_mask(mask)
    np.testing.assert_array_equal(stream.poison, mask)
    traj = ogd_run(np.zeros(1), stream, 1.0)
    clean_at = np.flatnonzero(~mask)
    arrivals = traj.models[clean_at, 0]  # model value when each clean point arrives
    assert int(np.sum(arrivals <= 0.0)) == sign_task_error_counts(mask)[0]


# -- basis task -------------------------------------------------------------


def test_basis_spec_validation():
    with pytest.raises(ValueError):
        BasisTaskSpec(dim=10, support=20)
    with pytest.raises(ValueError):
        BasisTaskSpec(dim=10, support=2, cycle=0)


def test_gen_basis_indices_ranges_and_determinism():
    idx, signs = gen_basis_indices(50, 1000, seed=3)
    assert idx.shape == (1000,) and signs.shape == (1000,)
    assert idx.min() >= 0 and idx.max() < 50
    assert set(np.unique(signs)) == {-1, 1}
    idx2, signs2 = gen_basis_indices(50, 1000, seed=3)
    np.testing.assert_array_equal(idx, idx2)
    np.testing.assert_array_equal(signs, signs2)


def test_suppression_point_picks_ascending_nonnegative_coords():
    theta = np.array([-1.0, 0.0, 2.0, -0.5, 3.0])
    x, label = coordinate_suppression_point(theta, 2)
    assert label == 1
    want = np.zeros(5)
    want[[1, 2]] = -1.0 / np.sqrt(2.0)  # first two nonnegative, ascending
    np.testing.assert_allclose(x, want, rtol=0, atol=1e-15)
    assert np.linalg.norm(x) == pytest.approx(1.0, rel=1e-12)


def test_suppression_point_short_support_gives_zero_vector():
    theta = -np.ones(4)
    x, label = coordinate_suppression_point(theta, 2)
    np.testing.assert_array_equal(x, np.zeros(4))
    assert label == 1


def test_suppression_trial_sparse_path_matches_dense_replay():
    # equivalence gate: sparse bookkeeping vs a dense simulation, 1e-12
    spec = BasisTaskSpec(dim=25, support=6, cycle=5)
    n_clean = 93  # ends on a partial cycle: exercises the no-trailing-poison rule
    seed = 11
    trial = run_suppression_trial(spec, n_clean, seed=seed, record_models=True)

    indices, signs = gen_basis_indices(spec.dim, n_clean, seed)
    theta = np.zeros(spec.dim)
    errors = 0
    pos = 0
    while pos < n_clean:
        chunk = indices[pos:pos + spec.cycle]
        chunk_signs = signs[pos:pos + spec.cycle]
        for i, s in zip(chunk, chunk_signs):
            errors += theta[i] <= 0.0
            x = np.zeros(spec.dim)
            x[i] = float(s)
            theta = ogd_step(theta, x, int(s), 1.0)
        pos += chunk.shape[0]
        if pos < n_clean or chunk.shape[0] == spec.cycle:
            x, label = coordinate_suppression_point(theta, spec.support)
            theta = ogd_step(theta, x, label, 1.0)

    assert trial.clean_count == n_clean
    assert trial.clean_errors == errors
    np.testing.assert_allclose(trial.models[-1], theta, rtol=0, atol=1e-12)


def test_suppression_trial_fast_and_sequential_paths_agree():
    spec = BasisTaskSpec(dim=40, support=8, cycle=5)
    fast = run_suppression_trial(spec, 500, seed=2, record_models=False)
    slow = run_suppression_trial(spec, 500, seed=2, record_models=True)
    assert fast.clean_errors == slow.clean_errors
    assert fast.clean_count == slow.clean_count == 500
    assert fast.models is None
    assert len(slow.models) > 500  # clean updates plus the poison insertions


def test_suppression_drives_error_rate_up_at_small_scale():
    spec = BasisTaskSpec(dim=200, support=40, cycle=10)
    attacked = run_suppression_trial(spec, 5000, seed=0)
    assert attacked.error_rate > 0.5


def test_basis_stream_dense_layout():
    idx = np.array([0, 2, 1])
    signs = np.array([1, -1, 1])
    stream = basis_stream_dense(3, idx, signs)
    np.testing.assert_array_equal(stream.X, [[1, 0, 0], [0, 0, -1], [0, 1, 0]])
    np.testing.assert_array_equal(stream.y, [1, -1, 1])


# -- normalization ----------------------------------------------------------


def test_fit_normalization_centers_and_scales():
    X = np.array([[0.0, 5.0], [4.0, 5.0], [2.0, 5.0]])
    rec = fit_normalization(X)
    np.testing.assert_allclose(rec.mean, [2.0, 5.0])
    np.testing.assert_allclose(rec.scale, [2.0, 1.0])  # zero-deviation column keeps scale 1
    out = rec.apply(X)
    assert np.abs(out).max() <= 1.0 + 1e-12
    np.testing.assert_allclose(out[:, 1], 0.0)  # constant column maps to zero


def test_normalization_record_round_trips_through_config():
    rec = fit_normalization(np.array([[1.0, 2.0], [3.0, 8.0]]))
    cfg = rec.to_config()
    rebuilt = NormalizationRecord(np.asarray(cfg["mean"]), np.asarray(cfg["scale"]))
    X = np.array([[2.0, 4.0]])
    np.testing.assert_allclose(rebuilt.apply(X), rec.apply(X), rtol=0, atol=0)


# -- bundles ----------------------------------------------------------------


def test_make_bundle_fraction_and_integer_splits():
    X = np.arange(40, dtype=float).reshape(20, 2)
    y = np.array([1, -1] * 10)
    frac = make_bundle(X, y, (0.2, 0.6, 0.2), seed=0)
    assert frac.sizes() == {"init": 4, "train": 12, "test": 4}
    ints = make_bundle(X, y, (5, 10, 5), seed=0)
    assert ints.sizes() == {"init": 5, "train": 10, "test": 5}
    with pytest.raises(IngestionError):
        make_bundle(X, y, (10, 10, 10), seed=0)


def test_make_bundle_shuffles_but_preserves_rows():
    X = np.arange(20, dtype=float).reshape(10, 2)
    y = np.ones(10, dtype=np.int64)
    bundle = make_bundle(X, y, (2, 6, 2), seed=1)
    recovered = np.concatenate([bundle.init.X, bundle.train.X, bundle.test.X])
    # normalization is affine; undo it before comparing row sets
    raw = recovered * bundle.normalization.scale + bundle.normalization.mean
    assert sorted(map(tuple, raw.tolist())) == sorted(map(tuple, X.tolist()))


def test_make_bundle_deterministic_by_seed():
    X = np.random.default_rng(0).normal(size=(30, 3))
    y = np.random.default_rng(1).choice([-1, 1], size=30).astype(np.int64)
    a = make_bundle(X, y, (0.2, 0.6, 0.2), seed=9)
    b = make_bundle(X, y, (0.2, 0.6, 0.2), seed=9)
    np.testing.assert_array_equal(a.train.X, b.train.X)
    np.testing.assert_array_equal(a.test.y, b.test.y)


def test_gen_gaussian_task_shape_and_separation():
    bundle = gen_gaussian_task(2, 6.0, 1.0, 600, seed=7)
    assert bundle.sizes() == {"init": 120, "train": 360, "test": 120}
    assert bundle.seed == 7
    assert bundle.dim == 2
    y = np.concatenate([bundle.init.y, bundle.train.y, bundle.test.y])
    assert set(np.unique(y)) == {-1, 1}
    manifest = bundle.to_manifest()
    assert manifest["sizes"] == bundle.sizes()


# -- CSV loading ------------------------------------------------------------


def write_csv(path, text):
    path.write_text(text)
    return str(path)


def test_load_csv_with_header_and_named_label(tmp_path):
    p = write_csv(tmp_path / "d.csv", "a,b,label\n1.0,2.0,1\n3.0,4.0,-1\n5.0,6.0,1\n7.0,8.0,-1\n")
    bundle = load_csv_dataset(p, "label", (1, 2, 1), seed=0)
    assert bundle.sizes() == {"init": 1, "train": 2, "test": 1}
    assert bundle.dim == 2


def test_load_csv_headerless_with_index_label(tmp_path):
    p = write_csv(tmp_path / "d.csv", "1.0,2.0,1\n3.0,4.0,-1\n5.0,6.0,1\n7.0,8.0,-1\n")
    bundle = load_csv_dataset(p, -1, (1, 2, 1), seed=0)
    assert bundle.dim == 2


def test_load_csv_remaps_binary_labels(tmp_path):
    p = write_csv(tmp_path / "d.csv", "x,y,label\n1,2,0\n3,4,1\n5,6,0\n7,8,1\n")
    bundle = load_csv_dataset(p, "label", (1, 2, 1), seed=0)
    labels = np.concatenate([bundle.init.y, bundle.train.y, bundle.test.y])
    assert set(np.unique(labels)) == {-1, 1}


def test_load_csv_normalizes_features(tmp_path):
    p = write_csv(tmp_path / "d.csv", "a,label\n0.0,1\n10.0,-1\n20.0,1\n30.0,-1\n")
    bundle = load_csv_dataset(p, "label", (1, 2, 1), seed=0)
    X = np.concatenate([bundle.init.X, bundle.train.X, bundle.test.X])
    assert abs(X.mean()) < 1e-12
    assert np.abs(X).max() <= 1.0 + 1e-12


def test_load_csv_reports_row_and_column_on_bad_float(tmp_path):
    p = write_csv(tmp_path / "d.csv", "a,b,label\n1.0,2.0,1\n3.0,oops,-1\n")
    with pytest.raises(IngestionError) as err:
        load_csv_dataset(p, "label", (0.25, 0.5, 0.25), seed=0)
    msg = str(err.value)
    assert "row" in msg and "column" in msg


def test_load_csv_rejects_ragged_rows(tmp_path):
    p = write_csv(tmp_path / "d.csv", "a,b,label\n1.0,2.0,1\n3.0,-1\n")
    with pytest.raises(IngestionError):
        load_csv_dataset(p, "label", (0.25, 0.5, 0.25), seed=0)


def test_load_csv_rejects_unknown_label_alphabet(tmp_path):
    p = write_csv(tmp_path / "d.csv", "a,label\n1.0,2\n2.0,3\n")
    with pytest.raises(IngestionError):
        load_csv_dataset(p, "label", (0.25, 0.5, 0.25), seed=0)


def test_load_csv_missing_label_column(tmp_path):
    p = write_csv(tmp_path / "d.csv", "a,b\n1.0,2.0\n")
    with pytest.raises(IngestionError):
        load_csv_dataset(p, "label", (0.25, 0.5, 0.25), seed=0)
