"""Attack engines: step-scale solver oracle, convergence, feasibility discipline."""

import numpy as np
import pytest

from conftest import mp_root_step_scale

from streampoison import (
    AttackConfig,
    CentroidDefense,
    CentroidStats,
    NormBallDefense,
    SimplisticAttack,
    SlabDefense,
    Stream,
    cosine_similarity,
    make_attack,
    solve_step_scale,
)
from streampoison.attacks import ATTACKS, ConcentratedAttack, GreedyAttack, SemiOnlineWKAttack


def easy_config(budget=23, tolerance=1e-3):
    return AttackConfig(target=np.array([1.0, 0.0]), budget=budget, norm_cap=10.0,
                        learning_rate=1.0, tolerance=tolerance)


def hard_slab_defense():
    # both slab sides block movement toward +e1 from the origin
    stats = CentroidStats(np.array([-2.0, 0.0]), np.array([2.0, 0.0]))
    return SlabDefense.from_stats(stats, radius=5.0, threshold=2.0)


# -- step-scale solver ------------------------------------------------------


def test_solve_step_scale_zero_alignment_exact_root():
    # c * sigmoid(0) = c/2 = 1 has root 2
    got = solve_step_scale(0.0, 1.0, 50.0)
    assert abs(got - 2.0) < 1e-9
    assert got == pytest.approx(1.999999999998181, abs=1e-12)  # frozen bisection output


def test_solve_step_scale_against_high_precision_root():
    got = solve_step_scale(0.25, 1.0, 10.0)
    oracle = float(mp_root_step_scale(0.25, 1.0, 2.0, 4.0))  # 3.2581064727843...
    assert abs(got - oracle) < 1e-8
    assert got == pytest.approx(3.2581064727739895, abs=1e-12)


def test_solve_step_scale_unreachable_level_is_none():
    # peak of c*sigmoid(-2c) is far below 1
    assert solve_step_scale(2.0, 1.0, 50.0) is None
    # level reachable only beyond scale_max
    assert solve_step_scale(0.0, 1.0, 1.5) is None


def test_solve_step_scale_satisfies_defining_equation():
    for alignment, eta in ((0.0, 1.0), (0.1, 1.0), (-0.5, 0.7), (0.3, 2.0)):
        c = solve_step_scale(alignment, eta, 100.0)
        assert c is not None
        lhs = c / (1.0 + np.exp(alignment * c))
        assert lhs == pytest.approx(1.0 / eta, abs=1e-8)


def test_solve_step_scale_negative_alignment_monotone_branch():
    c = solve_step_scale(-1.0, 1.0, 50.0)
    assert c is not None
    assert 0.0 < c < 2.0  # boosted sigmoid needs less scale than the neutral case


def test_solve_step_scale_validates_inputs():
    with pytest.raises(ValueError):
        solve_step_scale(0.0, 0.0, 10.0)
    with pytest.raises(ValueError):
        solve_step_scale(0.0, 1.0, -1.0)


# -- config -----------------------------------------------------------------


def test_attack_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(target=np.array([1.0]), budget=-1, norm_cap=1.0, learning_rate=1.0)
    with pytest.raises(ValueError):
        AttackConfig(target=np.array([1.0]), budget=2.5, norm_cap=1.0, learning_rate=1.0)
    with pytest.raises(ValueError):
        AttackConfig(target=np.array([1.0]), budget=1, norm_cap=0.0, learning_rate=1.0)
    cfg = AttackConfig(target=np.array([3.0, 4.0]), budget=1, norm_cap=1.0, learning_rate=1.0)
    assert cfg.target_norm == pytest.approx(5.0)


# -- line-steering attack ---------------------------------------------------


def test_simplistic_attack_reaches_target_on_open_ball():
    outcome = SimplisticAttack(easy_config()).run(Stream.empty(2), NormBallDefense(10.0))
    assert outcome.succeeded
    assert outcome.inserted == 11  # frozen: deterministic insertion count
    assert float(np.linalg.norm(outcome.final_model - [1.0, 0.0])) <= 1e-3
    assert cosine_similarity(outcome.final_model, [1.0, 0.0]) > 0.999999


def test_simplistic_attack_distance_is_monotone_decreasing():
    outcome = SimplisticAttack(easy_config()).run(Stream.empty(2), NormBallDefense(10.0))
    dists = [s.dist_to_target for s in outcome.trace]
    assert all(b < a for a, b in zip(dists, dists[1:]))


def test_simplistic_attack_respects_budget_and_caps():
    cfg = easy_config(budget=3, tolerance=1e-12)
    outcome = SimplisticAttack(cfg).run(Stream.empty(2), NormBallDefense(10.0))
    assert not outcome.succeeded
    assert outcome.inserted == 3
    poison = outcome.stream.X[outcome.stream.poison]
    assert poison.shape[0] == 3
    norms = np.linalg.norm(poison, axis=1)
    assert np.all(norms <= 10.0 * (1 + 1e-9))


def test_simplistic_attack_inserted_points_are_feasible():
    defense = CentroidDefense.from_stats(
        CentroidStats(np.array([2.0, 0.0]), np.array([-2.0, 0.0])), radius=10.0, threshold=3.0)
    outcome = SimplisticAttack(easy_config()).run(Stream.empty(2), defense)
    assert outcome.succeeded
    P, L = outcome.stream.X[outcome.stream.poison], outcome.stream.y[outcome.stream.poison]
    assert np.all(defense.accept_mask(P, L))


def test_simplistic_attack_halts_when_blocked():
    outcome = SimplisticAttack(easy_config(budget=100)).run(Stream.empty(2), hard_slab_defense())
    assert not outcome.succeeded
    assert outcome.diagnostic is not None
    assert outcome.inserted < 100  # halts early instead of burning budget


def test_simplistic_attack_preserves_clean_stream():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20, 2))
    y = rng.choice([-1, 1], size=20).astype(np.int64)
    clean = Stream(X, y)
    outcome = SimplisticAttack(easy_config(budget=40)).run(clean, NormBallDefense(10.0))
    kept = ~outcome.stream.poison
    np.testing.assert_array_equal(outcome.stream.X[kept], X)
    np.testing.assert_array_equal(outcome.stream.y[kept], y)
    assert int(outcome.stream.poison.sum()) == outcome.inserted


def test_simplistic_attack_zero_budget_changes_nothing():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(5, 2))
    y = rng.choice([-1, 1], size=5).astype(np.int64)
    outcome = SimplisticAttack(easy_config(budget=0)).run(Stream(X, y), NormBallDefense(10.0))
    assert outcome.inserted == 0
    assert not outcome.stream.poison.any()


def test_attack_outcome_to_config_shape():
    outcome = SimplisticAttack(easy_config()).run(Stream.empty(2), NormBallDefense(10.0))
    cfg = outcome.to_config()
    assert set(cfg) == {"inserted", "succeeded", "final_model", "step_cap", "diagnostic"}
    with_trace = outcome.to_config(include_trace=True)
    assert len(with_trace["trace"]) == outcome.inserted
    assert with_trace["trace"][0]["index"] == 0


# -- other engines ----------------------------------------------------------


def test_greedy_attack_reaches_target_on_open_ball():
    cfg = easy_config(budget=200, tolerance=1e-2)
    outcome = GreedyAttack(cfg, restarts=2, descent_steps=25, seed=0).run(
        Stream.empty(2), NormBallDefense(10.0))
    assert outcome.succeeded
    assert cosine_similarity(outcome.final_model, [1.0, 0.0]) > 0.99


def test_greedy_attack_deterministic_under_seed():
    cfg = easy_config(budget=30, tolerance=1e-2)
    a = GreedyAttack(cfg, restarts=2, descent_steps=25, seed=7).run(Stream.empty(2), NormBallDefense(10.0))
    b = GreedyAttack(cfg, restarts=2, descent_steps=25, seed=7).run(Stream.empty(2), NormBallDefense(10.0))
    assert a.final_model.tobytes() == b.final_model.tobytes()
    assert a.inserted == b.inserted


def test_wk_unrolled_gradient_finite_differences():
    # acceptance gate for the unrolled gradient: 1e-4 relative
    rng = np.random.default_rng(13)
    validation = Stream(rng.normal(size=(8, 2)), rng.choice([-1, 1], size=8).astype(np.int64))
    cfg = AttackConfig(target=np.array([1.0, 0.0]), budget=4, norm_cap=5.0,
                       learning_rate=0.7, tolerance=1e-3)
    attack = SemiOnlineWKAttack(cfg, validation=validation, ascent_steps=1, seed=0)
    theta0 = rng.normal(size=2)
    points = rng.normal(size=(4, 2))
    _, grads = attack.unrolled_loss_and_grad(theta0, points)

    eps = 1e-6
    fd = np.zeros_like(points)
    for i in range(points.shape[0]):
        for j in range(points.shape[1]):
            up, dn = points.copy(), points.copy()
            up[i, j] += eps
            dn[i, j] -= eps
            fd[i, j] = (attack.unrolled_loss_and_grad(theta0, up)[0]
                        - attack.unrolled_loss_and_grad(theta0, dn)[0]) / (2 * eps)
    denom = max(float(np.linalg.norm(fd)), 1e-12)
    assert float(np.linalg.norm(grads - fd)) / denom < 1e-4


def test_wk_attack_runs_and_respects_budget():
    rng = np.random.default_rng(2)
    X = np.concatenate([rng.normal(size=(15, 2)) + [2, 0], rng.normal(size=(15, 2)) - [2, 0]])
    y = np.concatenate([np.ones(15, dtype=np.int64), -np.ones(15, dtype=np.int64)])
    clean = Stream(X, y)
    cfg = AttackConfig(target=np.array([-1.0, 0.0]), budget=12, norm_cap=8.0,
                       learning_rate=0.5, tolerance=1e-6)
    outcome = SemiOnlineWKAttack(cfg, validation=clean, ascent_steps=10, seed=0).run(
        clean, NormBallDefense(8.0))
    assert outcome.inserted <= 12
    poison = outcome.stream.X[outcome.stream.poison]
    assert np.all(np.linalg.norm(poison, axis=1) <= 8.0 * (1 + 1e-9))


def test_concentrated_attack_aligns_model_on_open_ball():
    # this engine drops fixed mass points: it steers direction, not distance
    cfg = easy_config(budget=40, tolerance=1e-2)
    outcome = ConcentratedAttack(cfg, random_orders=10, seed=0).run(
        Stream.empty(2), NormBallDefense(10.0))
    assert cosine_similarity(outcome.final_model, [1.0, 0.0]) > 0.99
    assert outcome.inserted == 40


def test_hard_geometry_blocks_every_engine():
    defense = hard_slab_defense()
    target = np.array([1.0, 0.0])
    clean = Stream.empty(2)
    cfg = AttackConfig(target=target, budget=300, norm_cap=5.0, learning_rate=1.0)
    engines = [
        SimplisticAttack(cfg),
        GreedyAttack(cfg, restarts=2, descent_steps=20, seed=0),
        SemiOnlineWKAttack(cfg, validation=Stream(np.array([[1.0, 0.0]]), np.array([1])),
                           ascent_steps=10, seed=0),
        ConcentratedAttack(cfg, random_orders=5, seed=0),
    ]
    for engine in engines:
        outcome = engine.run(clean, defense)
        assert not outcome.succeeded
        if float(np.linalg.norm(outcome.final_model)) > 0:
            assert cosine_similarity(outcome.final_model, target) < 0.0


def test_attack_registry_and_name_normalization():
    assert set(ATTACKS) == {"simplistic", "greedy", "semi-online-wk", "concentrated"}
    cfg = easy_config()
    assert isinstance(make_attack("simplistic", cfg), SimplisticAttack)
    assert isinstance(
        make_attack("semi_online_wk", cfg, validation=Stream(np.array([[1.0, 0.0]]), np.array([1]))),
        SemiOnlineWKAttack,
    )
    with pytest.raises(ValueError):
        make_attack("stealth", cfg)


def test_single_point_is_feasible_and_forward():
    defense = NormBallDefense(10.0)
    attack = SimplisticAttack(easy_config())
    theta = np.zeros(2)
    got = attack.single_point(theta, defense)
    assert got is not None
    x, label = got
    assert defense.contains(x, label)
    # the induced update must move the model toward the target
    from streampoison.learner import ogd_step

    before = float(np.linalg.norm(theta - [1.0, 0.0]))
    after = float(np.linalg.norm(ogd_step(theta, x, label, 1.0) - [1.0, 0.0]))
    assert after < before
