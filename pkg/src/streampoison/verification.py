"""Self-contained verification suites behind the `verify` CLI subcommand.

Each suite re-derives a guarantee the library claims and checks it by
simulation:

- fixed-point values: the rapid / slow / impossible single-point cases,
- rate bound: the line-steering attack converges within its certified
  insertion budget on random norm-ball instances,
- sign-task bound: no adversary causes more clean errors than insertions
  (plus one) on the 1-D sign task,
- suppression outcome: the coordinate-suppression attacker forces >= 50%
  clean error at full scale on the basis task.

`constructed_cells` builds the small planar geometries whose regime verdicts
are provable by hand; the consistency suite runs every attack on them and
checks the verdicts against the empirical outcome.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_rng
from .attacks import AttackConfig, SimplisticAttack, make_attack
from .defenses import CentroidDefense, NormBallDefense, SlabDefense, fit_centroid_stats
from .learner import cosine_similarity, ogd_run
from .regimes import (
    EASY,
    HARD,
    classify_centroid,
    classify_norm_ball,
    classify_slab,
    intermediate_case_report,
    rate_constant,
)
from .stream import Stream
from .tasks import (
    BasisTaskSpec,
    run_suppression_trial,
    sign_task_error_counts,
    sign_task_random_masks,
    sign_task_tight_mask,
)


@dataclass
class VerificationResult:
    name: str
    ok: bool
    lines: list[str] = field(default_factory=list)
    seconds: float = 0.0

    def report(self) -> str:
        head = f"[{'PASS' if self.ok else 'FAIL'}] {self.name} ({self.seconds:.2f}s)"
        return "\n".join([head] + [f"  {ln}" for ln in self.lines])


def fixed_point_values_suite() -> VerificationResult:
    """Rapid / slow / impossible single-point cases with their exact values."""
    t0 = time.perf_counter()
    report = intermediate_case_report()
    return VerificationResult("fixed-point cases", report.ok, report.lines(),
                              time.perf_counter() - t0)


def _random_instance(rng) -> tuple:
    """One norm-ball steering instance satisfying the rate-bound premise.

    Clean points are labeled consistently with the target model, so the clean
    reference model never strays past the target norm; the rare draw that
    still violates dist0 <= ||target|| is redrawn (deterministically from the
    same generator), falling back to an empty clean stream whose distance
    equals the target norm exactly.
    """
    d = int(rng.integers(1, 21))
    eta = float(rng.uniform(0.05, 1.0))
    radius = float(rng.uniform(1.0, 10.0))
    lam = float(rng.uniform(0.2, 2.0))
    v = rng.normal(size=d)
    target = lam * v / np.linalg.norm(v)
    defense = NormBallDefense(radius=radius)
    for _ in range(50):
        n = int(rng.integers(0, 16))
        if n == 0:
            stream = Stream.empty(d)
        else:
            X = rng.normal(size=(n, d))
            X *= (rng.uniform(0.1, 1.0, size=n) * min(radius, lam) / np.linalg.norm(X, axis=1))[:, None]
            y = np.where(X @ target >= 0.0, 1, -1).astype(np.int64)
            stream = Stream(X, y)
        theta_clean = ogd_run(np.zeros(d), stream, eta, defense=defense,
                              record_trajectory=False).final
        dist0 = float(np.linalg.norm(theta_clean - target))
        if 0.0 < dist0 <= lam:
            return stream, defense, target, eta, lam, dist0
    return Stream.empty(d), defense, target, eta, lam, lam


def rate_bound_suite(instances: int = 100, seed=0, tolerance: float = 1e-3) -> VerificationResult:
    """The line-steering attack meets its insertion-budget certificate."""
    t0 = time.perf_counter()
    rng = as_rng(seed)
    passes = 0
    worst = 0
    for _ in range(instances):
        stream, defense, target, eta, lam, dist0 = _random_instance(rng)
        _, constant = rate_constant(eta, defense.radius, lam, dist0)
        budget = max(math.ceil(constant * math.log(lam / tolerance)), 0)
        config = AttackConfig(target=target, budget=budget, norm_cap=defense.radius,
                              learning_rate=eta, tolerance=tolerance)
        outcome = SimplisticAttack(config).run(stream, defense=defense)
        if outcome.succeeded and outcome.inserted <= budget:
            passes += 1
            worst = max(worst, outcome.inserted)
    ok = passes == instances
    lines = [f"{passes}/{instances} instances converged within ceil(C log(lambda/tol))",
             f"largest insertion count used: {worst}"]
    return VerificationResult("rate bound", ok, lines, time.perf_counter() - t0)


def sign_bound_suite(trials: int = 1000, horizon: int = 10_000,
                     budget_fraction: float = 0.1, seed=0) -> VerificationResult:
    """No insertion pattern beats budget+1 clean errors on the sign task."""
    t0 = time.perf_counter()
    budget = int(round(budget_fraction * horizon))
    tight = sign_task_error_counts(sign_task_tight_mask(horizon, budget))[0]
    random_counts = sign_task_error_counts(
        sign_task_random_masks(trials, horizon, budget, seed=seed))
    bound = budget + 1
    ok = tight <= bound and bool(np.all(random_counts <= bound))
    lines = [
        f"bound: budget+1 = {bound} clean errors over {horizon} clean arrivals",
        f"alternating attacker: {int(tight)} errors (tightness {int(tight)}/{bound})",
        f"{trials} random adversaries: max {int(random_counts.max())}, "
        f"min {int(random_counts.min())} errors",
    ]
    return VerificationResult("sign-task error bound", ok, lines, time.perf_counter() - t0)


def suppression_suite(seeds: int = 20, dim: int = 10_000, support: int = 1000,
                      n_clean: int = 1_000_000, cycle: int = 10,
                      required_rate: float = 0.5, required_passes: int = 19) -> VerificationResult:
    """The suppression attacker forces at least 50% clean error at scale."""
    t0 = time.perf_counter()
    spec = BasisTaskSpec(dim=dim, support=support, cycle=cycle)
    rates = []
    for s in range(seeds):
        rates.append(run_suppression_trial(spec, n_clean, seed=s).error_rate)
    passes = sum(r >= required_rate for r in rates)
    ok = passes >= required_passes
    lines = [
        f"{passes}/{seeds} seeds reached clean error >= {required_rate:.0%}"
        f" (need {required_passes})",
        f"error rates: min {min(rates):.4f}, max {max(rates):.4f}",
    ]
    return VerificationResult("suppression outcome", ok, lines, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# constructed planar geometries with provable verdicts


@dataclass
class ConstructedCell:
    """One hand-checkable geometry: defense, clean stream, target, verdict."""

    name: str
    kind: str
    defense: object
    stream: Stream
    target: np.ndarray
    expected: str
    stats: object = None
    tau: float | None = None
    learning_rate: float = 1.0

    def classify(self):
        theta0 = np.zeros(2)
        theta_clean = ogd_run(theta0, self.stream, self.learning_rate, defense=self.defense,
                              record_trajectory=False).final
        if self.kind == "l2":
            return classify_norm_ball(self.defense.radius, self.learning_rate, theta0,
                                      self.target, theta_clean)
        if self.kind == "centroid":
            return classify_centroid(self.stats, self.tau, theta0, self.target, theta_clean,
                                     learning_rate=self.learning_rate, radius=self.defense.radius)
        return classify_slab(self.stats, self.tau, theta0, self.target, theta_clean,
                             learning_rate=self.learning_rate, radius=self.defense.radius)


def constructed_cells() -> list[ConstructedCell]:
    """Two Hard and three Easy planar cells.

    Hard cells share centroids mu+ = [-2,0], mu- = [2,0] and a clean stream
    sitting on the centroids, so every one-sided-feasible point has a
    strictly negative first coordinate while the target points along +e1: no
    insertion sequence can ever make the first model coordinate positive.
    Easy cells start from an empty clean stream (reference model zero), so
    the premise distance equals the target norm and the certified budget
    applies as stated.
    """
    target = np.array([1.0, 0.0])
    mu_hard = np.array([[-2.0, 0.0], [2.0, 0.0]])
    hard_stream = Stream(np.concatenate([mu_hard, mu_hard]),
                         np.array([1, -1, 1, -1], dtype=np.int64))
    hard_stats = fit_centroid_stats(hard_stream.X, hard_stream.y)
    mu_easy = np.array([[2.0, 0.0], [-2.0, 0.0]])
    easy_centroid_stats = fit_centroid_stats(mu_easy, np.array([1, -1], dtype=np.int64))
    mu_slab = np.array([[1.0, 0.0], [-1.0, 0.0]])
    easy_slab_stats = fit_centroid_stats(mu_slab, np.array([1, -1], dtype=np.int64))
    empty = Stream.empty(2)
    return [
        ConstructedCell("centroid-hard", "centroid",
                        CentroidDefense.from_stats(hard_stats, radius=5.0, threshold=1.5),
                        hard_stream, target, HARD, stats=hard_stats, tau=1.5),
        ConstructedCell("slab-hard", "slab",
                        SlabDefense.from_stats(hard_stats, radius=5.0, threshold=2.0),
                        hard_stream, target, HARD, stats=hard_stats, tau=2.0),
        ConstructedCell("l2-easy", "l2", NormBallDefense(radius=10.0),
                        empty, target, EASY),
        ConstructedCell("centroid-easy", "centroid",
                        CentroidDefense.from_stats(easy_centroid_stats, radius=10.0, threshold=3.0),
                        empty, target, EASY, stats=easy_centroid_stats, tau=3.0),
        ConstructedCell("slab-easy", "slab",
                        SlabDefense.from_stats(easy_slab_stats, radius=10.0, threshold=3.0),
                        empty, target, EASY, stats=easy_slab_stats, tau=3.0),
    ]


def slab_hard_retention_cell(noise: float = 0.3, n: int = 200, seed=0):
    """A slab-Hard geometry whose Hard band keeps most clean points.

    Clean points cluster near the centroids with small axis spread, so their
    slab scores sit far below the blocking offset b = 8: thresholds that
    retain 70%+ of the clean stream still fall inside the Hard range.
    Returns (defense template stats, clean stream, target, theta0).
    """
    rng = as_rng(seed)
    half = n // 2
    X = np.concatenate([
        np.array([-2.0, 0.0]) + noise * rng.normal(size=(half, 2)),
        np.array([2.0, 0.0]) + noise * rng.normal(size=(n - half, 2)),
    ])
    y = np.concatenate([np.ones(half, dtype=np.int64), -np.ones(n - half, dtype=np.int64)])
    stats = fit_centroid_stats(X, y)
    return stats, Stream(X, y), np.array([1.0, 0.0]), np.zeros(2)


def consistency_suite(budget: int = 10_000, tolerance: float = 1e-3,
                      wk_ascent_steps: int = 25, seed=0) -> VerificationResult:
    """Verdicts vs empirical attack outcomes on the constructed cells.

    Hard cells must hold every attack to a negative cosine at a 10^4
    insertion budget; Easy cells must let the line-steering attack reach
    cosine >= 0.99 within the certified insertion budget at unit rate.
    """
    t0 = time.perf_counter()
    lines = []
    ok = True
    theta0 = np.zeros(2)
    for cell in constructed_cells():
        verdict = cell.classify()
        if verdict.kind != cell.expected:
            ok = False
            lines.append(f"{cell.name}: classified {verdict.kind}, expected {cell.expected}")
            continue
        if cell.expected == HARD:
            for name in ("simplistic", "greedy", "semi-online-wk", "concentrated"):
                config = AttackConfig(target=cell.target, budget=budget,
                                      norm_cap=cell.defense.radius, learning_rate=1.0,
                                      tolerance=tolerance)
                extras = {}
                if name == "greedy":
                    extras = {"seed": seed, "restarts": 2, "descent_steps": 25}
                elif name == "semi-online-wk":
                    extras = {"seed": seed, "validation": cell.stream,
                              "ascent_steps": wk_ascent_steps}
                elif name == "concentrated":
                    extras = {"seed": seed, "random_orders": 10}
                attack = make_attack(name, config, **extras)
                outcome = attack.run(cell.stream, defense=cell.defense, theta0=theta0,
                                     rng=np.random.default_rng(seed))
                cos = cosine_similarity(outcome.final_model, cell.target)
                good = cos < 0.0 and not outcome.succeeded
                ok = ok and good
                lines.append(f"{cell.name} / {name}: cos {cos:+.4f} "
                             f"{'ok' if good else 'FAIL'}")
        else:
            step_budget = max(math.ceil(verdict.constant
                                        * math.log(float(np.linalg.norm(cell.target)) / tolerance)), 1)
            config = AttackConfig(target=cell.target, budget=step_budget,
                                  norm_cap=cell.defense.radius, learning_rate=1.0,
                                  tolerance=tolerance)
            outcome = SimplisticAttack(config).run(cell.stream, defense=cell.defense,
                                                   theta0=theta0)
            cos = cosine_similarity(outcome.final_model, cell.target)
            good = outcome.succeeded and cos >= 0.99
            ok = ok and good
            lines.append(f"{cell.name}: cos {cos:+.6f} in {outcome.inserted}"
                         f"/{step_budget} insertions {'ok' if good else 'FAIL'}")
    return VerificationResult("regime consistency", ok, lines, time.perf_counter() - t0)


def run_suites(quick: bool = False) -> list[VerificationResult]:
    """All verification suites; quick mode shrinks the statistical scales."""
    results = [fixed_point_values_suite()]
    if quick:
        results.append(rate_bound_suite(instances=20))
        results.append(sign_bound_suite(trials=50, horizon=2000))
        results.append(consistency_suite(budget=2000))
        results.append(suppression_suite(seeds=2, dim=1000, support=100,
                                         n_clean=50_000, required_passes=2))
    else:
        results.append(rate_bound_suite())
        results.append(sign_bound_suite())
        results.append(consistency_suite())
        results.append(suppression_suite())
    return results
