"""Poisoning attack engines.

Semi-online attackers see a fixed clean stream, append up to ``budget``
points at its end, and try to steer the learner's final model toward a chosen
target; every appended point must lie inside the active defense.
``fully_online_drive`` instead builds a stream step by step and invokes a
single-point attacker at chosen positions while clean examples arrive in
between.

All engines are deterministic given their seed/rng and never mutate the
streams they are handed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import as_rng, as_vector, check_positive
from .errors import AttackError, UndefinedMetricError
from .defenses import Defense, NormBallDefense, _FittedDefense, project_nearest_batch
from .learner import cosine_similarity, logistic_loss, ogd_run, sigmoid
from .stream import Stream

# ---------------------------------------------------------------------------
# scalar root finding for the step-scale equation


def _mode_constant() -> float:
    """Root u* of e^u (u - 1) = 1; gamma * sigmoid(-a*gamma) peaks at u*/a."""
    lo, hi = 1.0, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.exp(mid) * (mid - 1.0) - 1.0 < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_MODE_U = _mode_constant()


def _g(scale: float, alignment: float) -> float:
    # scale / (1 + exp(alignment * scale)), computed through the stable sigmoid
    return scale * sigmoid(-alignment * scale)


def solve_step_scale(
    alignment: float,
    learning_rate: float,
    scale_max: float,
    tol: float = 1e-10,
) -> float | None:
    """Smallest root of g(c) = c / (1 + exp(alignment * c)) = 1/learning_rate.

    Searches c in (0, scale_max]. g grows from 0; for alignment <= 0 it is
    monotone increasing, otherwise it peaks at u*/alignment and decays, so the
    smallest root always lies on the increasing branch and bracketed bisection
    to absolute tolerance ``tol`` finds it. Returns None when g stays below
    the level everywhere in range.
    """
    check_positive(learning_rate, "learning_rate")
    check_positive(scale_max, "scale_max")
    level = 1.0 / learning_rate
    hi = scale_max if alignment <= 0 else min(scale_max, _MODE_U / alignment)
    if _g(hi, alignment) < level:
        return None
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _g(mid, alignment) < level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# configuration and outcome types


@dataclass
class AttackConfig:
    """Shared attacker knowledge: the target model and the learner's settings.

    ``norm_cap`` is the largest L2 norm the attacker will give any inserted
    point (on top of whatever the defense allows); ``tolerance`` is the
    distance at which the target counts as reached.
    """

    target: np.ndarray
    budget: int
    norm_cap: float
    learning_rate: float
    tolerance: float = 1e-3

    def __post_init__(self) -> None:
        self.target = as_vector(self.target, name="target")
        if int(self.budget) != self.budget or self.budget < 0:
            raise ValueError(f"budget must be a non-negative integer, got {self.budget}")
        self.budget = int(self.budget)
        check_positive(self.norm_cap, "norm_cap")
        check_positive(self.learning_rate, "learning_rate")
        check_positive(self.tolerance, "tolerance")

    @property
    def target_norm(self) -> float:
        return float(np.linalg.norm(self.target))


@dataclass
class AttackTraceStep:
    """One inserted point and the state that produced it."""

    index: int
    x: np.ndarray
    label: int
    dist_to_target: float
    step_scale_root: float | None = None
    step_scale: float | None = None
    scale: float | None = None
    flipped: bool | None = None


@dataclass
class AttackOutcome:
    """Full result of an attack run over one stream."""

    stream: Stream
    inserted: int
    final_model: np.ndarray
    succeeded: bool
    step_cap: float | None
    trace: list[AttackTraceStep] = field(default_factory=list)
    diagnostic: str | None = None

    def to_config(self, include_trace: bool = False) -> dict:
        out = {
            "inserted": self.inserted,
            "succeeded": bool(self.succeeded),
            "final_model": self.final_model.tolist(),
            "step_cap": self.step_cap,
            "diagnostic": self.diagnostic,
        }
        if include_trace:
            out["trace"] = [
                {
                    "index": s.index,
                    "x": s.x.tolist(),
                    "label": s.label,
                    "dist_to_target": s.dist_to_target,
                    "step_scale_root": s.step_scale_root,
                    "step_scale": s.step_scale,
                    "scale": s.scale,
                    "flipped": s.flipped,
                }
                for s in self.trace
            ]
        return out


def _as_defense(defense, norm_cap: float) -> Defense:
    """Attacks always reason against some feasible set; default to the norm cap."""
    return defense if defense is not None else NormBallDefense(radius=norm_cap)


def _update(theta: np.ndarray, x: np.ndarray, label: int, eta: float) -> np.ndarray:
    z = label * float(theta @ x)
    return theta + (eta * label * sigmoid(-z)) * x


def _random_feasible(defense: Defense, dim: int, norm_cap: float, label: int, rng, tries: int = 200):
    """Rejection-sample one feasible point with the given label, or None."""
    cap = min(float(defense.radius), norm_cap)
    for _ in range(tries):
        v = rng.normal(size=dim)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            continue
        z = (cap * rng.uniform() ** (1.0 / dim) / nv) * v
        if defense.contains(z, label):
            return z
    return None


class _SemiOnlineAttack:
    """Append-at-end attacks share the clean prefix run and the outcome shape."""

    name = "base"

    def __init__(self, config: AttackConfig):
        self.config = config

    def _clone_with_config(self, config: AttackConfig):
        raise NotImplementedError

    def run(self, stream: Stream, defense=None, theta0=None, rng=None) -> AttackOutcome:
        raise NotImplementedError

    def single_point(self, theta, defense=None, rng=None):
        """Budget-1 invocation from an arbitrary model state, for the fully-online driver.

        Runs the attack with the current model as the initial one, an empty
        clean suffix and budget 1; returns the single proposed (x, label) or
        None when nothing feasible was inserted.
        """
        theta = as_vector(theta, name="theta")
        clone = self._clone_with_config(replace(self.config, budget=1))
        out = clone.run(Stream.empty(theta.shape[0]), defense=defense, theta0=theta, rng=rng)
        if out.inserted >= 1:
            mask = out.stream.poison
            return out.stream.X[mask][0], int(out.stream.y[mask][0])
        return None

    def _start(self, stream: Stream, defense, theta0):
        cfg = self.config
        if theta0 is None:
            theta0 = np.zeros(cfg.target.shape[0])
        theta0 = as_vector(theta0, dim=cfg.target.shape[0], name="theta0")
        clean = ogd_run(theta0, stream, cfg.learning_rate, defense=defense, record_trajectory=False)
        return theta0, clean.final


class SimplisticAttack(_SemiOnlineAttack):
    """Rate-optimal greedy steering along the line to the target.

    Each step scales the residual ``target - theta`` so that, if the scaled
    point survives unprojected, the next model lands exactly on the target;
    the scale is capped so the contraction argument applies, and the point is
    rescaled along its direction to stay inside the defense. Labels are +1
    before projection; the projection may flip to (-x, -1), which updates the
    learner identically.
    """

    name = "simplistic"

    def _clone_with_config(self, config: AttackConfig):
        return SimplisticAttack(config)

    def run(self, stream: Stream, defense=None, theta0=None, rng=None) -> AttackOutcome:
        cfg = self.config
        defense = _as_defense(defense, cfg.norm_cap)
        _, theta = self._start(stream, defense, theta0)
        poisoned = stream
        dist = float(np.linalg.norm(theta - cfg.target))
        if dist <= cfg.tolerance:
            return AttackOutcome(poisoned, 0, theta, True, None)

        step_cap = min(cfg.norm_cap / dist, 1.0 / cfg.learning_rate)
        trace: list[AttackTraceStep] = []
        diagnostic = None
        t = 0
        while t < cfg.budget and dist >= cfg.tolerance:
            residual = cfg.target - theta
            alignment = float(theta @ residual)
            root = solve_step_scale(alignment, cfg.learning_rate, step_cap)
            scale = root if root is not None else step_cap
            candidate = scale * residual
            proj = defense.project_direction(candidate, 1, cfg.norm_cap)
            if proj is None:
                diagnostic = f"no feasible rescaling of the candidate at step {t}"
                break
            theta = _update(theta, proj.point, proj.label, cfg.learning_rate)
            poisoned = poisoned.append(proj.point, proj.label, poison=True)
            trace.append(
                AttackTraceStep(
                    index=len(poisoned) - 1,
                    x=proj.point,
                    label=proj.label,
                    dist_to_target=dist,
                    step_scale_root=root,
                    step_scale=scale,
                    scale=proj.scale,
                    flipped=proj.flipped,
                )
            )
            dist = float(np.linalg.norm(theta - cfg.target))
            t += 1
        return AttackOutcome(poisoned, t, theta, dist <= cfg.tolerance, step_cap, trace, diagnostic)


class GreedyAttack(_SemiOnlineAttack):
    """Per-step distance minimization over the whole feasible set.

    Each step searches for the feasible (x, y) whose induced update brings
    the model closest to the target, by projected gradient descent from
    several starts; the simplistic candidate is always one of them, so a
    greedy step is never worse than a simplistic step. Stops early when no
    feasible candidate improves the distance.
    """

    name = "greedy"

    def __init__(self, config: AttackConfig, restarts: int = 3, descent_steps: int = 40, seed=None):
        super().__init__(config)
        self.restarts = restarts
        self.descent_steps = descent_steps
        self.seed = seed

    def _clone_with_config(self, config: AttackConfig):
        return GreedyAttack(config, restarts=self.restarts, descent_steps=self.descent_steps, seed=self.seed)

    # objective: squared distance to the target after updating on (x, y)
    def _objective(self, theta: np.ndarray, x: np.ndarray, label: int) -> float:
        nxt = _update(theta, x, label, self.config.learning_rate)
        delta = nxt - self.config.target
        return float(delta @ delta)

    def _objective_grad(self, theta: np.ndarray, x: np.ndarray, label: int) -> np.ndarray:
        eta = self.config.learning_rate
        z = label * float(theta @ x)
        s = sigmoid(-z)
        u = theta + (eta * label * s) * x - self.config.target
        return 2.0 * eta * s * (label * u - (1.0 - s) * float(x @ u) * theta)

    def _descend(self, theta: np.ndarray, x0: np.ndarray, label: int, defense: Defense):
        best_x, best_j = x0, self._objective(theta, x0, label)
        x, step = x0, 1.0
        for _ in range(self.descent_steps):
            grad = self._objective_grad(theta, x, label)
            gn = float(np.linalg.norm(grad))
            if gn < 1e-14:
                break
            accepted = False
            for _ in range(16):
                trial = defense.project_nearest(x - step * grad, label)
                if trial is not None:
                    j = self._objective(theta, trial, label)
                    if j < self._objective(theta, x, label) - 1e-15:
                        x, accepted = trial, True
                        if j < best_j:
                            best_x, best_j = trial, j
                        step *= 1.5
                        break
                step *= 0.5
                if step < 1e-12:
                    break
            if not accepted:
                break
        return best_x, best_j

    def _candidates(self, theta: np.ndarray, defense: Defense, step_cap: float, rng):
        cfg = self.config
        residual = cfg.target - theta
        out = []
        alignment = float(theta @ residual)
        root = solve_step_scale(alignment, cfg.learning_rate, step_cap)
        scale = root if root is not None else step_cap
        for factor in (scale, step_cap):
            if float(np.linalg.norm(residual)) == 0.0:
                break
            proj = defense.project_direction(factor * residual, 1, cfg.norm_cap)
            if proj is not None:
                out.append((proj.point, proj.label))
        if isinstance(defense, _FittedDefense):
            for label in (1, -1):
                mu = defense.stats.centroid(label)
                if defense.contains(mu, label) and float(np.linalg.norm(mu)) <= cfg.norm_cap:
                    out.append((mu.copy(), label))
        for label in (1, -1):
            for _ in range(self.restarts):
                z = _random_feasible(defense, cfg.target.shape[0], cfg.norm_cap, label, rng)
                if z is not None:
                    out.append((z, label))
        return out

    def run(self, stream: Stream, defense=None, theta0=None, rng=None) -> AttackOutcome:
        cfg = self.config
        defense = _as_defense(defense, cfg.norm_cap)
        rng = as_rng(rng if rng is not None else self.seed)
        _, theta = self._start(stream, defense, theta0)
        poisoned = stream
        dist = float(np.linalg.norm(theta - cfg.target))
        if dist <= cfg.tolerance:
            return AttackOutcome(poisoned, 0, theta, True, None)

        step_cap = min(cfg.norm_cap / dist, 1.0 / cfg.learning_rate)
        trace: list[AttackTraceStep] = []
        diagnostic = None
        t = 0
        while t < cfg.budget and dist >= cfg.tolerance:
            best = None
            for x0, label in self._candidates(theta, defense, step_cap, rng):
                j0 = self._objective(theta, x0, label)
                if best is None or j0 < best[0]:
                    best = (j0, x0, label)
                xd, jd = self._descend(theta, x0, label, defense)
                if jd < best[0]:
                    best = (jd, xd, label)
            if best is None:
                diagnostic = f"no feasible candidate at step {t}"
                break
            j_best, x_best, label_best = best
            if not j_best < dist * dist:
                diagnostic = f"no feasible candidate improves the distance at step {t}"
                break
            theta = _update(theta, x_best, label_best, cfg.learning_rate)
            poisoned = poisoned.append(x_best, label_best, poison=True)
            trace.append(AttackTraceStep(index=len(poisoned) - 1, x=x_best, label=label_best, dist_to_target=dist))
            dist = float(np.linalg.norm(theta - cfg.target))
            t += 1
        return AttackOutcome(poisoned, t, theta, dist <= cfg.tolerance, step_cap, trace, diagnostic)


class SemiOnlineWKAttack(_SemiOnlineAttack):
    """Joint gradient ascent on validation loss through the unrolled learner.

    Optimizes all ``budget`` inserted points together (labels fixed to +1 in
    the one-sided sense) to maximize the final model's loss on a clean
    validation stream, differentiating through the chain of OGD updates.
    After every ascent step each point is pulled back to the nearest
    one-sided-feasible location; backtracking keeps the objective increasing
    and the best iterate (never worse than the initialization) is returned.
    """

    name = "semi-online-wk"

    def __init__(self, config: AttackConfig, validation: Stream, ascent_steps: int = 100, seed=None):
        super().__init__(config)
        if len(validation) == 0:
            raise AttackError("validation stream must be non-empty")
        self.validation = validation
        self.ascent_steps = ascent_steps
        self.seed = seed

    def _clone_with_config(self, config: AttackConfig):
        return SemiOnlineWKAttack(config, self.validation, ascent_steps=self.ascent_steps, seed=self.seed)

    def unrolled_loss_and_grad(self, theta_start, points: np.ndarray):
        """Validation loss of the unrolled run and its gradient in the points.

        Forward: theta_{i+1} = theta_i + eta * s_i * x_i with
        s_i = sigmoid(-theta_i . x_i) (labels +1). Backward accumulates
        through d(theta')/d(theta) = I - eta s(1-s) x x^T and
        d(theta')/dx = eta (s I - s(1-s) x theta^T).
        """
        eta = self.config.learning_rate
        theta_start = as_vector(theta_start, name="theta_start")
        K, d = points.shape
        thetas = np.empty((K + 1, d))
        s = np.empty(K)
        thetas[0] = theta_start
        for i in range(K):
            s[i] = sigmoid(-float(thetas[i] @ points[i]))
            thetas[i + 1] = thetas[i] + (eta * s[i]) * points[i]
        vX, vy = self.validation.X, self.validation.y
        margins = vy * (vX @ thetas[K])
        loss = float(np.sum(np.where(margins >= 0, np.log1p(np.exp(-np.abs(margins))), -margins + np.log1p(np.exp(-np.abs(margins))))))
        # dV/dtheta_K
        g = -(vX * (vy * sigmoid(-margins))[:, None]).sum(axis=0)
        grads = np.empty_like(points)
        for i in range(K - 1, -1, -1):
            x, th, si = points[i], thetas[i], s[i]
            xg = float(x @ g)
            grads[i] = eta * (si * g - si * (1.0 - si) * xg * th)
            g = g - (eta * si * (1.0 - si) * xg) * x
        return loss, grads

    def _project_one_sided(self, defense: Defense, z: np.ndarray):
        """Nearest point of the one-sided feasible set, with its emission label."""
        best = None
        pos = defense.project_nearest(z, 1)
        if pos is not None and float(np.linalg.norm(pos)) <= self.config.norm_cap * (1 + 1e-12):
            best = (float(np.linalg.norm(pos - z)), pos, 1)
        neg = defense.project_nearest(-z, -1)
        if neg is not None and float(np.linalg.norm(neg)) <= self.config.norm_cap * (1 + 1e-12):
            cand = (float(np.linalg.norm(-neg - z)), -neg, -1)
            if best is None or cand[0] < best[0]:
                best = cand
        return best

    def _project_batch(self, defense: Defense, Z: np.ndarray):
        """Row-wise nearest one-sided-feasible points and a per-row success mask."""
        cap = self.config.norm_cap * (1 + 1e-12)
        P1, ok1 = project_nearest_batch(defense, Z, 1)
        P2r, ok2 = project_nearest_batch(defense, -Z, -1)
        P2 = -P2r
        ok1 = ok1 & (np.linalg.norm(P1, axis=1) <= cap)
        ok2 = ok2 & (np.linalg.norm(P2, axis=1) <= cap)
        d1 = np.where(ok1, np.linalg.norm(P1 - Z, axis=1), np.inf)
        d2 = np.where(ok2, np.linalg.norm(P2 - Z, axis=1), np.inf)
        out = np.where((d2 < d1)[:, None], P2, P1)
        return out, ok1 | ok2

    def _initial_points(self, theta0, stream: Stream, defense: Defense, rng):
        cfg = self.config
        sub = SimplisticAttack(cfg)
        out = sub.run(stream, defense=defense, theta0=theta0, rng=None)
        rows = [s.label * s.x for s in out.trace]  # one-sided form
        if not rows:
            for label in (1, -1):
                z = _random_feasible(defense, cfg.target.shape[0], cfg.norm_cap, label, rng)
                if z is not None:
                    rows = [label * z]
                    break
        if not rows:
            raise AttackError("no feasible initialization point for the ascent")
        reps = [rows[i % len(rows)] for i in range(cfg.budget)]
        return np.asarray(reps, dtype=np.float64)

    def run(self, stream: Stream, defense=None, theta0=None, rng=None) -> AttackOutcome:
        cfg = self.config
        defense = _as_defense(defense, cfg.norm_cap)
        rng = as_rng(rng if rng is not None else self.seed)
        _, theta = self._start(stream, defense, theta0)
        if cfg.budget == 0:
            dist = float(np.linalg.norm(theta - cfg.target))
            return AttackOutcome(stream, 0, theta, dist <= cfg.tolerance, None)

        points = self._initial_points(theta0, stream, defense, rng)
        loss, _ = self.unrolled_loss_and_grad(theta, points)
        best_points, best_loss = points.copy(), loss
        step = 1.0
        for _ in range(self.ascent_steps):
            loss, grads = self.unrolled_loss_and_grad(theta, points)
            gn = float(np.linalg.norm(grads))
            if gn < 1e-14:
                break
            improved = False
            while step >= 1e-12:
                trial, ok = self._project_batch(defense, points + step * grads)
                if ok.all():
                    trial_loss, _ = self.unrolled_loss_and_grad(theta, trial)
                    if trial_loss > loss + 1e-15:
                        points = trial
                        if trial_loss > best_loss:
                            best_points, best_loss = trial.copy(), trial_loss
                        step *= 1.5
                        improved = True
                        break
                step *= 0.5
            if not improved:
                break

        ones = np.ones(len(best_points), dtype=np.int64)
        pos_ok = defense.accept_mask(best_points, ones)
        neg_ok = defense.accept_mask(-best_points, -ones)
        rows, labs = [], []
        for i, z in enumerate(best_points):
            if pos_ok[i]:
                rows.append(z)
                labs.append(1)
            elif neg_ok[i]:
                rows.append(-z)
                labs.append(-1)
            else:  # renegade round-off: re-project, drop if still infeasible
                proj = self._project_one_sided(defense, z)
                if proj is None:
                    continue
                _, pt, lab = proj
                rows.append(lab * pt)
                labs.append(lab)
        inserted = len(rows)
        poisoned = stream.extend(np.asarray(rows), np.asarray(labs, dtype=np.int64), poison=True) if rows else stream
        final = ogd_run(np.zeros(cfg.target.shape[0]) if theta0 is None else as_vector(theta0),
                        poisoned, cfg.learning_rate, defense=defense, record_trajectory=False).final
        dist = float(np.linalg.norm(final - cfg.target))
        trace = [
            AttackTraceStep(index=len(stream) + i, x=poisoned.X[len(stream) + i],
                            label=int(poisoned.y[len(stream) + i]), dist_to_target=dist)
            for i in range(inserted)
        ]
        return AttackOutcome(poisoned, inserted, final, dist <= cfg.tolerance, None, trace,
                             diagnostic=f"validation loss {best_loss:.6g}")


class ConcentratedAttack(_SemiOnlineAttack):
    """All budget mass at one or two concentrated locations.

    Tries the label splits all-positive, half-half, and all-negative; each
    label's points sit at the feasible point of largest norm along the scaled
    residual direction for that label. For two-label splits the block is
    ordered positive-first, negative-first, and by seeded random shuffles;
    the variant whose final model has the best cosine to the target wins.
    """

    name = "concentrated"

    def __init__(self, config: AttackConfig, random_orders: int = 100, seed=None):
        super().__init__(config)
        self.random_orders = random_orders
        self.seed = seed

    def _clone_with_config(self, config: AttackConfig):
        return ConcentratedAttack(config, random_orders=self.random_orders, seed=self.seed)

    def run(self, stream: Stream, defense=None, theta0=None, rng=None) -> AttackOutcome:
        cfg = self.config
        defense = _as_defense(defense, cfg.norm_cap)
        rng = as_rng(rng if rng is not None else self.seed)
        start0, theta = self._start(stream, defense, theta0)
        dist = float(np.linalg.norm(theta - cfg.target))
        if dist <= cfg.tolerance or cfg.budget == 0:
            return AttackOutcome(stream, 0, theta, dist <= cfg.tolerance, None)

        step_cap = min(cfg.norm_cap / dist, 1.0 / cfg.learning_rate)
        residual = cfg.target - theta
        placed = {}
        for label in (1, -1):
            proj = defense.project_direction(label * step_cap * residual, label, cfg.norm_cap, prefer="largest")
            if proj is not None:
                placed[label] = (proj.point, proj.label)

        K = cfg.budget
        splits = list(dict.fromkeys([(K, 0), (K - K // 2, K // 2), (0, K)]))
        best = None  # (cos, stream, final, split, order_name)
        for n_pos, n_neg in splits:
            if (n_pos > 0 and 1 not in placed) or (n_neg > 0 and -1 not in placed):
                continue
            blocks = {1: [placed[1]] * n_pos if n_pos else [], -1: [placed[-1]] * n_neg if n_neg else []}
            orders = [("positive_first", blocks[1] + blocks[-1])]
            if n_pos and n_neg:
                orders.append(("negative_first", blocks[-1] + blocks[1]))
                base = blocks[1] + blocks[-1]
                for k in range(self.random_orders):
                    perm = rng.permutation(len(base))
                    orders.append((f"random_{k}", [base[i] for i in perm]))
            for order_name, block in orders:
                Xb = np.stack([x for x, _ in block])
                yb = np.asarray([lab for _, lab in block], dtype=np.int64)
                trial = stream.extend(Xb, yb, poison=True)
                final = ogd_run(start0, trial, cfg.learning_rate, defense=defense, record_trajectory=False).final
                try:
                    score = cosine_similarity(final, cfg.target)
                except UndefinedMetricError:
                    continue
                if best is None or score > best[0]:
                    best = (score, trial, final, (n_pos, n_neg), order_name)

        if best is None:
            return AttackOutcome(stream, 0, theta, False, step_cap,
                                 diagnostic="no feasible concentrated placement")
        score, poisoned, final, split, order_name = best
        dist = float(np.linalg.norm(final - cfg.target))
        trace = [
            AttackTraceStep(index=len(stream) + i, x=poisoned.X[len(stream) + i],
                            label=int(poisoned.y[len(stream) + i]), dist_to_target=dist)
            for i in range(len(poisoned) - len(stream))
        ]
        return AttackOutcome(poisoned, len(poisoned) - len(stream), final, dist <= cfg.tolerance,
                             step_cap, trace,
                             diagnostic=f"split={split[0]}+/{split[1]}- order={order_name} cos={score:.6g}")


# ---------------------------------------------------------------------------
# fully-online driving


@dataclass
class FullyOnlineResult:
    """Stream built by the driver plus the progressive error bookkeeping."""

    stream: Stream
    final_model: np.ndarray
    online_error: float
    clean_errors: int
    clean_count: int
    slot_index: np.ndarray
    accepted: np.ndarray
    skipped_slots: list[int]
    models: np.ndarray | None = None


def fully_online_drive(
    theta0,
    clean_source,
    positions,
    attacker,
    defense,
    horizon: int,
    learning_rate: float,
    rng=None,
    record_trajectory: bool = False,
) -> FullyOnlineResult:
    """Interleave attacker insertions into a live stream at fixed positions.

    At each step t < horizon: if t is an attack position, the attacker is
    asked for one point given the current model (a None proposal skips the
    slot and emits nothing); otherwise one clean example is drawn. The
    learner predicts on each arriving example before updating, and the online
    error is the fraction of *clean* arrivals predicted wrongly (abstentions
    count as errors). The defense filters every arrival, poison included.

    ``clean_source`` is either a Stream (iid draws with ``rng``) or a
    callable ``(t, rng) -> (x, y)``. ``attacker`` is an attack engine with
    ``single_point`` (invoked with the live model), a callable
    ``(theta, rng) -> (x, y) | None``, or None for a clean run.
    """
    theta = as_vector(theta0, name="theta0").copy()
    eta = check_positive(learning_rate, "learning_rate")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    pos_set = set(int(p) for p in positions)
    if pos_set and (min(pos_set) < 0 or max(pos_set) >= horizon):
        raise ValueError("attack positions must lie in [0, horizon)")
    rng = as_rng(rng)

    if isinstance(clean_source, Stream):
        source = clean_source

        def draw_clean(t, rng):
            i = int(rng.integers(len(source)))
            return source.X[i], int(source.y[i])
    elif callable(clean_source):
        draw_clean = clean_source
    else:
        raise TypeError("clean_source must be a Stream or a callable (t, rng) -> (x, y)")

    if attacker is None:
        propose = None
    elif hasattr(attacker, "single_point"):
        def propose(theta, rng):
            return attacker.single_point(theta, defense=defense, rng=rng)
    elif callable(attacker):
        propose = attacker
    else:
        raise TypeError("attacker must expose single_point, be callable, or be None")

    rows, labels, flags, slots, accepted = [], [], [], [], []
    models = [theta.copy()] if record_trajectory else None
    skipped: list[int] = []
    clean_errors = 0
    clean_count = 0
    for t in range(horizon):
        if t in pos_set:
            proposal = propose(theta, rng) if propose is not None else None
            if proposal is None:
                skipped.append(t)
                continue
            x, label = np.asarray(proposal[0], dtype=np.float64), int(proposal[1])
            is_poison = True
        else:
            x, label = draw_clean(t, rng)
            x = np.asarray(x, dtype=np.float64)
            label = int(label)
            is_poison = False
            clean_count += 1
            if label * float(theta @ x) <= 0.0:
                clean_errors += 1
        ok = defense is None or defense.contains(x, label)
        if ok:
            theta = _update(theta, x, label, eta)
        rows.append(x)
        labels.append(label)
        flags.append(is_poison)
        slots.append(t)
        accepted.append(ok)
        if models is not None:
            models.append(theta.copy())

    if clean_count == 0:
        raise UndefinedMetricError("no clean arrivals; online error undefined")
    dim = theta.shape[0]
    stream = Stream(np.asarray(rows).reshape(len(rows), dim), np.asarray(labels, dtype=np.int64),
                    np.asarray(flags, dtype=bool)) if rows else Stream.empty(dim)
    return FullyOnlineResult(
        stream=stream,
        final_model=theta,
        online_error=clean_errors / clean_count,
        clean_errors=clean_errors,
        clean_count=clean_count,
        slot_index=np.asarray(slots, dtype=np.int64),
        accepted=np.asarray(accepted, dtype=bool),
        skipped_slots=skipped,
        models=np.asarray(models) if models is not None else None,
    )


ATTACKS = {
    "simplistic": SimplisticAttack,
    "greedy": GreedyAttack,
    "semi-online-wk": SemiOnlineWKAttack,
    "concentrated": ConcentratedAttack,
}


def make_attack(name: str, config: AttackConfig, **kwargs) -> _SemiOnlineAttack:
    """Construct an attack engine by name (see ``ATTACKS``)."""
    key = name.replace("_", "-")
    if key not in ATTACKS:
        raise ValueError(f"unknown attack {name!r}; expected one of {sorted(ATTACKS)}")
    return ATTACKS[key](config, **kwargs)
