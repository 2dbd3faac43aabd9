"""Regime analysis: when is steering to a target rapid, and when impossible.

An instance (defense, learner settings, clean model, target) is classified

- ``easy``: a segment of one-sided-feasible points along the residual
  direction exists, so the line-steering attack converges geometrically; the
  verdict carries the segment and the insertion-rate constant,
- ``hard``: a halfspace contains every one-sided-feasible point but excludes
  the ray toward the target, so no insertion sequence ever reaches it; the
  verdict carries the witness halfspace,
- ``intermediate``: neither certificate applies (reachable, possibly slowly,
  or blocked for the line-steering attack only).

Certificates are executable: ``segment_feasible`` and ``halfspace_separates``
check them numerically against the defense. The fixed-single-point cases
(rapid / slow / impossible) live in ``intermediate_case_report``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_rng, as_vector, check_positive
from .attacks import solve_step_scale
from .defenses import CentroidStats, Defense, segment_radius_in_ball
from .errors import UnsupportedDefenseError
from .learner import sigmoid

EASY = "easy"
HARD = "hard"
INTERMEDIATE = "intermediate"


@dataclass
class FeasibleSegment:
    """The points {c * direction/||direction|| : 0 < c <= radius}."""

    radius: float
    direction: np.ndarray

    def __post_init__(self) -> None:
        self.direction = as_vector(self.direction, name="direction")
        check_positive(self.radius, "segment radius")
        if float(np.linalg.norm(self.direction)) == 0.0:
            raise ValueError("segment direction must be nonzero")

    def point(self, c: float) -> np.ndarray:
        return (c / float(np.linalg.norm(self.direction))) * self.direction


@dataclass
class HalfspaceWitness:
    """G = {z : normal . z <= 0} should hold every one-sided-feasible z while
    the excluded direction eventually leaves G."""

    normal: np.ndarray
    excluded_direction: np.ndarray

    def __post_init__(self) -> None:
        self.normal = as_vector(self.normal, name="normal")
        self.excluded_direction = as_vector(self.excluded_direction, dim=self.normal.shape[0], name="excluded_direction")

    def is_strict(self) -> bool:
        return float(self.normal @ self.excluded_direction) > 0.0


@dataclass
class CentroidGeometry:
    """Residual direction and centroid projections used by the centroid tests."""

    direction: np.ndarray  # target - theta0
    u_plus_norm: float
    u_minus_norm: float
    inner_plus: float  # <centroid_pos, direction>
    inner_minus: float  # <centroid_neg, -direction>

    @property
    def u_plus(self) -> np.ndarray:
        """Projection of the positive centroid onto the residual direction."""
        d2 = float(self.direction @ self.direction)
        return (self.inner_plus / d2) * self.direction if d2 else np.zeros_like(self.direction)

    @property
    def u_minus(self) -> np.ndarray:
        """Projection of the negative centroid onto the negated residual."""
        d2 = float(self.direction @ self.direction)
        return (self.inner_minus / d2) * -self.direction if d2 else np.zeros_like(self.direction)


@dataclass
class SlabGeometry:
    """Slab axis sign-adjusted toward the residual, with per-class offsets."""

    axis: np.ndarray
    offset_plus: float  # -axis . centroid_pos
    offset_minus: float  # axis . centroid_neg


@dataclass
class RegimeVerdict:
    kind: str
    constant: float | None = None
    step_cap: float | None = None
    segment: FeasibleSegment | None = None
    witness: HalfspaceWitness | None = None
    note: str | None = None

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "constant": self.constant,
            "step_cap": self.step_cap,
            "segment": None if self.segment is None else
                {"radius": self.segment.radius, "direction": self.segment.direction.tolist()},
            "witness": None if self.witness is None else
                {"normal": self.witness.normal.tolist(),
                 "excluded_direction": self.witness.excluded_direction.tolist()},
            "note": self.note,
        }


def rate_constant(learning_rate: float, norm_cap: float, target_norm: float,
                  initial_distance: float) -> tuple[float, float]:
    """Step cap and insertion-rate constant of the line-steering attack.

    step_cap = min(norm_cap/initial_distance, 1/learning_rate); each insertion
    shrinks the distance to the target by at least the factor
    1 - learning_rate * step_cap * sigmoid(-target_norm^2 * step_cap), so
    ceil(constant * log(initial_distance/eps)) insertions reach eps. For
    small caps the constant behaves like 2*initial_distance/(learning_rate*norm_cap).
    """
    eta = check_positive(learning_rate, "learning_rate")
    check_positive(norm_cap, "norm_cap")
    check_positive(initial_distance, "initial_distance")
    if target_norm < 0:
        raise ValueError("target_norm must be non-negative")
    step_cap = min(norm_cap / initial_distance, 1.0 / eta)
    shrink = eta * step_cap * sigmoid(-(target_norm**2) * step_cap)
    if not 0.0 < shrink < 1.0:
        raise ValueError(f"contraction factor out of range: 1 - {shrink}")
    constant = -1.0 / math.log1p(-shrink)
    return step_cap, constant


def _residual(target: np.ndarray, theta_clean: np.ndarray) -> np.ndarray:
    return target - theta_clean


def classify_norm_ball(radius: float, learning_rate: float, theta0, target, theta_clean) -> RegimeVerdict:
    """A norm ball blocks nothing directional: always easy."""
    target = as_vector(target, name="target")
    theta_clean = as_vector(theta_clean, dim=target.shape[0], name="theta_clean")
    as_vector(theta0, dim=target.shape[0], name="theta0")
    check_positive(radius, "radius")
    u = _residual(target, theta_clean)
    dist = float(np.linalg.norm(u))
    if dist == 0.0:
        return RegimeVerdict(EASY, constant=0.0, note="already at target")
    step_cap, constant = rate_constant(learning_rate, radius, float(np.linalg.norm(target)), dist)
    return RegimeVerdict(EASY, constant=constant, step_cap=step_cap,
                         segment=FeasibleSegment(radius, u))


def centroid_geometry(stats: CentroidStats, theta0, target) -> CentroidGeometry:
    target = as_vector(target, name="target")
    theta0 = as_vector(theta0, dim=target.shape[0], name="theta0")
    d = target - theta0
    nd = float(np.linalg.norm(d))
    ip = float(stats.centroid_pos @ d)
    im = float(stats.centroid_neg @ -d)
    if nd == 0.0:
        return CentroidGeometry(d, 0.0, 0.0, ip, im)
    return CentroidGeometry(d, abs(ip) / nd, abs(im) / nd, ip, im)


def classify_centroid(stats: CentroidStats, threshold: float, theta0, target, theta_clean,
                      learning_rate: float = 1.0, radius: float = math.inf) -> RegimeVerdict:
    """Easy when some class ball sticks out past the origin; hard when both
    centroids point away from the residual and the threshold is small."""
    target = as_vector(target, name="target")
    theta0 = as_vector(theta0, dim=target.shape[0], name="theta0")
    theta_clean = as_vector(theta_clean, dim=target.shape[0], name="theta_clean")
    check_positive(threshold, "threshold")
    u = _residual(target, theta_clean)
    dist = float(np.linalg.norm(u))
    if dist == 0.0:
        return RegimeVerdict(EASY, constant=0.0, note="already at target")

    norm_pos = float(np.linalg.norm(stats.centroid_pos))
    norm_neg = float(np.linalg.norm(stats.centroid_neg))
    if threshold > min(norm_pos, norm_neg):
        radii = []
        if threshold > norm_pos:
            r = segment_radius_in_ball(stats.centroid_pos, threshold, u)
            if r is not None:
                radii.append(r)
        if threshold > norm_neg:
            # one-sided flip of the negative class: ball around -centroid_neg
            r = segment_radius_in_ball(-stats.centroid_neg, threshold, u)
            if r is not None:
                radii.append(r)
        if radii:
            seg_radius = min(max(radii), radius)
            step_cap, constant = rate_constant(learning_rate, seg_radius, float(np.linalg.norm(target)), dist)
            return RegimeVerdict(EASY, constant=constant, step_cap=step_cap,
                                 segment=FeasibleSegment(seg_radius, u))

    geom = centroid_geometry(stats, theta0, target)
    if geom.inner_plus < 0.0 and geom.inner_minus < 0.0 and \
            threshold <= min(geom.u_plus_norm, geom.u_minus_norm):
        return RegimeVerdict(HARD, witness=HalfspaceWitness(geom.direction, geom.direction))
    return RegimeVerdict(INTERMEDIATE)


def slab_geometry(stats: CentroidStats, target, theta_clean) -> SlabGeometry:
    """Axis oriented so it does not oppose the residual direction."""
    target = as_vector(target, name="target")
    theta_clean = as_vector(theta_clean, dim=target.shape[0], name="theta_clean")
    axis = stats.axis
    if float(axis @ _residual(target, theta_clean)) < 0.0:
        axis = -axis
    return SlabGeometry(axis=axis,
                        offset_plus=-float(axis @ stats.centroid_pos),
                        offset_minus=float(axis @ stats.centroid_neg))


def classify_slab(stats: CentroidStats, threshold: float, theta0, target, theta_clean,
                  learning_rate: float = 1.0, radius: float = math.inf) -> RegimeVerdict:
    """Easy when either class slab straddles the origin along the axis; hard
    when both slabs sit entirely on the far side and the residual does not
    oppose the axis."""
    target = as_vector(target, name="target")
    theta0 = as_vector(theta0, dim=target.shape[0], name="theta0")
    theta_clean = as_vector(theta_clean, dim=target.shape[0], name="theta_clean")
    check_positive(threshold, "threshold")
    u = _residual(target, theta_clean)
    dist = float(np.linalg.norm(u))
    if dist == 0.0:
        return RegimeVerdict(EASY, constant=0.0, note="already at target")

    geom = slab_geometry(stats, target, theta_clean)
    axis_norm = float(np.linalg.norm(geom.axis))
    if axis_norm == 0.0:
        # coincident centroids: the slab constraint is vacuous
        step_cap, constant = rate_constant(learning_rate, radius if math.isfinite(radius) else dist,
                                           float(np.linalg.norm(target)), dist)
        seg = FeasibleSegment(radius, u) if math.isfinite(radius) else None
        return RegimeVerdict(EASY, constant=constant, step_cap=step_cap, segment=seg,
                             note="degenerate axis")

    radii = []
    for b in (geom.offset_plus, geom.offset_minus):
        if threshold - b > 0.0 > -threshold - b:
            radii.append((threshold - b) / axis_norm)
    if radii:
        seg_radius = min(min(radii), radius)
        step_cap, constant = rate_constant(learning_rate, seg_radius, float(np.linalg.norm(target)), dist)
        return RegimeVerdict(EASY, constant=constant, step_cap=step_cap,
                             segment=FeasibleSegment(seg_radius, u))

    blocked_plus = 0.0 >= threshold - geom.offset_plus > -threshold - geom.offset_plus
    blocked_minus = 0.0 >= threshold - geom.offset_minus > -threshold - geom.offset_minus
    if blocked_plus and blocked_minus:
        along = float(geom.axis @ (target - theta0))
        if along > 0.0:
            return RegimeVerdict(HARD, witness=HalfspaceWitness(geom.axis, target - theta0))
        if along == 0.0:
            return RegimeVerdict(HARD, note="boundary witness: residual orthogonal to axis")
        return RegimeVerdict(INTERMEDIATE, note="line-steering blocked")
    return RegimeVerdict(INTERMEDIATE)


def segment_feasible(defense: Defense, segment: FeasibleSegment, samples: int = 100) -> bool:
    """Check every sampled segment point is one-sided-feasible."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    for i in range(1, samples + 1):
        z = segment.point(segment.radius * i / samples)
        if not defense.one_sided_contains(z):
            return False
    return True


def halfspace_separates(defense: Defense, witness: HalfspaceWitness, samples: int = 1000,
                        seed=0, max_draws: int = 10**6) -> bool:
    """Sample feasible one-sided points and test they all satisfy the witness.

    Draws uniformly from the defense's norm ball, keeps one-sided-feasible
    points, and requires unit-normal inner products <= 1e-9 on all of them.
    Raises if the witness is not strict or no feasible point turns up.
    """
    if not witness.is_strict():
        raise ValueError("witness normal must have positive inner product with the excluded direction")
    rng = as_rng(seed)
    d = witness.normal.shape[0]
    unit = witness.normal / float(np.linalg.norm(witness.normal))
    radius = float(defense.radius)
    if not math.isfinite(radius):
        raise ValueError("halfspace check needs a finite defense radius to sample from")
    found = 0
    drawn = 0
    batch = 4096
    ones = np.ones(batch, dtype=np.int64)
    while found < samples and drawn < max_draws:
        V = rng.normal(size=(batch, d))
        norms = np.linalg.norm(V, axis=1)
        norms[norms == 0.0] = 1.0
        scales = radius * rng.uniform(size=batch) ** (1.0 / d) / norms
        Z = V * scales[:, None]
        feas = defense.accept_mask(Z, ones) | defense.accept_mask(-Z, -ones)
        drawn += batch
        if feas.any():
            zs = Z[feas]
            found += zs.shape[0]
            if float(np.max(zs @ unit)) > 1e-9:
                return False
    if found == 0:
        raise RuntimeError(f"no one-sided-feasible point in {drawn} draws; check inconclusive")
    return True


def regime_boundaries(kind: str, stats: CentroidStats | None, theta0, target,
                      theta_clean) -> tuple[float, float | None]:
    """Threshold boundaries (tau_easy, tau_hard) for a defense family.

    Classifications are easy for thresholds strictly above tau_easy and hard
    for thresholds at or below tau_hard (None when the geometry admits no
    hard range).
    """
    target = as_vector(target, name="target")
    theta0 = as_vector(theta0, dim=target.shape[0], name="theta0")
    theta_clean = as_vector(theta_clean, dim=target.shape[0], name="theta_clean")
    if kind == "l2":
        return 0.0, None
    if kind == "centroid":
        if stats is None:
            raise ValueError("centroid boundaries need stats")
        tau_easy = min(float(np.linalg.norm(stats.centroid_pos)), float(np.linalg.norm(stats.centroid_neg)))
        geom = centroid_geometry(stats, theta0, target)
        tau_hard = None
        if geom.inner_plus < 0.0 and geom.inner_minus < 0.0:
            tau_hard = min(geom.u_plus_norm, geom.u_minus_norm)
        return tau_easy, tau_hard
    if kind == "slab":
        if stats is None:
            raise ValueError("slab boundaries need stats")
        geom = slab_geometry(stats, target, theta_clean)
        tau_easy = min(abs(geom.offset_plus), abs(geom.offset_minus))
        hard = min(geom.offset_plus, geom.offset_minus)
        tau_hard = None
        if hard > 0.0 and float(geom.axis @ (target - theta0)) >= 0.0:
            tau_hard = hard
        return tau_easy, tau_hard
    if kind == "oracle":
        raise UnsupportedDefenseError("oracle defenses have no threshold boundaries")
    raise ValueError(f"unknown defense kind {kind!r}")


# ---------------------------------------------------------------------------
# fixed-single-point cases: rapid, slow, impossible


def one_shot_scale(start: float = 0.5, target: float = 1.0, scale_max: float = 50.0) -> float:
    """Magnitude x such that one update on (x, +1) moves ``start`` exactly to ``target``."""
    gap = target - start
    if gap <= 0:
        raise ValueError("target must exceed start")
    root = solve_step_scale(start, 1.0 / gap, scale_max)
    if root is None:
        raise ValueError("no single point reaches the target within scale_max")
    return root


def fixed_point_bound(magnitude: float, start: float = 0.5, target: float = 1.0) -> int:
    """Lower bound on how many (magnitude, +1) points are needed to pass ``target``.

    Every update gains at most magnitude * sigmoid(-magnitude * start) while
    the model sits in [start, target], so at least
    ceil((target-start) * (1 + e^{magnitude*start}) / magnitude) points are needed.
    """
    check_positive(magnitude, "magnitude")
    gap = target - start
    if gap <= 0:
        raise ValueError("target must exceed start")
    return math.ceil(gap * (1.0 + math.exp(magnitude * start)) / magnitude)


def fixed_point_run(magnitude: float, start: float = 0.5, target: float = 1.0,
                    limit: int = 20000) -> tuple[int | None, float]:
    """Repeat updates on (magnitude, +1) until the model passes ``target``.

    Returns (steps, final model), with steps None when the cap is hit first;
    the model grows monotonically, so hitting the cap certifies the true
    count exceeds it.
    """
    check_positive(magnitude, "magnitude")
    theta = float(start)
    for step in range(1, limit + 1):
        theta += magnitude * sigmoid(-magnitude * theta)
        if theta >= target:
            return step, theta
    return None, theta


def overshoot_run(point: float = 2.5, start: float = 0.5, target: float = 1.0,
                  steps: int = 1000) -> np.ndarray:
    """Models after each of ``steps`` updates on the fixed point (point, +1)."""
    theta = float(start)
    out = np.empty(steps)
    for i in range(steps):
        theta += point * sigmoid(-point * theta)
        out[i] = theta
    return out


@dataclass
class SlowCase:
    magnitude: float
    bound: int
    simulated_steps: int | None
    confirmed: bool


@dataclass
class IntermediateCaseReport:
    """The three fixed-single-point regimes, with their checks."""

    one_shot: float
    one_shot_lands: bool
    slow_cases: list[SlowCase] = field(default_factory=list)
    overshoot_first: float = math.nan
    overshoot_monotone: bool = False
    overshoot_min_gap: float = math.nan

    @property
    def ok(self) -> bool:
        return self.one_shot_lands and all(c.confirmed for c in self.slow_cases) \
            and self.overshoot_monotone and self.overshoot_min_gap > 0.0

    def lines(self) -> list[str]:
        out = [f"one-shot magnitude {self.one_shot:.4f} lands on target: {'ok' if self.one_shot_lands else 'FAIL'}"]
        for c in self.slow_cases:
            steps = "cap" if c.simulated_steps is None else str(c.simulated_steps)
            out.append(
                f"fixed point magnitude {c.magnitude:g}: bound {c.bound}, simulated {steps}: "
                f"{'ok' if c.confirmed else 'FAIL'}"
            )
        out.append(
            f"overshoot first model {self.overshoot_first:.4f}, monotone {self.overshoot_monotone}, "
            f"min gap {self.overshoot_min_gap:.4f}: "
            f"{'ok' if self.overshoot_monotone and self.overshoot_min_gap > 0 else 'FAIL'}"
        )
        return out


def intermediate_case_report(magnitudes=(10.0, 20.0), overshoot_point: float = 2.5,
                             overshoot_steps: int = 1000, limit: int = 20000) -> IntermediateCaseReport:
    """Build the rapid / slow / impossible report at the canonical settings
    (start 0.5, target 1, unit learning rate)."""
    shot = one_shot_scale()
    landed = abs(0.5 + shot * sigmoid(-0.5 * shot) - 1.0) < 1e-8
    report = IntermediateCaseReport(one_shot=shot, one_shot_lands=landed)
    for r in magnitudes:
        bound = fixed_point_bound(r)
        steps, _ = fixed_point_run(r, limit=limit)
        confirmed = steps is None or steps >= bound
        report.slow_cases.append(SlowCase(r, bound, steps, confirmed))
    trace = overshoot_run(point=overshoot_point, steps=overshoot_steps)
    report.overshoot_first = float(trace[0])
    report.overshoot_monotone = bool(np.all(np.diff(trace) > 0.0))
    report.overshoot_min_gap = float(np.min(np.abs(trace - 1.0)))
    return report
