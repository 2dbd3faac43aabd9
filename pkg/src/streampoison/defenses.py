"""Feasible-set defenses for a streaming learner.

A defense is a set F of labeled examples the learner is willing to update on;
anything outside F is dropped. All variants share an L2 norm cap ``radius``
and differ in the extra membership test:

- ``NormBallDefense``: norm cap only.
- ``LabelingOracleDefense``: norm cap plus label agreement with an oracle.
- ``CentroidDefense``: norm cap plus distance to the class centroid.
- ``SlabDefense``: norm cap plus distance along the centroid-difference axis.

Membership is boundary inclusive. The one-sided view folds labels into
features: z is one-sided-feasible iff (z, +1) in F or (-z, -1) in F. The
data-driven variants follow the estimator convention: construct with
hyperparameters, ``fit(X, y)`` to learn the centroids (or build directly from
known stats with ``from_stats``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import BOUNDARY_RTOL, as_matrix, as_vector, check_label, check_labels, check_positive, leq
from .errors import CalibrationError, UnsupportedDefenseError
from .stream import Stream

_EMPTY = (math.inf, -math.inf)  # interval with lo > hi


@dataclass
class CentroidStats:
    """Class centroids estimated from a clean sample."""

    centroid_pos: np.ndarray
    centroid_neg: np.ndarray

    def __post_init__(self) -> None:
        self.centroid_pos = as_vector(self.centroid_pos, name="centroid_pos")
        self.centroid_neg = as_vector(self.centroid_neg, dim=self.centroid_pos.shape[0], name="centroid_neg")

    @property
    def axis(self) -> np.ndarray:
        """Difference of centroids; the slab defense measures along this."""
        return self.centroid_pos - self.centroid_neg

    def centroid(self, y: int) -> np.ndarray:
        return self.centroid_pos if y == 1 else self.centroid_neg


def fit_centroid_stats(X, y) -> CentroidStats:
    """Per-class feature means. Both classes must be present."""
    X = as_matrix(X, name="X")
    y = check_labels(y, n=X.shape[0], name="y")
    stats = {}
    for label in (1, -1):
        mask = y == label
        if not mask.any():
            raise CalibrationError(f"cannot fit centroids: no examples with label {label:+d}")
        stats[label] = X[mask].mean(axis=0)
    return CentroidStats(stats[1], stats[-1])


@dataclass
class DirectionProjection:
    """Feasible rescaling of a candidate point along its own direction."""

    scale: float
    flipped: bool
    point: np.ndarray
    label: int


class Defense(BaseEstimator):
    """Shared behaviour for every feasible-set variant."""

    kind: str = ""

    # -- membership ---------------------------------------------------------

    def contains(self, x, y: int) -> bool:
        """Whether the labeled example may reach the learner."""
        raise NotImplementedError

    def one_sided_contains(self, z) -> bool:
        """Membership of the label-folded point: (z, +1) in F or (-z, -1) in F."""
        z = np.asarray(z, dtype=np.float64)
        return self.contains(z, 1) or self.contains(-z, -1)

    def _norm_ok(self, x: np.ndarray) -> bool:
        return leq(float(np.linalg.norm(x)), self.radius)

    # -- scores -------------------------------------------------------------

    def score(self, x, y: int) -> float:
        """Scalar anomaly score thresholded by the defense (lower is more normal)."""
        raise UnsupportedDefenseError(f"{self.kind} defense has no scalar score")

    def scores(self, X, y) -> np.ndarray:
        """Vectorized ``score`` over rows of X."""
        X = as_matrix(X, name="X")
        y = check_labels(y, n=X.shape[0], name="y")
        return np.asarray([self.score(X[i], int(y[i])) for i in range(X.shape[0])])

    def accept_mask(self, X, y) -> np.ndarray:
        """Vectorized ``contains`` over rows of X."""
        X = as_matrix(X, name="X")
        y = check_labels(y, n=X.shape[0], name="y")
        return np.asarray([self.contains(X[i], int(y[i])) for i in range(X.shape[0])], dtype=bool)

    # -- geometry -----------------------------------------------------------

    def _scale_interval(self, x: np.ndarray, y: int) -> tuple[float, float]:
        """c-interval of the variant-specific constraint for c*x with label y.

        The shared norm cap is handled by the caller; score-based variants
        override this with their closed form.
        """
        raise NotImplementedError

    def _direction_candidates(self, x: np.ndarray, y: int, cap: float):
        """Feasible c-intervals ([0, cap] already intersected) for both signs."""
        out = []
        for flipped, (xs, ys) in ((False, (x, y)), (True, (-x, -y))):
            lo, hi = self._scale_interval(xs, ys)
            lo = max(lo, 0.0)
            hi = min(hi, cap)
            if lo <= hi:
                out.append((flipped, lo, hi))
        return out

    def project_direction(self, x, y: int, norm_cap: float, prefer: str = "closest"):
        """Rescale a candidate along its own line to land inside the defense.

        Searches c in [0, norm_cap/||x||] such that (c*x, y) or the
        label-flipped (-c*x, -y) is feasible. ``prefer="closest"`` picks the
        feasible c closest to 1 (ties go to the unflipped sign),
        ``prefer="largest"`` picks the biggest feasible c. Returns None when
        nothing with c > 0 is feasible; c = 0 only yields the useless zero
        point, so it counts as infeasible.
        """
        x = as_vector(x, name="x")
        y = check_label(y)
        check_positive(norm_cap, "norm_cap")
        if prefer not in ("closest", "largest"):
            raise ValueError(f"prefer must be 'closest' or 'largest', got {prefer!r}")
        norm = float(np.linalg.norm(x))
        if norm == 0.0:
            raise ValueError("cannot project the zero vector along its direction")
        cap = min(norm_cap, self.radius) / norm

        best = None
        for flipped, lo, hi in self._direction_candidates(x, y, cap):
            if hi <= 0.0:
                continue
            if prefer == "closest":
                c = min(max(1.0, lo), hi)
                key = (abs(c - 1.0), flipped)
            else:
                c = hi
                key = (-c, flipped)
            if c <= 0.0:
                continue
            if best is None or key < best[0]:
                best = (key, c, flipped)
        if best is None:
            return None
        _, c, flipped = best
        point = (-c) * x if flipped else c * x
        label = -y if flipped else y
        if not self.contains(point, label):  # guard against pathological round-off
            return None
        return DirectionProjection(scale=float(c), flipped=flipped, point=point, label=label)

    def project_nearest(self, x, y: int) -> np.ndarray | None:
        """Nearest feasible point with the given label (alternating projections).

        Exact for the norm ball; for centroid/slab it alternates the two
        closed-form projections a few rounds and verifies membership, which is
        the documented approximation for optimizer projection steps.
        """
        x = np.asarray(x, dtype=np.float64).copy()
        for _ in range(64):
            moved = False
            x, moved_a = self._project_extra(x, y)
            norm = float(np.linalg.norm(x))
            if norm > self.radius:
                x = x * (self.radius / norm)
                moved = True
            if not (moved or moved_a):
                break
        if self.contains(x, y):
            return x
        return None

    def _project_extra(self, x: np.ndarray, y: int) -> tuple[np.ndarray, bool]:
        """Project onto the variant-specific constraint set; returns (point, moved)."""
        return x, False

    # -- serialization ------------------------------------------------------

    def to_config(self) -> dict:
        raise UnsupportedDefenseError(f"{self.kind} defense is not serializable")


class NormBallDefense(Defense):
    """Accepts any label as long as ||x|| <= radius."""

    kind = "l2"

    def __init__(self, radius: float):
        self.radius = radius

    def fit(self, X=None, y=None):
        """No data-dependent state; present for interface uniformity."""
        return self

    def contains(self, x, y: int) -> bool:
        x = np.asarray(x, dtype=np.float64)
        check_label(y)
        return self._norm_ok(x)

    def score(self, x, y: int) -> float:
        x = as_vector(x, name="x")
        check_label(y)
        return float(np.linalg.norm(x))

    def scores(self, X, y) -> np.ndarray:
        X = as_matrix(X, name="X")
        check_labels(y, n=X.shape[0])
        return np.linalg.norm(X, axis=1)

    def accept_mask(self, X, y) -> np.ndarray:
        scores = self.scores(X, y)
        return scores <= self.radius * (1.0 + BOUNDARY_RTOL)

    def _scale_interval(self, x: np.ndarray, y: int) -> tuple[float, float]:
        return (0.0, math.inf)

    def to_config(self) -> dict:
        return {"kind": self.kind, "R": float(self.radius), "tau": None, "mu_plus": None, "mu_minus": None}


class LabelingOracleDefense(Defense):
    """Accepts (x, y) iff ||x|| <= radius and y agrees with an oracle labeler.

    The oracle is any callable x -> {-1, +1}. It usually has no closed-form
    geometry, so direction projection falls back to a grid scan.
    """

    kind = "oracle"

    def __init__(self, radius: float, label_fn):
        self.radius = radius
        self.label_fn = label_fn

    def fit(self, X=None, y=None):
        return self

    def contains(self, x, y: int) -> bool:
        x = np.asarray(x, dtype=np.float64)
        y = check_label(y)
        return self._norm_ok(x) and int(self.label_fn(x)) == y

    def _direction_candidates(self, x: np.ndarray, y: int, cap: float, grid: int = 4096):
        # Feasible c-set may be any union of pieces; return singleton intervals
        # at feasible grid points (the documented fallback).
        cs = np.linspace(0.0, cap, grid + 1)
        out = []
        for flipped, (xs, ys) in ((False, (x, y)), (True, (-x, -y))):
            for c in cs:
                if c > 0.0 and self.contains(c * xs, ys):
                    out.append((flipped, float(c), float(c)))
        return out


def linear_threshold_oracle(w):
    """Example oracle: labels by the sign of <w, x> (+1 on the boundary)."""
    w = as_vector(w, name="w")

    def label(x) -> int:
        return 1 if float(w @ np.asarray(x, dtype=np.float64)) >= 0.0 else -1

    return label


class _FittedDefense(Defense):
    """Common machinery for the centroid-based variants."""

    def __init__(self, radius: float, threshold: float):
        self.radius = radius
        self.threshold = threshold

    def fit(self, X, y):
        """Learn per-class centroids from a clean sample."""
        self.stats_ = fit_centroid_stats(X, y)
        return self

    @classmethod
    def from_stats(cls, stats: CentroidStats, radius: float, threshold: float):
        """Build directly from known centroids (no data pass)."""
        obj = cls(radius=radius, threshold=threshold)
        obj.stats_ = stats
        return obj

    @property
    def stats(self) -> CentroidStats:
        if not hasattr(self, "stats_"):
            raise NotFittedError(f"{type(self).__name__} needs fit(X, y) or from_stats(...) first")
        return self.stats_

    def with_threshold(self, threshold: float):
        """Copy sharing the fitted centroids, with a different threshold."""
        return type(self).from_stats(self.stats, radius=self.radius, threshold=threshold)

    def contains(self, x, y: int) -> bool:
        x = np.asarray(x, dtype=np.float64)
        y = check_label(y)
        return self._norm_ok(x) and leq(self._raw_score(x, y), self.threshold)

    def score(self, x, y: int) -> float:
        x = as_vector(x, dim=self.stats.centroid_pos.shape[0], name="x")
        return self._raw_score(x, check_label(y))

    def accept_mask(self, X, y) -> np.ndarray:
        X = as_matrix(X, name="X")
        y = check_labels(y, n=X.shape[0])
        norm_ok = np.linalg.norm(X, axis=1) <= self.radius * (1.0 + BOUNDARY_RTOL)
        score_ok = self.scores(X, y) <= self.threshold * (1.0 + BOUNDARY_RTOL) + BOUNDARY_RTOL
        return norm_ok & score_ok

    def _raw_score(self, x: np.ndarray, y: int) -> float:
        raise NotImplementedError

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "R": float(self.radius),
            "tau": float(self.threshold),
            "mu_plus": self.stats.centroid_pos.tolist(),
            "mu_minus": self.stats.centroid_neg.tolist(),
        }


class CentroidDefense(_FittedDefense):
    """Accepts (x, y) iff ||x|| <= radius and ||x - centroid_y|| <= threshold."""

    kind = "centroid"

    def _raw_score(self, x: np.ndarray, y: int) -> float:
        return float(np.linalg.norm(x - self.stats.centroid(y)))

    def scores(self, X, y) -> np.ndarray:
        X = as_matrix(X, name="X")
        y = check_labels(y, n=X.shape[0])
        mu = np.where((y == 1)[:, None], self.stats.centroid_pos, self.stats.centroid_neg)
        return np.linalg.norm(X - mu, axis=1)

    def _scale_interval(self, x: np.ndarray, y: int) -> tuple[float, float]:
        # ||c x - mu||^2 <= tau^2 is a quadratic in c.
        mu = self.stats.centroid(y)
        a = float(x @ x)
        b = float(x @ mu)
        c0 = float(mu @ mu) - self.threshold**2
        disc = b * b - a * c0
        if disc < 0.0:
            return _EMPTY
        root = math.sqrt(disc)
        return ((b - root) / a, (b + root) / a)

    def _project_extra(self, x: np.ndarray, y: int) -> tuple[np.ndarray, bool]:
        mu = self.stats.centroid(y)
        delta = x - mu
        dist = float(np.linalg.norm(delta))
        if dist > self.threshold:
            scale = self.threshold / dist if dist > 0 else 0.0
            return mu + delta * scale, True
        return x, False


class SlabDefense(_FittedDefense):
    """Accepts (x, y) iff ||x|| <= radius and |axis . (x - centroid_y)| <= threshold.

    The axis is the centroid difference; the constraint is a slab of width
    2*threshold around each class centroid along that axis.
    """

    kind = "slab"

    def _raw_score(self, x: np.ndarray, y: int) -> float:
        return abs(float(self.stats.axis @ (x - self.stats.centroid(y))))

    def scores(self, X, y) -> np.ndarray:
        X = as_matrix(X, name="X")
        y = check_labels(y, n=X.shape[0])
        mu = np.where((y == 1)[:, None], self.stats.centroid_pos, self.stats.centroid_neg)
        return np.abs((X - mu) @ self.stats.axis)

    def _scale_interval(self, x: np.ndarray, y: int) -> tuple[float, float]:
        # |c * (axis.x) - axis.mu| <= tau is linear in c.
        beta = self.stats.axis
        v = float(beta @ x)
        m = float(beta @ self.stats.centroid(y))
        if v == 0.0:
            return (0.0, math.inf) if leq(abs(m), self.threshold) else _EMPTY
        lo = (m - self.threshold) / v
        hi = (m + self.threshold) / v
        return (lo, hi) if lo <= hi else (hi, lo)

    def _project_extra(self, x: np.ndarray, y: int) -> tuple[np.ndarray, bool]:
        beta = self.stats.axis
        beta_sq = float(beta @ beta)
        if beta_sq == 0.0:
            return x, False
        v = float(beta @ (x - self.stats.centroid(y)))
        clipped = min(max(v, -self.threshold), self.threshold)
        if clipped != v:
            return x - ((v - clipped) / beta_sq) * beta, True
        return x, False


_KINDS = {"l2": NormBallDefense, "oracle": LabelingOracleDefense, "centroid": CentroidDefense, "slab": SlabDefense}


def make_defense(kind: str, **kwargs) -> Defense:
    """Construct a defense by kind name ('l2', 'oracle', 'centroid', 'slab')."""
    if kind not in _KINDS:
        raise ValueError(f"unknown defense kind {kind!r}; expected one of {sorted(_KINDS)}")
    return _KINDS[kind](**kwargs)


def defense_from_config(cfg: dict) -> Defense:
    """Rebuild a defense from its JSON object {kind, R, tau, mu_plus, mu_minus}."""
    kind = cfg.get("kind")
    if kind == "l2":
        return NormBallDefense(radius=float(cfg["R"]))
    if kind in ("centroid", "slab"):
        stats = CentroidStats(np.asarray(cfg["mu_plus"], dtype=np.float64), np.asarray(cfg["mu_minus"], dtype=np.float64))
        return _KINDS[kind].from_stats(stats, radius=float(cfg["R"]), threshold=float(cfg["tau"]))
    if kind == "oracle":
        raise UnsupportedDefenseError("oracle defenses hold a callable and cannot be rebuilt from JSON")
    raise ValueError(f"unknown defense kind {kind!r}")


def project_nearest_batch(defense: Defense, X, label: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``project_nearest`` over rows of X, all with one label.

    Returns (projected rows, feasibility mask). Falls back to the scalar
    path for defenses without a closed-form batch projection (oracle).
    """
    X = as_matrix(X, name="X").copy()
    label = check_label(label)
    n = X.shape[0]
    radius = float(defense.radius)

    def _cap_norms(M: np.ndarray) -> bool:
        norms = np.linalg.norm(M, axis=1)
        big = norms > radius
        if big.any():
            M[big] *= (radius / norms[big])[:, None]
            return True
        return False

    if isinstance(defense, NormBallDefense):
        _cap_norms(X)
        return X, np.ones(n, dtype=bool)

    if isinstance(defense, CentroidDefense):
        mu = defense.stats.centroid(label)
        tau = float(defense.threshold)
        for _ in range(64):
            delta = X - mu
            dist = np.linalg.norm(delta, axis=1)
            far = dist > tau
            if far.any():
                X[far] = mu + delta[far] * (tau / dist[far])[:, None]
            if not _cap_norms(X) and not far.any():
                break
        ok = defense.accept_mask(X, np.full(n, label, dtype=np.int64))
        return X, ok

    if isinstance(defense, SlabDefense):
        beta = defense.stats.axis
        beta_sq = float(beta @ beta)
        mu = defense.stats.centroid(label)
        tau = float(defense.threshold)
        for _ in range(64):
            moved = False
            if beta_sq > 0.0:
                v = (X - mu) @ beta
                clipped = np.clip(v, -tau, tau)
                off = clipped != v
                if off.any():
                    X[off] -= np.outer((v - clipped)[off] / beta_sq, beta)
                    moved = True
            if not _cap_norms(X) and not moved:
                break
        ok = defense.accept_mask(X, np.full(n, label, dtype=np.int64))
        return X, ok

    rows = np.empty_like(X)
    ok = np.zeros(n, dtype=bool)
    for i in range(n):
        p = defense.project_nearest(X[i], label)
        if p is not None:
            rows[i] = p
            ok[i] = True
        else:
            rows[i] = X[i]
    return rows, ok


def calibrate_threshold(scores, percentile: float | None = None, retention: float | None = None) -> float:
    """Nearest-rank threshold from clean scores.

    Exactly one of ``percentile`` (in (0, 100]) or ``retention`` (in (0, 1])
    must be given; the threshold is the k-th smallest score with
    k = ceil(p*n/100) resp. ceil(q*n), so at least that fraction of the
    scored sample is retained.
    """
    if (percentile is None) == (retention is None):
        raise CalibrationError("pass exactly one of percentile or retention")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise CalibrationError("scores must be a non-empty 1-D array")
    if not np.all(np.isfinite(scores)):
        raise CalibrationError("scores contain non-finite entries")
    n = scores.size
    if percentile is not None:
        p = float(percentile)
        if not 0.0 < p <= 100.0:
            raise CalibrationError(f"percentile must be in (0, 100], got {p}")
        k = math.ceil(p * n / 100.0 - 1e-9)
    else:
        q = float(retention)
        if not 0.0 < q <= 1.0:
            raise CalibrationError(f"retention must be in (0, 1], got {q}")
        k = math.ceil(q * n - 1e-9)
    k = min(max(k, 1), n)
    return float(np.sort(scores)[k - 1])


def segment_radius_in_ball(center, radius: float, direction) -> float | None:
    """How far the ray {c * u_hat : c >= 0} stays reachable inside a ball.

    Returns the largest r such that r * u_hat lies in the ball of the given
    radius around ``center`` (the positive root of the crossing quadratic),
    or None when the ray misses the ball or only touches it at c <= 0.
    """
    center = as_vector(center, name="center")
    check_positive(radius, "radius")
    u = as_vector(direction, dim=center.shape[0], name="direction")
    nu = float(np.linalg.norm(u))
    if nu == 0.0:
        raise ValueError("direction must be nonzero")
    nc = float(np.linalg.norm(center))
    if nc == 0.0:
        return float(radius)
    cos_a = float(center @ u) / (nc * nu)
    disc = nc * nc * cos_a * cos_a - nc * nc + radius * radius
    if disc < 0.0:
        return None
    r = nc * cos_a + math.sqrt(disc)
    return float(r) if r > 0.0 else None


def calibrated_defense(kind: str, X, y, radius: float, percentile: float | None = None,
                       retention: float | None = None, label_fn=None) -> Defense:
    """Fit a defense on clean data and set its threshold from the score percentile.

    For 'l2' the calibrated quantity is the radius itself; 'oracle' has no
    score and takes the radius as given.
    """
    X = as_matrix(X, name="X")
    y = check_labels(y, n=X.shape[0])
    if kind == "oracle":
        if label_fn is None:
            raise CalibrationError("oracle defense needs label_fn")
        return LabelingOracleDefense(radius=radius, label_fn=label_fn)
    if kind == "l2":
        probe = NormBallDefense(radius=radius)
        tau = calibrate_threshold(probe.scores(X, y), percentile=percentile, retention=retention)
        return NormBallDefense(radius=float(tau))
    if kind in ("centroid", "slab"):
        fitted = _KINDS[kind](radius=radius, threshold=math.inf).fit(X, y)
        tau = calibrate_threshold(fitted.scores(X, y), percentile=percentile, retention=retention)
        return fitted.with_threshold(float(tau))
    raise ValueError(f"unknown defense kind {kind!r}")
