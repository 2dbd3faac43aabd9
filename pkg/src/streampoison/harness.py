"""Experiment sweeps and result plumbing.

Two protocols are driven here:

- semi-online: for each calibrated threshold, compute the clean filtered
  model on the train stream, aim each attack at its reflection, and record
  how close the poisoned model's direction gets (plus test error and the
  regime verdict for the cell),
- fully-online: draw attack positions uniformly, interleave live insertions
  with clean draws, and record the clean-arrival error rate against an
  offline-trained baseline.

Records serialize to CSV (fixed column order, '#' config comments) and JSON,
round-trip exactly, and render to self-contained SVG plots with regime bands.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from xml.sax.saxutils import escape

import numpy as np

from ._validation import as_rng, check_positive
from .defenses import (
    CentroidDefense,
    NormBallDefense,
    SlabDefense,
    calibrate_threshold,
    fit_centroid_stats,
)
from .errors import AttackError, UndefinedMetricError, UnsupportedDefenseError
from .attacks import AttackConfig, fully_online_drive, make_attack
from .learner import cosine_similarity, error_rate, ogd_run
from .regimes import classify_centroid, classify_norm_ball, classify_slab, regime_boundaries
from .stream import Stream
from .tasks import DatasetBundle

SWEEP_DEFENSES = ("l2", "centroid", "slab")


@dataclass
class SemiOnlineRunRecord:
    dataset: str
    defense: str
    tau: float
    attack: str
    K: int
    eta: float
    seed: int
    cos_to_target: float | None
    test_error: float | None
    regime: str
    error: str | None = None


@dataclass
class FullyOnlineRunRecord:
    dataset: str
    defense: str
    retention: float
    tau: float
    attack: str
    budget_fraction: float
    seed: int
    online_error: float | None
    offline_optimal_error: float
    error: str | None = None


def default_norm_cap(stream: Stream) -> float:
    """Radius used when none is given: the largest clean feature norm."""
    clean = stream.clean_part()
    if len(clean) == 0:
        raise ValueError("cannot infer a norm cap from an empty stream")
    cap = float(np.linalg.norm(clean.X, axis=1).max())
    if cap <= 0.0:
        raise ValueError("clean stream has only zero vectors; pass norm_cap explicitly")
    return cap


def build_calibrated_defense(kind: str, stats, train: Stream, norm_cap: float,
                             percentile: float | None = None, retention: float | None = None):
    """Defense with its threshold set from clean-train score quantiles.

    Centroid/slab statistics come from ``stats`` (fitted on the init split),
    while the threshold quantile is taken over the train stream; for 'l2' the
    calibrated quantity is the radius itself.
    """
    if kind == "l2":
        probe = NormBallDefense(radius=math.inf)
        tau = calibrate_threshold(probe.scores(train.X, train.y),
                                  percentile=percentile, retention=retention)
        return NormBallDefense(radius=tau), tau
    if kind in ("centroid", "slab"):
        cls = CentroidDefense if kind == "centroid" else SlabDefense
        probe = cls.from_stats(stats, radius=norm_cap, threshold=math.inf)
        tau = calibrate_threshold(probe.scores(train.X, train.y),
                                  percentile=percentile, retention=retention)
        return probe.with_threshold(tau), tau
    raise UnsupportedDefenseError(f"defense kind {kind!r} is not sweepable; use one of {SWEEP_DEFENSES}")


def _classify_cell(kind: str, defense, tau: float, theta0, target, theta_clean,
                   eta: float, norm_cap: float):
    if kind == "l2":
        return classify_norm_ball(defense.radius, eta, theta0, target, theta_clean)
    if kind == "centroid":
        return classify_centroid(defense.stats, tau, theta0, target, theta_clean,
                                 learning_rate=eta, radius=norm_cap)
    return classify_slab(defense.stats, tau, theta0, target, theta_clean,
                         learning_rate=eta, radius=norm_cap)


def _attack_extras(name: str, seed, validation: Stream, wk_ascent_steps: int,
                   greedy_restarts: int, concentrated_orders: int) -> dict:
    key = name.replace("_", "-")
    if key == "greedy":
        return {"seed": seed, "restarts": greedy_restarts}
    if key == "semi-online-wk":
        return {"seed": seed, "validation": validation, "ascent_steps": wk_ascent_steps}
    if key == "concentrated":
        return {"seed": seed, "random_orders": concentrated_orders}
    return {}


def run_semi_online(bundle: DatasetBundle, defense_kind: str, attacks=("simplistic",),
                    tau_percentiles=tuple(range(10, 101, 10)), budget: int = 100,
                    learning_rate: float = 0.01, seeds=(0,), norm_cap: float | None = None,
                    tolerance: float = 1e-3, wk_ascent_steps: int = 100,
                    greedy_restarts: int = 3, concentrated_orders: int = 100
                    ) -> list[SemiOnlineRunRecord]:
    """Sweep threshold percentiles x attacks x seeds on one defense family.

    The clean reference model is one unfiltered OGD pass over train; the
    attack target is its negation, shared by every cell. Per cell: calibrate
    the threshold at the percentile, run the attack from the reference model
    with insertions constrained to the calibrated feasible set, and record
    direction cosine, test error, and the regime verdict. A zero insertion
    budget therefore leaves the model at the reference exactly (cosine -1).
    Attack and metric failures are recorded in the cell, not raised.
    """
    if not attacks:
        raise ValueError("attacks must be nonempty")
    eta = check_positive(learning_rate, "learning_rate")
    train = bundle.train
    if len(train) == 0:
        raise ValueError("bundle has an empty train stream")
    cap = default_norm_cap(train) if norm_cap is None else check_positive(norm_cap, "norm_cap")
    stats = None
    if defense_kind in ("centroid", "slab"):
        stats = fit_centroid_stats(bundle.init.X, bundle.init.y)
    validation = bundle.init if len(bundle.init) else train
    theta_clean = ogd_run(np.zeros(bundle.dim), train, eta, record_trajectory=False).final
    clean_is_zero = float(np.linalg.norm(theta_clean)) == 0.0
    target = -theta_clean
    prefix = Stream.empty(bundle.dim)

    records: list[SemiOnlineRunRecord] = []
    for pct in tau_percentiles:
        defense, tau = build_calibrated_defense(defense_kind, stats, train, cap, percentile=pct)
        base = dict(dataset=bundle.name, defense=defense_kind, tau=float(tau),
                    K=int(budget), eta=float(eta))
        if clean_is_zero:
            for name in attacks:
                for seed in seeds:
                    records.append(SemiOnlineRunRecord(
                        **base, attack=name, seed=int(seed), cos_to_target=None,
                        test_error=None, regime="", error="clean reference model is zero"))
            continue
        verdict = _classify_cell(defense_kind, defense, tau, theta_clean, target,
                                 theta_clean, eta, cap)
        for name in attacks:
            for seed in seeds:
                config = AttackConfig(target=target, budget=int(budget),
                                      norm_cap=float(defense.radius), learning_rate=eta,
                                      tolerance=tolerance)
                extras = _attack_extras(name, seed, validation, wk_ascent_steps,
                                        greedy_restarts, concentrated_orders)
                row = dict(**base, attack=name, seed=int(seed), regime=verdict.kind)
                try:
                    attack = make_attack(name, config, **extras)
                    outcome = attack.run(prefix, defense=defense, theta0=theta_clean,
                                         rng=np.random.default_rng(seed))
                    cos = cosine_similarity(outcome.final_model, target)
                    terr = error_rate(outcome.final_model, bundle.test.X, bundle.test.y) \
                        if len(bundle.test) else None
                    records.append(SemiOnlineRunRecord(**row, cos_to_target=float(cos),
                                                       test_error=terr))
                except (AttackError, UndefinedMetricError) as exc:
                    records.append(SemiOnlineRunRecord(**row, cos_to_target=None,
                                                       test_error=None, error=str(exc)))
    return records


def offline_optimal_error(data, grad_tol: float = 1e-6, max_epochs: int = 10_000,
                          norm_cap: float = 1e6) -> float:
    """0/1 error of full-batch logistic regression trained to convergence.

    Gradient descent with backtracking from zero until the gradient norm
    drops below ``grad_tol`` or ``max_epochs`` epochs; on separable data the
    norm cap stops the (unbounded) drift once the error is already exact.
    Error is measured on the same clean examples, margin <= 0 counting as
    an error.
    """
    stream = data.train if isinstance(data, DatasetBundle) else data
    clean = stream.clean_part()
    if len(clean) == 0:
        raise ValueError("no clean examples to train on")
    X, y = clean.X, clean.y.astype(np.float64)
    n = X.shape[0]

    def loss(theta):
        z = y * (X @ theta)
        return float(np.logaddexp(0.0, -z).mean())

    def grad(theta):
        z = y * (X @ theta)
        s = 1.0 / (1.0 + np.exp(np.minimum(z, 50.0)))  # sigmoid(-z), overflow-safe
        return -(s * y) @ X / n

    theta = np.zeros(X.shape[1])
    for _ in range(max_epochs):
        g = grad(theta)
        gn = float(np.linalg.norm(g))
        if gn < grad_tol:
            break
        step, cur = 1.0, loss(theta)
        for _ in range(40):
            cand = theta - step * g
            if loss(cand) <= cur - 1e-4 * step * gn * gn:
                break
            step *= 0.5
        theta = theta - step * g
        tn = float(np.linalg.norm(theta))
        if tn > norm_cap:
            theta *= norm_cap / tn
            break
    return float(np.count_nonzero(y * (X @ theta) <= 0.0) / n)


def run_fully_online(bundle: DatasetBundle, defense_kind: str, attacks=("simplistic",),
                     retention_grid=(0.3, 0.5, 0.7, 0.9, 1.0), budget_fraction: float = 0.1,
                     horizon: int = 1000, seeds=tuple(range(10)), norm_cap: float | None = None,
                     learning_rate: float = 0.01, tolerance: float = 1e-3,
                     target=None, wk_ascent_steps: int = 20) -> list[FullyOnlineRunRecord]:
    """Sweep retention fractions x attacks x seeds in the live-stream protocol.

    Attack positions (a ``budget_fraction`` share of the horizon) are drawn
    uniformly per seed; clean arrivals are iid draws from the train stream.
    The attacker is aimed at the negated undefended init-split model unless a
    target is given. Records carry the clean-arrival online error and a
    shared offline-trained baseline error.
    """
    if not attacks:
        raise ValueError("attacks must be nonempty")
    if not 0.0 <= budget_fraction < 1.0:
        raise ValueError("budget_fraction must lie in [0, 1)")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if any(a.replace("_", "-") == "concentrated" for a in attacks):
        raise ValueError("the concentrated attack places points offline; it has no live variant")
    eta = check_positive(learning_rate, "learning_rate")
    train = bundle.train
    if len(train) == 0:
        raise ValueError("bundle has an empty train stream")
    cap = default_norm_cap(train) if norm_cap is None else check_positive(norm_cap, "norm_cap")
    stats = None
    if defense_kind in ("centroid", "slab"):
        stats = fit_centroid_stats(bundle.init.X, bundle.init.y)
    validation = bundle.init if len(bundle.init) else train
    theta0 = np.zeros(bundle.dim)
    baseline = offline_optimal_error(train)

    if target is None:
        ref_stream = bundle.init if len(bundle.init) else train
        theta_hat = ogd_run(theta0, ref_stream, eta, defense=None, record_trajectory=False).final
        target = -theta_hat
    target = np.asarray(target, dtype=np.float64)
    n_poison = int(round(budget_fraction * horizon))

    records: list[FullyOnlineRunRecord] = []
    for q in retention_grid:
        defense, tau = build_calibrated_defense(defense_kind, stats, train, cap, retention=q)
        for name in attacks:
            for seed in seeds:
                row = dict(dataset=bundle.name, defense=defense_kind, retention=float(q),
                           tau=float(tau), attack=name, budget_fraction=float(budget_fraction),
                           seed=int(seed), offline_optimal_error=baseline)
                rng = np.random.default_rng(seed)
                positions = rng.choice(horizon, size=n_poison, replace=False) if n_poison else []
                try:
                    attacker = None
                    if n_poison and float(np.linalg.norm(target)) > 0.0:
                        config = AttackConfig(target=target, budget=n_poison,
                                              norm_cap=float(defense.radius),
                                              learning_rate=eta, tolerance=tolerance)
                        extras = _attack_extras(name, seed, validation, wk_ascent_steps,
                                                greedy_restarts=2, concentrated_orders=0)
                        attacker = make_attack(name, config, **extras)
                    result = fully_online_drive(theta0, train, positions, attacker, defense,
                                                horizon, eta, rng=rng)
                    records.append(FullyOnlineRunRecord(**row, online_error=result.online_error))
                except (AttackError, UndefinedMetricError) as exc:
                    records.append(FullyOnlineRunRecord(**row, online_error=None, error=str(exc)))
    return records


# ---------------------------------------------------------------------------
# serialization

SEMI_COLUMNS = tuple(f.name for f in fields(SemiOnlineRunRecord))
FULLY_COLUMNS = tuple(f.name for f in fields(FullyOnlineRunRecord))
_INT_FIELDS = {"K", "seed"}
_STR_FIELDS = {"dataset", "defense", "attack", "regime"}
_OPTIONAL_FIELDS = {"cos_to_target", "test_error", "online_error", "error"}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _uncell(name: str, text: str):
    if name in _STR_FIELDS:
        return text
    if text == "":
        if name in _OPTIONAL_FIELDS:
            return None
        raise ValueError(f"column {name!r} has an empty cell")
    if name == "error":
        return text
    if name in _INT_FIELDS:
        return int(text)
    return float(text)


def emit_results(records, fmt: str, path, config: dict | None = None):
    """Write records as CSV ('#' comment header, fixed column order) or JSON.

    CSV floats use repr so reading the file back reproduces the records
    exactly; identical runs produce byte-identical bodies.
    """
    if not records:
        raise ValueError("no records to write; refusing to emit an empty file")
    kinds = {type(r) for r in records}
    if len(kinds) > 1:
        raise ValueError("records must all be of one type")
    columns = SEMI_COLUMNS if isinstance(records[0], SemiOnlineRunRecord) else FULLY_COLUMNS
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    try:
        if fmt == "csv":
            import csv as _csv
            with open(path, "w", newline="") as fh:
                if config:
                    fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
                fh.write(f"# columns: {','.join(columns)}\n")
                writer = _csv.writer(fh, lineterminator="\n")
                writer.writerow(columns)
                for r in records:
                    writer.writerow([_cell(getattr(r, c)) for c in columns])
        else:
            payload = {"config": config, "records": [asdict(r) for r in records]}
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=1, sort_keys=True)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"writing results to {path}: {exc}") from exc
    return path


def read_results(path):
    """Inverse of emit_results: returns (records, config)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"reading results from {path}: {exc}") from exc
    stripped = text.lstrip()
    if stripped.startswith("{"):
        payload = json.loads(text)
        rows = payload["records"]
        cls = SemiOnlineRunRecord if rows and "cos_to_target" in rows[0] else FullyOnlineRunRecord
        return [cls(**row) for row in rows], payload.get("config")
    config = None
    lines = [ln for ln in text.splitlines() if ln]
    body = []
    for ln in lines:
        if ln.startswith("# config: "):
            config = json.loads(ln[len("# config: "):])
        elif not ln.startswith("#"):
            body.append(ln)
    import csv as _csv
    rows = list(_csv.reader(body))
    header, data = rows[0], rows[1:]
    cls = SemiOnlineRunRecord if "cos_to_target" in header else FullyOnlineRunRecord
    records = [cls(**{name: _uncell(name, cell) for name, cell in zip(header, row)})
               for row in data]
    return records, config


# ---------------------------------------------------------------------------
# SVG emission

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def emit_plot(records, path, x: str = "tau", y: str = "cos_to_target",
              group_by: str = "attack", boundaries: tuple | None = None,
              baseline: float | None = None, title: str | None = None,
              width: int = 640, height: int = 420):
    """Render one metric-vs-threshold chart as a self-contained SVG.

    One polyline per ``group_by`` value (seed-averaged at each x), shaded
    vertical bands for the easy (right, blue) and hard (left, red) threshold
    ranges when ``boundaries`` = (tau_easy, tau_hard) is given, and a single
    dashed horizontal baseline when ``baseline`` is given. Mixed defense
    kinds in one plot are refused.
    """
    if not records:
        raise ValueError("no records to plot")
    if len({r.defense for r in records}) > 1:
        raise ValueError("records mix defense kinds; plot them separately")
    if len({r.dataset for r in records}) > 1:
        raise ValueError("records mix datasets; plot them separately")

    groups: dict[str, dict[float, list[float]]] = {}
    for r in records:
        yv = getattr(r, y)
        if yv is None:
            continue
        groups.setdefault(getattr(r, group_by), {}).setdefault(float(getattr(r, x)), []).append(float(yv))
    series = {g: sorted((xv, sum(ys) / len(ys)) for xv, ys in pts.items())
              for g, pts in groups.items()}
    if not any(series.values()):
        raise ValueError("records contain no plottable values")

    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    if baseline is not None:
        ys.append(float(baseline))
    xmin, xmax = min(xs), max(xs)
    ymin, ymax = min(ys), max(ys)
    if xmax == xmin:
        xmin, xmax = xmin - 0.5, xmax + 0.5
    if ymax == ymin:
        ymin, ymax = ymin - 0.5, ymax + 0.5
    xpad, ypad = 0.05 * (xmax - xmin), 0.08 * (ymax - ymin)
    xmin, xmax = xmin - xpad, xmax + xpad
    ymin, ymax = ymin - ypad, ymax + ypad
    left, right, top, bottom = 64, 16, 28, 44
    pw, ph = width - left - right, height - top - bottom

    def sx(v: float) -> float:
        return left + (v - xmin) / (xmax - xmin) * pw

    def sy(v: float) -> float:
        return top + (ymax - v) / (ymax - ymin) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']

    if boundaries is not None:
        tau_easy, tau_hard = boundaries
        if tau_hard is not None and tau_hard > xmin:
            x1 = sx(min(float(tau_hard), xmax))
            parts.append(f'<rect x="{left}" y="{top}" width="{x1 - left:.2f}" height="{ph}" '
                         f'fill="#d62728" opacity="0.12"/>')
        if tau_easy is not None and tau_easy < xmax:
            x0 = sx(max(float(tau_easy), xmin))
            parts.append(f'<rect x="{x0:.2f}" y="{top}" width="{left + pw - x0:.2f}" height="{ph}" '
                         f'fill="#1f77b4" opacity="0.12"/>')

    # axes and ticks
    parts.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for i in range(5):
        xv = xmin + (xmax - xmin) * i / 4
        yv = ymin + (ymax - ymin) * i / 4
        parts.append(f'<line x1="{sx(xv):.2f}" y1="{top + ph}" x2="{sx(xv):.2f}" y2="{top + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{sx(xv):.2f}" y="{top + ph + 16}" text-anchor="middle">{xv:.3g}</text>')
        parts.append(f'<line x1="{left - 4}" y1="{sy(yv):.2f}" x2="{left}" y2="{sy(yv):.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 7}" y="{sy(yv) + 4:.2f}" text-anchor="end">{yv:.3g}</text>')
    parts.append(f'<text x="{left + pw / 2:.2f}" y="{height - 8}" text-anchor="middle">{escape(x)}</text>')
    parts.append(f'<text x="14" y="{top + ph / 2:.2f}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {top + ph / 2:.2f})">{escape(y)}</text>')
    if title:
        parts.append(f'<text x="{left + pw / 2:.2f}" y="16" text-anchor="middle" '
                     f'font-size="13">{escape(title)}</text>')

    if baseline is not None:
        by = sy(float(baseline))
        parts.append(f'<line x1="{left}" y1="{by:.2f}" x2="{left + pw}" y2="{by:.2f}" '
                     f'stroke="#444444" stroke-dasharray="6,4"/>')

    for gi, (gname, pts) in enumerate(sorted(series.items())):
        color = _PALETTE[gi % len(_PALETTE)]
        if len(pts) > 1:
            coords = " ".join(f"{sx(px):.2f},{sy(py):.2f}" for px, py in pts)
            parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        for px, py in pts:
            parts.append(f'<circle cx="{sx(px):.2f}" cy="{sy(py):.2f}" r="2.6" fill="{color}"/>')
        ly = top + 14 + 15 * gi
        parts.append(f'<line x1="{left + pw - 120}" y1="{ly}" x2="{left + pw - 100}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="1.6"/>')
        parts.append(f'<text x="{left + pw - 95}" y="{ly + 4}">{escape(str(gname))}</text>')

    parts.append("</svg>")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(parts) + "\n")
    except OSError as exc:
        raise OSError(f"writing plot to {path}: {exc}") from exc
    return path


def plot_boundaries(bundle: DatasetBundle, defense_kind: str, learning_rate: float = 0.01):
    """Regime threshold boundaries for a bundle's sweep, for plot shading."""
    train = bundle.train
    stats = None
    if defense_kind in ("centroid", "slab"):
        stats = fit_centroid_stats(bundle.init.X, bundle.init.y)
    theta_clean = ogd_run(np.zeros(bundle.dim), train, learning_rate,
                          record_trajectory=False).final
    return regime_boundaries(defense_kind, stats, theta_clean, -theta_clean, theta_clean)
