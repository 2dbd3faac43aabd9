"""Online gradient descent on the logistic loss.

The learner processes a stream one example at a time with a constant step
size. When a defense (feasible set) is attached, examples outside the set are
dropped and cause no update. Everything works on the raw parameter vector;
:class:`OnlineLogisticClassifier` wraps the same loop in an estimator
interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, as_vector, check_label, check_labels, check_positive
from .errors import UndefinedMetricError
from .stream import Stream


def sigmoid(t):
    """Numerically stable logistic function, elementwise on arrays.

    Never exponentiates a positive argument, so it is finite for |t| up to
    the float64 range.
    """
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    if out.ndim == 0:
        return float(out)
    return out


def logistic_loss(theta, x, y) -> float:
    """log(1 + exp(-y * <theta, x>)), stable for margins up to ~1e4.

    The margin's sign picks the branch so exp never overflows; for large
    positive margins the value underflows gracefully toward 0.
    """
    theta = as_vector(theta, name="theta")
    x = as_vector(x, dim=theta.shape[0], name="x")
    y = check_label(y)
    z = y * float(theta @ x)
    if z >= 0:
        return float(np.log1p(np.exp(-z)))
    return float(-z + np.log1p(np.exp(z)))


def logistic_grad(theta, x, y) -> np.ndarray:
    """Gradient of the logistic loss in theta: -y * x * sigmoid(-y <theta, x>)."""
    theta = as_vector(theta, name="theta")
    x = as_vector(x, dim=theta.shape[0], name="x")
    y = check_label(y)
    z = y * float(theta @ x)
    return (-y * sigmoid(-z)) * x


def ogd_step(theta, x, y, learning_rate: float) -> np.ndarray:
    """One gradient step: theta - learning_rate * grad."""
    check_positive(learning_rate, "learning_rate")
    return np.asarray(theta, dtype=np.float64) - learning_rate * logistic_grad(theta, x, y)


@dataclass
class Trajectory:
    """Result of a stream run.

    ``models`` holds theta before each update plus the final model, so it has
    one more row than the stream when recording is on; in final-only mode it
    is None. ``accepted[i]`` is False where the defense dropped example i, and
    there the consecutive models are identical.
    """

    final: np.ndarray
    accepted: np.ndarray
    models: np.ndarray | None = None


def ogd_run(
    theta0,
    stream: Stream,
    learning_rate: float,
    defense=None,
    record_trajectory: bool = True,
) -> Trajectory:
    """Run filtered online gradient descent over the whole stream.

    Examples failing ``defense.contains`` are skipped without an update.
    Deterministic: same inputs give bit-identical trajectories.
    """
    theta = as_vector(theta0, name="theta0").copy()
    if len(stream) and stream.dim != theta.shape[0]:
        raise ValueError(f"stream dimension {stream.dim} != model dimension {theta.shape[0]}")
    eta = check_positive(learning_rate, "learning_rate")

    n = len(stream)
    accepted = np.ones(n, dtype=bool)
    models = np.empty((n + 1, theta.shape[0])) if record_trajectory else None
    if models is not None:
        models[0] = theta
    X, y = stream.X, stream.y
    for i in range(n):
        x = X[i]
        yi = int(y[i])
        if defense is not None and not defense.contains(x, yi):
            accepted[i] = False
        else:
            z = yi * float(theta @ x)
            theta = theta + (eta * yi * sigmoid(-z)) * x
        if models is not None:
            models[i + 1] = theta
    return Trajectory(final=theta, accepted=accepted, models=models)


def predict(theta, x) -> int:
    """Sign of <theta, x>: +1, -1, or 0 to abstain on an exact zero score."""
    theta = as_vector(theta, name="theta")
    x = as_vector(x, dim=theta.shape[0], name="x")
    return int(np.sign(theta @ x))


def predict_many(theta, X) -> np.ndarray:
    """Vectorized predict over rows of X."""
    theta = as_vector(theta, name="theta")
    X = as_matrix(X, dim=theta.shape[0], name="X")
    return np.sign(X @ theta).astype(np.int64)


def error_rate(theta, X, y) -> float:
    """Fraction of examples with y * <theta, x> <= 0 (abstentions count as errors)."""
    theta = as_vector(theta, name="theta")
    X = as_matrix(X, dim=theta.shape[0], name="X")
    y = check_labels(y, n=X.shape[0])
    if X.shape[0] == 0:
        raise UndefinedMetricError("error rate of an empty set is undefined")
    margins = y * (X @ theta)
    return float(np.mean(margins <= 0.0))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors; zero vectors are rejected."""
    a = as_vector(a, name="a")
    b = as_vector(b, dim=a.shape[0], name="b")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise UndefinedMetricError("cosine similarity of a zero vector is undefined")
    return float(a @ b) / (na * nb)


class OnlineLogisticClassifier(BaseEstimator, ClassifierMixin):
    """Streaming logistic classifier trained by single-pass OGD.

    Parameters
    ----------
    learning_rate : float, default=0.1
        Constant step size.
    defense : object or None
        Feasible set; examples it rejects cause no update.
    record_trajectory : bool, default=False
        Keep the full model trajectory on ``trajectory_`` (memory scales with
        stream length times dimension).

    Attributes
    ----------
    coef_ : ndarray of shape (d,)
        Final parameter vector.
    accepted_mask_ : ndarray of bool
        Per-example acceptance flags from the last fit call.

    Examples
    --------
    >>> clf = OnlineLogisticClassifier(learning_rate=1.0)
    >>> clf.fit([[1.0]], [1]).predict([[2.0]])
    array([1])
    """

    def __init__(self, learning_rate: float = 0.1, defense=None, record_trajectory: bool = False):
        self.learning_rate = learning_rate
        self.defense = defense
        self.record_trajectory = record_trajectory

    def fit(self, X, y):
        """Process (X, y) in row order starting from the zero model."""
        X = as_matrix(X, name="X")
        self.coef_ = np.zeros(X.shape[1])
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.asarray([-1, 1])
        return self.partial_fit(X, y)

    def partial_fit(self, X, y):
        """Continue the stream from the current model."""
        X = as_matrix(X, name="X")
        y = check_labels(y, n=X.shape[0])
        if not hasattr(self, "coef_"):
            return self.fit(X, y)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, estimator was fit with {self.n_features_in_}")
        traj = ogd_run(
            self.coef_,
            Stream(X, y),
            self.learning_rate,
            defense=self.defense,
            record_trajectory=self.record_trajectory,
        )
        self.coef_ = traj.final
        self.accepted_mask_ = traj.accepted
        self.trajectory_ = traj.models
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        X = as_matrix(X, dim=self.n_features_in_, name="X")
        return X @ self.coef_

    def predict(self, X) -> np.ndarray:
        """Signs of the decision scores; 0 marks an abstention."""
        return np.sign(self.decision_function(X)).astype(np.int64)
