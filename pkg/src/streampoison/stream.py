"""Labeled example streams.

A stream is an ordered sequence of (x, y) pairs with a parallel flag marking
which entries were inserted by an attacker. Features are float64 rows of a
single matrix so that runs over long streams stay vectorizable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, check_labels


@dataclass
class Stream:
    """Ordered labeled examples with per-entry poison flags.

    Attributes
    ----------
    X : ndarray of shape (n, d)
        Feature rows, in arrival order.
    y : ndarray of shape (n,)
        Labels in {-1, +1}.
    poison : ndarray of shape (n,)
        True where the entry was inserted by an attacker.
    """

    X: np.ndarray
    y: np.ndarray
    poison: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.X = as_matrix(self.X, name="X")
        self.y = check_labels(self.y, n=self.X.shape[0], name="y")
        if self.poison is None:
            self.poison = np.zeros(self.X.shape[0], dtype=bool)
        else:
            self.poison = np.asarray(self.poison, dtype=bool)
            if self.poison.shape != (self.X.shape[0],):
                raise ValueError(
                    f"poison flags have shape {self.poison.shape}, expected ({self.X.shape[0]},)"
                )

    @classmethod
    def empty(cls, dim: int) -> "Stream":
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_examples(cls, examples, poison=None) -> "Stream":
        """Build from an iterable of (x, y) pairs."""
        examples = list(examples)
        if not examples:
            raise ValueError("cannot infer dimension from zero examples; use Stream.empty")
        X = np.stack([np.asarray(x, dtype=np.float64) for x, _ in examples])
        y = np.asarray([y for _, y in examples], dtype=np.int64)
        return cls(X, y, poison)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self.X[i], int(self.y[i])

    def append(self, x, y: int, poison: bool = True) -> "Stream":
        """Return a new stream with one example appended."""
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        if len(self) and x.shape[1] != self.dim:
            raise ValueError(f"appended example has dimension {x.shape[1]}, stream has {self.dim}")
        return Stream(
            np.concatenate([self.X, x]),
            np.concatenate([self.y, np.asarray([y], dtype=np.int64)]),
            np.concatenate([self.poison, np.asarray([poison])]),
        )

    def extend(self, X, y, poison: bool = True) -> "Stream":
        """Return a new stream with a block of examples appended."""
        X = as_matrix(X, dim=self.dim if len(self) else None, name="X")
        y = check_labels(y, n=X.shape[0], name="y")
        flags = np.full(X.shape[0], bool(poison))
        return Stream(
            np.concatenate([self.X, X]),
            np.concatenate([self.y, y]),
            np.concatenate([self.poison, flags]),
        )

    def take(self, idx) -> "Stream":
        idx = np.asarray(idx)
        return Stream(self.X[idx], self.y[idx], self.poison[idx])

    def clean_part(self) -> "Stream":
        return self.take(~self.poison)

    def poison_count(self) -> int:
        return int(self.poison.sum())


def one_sided(stream: Stream) -> Stream:
    """Map every (x, y) to the label-folded form (y*x, +1).

    The learner's update depends on (x, y) only through y*x, so this
    transformation leaves trajectories bit-identical.
    """
    X = stream.X * stream.y[:, None].astype(np.float64)
    y = np.ones(len(stream), dtype=np.int64)
    return Stream(X, y, stream.poison.copy())
