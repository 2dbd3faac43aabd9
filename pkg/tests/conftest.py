"""Shared fixtures and reference oracles for the test suite.

High-precision reference computations live here so individual tests can
compare float64 code paths against 50-digit arithmetic.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

mp.mp.dps = 50

settings.register_profile(
    "suite",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def mp_sigmoid(z):
    return 1 / (1 + mp.e ** (-mp.mpf(z)))


def mp_ogd_trace(theta0, examples, eta):
    """Scalar online-gradient-descent recursion at 50-digit precision.

    Returns the final parameter vector as a list of mpf values.
    """
    theta = [mp.mpf(t) for t in theta0]
    eta = mp.mpf(eta)
    for x, y in examples:
        x = [mp.mpf(v) for v in x]
        z = y * mp.fsum(t * v for t, v in zip(theta, x))
        s = mp_sigmoid(-z)
        theta = [t + eta * y * v * s for t, v in zip(theta, x)]
    return theta


def mp_root_step_scale(alignment, level, lo, hi):
    """Smallest root of c * sigmoid(-alignment * c) = level inside [lo, hi]."""
    f = lambda c: c / (1 + mp.e ** (mp.mpf(alignment) * c)) - mp.mpf(level)
    return mp.findroot(f, (mp.mpf(lo), mp.mpf(hi)), solver="bisect", tol=mp.mpf(10) ** -30)


def central_difference(f, x, eps=1e-6):
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        step = np.zeros_like(x)
        step[i] = eps
        g[i] = (f(x + step) - f(x - step)) / (2.0 * eps)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
