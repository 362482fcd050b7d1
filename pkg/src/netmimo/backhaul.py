"""Shifted-gamma backhaul latency model and per-slot participation draws.

Data and precoder reports reach a helper BS over a backhaul whose delay
follows a gamma distribution shifted by ``t0`` (all times in ms).  A
helper joins the transmission slot only if its delay stays below the
scheduling deadline; the probability of that event is the regularized
lower incomplete gamma function evaluated at (deadline - t0) / alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ParticipationState

# Relative tolerance of the incomplete-gamma series / continued fraction.
# Module-level so the self-test fault-injection hook can perturb it.
_INCGAMMA_RELTOL = 1e-12
_INCGAMMA_MAX_ITER = 500


@dataclass(frozen=True)
class BackhaulParams:
    """Scale alpha, shape beta and shift t0 of the delay distribution."""

    alpha: float
    beta: float
    t0: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.t0 < 0:
            raise ValueError("t0 must be nonnegative")


@dataclass(frozen=True)
class Deadline:
    """Latest time (after data push) at which joint transmission starts."""

    t_deadline: float

    def __post_init__(self):
        if self.t_deadline <= 0:
            raise ValueError("deadline must be positive")


@dataclass(frozen=True)
class ParticipationProfile:
    """Per-BS join probabilities; index 0 is the serving BS (always 1)."""

    probs: tuple[float, ...]

    def __post_init__(self):
        if not self.probs or self.probs[0] != 1.0:
            raise ValueError("serving BS participation probability must be 1")
        if any(p < 0 or p > 1 for p in self.probs):
            raise ValueError("probabilities must lie in [0, 1]")

    @classmethod
    def from_backhaul(
        cls, helpers: list[BackhaulParams], deadline: Deadline
    ) -> "ParticipationProfile":
        probs = (1.0,) + tuple(participation_probability(p, deadline) for p in helpers)
        return cls(probs)


def _lower_gamma_series(a: float, x: float) -> float:
    """Regularized P(a, x) by power series; converges fast for x < a + 1."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_INCGAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _INCGAMMA_RELTOL:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _upper_gamma_cf(a: float, x: float) -> float:
    """Regularized Q(a, x) by modified Lentz continued fraction; for x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _INCGAMMA_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _INCGAMMA_RELTOL:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x) = gamma(a, x) / Gamma(a) for a > 0, x >= 0."""
    if a <= 0:
        raise ValueError("shape parameter must be positive")
    if x < 0:
        raise ValueError("argument must be nonnegative")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _lower_gamma_series(a, x)
    return 1.0 - _upper_gamma_cf(a, x)


def delay_pdf(params: BackhaulParams, t: float) -> float:
    """Density of the shifted-gamma backhaul delay at time t (ms)."""
    if t <= params.t0:
        return 0.0
    z = (t - params.t0) / params.alpha
    return (z ** (params.beta - 1.0)) * math.exp(-z) / (params.alpha * math.gamma(params.beta))


def participation_probability(params: BackhaulParams, d: Deadline) -> float:
    """Probability that the backhaul delay beats the deadline.

    Nondecreasing in the deadline; zero whenever the deadline precedes
    the distribution shift.
    """
    if d.t_deadline <= params.t0:
        return 0.0
    return regularized_lower_gamma(params.beta, (d.t_deadline - params.t0) / params.alpha)


def sample_participation(
    profile: ParticipationProfile, rng_stream: np.random.Generator
) -> ParticipationState:
    """One per-slot membership draw: independent Bernoulli per helper BS."""
    helpers = np.asarray(profile.probs[1:])
    if helpers.size:
        draws = rng_stream.random(helpers.size) < helpers
        active = (True,) + tuple(bool(v) for v in draws)
    else:
        active = (True,)
    return ParticipationState(active)
