"""Sequential and incremental min-max-MSE precoding.

The serving BS precoder is the closed-form single-link optimum under its
own power budget.  Each helper BS is then optimized in turn, in
descending order of backhaul participation probability, with every
earlier precoder frozen: per iteration, the column carrying the worst
sub-stream MSE is re-solved in closed form from the KKT conditions of a
norm-ball-constrained convex subproblem, funded by a small power
transfer from the best sub-stream.  The loop stops when worst and best
MSEs agree to within a relative threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import _loaded_precoder, minmax_mse
from .model import ChannelSet, PrecoderSet, substream_mses, wiener_filter

TERMINATED_CONVERGED = "converged"
TERMINATED_ITERATION_CAP = "iteration_cap"


@dataclass(frozen=True)
class SipConfig:
    """Iteration controls: power-transfer fraction, stop threshold, cap."""

    delta: float = 0.01
    xi_th: float = 0.01
    n_max: int = 100

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.xi_th <= 0:
            raise ValueError("xi_th must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")


@dataclass
class SipState:
    """One helper BS iterate: precoder, per-column powers, iteration count."""

    w_current: np.ndarray
    stream_powers: np.ndarray
    iteration: int


@dataclass(frozen=True)
class SipTrace:
    """Worst-stream MSE recorded at each iterate, plus how the loop ended."""

    max_mse_history: tuple[float, ...]
    terminated_by: str
    iterations_used: int


def column_powers(w: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(w) ** 2, axis=0)


def serving_precoder(
    h1: np.ndarray, n0: float, l: int, p: float, pa_mode: str = "waterfill"
) -> np.ndarray:
    """Closed-form min-max-MSE precoder for the serving BS alone.

    Same eigen-beamform / load / rotate construction as the global
    precoder, applied to H_1^H H_1 / n0 with the single-BS budget.  In
    ``equal`` mode every stream gets amplitude sqrt(p / l) regardless of
    the spectrum (used to rule out rank adaptation for l = 4).
    """
    h1 = np.asarray(h1, dtype=complex)
    r_h1 = h1.conj().T @ h1 / n0
    return _loaded_precoder(r_h1, l, p, pa_mode)


def kkt_column_update(
    h_prev: np.ndarray, h_b: np.ndarray, f_row: np.ndarray, budget: float
) -> tuple[np.ndarray, float]:
    """Norm-ball-constrained least-MSE replacement for one precoder column.

    Minimizes |f (h_prev + H_b g)|^2 - 2 Re{f (h_prev + H_b g)} over
    ||g||^2 <= budget.  The stationarity condition gives
    g = (H_b^H f^H f H_b + eta I)^{-1} H_b^H f^H (1 - f h_prev); since
    H_b^H f^H f H_b = a a^H with a = H_b^H f^H has rank one, the solve
    collapses to g(eta) = a (1 - f h_prev) / (||a||^2 + eta).  The
    multiplier eta >= 0 is zero when the unconstrained optimum fits the
    ball, otherwise found by bisection on the monotone decreasing power
    residual ||g(eta)||^2 - budget.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    h_b = np.asarray(h_b, dtype=complex)
    f_row = np.asarray(f_row, dtype=complex).reshape(-1)
    h_prev = np.asarray(h_prev, dtype=complex).reshape(-1)

    a = h_b.conj().T @ f_row.conj()
    a_norm2 = float(np.real(a.conj() @ a))
    resid = 1.0 - complex(f_row @ h_prev)
    if budget == 0.0 or a_norm2 == 0.0 or resid == 0.0:
        return np.zeros(h_b.shape[1], dtype=complex), 0.0

    drive = a_norm2 * abs(resid) ** 2  # ||g(eta)||^2 = drive / (a_norm2 + eta)^2

    def g_power(eta: float) -> float:
        return drive / (a_norm2 + eta) ** 2

    if g_power(0.0) <= budget:
        return a * (resid / a_norm2), 0.0

    lo, hi = 0.0, 1.0
    while g_power(hi) > budget:
        hi *= 2.0
    eta = hi
    for _ in range(200):
        eta = 0.5 * (lo + hi)
        excess = g_power(eta) - budget
        if abs(excess) <= 1e-10:
            break
        if excess > 0:
            lo = eta
        else:
            hi = eta
        if hi - lo <= 1e-16 * max(hi, 1.0):
            break
    return a * (resid / (a_norm2 + eta)), eta


def transfer_budgets(powers: np.ndarray, j: int, k: int, delta: float) -> np.ndarray:
    """Move a delta fraction of stream k's power onto stream j's budget."""
    new = np.array(powers, dtype=float)
    new[j] = powers[j] + delta * powers[k]
    new[k] = powers[k] * (1.0 - delta)
    return new


def power_transfer(
    state: SipState,
    j: int,
    k: int,
    delta: float,
    h_prev: np.ndarray,
    h_b: np.ndarray,
    f_row: np.ndarray,
) -> SipState:
    """One precoder update: shrink column k, re-solve column j.

    Column k is scaled by sqrt(1 - delta); column j is replaced by the
    KKT solution under its enlarged budget.  Total power is preserved
    exactly when the new column j uses its full budget and only shrinks
    otherwise.
    """
    if j == k:
        raise ValueError("power transfer needs distinct source and target streams")
    budgets = transfer_budgets(state.stream_powers, j, k, delta)
    w = np.array(state.w_current, dtype=complex)
    w[:, k] *= np.sqrt(1.0 - delta)
    g, _eta = kkt_column_update(h_prev, h_b, f_row, float(budgets[j]))
    w[:, j] = g
    return SipState(w, column_powers(w), state.iteration + 1)


def initial_helper_precoder(nt: int, l: int, p: float) -> np.ndarray:
    """Equal-power identity-on-top initializer sqrt(p/l) [I_L, 0]^T."""
    w = np.zeros((nt, l), dtype=complex)
    w[:l, :] = np.sqrt(p / l) * np.eye(l)
    return w


def _optimize_helper(
    h_fixed: np.ndarray,
    h_b: np.ndarray,
    n0: float,
    l: int,
    p: float,
    cfg: SipConfig,
) -> tuple[np.ndarray, SipTrace]:
    """Iterative worst-stream refinement for one helper BS.

    ``h_fixed`` is the frozen equivalent-channel contribution of every
    previously designed BS.
    """
    nt = h_b.shape[1]
    w = initial_helper_precoder(nt, l, p)
    history: list[float] = []
    terminated = TERMINATED_ITERATION_CAP
    for n in range(1, cfg.n_max + 1):
        h_eq = h_fixed + h_b @ w
        f = wiener_filter(h_eq, n0)
        rep = substream_mses(f, h_eq, n0)
        history.append(rep.max_mse)
        j, k = rep.max_index, rep.min_index
        if j == k or rep.max_mse <= 0 or (rep.max_mse - rep.min_mse) / rep.max_mse <= cfg.xi_th:
            terminated = TERMINATED_CONVERGED
            break
        if n == cfg.n_max:
            break
        state = SipState(w, column_powers(w), n)
        state = power_transfer(state, j, k, cfg.delta, h_fixed[:, j], h_b, f.matrix[j, :])
        w = state.w_current
    return w, SipTrace(tuple(history), terminated, len(history))


def sip_optimize_bs(
    ch: ChannelSet, fixed: PrecoderSet, b: int, cfg: SipConfig
) -> tuple[np.ndarray, SipTrace]:
    """Optimize the precoder of BS ``b`` with BSs 0..b-1 frozen."""
    if b < 1 or b >= ch.b:
        raise ValueError("b must index a helper BS")
    if len(fixed.precoders) != b:
        raise ValueError(f"expected {b} frozen precoders, got {len(fixed.precoders)}")
    h_fixed = np.zeros((ch.nr, fixed.stream_count), dtype=complex)
    for h, w in zip(ch.channels[:b], fixed.precoders):
        h_fixed += h @ w
    return _optimize_helper(
        h_fixed, ch.channels[b], ch.n0, fixed.stream_count, fixed.power_budget, cfg
    )


def helper_order(probs) -> list[int]:
    """Helper BS indices sorted by descending participation probability.

    Ties break toward the lower BS index.
    """
    b = len(probs)
    return sorted(range(1, b), key=lambda i: (-probs[i], i))


def sip_run(
    ch: ChannelSet,
    probs,
    l: int,
    p: float,
    cfg: SipConfig,
    pa_mode: str = "waterfill",
    with_traces: bool = False,
):
    """Full sequential design: serving BS first, then each helper in order.

    ``probs`` holds per-BS participation probabilities (index 0 is the
    serving BS).  Returns the per-BS PrecoderSet; with ``with_traces``
    also returns [(bs_index, trace)] in processing order.
    """
    if len(probs) != ch.b:
        raise ValueError("need one participation probability per BS")
    precoders: list[np.ndarray | None] = [None] * ch.b
    precoders[0] = serving_precoder(ch.channels[0], ch.n0, l, p, pa_mode)
    traces: list[tuple[int, SipTrace]] = []
    h_fixed = ch.channels[0] @ precoders[0]
    for b in helper_order(probs):
        w_b, trace = _optimize_helper(h_fixed, ch.channels[b], ch.n0, l, p, cfg)
        precoders[b] = w_b
        traces.append((b, trace))
        h_fixed = h_fixed + ch.channels[b] @ w_b
    pset = PrecoderSet(tuple(precoders), l, p)
    if with_traces:
        return pset, traces
    return pset


def serving_minmax_mse(h1: np.ndarray, n0: float, w1: np.ndarray) -> float:
    """Worst-stream MSE of the serving-only link for a given precoder."""
    r_h1 = np.asarray(h1, dtype=complex).conj().T @ np.asarray(h1, dtype=complex) / n0
    return minmax_mse(w1, r_h1)
