"""Global precoding under a sum power constraint, and its autonomous variant.

The stacked channel of all B BSs is treated as one point-to-point MIMO
link.  The min-max-MSE optimum is eigen-beamforming along the strongest
directions, water-filling (or forced-equal) power loading that minimizes
the sum MSE, and a final unitary rotation that spreads the sum MSE
equally over the sub-streams.  Autonomous GP keeps the per-BS row blocks
of the global precoder and zeroes the blocks of absent BSs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, ParticipationState, PrecoderSet, hermitian_eig


class DegenerateChannelError(ValueError):
    """No transmittable direction: every usable eigenvalue is zero."""


@dataclass(frozen=True)
class WaterfillResult:
    sigmas: np.ndarray
    water_level: float
    selected_eigenvalues: np.ndarray


def gram(ch: ChannelSet) -> np.ndarray:
    """Noise-whitened Gram matrix H^H H / n0 of the stacked channel."""
    h = ch.stacked()
    return h.conj().T @ h / ch.n0


def waterfill(eigs: np.ndarray, total_power: float) -> WaterfillResult:
    """Amplitude loading that minimizes the sum MSE under a total power budget.

    For each positive eigenvalue, sigma_i = sqrt((w / sqrt(lam_i) - 1/lam_i)^+)
    with the water level w set so the power budget is met with equality.
    Streams whose allocation would be negative are shut off and the level
    re-solved over the remaining active set.  Zero eigenvalues get zero
    amplitude and never enter the water-level equation.
    """
    eigs = np.asarray(eigs, dtype=float)
    if total_power <= 0:
        raise ValueError("total_power must be positive")
    positive = eigs > 0
    if not positive.any():
        raise DegenerateChannelError("all eigenvalues are nonpositive")

    idx = np.flatnonzero(positive)
    order = idx[np.argsort(-eigs[idx], kind="stable")]  # strongest first
    lam = eigs[order]
    inv_lam = 1.0 / lam
    inv_sqrt = 1.0 / np.sqrt(lam)

    m = len(lam)
    water = 0.0
    while m > 0:
        water = (total_power + inv_lam[:m].sum()) / inv_sqrt[:m].sum()
        if water > inv_sqrt[m - 1]:  # weakest active stream still above water
            break
        m -= 1
    if m == 0:
        raise DegenerateChannelError("water-filling found no active stream")

    sigmas = np.zeros(len(eigs))
    sigmas[order[:m]] = np.sqrt(water * inv_sqrt[:m] - inv_lam[:m])
    return WaterfillResult(sigmas, float(water), eigs)


def equalizing_rotation(l: int) -> np.ndarray:
    """Unitary Q with |Q_ik|^2 = 1/L, so diag(Q E Q^H) is flat for diagonal E.

    The normalized DFT matrix has constant-modulus entries, hence every
    rotated diagonal entry equals tr(E)/L exactly.
    """
    if l < 1:
        raise ValueError("l must be positive")
    k = np.arange(l)
    return np.exp(-2j * np.pi * np.outer(k, k) / l) / np.sqrt(l)


def _loaded_precoder(
    r_h: np.ndarray, l: int, total_power: float, pa_mode: str
) -> np.ndarray:
    """Eigen-beamform + power-load + rotate on a whitened Gram matrix."""
    if pa_mode not in ("waterfill", "equal"):
        raise ValueError(f"unknown pa_mode {pa_mode!r}")
    eigvals, eigvecs = hermitian_eig(r_h)
    if l > r_h.shape[0]:
        raise ValueError("stream count exceeds transmit dimensions")
    # L largest eigenvalues, kept in increasing order.
    sel = slice(r_h.shape[0] - l, r_h.shape[0])
    lam = np.maximum(eigvals[sel], 0.0)
    v = eigvecs[:, sel]
    if pa_mode == "equal":
        sigmas = np.full(l, np.sqrt(total_power / l))
    else:
        try:
            sigmas = waterfill(lam, total_power).sigmas
        except DegenerateChannelError:
            if lam.max(initial=0.0) > 0:
                raise
            # Zero channel: any power-feasible precoder is optimal.
            sigmas = np.full(l, np.sqrt(total_power / l))
    q = equalizing_rotation(l)
    return (v * sigmas) @ q.conj().T


def minmax_mse(w: np.ndarray, r_h: np.ndarray) -> float:
    """Equalized worst-stream MSE: tr{(I + W^H R_H W)^{-1}} / L."""
    l = w.shape[1]
    e = np.linalg.inv(np.eye(l) + w.conj().T @ r_h @ w)
    return float(np.real(np.trace(e))) / l


def global_precoder(
    ch: ChannelSet, l: int, total_power: float, pa_mode: str = "waterfill"
) -> tuple[np.ndarray, float]:
    """Sum-power min-max-MSE precoder over the stacked channel.

    Returns the (B*nt) x L precoder and the minimized worst-stream MSE.
    The latter lower-bounds the worst-stream MSE of every per-BS-feasible
    precoder set on the same channel with all BSs transmitting.
    """
    r_h = gram(ch)
    w = _loaded_precoder(r_h, l, total_power, pa_mode)
    return w, minmax_mse(w, r_h)


def agp_extract(w_global: np.ndarray, state: ParticipationState, nt: int | None = None) -> list[np.ndarray]:
    """Per-BS row blocks of a global precoder, zeroed for absent BSs.

    Each BS applies its own nt x L slice autonomously; a BS that missed
    the data deadline mutes itself instead.  Blocks of the sum-power
    optimum are not individually bounded by the per-BS budget.
    """
    w_global = np.asarray(w_global, dtype=complex)
    b = len(state.active)
    if nt is None:
        if w_global.shape[0] % b:
            raise ValueError("global precoder rows must split evenly across BSs")
        nt = w_global.shape[0] // b
    if w_global.shape[0] != b * nt:
        raise ValueError(f"expected {b * nt} rows, got {w_global.shape[0]}")
    blocks = []
    for i, on in enumerate(state.active):
        block = w_global[i * nt : (i + 1) * nt, :]
        blocks.append(block.copy() if on else np.zeros_like(block))
    return blocks


def agp_precoder_set(
    w_global: np.ndarray,
    state: ParticipationState,
    nt: int,
    stream_count: int,
    per_bs_power: float,
) -> PrecoderSet:
    blocks = agp_extract(w_global, state, nt)
    return PrecoderSet(tuple(blocks), stream_count, per_bs_power)
