"""Signal model shared by every precoding scheme.

A cell-edge UE with ``nr`` antennas receives L data sub-streams from B
base stations, each with ``nt`` transmit antennas.  The received signal
is y = sum_b H_b W_b x + n with white noise of power ``n0`` per receive
antenna.  This module builds the equivalent channel of the active BS
subset, computes the MSE-optimal linear (Wiener) receiver, and evaluates
per-sub-stream MSEs in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ChannelSet:
    """Per-BS downlink channels plus the white-noise model.

    ``channels[b]`` is the nr x nt complex matrix from BS ``b`` (index 0
    is the serving BS) to the UE.  Noise covariance is ``n0 * I``.
    """

    b: int
    nt: int
    nr: int
    channels: tuple[np.ndarray, ...]
    n0: float

    def __post_init__(self):
        if self.b < 1 or self.nt < 1 or self.nr < 1:
            raise ValueError("b, nt and nr must be positive")
        if self.n0 <= 0:
            raise ValueError("noise power n0 must be positive")
        self.channels = tuple(np.asarray(h, dtype=complex) for h in self.channels)
        if len(self.channels) != self.b:
            raise ValueError(f"expected {self.b} channel matrices, got {len(self.channels)}")
        for h in self.channels:
            if h.shape != (self.nr, self.nt):
                raise ValueError(f"channel matrix has shape {h.shape}, expected {(self.nr, self.nt)}")

    def stacked(self) -> np.ndarray:
        """Horizontal concatenation [H_1, ..., H_B] (nr x B*nt)."""
        return np.hstack(self.channels)


@dataclass
class PrecoderSet:
    """Per-BS precoders W_b (nt x L each) with a common per-BS power budget."""

    precoders: tuple[np.ndarray, ...]
    stream_count: int
    power_budget: float

    def __post_init__(self):
        self.precoders = tuple(np.asarray(w, dtype=complex) for w in self.precoders)
        if self.stream_count < 1:
            raise ValueError("stream_count must be positive")
        if self.power_budget <= 0:
            raise ValueError("power_budget must be positive")
        cols = {w.shape[1] for w in self.precoders}
        if cols != {self.stream_count}:
            raise ValueError("every precoder must have stream_count columns")

    def per_bs_power(self) -> np.ndarray:
        return np.array([float(np.sum(np.abs(w) ** 2)) for w in self.precoders])

    def power_feasible(self, rel_tol: float = 1e-9) -> bool:
        """Whether every BS respects its power budget.

        Not enforced at construction: sub-blocks extracted from a
        sum-power global precoder legitimately exceed the per-BS budget.
        """
        return bool(np.all(self.per_bs_power() <= self.power_budget * (1.0 + rel_tol)))


@dataclass(frozen=True)
class ParticipationState:
    """Realized per-slot JT membership.  The serving BS (index 0) never drops."""

    active: tuple[bool, ...]

    def __post_init__(self):
        if not self.active:
            raise ValueError("participation state must cover at least the serving BS")
        if not self.active[0]:
            raise ValueError("serving BS must always be active")

    @classmethod
    def full(cls, b: int) -> "ParticipationState":
        return cls(tuple([True] * b))

    @classmethod
    def serving_only(cls, b: int) -> "ParticipationState":
        return cls((True,) + tuple([False] * (b - 1)))


@dataclass(frozen=True)
class ReceiverFilter:
    """Linear receive filter F (L x nr); row i detects sub-stream i."""

    matrix: np.ndarray


@dataclass(frozen=True)
class MseReport:
    """Per-sub-stream MSEs plus argmax/argmin indices (ties -> lowest index)."""

    per_stream: np.ndarray
    max_index: int
    min_index: int

    @property
    def max_mse(self) -> float:
        return float(self.per_stream[self.max_index])

    @property
    def min_mse(self) -> float:
        return float(self.per_stream[self.min_index])

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.per_stream))


def build_equivalent_channel(
    ch: ChannelSet, pc: PrecoderSet, state: ParticipationState
) -> np.ndarray:
    """Effective channel sum_b H_b W_b over the active BSs (nr x L).

    Absent BSs mute their transmission and contribute the zero matrix.
    """
    if len(state.active) != ch.b or len(pc.precoders) != ch.b:
        raise ValueError("participation state and precoders must cover all BSs")
    h_eq = np.zeros((ch.nr, pc.stream_count), dtype=complex)
    for h, w, on in zip(ch.channels, pc.precoders, state.active):
        if w.shape[0] != ch.nt:
            raise ValueError(f"precoder has {w.shape[0]} rows, expected {ch.nt}")
        if on:
            h_eq += h @ w
    return h_eq


def wiener_filter(h_eq: np.ndarray, n0: float) -> ReceiverFilter:
    """MSE-optimal linear receiver for the equivalent channel.

    F = H_eq^H (H_eq H_eq^H + n0 I)^{-1}.  The inverted matrix is
    Hermitian positive definite for any n0 > 0, so this never fails.
    """
    if n0 <= 0:
        raise ValueError("n0 must be positive")
    h_eq = np.asarray(h_eq, dtype=complex)
    nr = h_eq.shape[0]
    gram = h_eq @ h_eq.conj().T + n0 * np.eye(nr)
    return ReceiverFilter(h_eq.conj().T @ np.linalg.inv(gram))


def substream_mses(f: ReceiverFilter, h_eq: np.ndarray, n0: float) -> MseReport:
    """Closed-form per-sub-stream MSEs of a linear receiver.

    With unit-power uncorrelated symbols and white noise,
    M_i = ||F_{i,:} H_eq - e_i^T||^2 + n0 * ||F_{i,:}||^2.
    """
    fm = np.asarray(f.matrix, dtype=complex)
    h_eq = np.asarray(h_eq, dtype=complex)
    l = fm.shape[0]
    resid = fm @ h_eq - np.eye(l)
    mses = np.sum(np.abs(resid) ** 2, axis=1) + n0 * np.sum(np.abs(fm) ** 2, axis=1)
    mses = np.real(mses)
    return MseReport(mses, int(np.argmax(mses)), int(np.argmin(mses)))


def hermitian_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns) with
    A = V diag(lam) V^H.  The input is symmetrized as (A + A^H)/2 first;
    it must be Hermitian to within 1e-10 of its norm.  Matrices here are
    at most 12 x 12, so the O(n^3)-per-sweep cost is irrelevant.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if scale > 0 and np.linalg.norm(a - a.conj().T) > 1e-10 * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=complex)
    if n == 1:
        return np.array([a[0, 0].real]), v

    def _off_norm(m: np.ndarray) -> float:
        # summed directly over the off-diagonal entries: subtracting the
        # diagonal mass from the total cancels catastrophically near
        # convergence and reports zero while entries remain
        strict = m - np.diag(np.diag(m))
        return float(np.sqrt(np.sum(np.abs(strict) ** 2)))

    off = _off_norm(a)
    tol = 1e-14 * max(scale, 1e-300)
    for _ in range(60):  # sweeps; quadratic convergence ends this early
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= tol / n:
                    continue
                phase = apq / r
                alpha = a[p, p].real
                beta = a[q, q].real
                tau = (alpha - beta) / (2.0 * r)
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                # Columns of the plane rotation: [c, -s*phase; s*conj(phase), c]
                col_p = c * a[:, p] + s * np.conj(phase) * a[:, q]
                col_q = -s * phase * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = col_p, col_q
                row_p = c * a[p, :] + s * phase * a[q, :]
                row_q = -s * np.conj(phase) * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = row_p, row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                vp = c * v[:, p] + s * np.conj(phase) * v[:, q]
                vq = -s * phase * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = vp, vq
        off = _off_norm(a)

    eigvals = np.real(np.diag(a))
    order = np.argsort(eigvals, kind="stable")
    return eigvals[order], v[:, order]
