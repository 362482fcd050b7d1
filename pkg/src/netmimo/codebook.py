"""Finite-rate feedback: random orthonormal codebooks and codeword selection.

Instead of reporting a precoder matrix, the UE reports the index of the
best entry of a codebook of 2^d candidates, scored by the worst
sub-stream MSE under the matched Wiener receiver.  Helper codewords are
picked incrementally with earlier selections frozen; the autonomous
global scheme picks one entry from a stacked codebook of 2^(B*d)
candidates so both schemes spend B*d feedback bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, substream_mses, wiener_filter


@dataclass(frozen=True)
class Codebook:
    """2^bits candidate precoders with mutually orthogonal equal-norm columns."""

    entries: tuple[np.ndarray, ...]
    bits: int
    scale: float

    def __len__(self) -> int:
        return len(self.entries)


def generate_codebook(
    rows: int, l: int, d: int, scale: float, rng_stream: np.random.Generator
) -> Codebook:
    """Draw 2^d random orthonormal-column candidates carrying total power ``scale``.

    Each entry orthonormalizes an independent complex Gaussian matrix and
    splits the power budget equally over its columns, so E^H E =
    (scale / l) I exactly.  Books are drawn fresh per channel
    realization from the caller's stream.
    """
    if l > rows:
        raise ValueError("cannot orthonormalize more columns than rows")
    if d < 1:
        raise ValueError("codebook needs at least one feedback bit")
    col_amp = np.sqrt(scale / l)
    entries = []
    for _ in range(2**d):
        while True:
            raw = rng_stream.standard_normal((rows, l)) + 1j * rng_stream.standard_normal((rows, l))
            q, r = np.linalg.qr(raw)
            diag = np.abs(np.diag(r))
            if diag.min() > 1e-12 * max(diag.max(), 1.0):
                break  # rank-deficient draws have probability zero
        entries.append(col_amp * q[:, :l])
    return Codebook(tuple(entries), d, scale)


def _max_mse_for(h_eq: np.ndarray, n0: float) -> float:
    f = wiener_filter(h_eq, n0)
    return substream_mses(f, h_eq, n0).max_mse


def select_serving_codeword(book: Codebook, h1: np.ndarray, n0: float) -> int:
    """Index of the entry minimizing the serving-only worst-stream MSE."""
    scores = [_max_mse_for(h1 @ w, n0) for w in book.entries]
    return int(np.argmin(scores))


def select_incremental_codeword(
    book: Codebook, h_fixed: np.ndarray, h_b: np.ndarray, n0: float
) -> int:
    """Best entry for one more BS given the frozen equivalent-channel part."""
    scores = [_max_mse_for(h_fixed + h_b @ w, n0) for w in book.entries]
    return int(np.argmin(scores))


def select_helper_codeword(
    book: Codebook,
    ch: ChannelSet,
    frozen: list[np.ndarray],
    b: int,
    n0: float,
) -> int:
    """Incremental selection for helper ``b`` with earlier codewords frozen."""
    if len(frozen) != b:
        raise ValueError(f"expected {b} frozen precoders, got {len(frozen)}")
    h_fixed = np.zeros((ch.nr, frozen[0].shape[1]), dtype=complex)
    for h, w in zip(ch.channels[:b], frozen):
        h_fixed += h @ w
    return select_incremental_codeword(book, h_fixed, ch.channels[b], n0)


def select_global_codeword(book: Codebook, ch: ChannelSet, n0: float) -> int:
    """Exhaustive pick from the stacked-channel codebook (rows = B*nt)."""
    h = ch.stacked()
    scores = [_max_mse_for(h @ w, n0) for w in book.entries]
    return int(np.argmin(scores))
