"""Monte Carlo experiment engine: channels, QPSK links, SNR sweeps.

Every realization derives its own random streams from the master seed,
the realization index and a purpose tag, so channels, noise, symbols,
participation draws and codebooks are each independently reproducible
and identical across schemes and SNR points (common random numbers).
Realizations are independent work units; sweep results are reduced in
realization-index order, which makes the output invariant to the number
of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import codebook as cb
from .backhaul import ParticipationProfile, sample_participation
from .gp import agp_extract, global_precoder
from .model import (
    ChannelSet,
    ParticipationState,
    PrecoderSet,
    build_equivalent_channel,
    substream_mses,
    wiener_filter,
)
from .sip import SipConfig, helper_order, serving_precoder, sip_run

NOISE_POWER = 1.0  # per-BS SNR is swept through the transmit power

SCHEMES = ("GP", "AGP", "SIP", "ST")
FEEDBACK_MODES = ("perfect", "codebook")

# Purpose tags for the per-realization random streams.
_STREAM_CHANNEL = 0
_STREAM_NOISE = 1
_STREAM_SYMBOLS = 2
_STREAM_PARTICIPATION = 3
_STREAM_CODEBOOK = 4
_STREAM_CODEBOOK_GLOBAL = 5


def realization_rng(
    master_seed: int, realization_index: int, purpose: int, variant: int = 0
) -> np.random.Generator:
    """Independent, replayable stream for one (realization, purpose) pair."""
    seq = np.random.SeedSequence([master_seed, realization_index, purpose, variant])
    return np.random.default_rng(seq)


@dataclass(frozen=True)
class SimConfig:
    """One experiment cell family: a scheme swept over an SNR grid."""

    b_count: int = 2
    nt: int = 4
    nr: int = 2
    l: int = 2
    snr_grid: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    p_profile: ParticipationProfile = field(
        default_factory=lambda: ParticipationProfile((1.0, 0.78))
    )
    scheme: str = "SIP"
    feedback: str = "perfect"
    bits: int = 4
    realizations: int = 1000
    symbols_per_realization: int = 10_000
    master_seed: int = 1
    sip: SipConfig = field(default_factory=SipConfig)
    assume_full_jt_filter: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.feedback not in FEEDBACK_MODES:
            raise ValueError(f"unknown feedback mode {self.feedback!r}")
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")
        if self.symbols_per_realization < 1 or self.symbols_per_realization % self.l:
            raise ValueError("symbols_per_realization must be positive and divisible by l")
        if self.l > min(self.nr, self.b_count * self.nt):
            raise ValueError("stream count exceeds the channel rank bound")
        if len(self.p_profile.probs) != self.b_count:
            raise ValueError("participation profile must cover every BS")
        if self.feedback == "codebook" and self.bits < 1:
            raise ValueError("codebook feedback needs at least one bit")

    @property
    def pa_mode(self) -> str:
        # Water filling only for the 2-antenna UE; with l = 4 the serving
        # precoder is loaded equally so no stream is ever dropped.
        return "waterfill" if self.nr == 2 else "equal"


@dataclass(frozen=True)
class RealizationResult:
    max_mse: float
    mean_mse: float
    bit_errors: int
    bits_sent: int
    participation: ParticipationState
    iterations_used: int


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    b: int
    nr: int
    feedback: str
    d: int
    snr_db: float
    mean_max_mse: float
    mean_mse: float
    ber: float
    realizations: int
    seed: int


def sample_channel(
    b: int, nt: int, nr: int, rng_stream: np.random.Generator, n0: float = NOISE_POWER
) -> ChannelSet:
    """Unit-variance circularly symmetric complex Gaussian fading draws."""
    raw = rng_stream.standard_normal((b, nr, nt)) + 1j * rng_stream.standard_normal((b, nr, nt))
    return ChannelSet(b, nt, nr, tuple(raw / np.sqrt(2.0)), n0)


def qpsk_map(bits) -> np.ndarray | complex:
    """Gray-mapped unit-energy QPSK; bits[0] sets the real sign, bits[1] the imaginary."""
    bits = np.asarray(bits)
    sym = ((1.0 - 2.0 * bits[0]) + 1j * (1.0 - 2.0 * bits[1])) / np.sqrt(2.0)
    return complex(sym) if sym.ndim == 0 else sym


def qpsk_demap(y) -> np.ndarray:
    """Minimum-distance detection: sign of the real and imaginary parts."""
    y = np.asarray(y)
    return np.stack([(y.real < 0).astype(np.uint8), (y.imag < 0).astype(np.uint8)])


def q_function(x: float) -> float:
    """Gaussian tail probability, the analytic QPSK bit-error reference."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def awgn_qpsk_ber(es_n0_db: float, n_bits: int, rng: np.random.Generator) -> tuple[int, int]:
    """Single-stream AWGN QPSK link; returns (bit errors, bits sent)."""
    n0 = 10.0 ** (-es_n0_db / 10.0)
    n_symbols = n_bits // 2
    errors = 0
    chunk = 2_000_000
    done = 0
    while done < n_symbols:
        n = min(chunk, n_symbols - done)
        bits = rng.integers(0, 2, size=(2, n), dtype=np.uint8)
        x = qpsk_map(bits)
        noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(n0 / 2.0)
        errors += int(np.sum(qpsk_demap(x + noise) != bits))
        done += n
    return errors, 2 * n_symbols


def _design_full_jt(
    cfg: SimConfig, ch: ChannelSet, power: float, realization_index: int
) -> tuple[PrecoderSet, int]:
    """Per-BS precoders designed under the full-JT assumption.

    Returns the precoder set and the iteration count spent (SIP only).
    """
    probs = cfg.p_profile.probs
    if cfg.feedback == "perfect":
        if cfg.scheme in ("GP", "AGP"):
            w_global, _ = global_precoder(ch, cfg.l, cfg.b_count * power, cfg.pa_mode)
            blocks = agp_extract(w_global, ParticipationState.full(cfg.b_count), ch.nt)
            return PrecoderSet(tuple(blocks), cfg.l, power), 0
        if cfg.scheme == "SIP":
            pset, traces = sip_run(
                ch, probs, cfg.l, power, cfg.sip, cfg.pa_mode, with_traces=True
            )
            return pset, sum(t.iterations_used for _, t in traces)
        # ST: serving precoder only, helpers never transmit.
        w1 = serving_precoder(ch.channels[0], ch.n0, cfg.l, power, cfg.pa_mode)
        zeros = [np.zeros((ch.nt, cfg.l), dtype=complex) for _ in range(cfg.b_count - 1)]
        return PrecoderSet((w1, *zeros), cfg.l, power), 0

    # Codebook feedback: one per-BS book shared by serving and helpers,
    # one stacked book for the global scheme, both drawn per realization.
    if cfg.scheme in ("GP", "AGP"):
        rng_cb = realization_rng(
            cfg.master_seed, realization_index, _STREAM_CODEBOOK_GLOBAL, cfg.bits
        )
        book = cb.generate_codebook(
            cfg.b_count * ch.nt, cfg.l, cfg.b_count * cfg.bits, cfg.b_count * power, rng_cb
        )
        w_global = book.entries[cb.select_global_codeword(book, ch, ch.n0)]
        blocks = agp_extract(w_global, ParticipationState.full(cfg.b_count), ch.nt)
        return PrecoderSet(tuple(blocks), cfg.l, power), 0

    rng_cb = realization_rng(cfg.master_seed, realization_index, _STREAM_CODEBOOK, cfg.bits)
    book = cb.generate_codebook(ch.nt, cfg.l, cfg.bits, power, rng_cb)
    w1 = book.entries[cb.select_serving_codeword(book, ch.channels[0], ch.n0)]
    precoders = [np.zeros((ch.nt, cfg.l), dtype=complex) for _ in range(cfg.b_count)]
    precoders[0] = w1
    if cfg.scheme == "SIP":
        h_fixed = ch.channels[0] @ w1
        for b in helper_order(probs):
            idx = cb.select_incremental_codeword(book, h_fixed, ch.channels[b], ch.n0)
            precoders[b] = book.entries[idx]
            h_fixed = h_fixed + ch.channels[b] @ precoders[b]
    return PrecoderSet(tuple(precoders), cfg.l, power), 0


def run_realization(cfg: SimConfig, snr_db: float, realization_index: int) -> RealizationResult:
    """One transmission slot: design, participation draw, QPSK link.

    Precoders are designed under the full-JT assumption, helper dropout
    is realized afterwards (absent BSs mute), and the receive filter is
    matched to the realized channel unless configured otherwise.
    """
    power = NOISE_POWER * 10.0 ** (snr_db / 10.0)
    rng_ch = realization_rng(cfg.master_seed, realization_index, _STREAM_CHANNEL)
    ch = sample_channel(cfg.b_count, cfg.nt, cfg.nr, rng_ch)

    pset, iterations = _design_full_jt(cfg, ch, power, realization_index)

    rng_part = realization_rng(cfg.master_seed, realization_index, _STREAM_PARTICIPATION)
    state = sample_participation(cfg.p_profile, rng_part)
    if cfg.scheme == "ST":
        state = ParticipationState.serving_only(cfg.b_count)

    h_eq = build_equivalent_channel(ch, pset, state)
    if cfg.assume_full_jt_filter:
        h_assumed = build_equivalent_channel(ch, pset, ParticipationState.full(cfg.b_count))
        f = wiener_filter(h_assumed, ch.n0)
    else:
        f = wiener_filter(h_eq, ch.n0)
    report = substream_mses(f, h_eq, ch.n0)

    t_uses = cfg.symbols_per_realization // cfg.l
    rng_sym = realization_rng(cfg.master_seed, realization_index, _STREAM_SYMBOLS)
    bits = rng_sym.integers(0, 2, size=(2, cfg.l, t_uses), dtype=np.uint8)
    x = qpsk_map(bits)
    rng_noise = realization_rng(cfg.master_seed, realization_index, _STREAM_NOISE)
    noise = (
        rng_noise.standard_normal((cfg.nr, t_uses))
        + 1j * rng_noise.standard_normal((cfg.nr, t_uses))
    ) * np.sqrt(ch.n0 / 2.0)
    detected = f.matrix @ (h_eq @ x + noise)
    errors = int(np.sum(qpsk_demap(detected) != bits))

    return RealizationResult(
        max_mse=report.max_mse,
        mean_mse=report.mean_mse,
        bit_errors=errors,
        bits_sent=2 * cfg.l * t_uses,
        participation=state,
        iterations_used=iterations,
    )


def _sweep_job(args: tuple[SimConfig, float, int]) -> RealizationResult:
    cfg, snr_db, index = args
    return run_realization(cfg, snr_db, index)


def sweep(cfg: SimConfig, workers: int = 1) -> list[SweepRow]:
    """Aggregate realizations into one row per SNR point.

    Reduction runs in realization-index order over exact integer error
    counts, so the result is bit-identical for any worker count.
    """
    jobs = [
        (cfg, snr_db, index)
        for snr_db in cfg.snr_grid
        for index in range(cfg.realizations)
    ]
    if workers > 1 and len(jobs) > 1:
        chunk = max(1, len(jobs) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs, chunksize=chunk))
    else:
        results = [_sweep_job(job) for job in jobs]

    rows = []
    for i, snr_db in enumerate(cfg.snr_grid):
        cell = results[i * cfg.realizations : (i + 1) * cfg.realizations]
        errors = sum(r.bit_errors for r in cell)
        bits = sum(r.bits_sent for r in cell)
        rows.append(
            SweepRow(
                scheme=cfg.scheme,
                b=cfg.b_count,
                nr=cfg.nr,
                feedback=cfg.feedback,
                d=cfg.bits if cfg.feedback == "codebook" else 0,
                snr_db=float(snr_db),
                mean_max_mse=float(np.mean([r.max_mse for r in cell])),
                mean_mse=float(np.mean([r.mean_mse for r in cell])),
                ber=errors / bits,
                realizations=cfg.realizations,
                seed=cfg.master_seed,
            )
        )
    return rows


def mean_convergence_trace(cfg: SimConfig, snr_db: float) -> list[tuple[int, float]]:
    """Average worst-stream MSE per iteration of the first helper's refinement.

    Traces that converge early hold their final value, so the mean curve
    covers every iteration up to the longest run.
    """
    power = NOISE_POWER * 10.0 ** (snr_db / 10.0)
    traces = []
    for index in range(cfg.realizations):
        rng_ch = realization_rng(cfg.master_seed, index, _STREAM_CHANNEL)
        ch = sample_channel(cfg.b_count, cfg.nt, cfg.nr, rng_ch)
        _, per_helper = sip_run(
            ch, cfg.p_profile.probs, cfg.l, power, cfg.sip, cfg.pa_mode, with_traces=True
        )
        traces.append(per_helper[0][1].max_mse_history)
    longest = max(len(t) for t in traces)
    curve = []
    for n in range(longest):
        vals = [t[n] if n < len(t) else t[-1] for t in traces]
        curve.append((n + 1, float(np.mean(vals))))
    return curve
