"""Built-in golden-value checks, runnable via the ``selftest`` subcommand.

Each check recomputes a quantity with known value or a required identity
and compares at a fixed tolerance.  The suite is the release gate: it
must pass on any healthy build, and it re-reads live module state (for
example the incomplete-gamma tolerance) so an injected fault is caught.
"""

from __future__ import annotations

import numpy as np

from . import backhaul, gp, sip
from .backhaul import BackhaulParams, Deadline, ParticipationProfile
from .model import (
    ChannelSet,
    ParticipationState,
    ReceiverFilter,
    hermitian_eig,
    substream_mses,
    wiener_filter,
)
from .montecarlo import SimConfig, qpsk_demap, qpsk_map, sample_channel, sweep


def _random_channel(rng: np.random.Generator, b=2, nt=4, nr=2, n0=0.1) -> ChannelSet:
    return sample_channel(b, nt, nr, rng, n0=n0)


def _check_participation_values() -> list[tuple[str, bool, str]]:
    cases = [
        ("participation-prob-t0-7.5-T-11", 7.5, 11.0, 0.78),
        ("participation-prob-t0-7.5-T-10", 7.5, 10.0, 0.58),
        ("participation-prob-t0-8.5-T-10", 8.5, 10.0, 0.30),
        ("participation-prob-t0-8.5-T-11", 8.5, 11.0, 0.58),
    ]
    out = []
    for name, t0, t, expected in cases:
        p = backhaul.participation_probability(
            BackhaulParams(1.0, 2.5, t0), Deadline(t)
        )
        out.append((name, abs(p - expected) <= 0.01, f"p={p:.6f} expected~{expected}"))
    return out


def _check_pdf_quadrature() -> tuple[str, bool, str]:
    params = BackhaulParams(1.0, 2.5, 7.5)
    deadline = Deadline(11.0)
    grid = np.linspace(params.t0, deadline.t_deadline, 20001)
    dens = np.array([backhaul.delay_pdf(params, t) for t in grid])
    integral = float(np.trapezoid(dens, grid))
    target = backhaul.participation_probability(params, deadline)
    ok = abs(integral - target) <= 1e-6
    return ("delay-pdf-quadrature", ok, f"integral={integral:.9f} target={target:.9f}")


def _check_eigensolver() -> tuple[str, bool, str]:
    rng = np.random.default_rng(7)
    raw = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    a = raw + raw.conj().T
    lam, v = hermitian_eig(a)
    err = np.linalg.norm(v @ np.diag(lam) @ v.conj().T - a) / np.linalg.norm(a)
    ortho = np.linalg.norm(v.conj().T @ v - np.eye(8))
    ok = err <= 1e-9 and ortho <= 1e-10 and np.all(np.diff(lam) >= 0)
    return ("hermitian-eig-reconstruction", ok, f"recon={err:.2e} ortho={ortho:.2e}")


def _check_wiener_optimality() -> tuple[str, bool, str]:
    rng = np.random.default_rng(11)
    h_eq = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    n0 = 1.0
    f = wiener_filter(h_eq, n0)
    base = substream_mses(f, h_eq, n0).per_stream
    worst = 0.0
    for _ in range(100):
        delta = rng.standard_normal(f.matrix.shape) + 1j * rng.standard_normal(f.matrix.shape)
        perturbed = substream_mses(
            ReceiverFilter(f.matrix + 1e-3 * delta), h_eq, n0
        ).per_stream
        worst = min(worst, float(np.min(perturbed - base)))
    ok = worst >= -1e-9
    return ("wiener-per-stream-optimality", ok, f"worst gap={worst:.2e}")


def _check_mse_closed_form() -> tuple[str, bool, str]:
    f = ReceiverFilter(np.eye(2, dtype=complex))
    flat = substream_mses(f, np.eye(2, dtype=complex), 0.3).per_stream
    wf = wiener_filter(np.eye(2, dtype=complex), 0.5)
    scalar = substream_mses(wf, np.eye(2, dtype=complex), 0.5).per_stream
    ok = np.allclose(flat, 0.3, atol=1e-12) and np.allclose(scalar, 1.0 / 3.0, atol=1e-12)
    return ("mse-closed-form-identities", ok, f"flat={flat} scalar={scalar}")


def _check_waterfill() -> tuple[str, bool, str]:
    res = gp.waterfill(np.array([4.0, 4.0]), 2.0)
    sym_ok = np.allclose(res.sigmas, 1.0, atol=1e-12) and abs(res.water_level - 2.5) < 1e-12
    res2 = gp.waterfill(np.array([9.0, 0.01]), 0.1)
    power_ok = abs(np.sum(res2.sigmas**2) - 0.1) <= 1e-9 * 0.1
    shutoff_ok = res2.sigmas[1] == 0.0
    ok = sym_ok and power_ok and shutoff_ok
    return ("waterfill-power-equality", ok, f"sigmas={res.sigmas} weak={res2.sigmas}")


def _check_rotation() -> tuple[str, bool, str]:
    rng = np.random.default_rng(5)
    e = np.diag(rng.uniform(0.1, 0.9, size=4))
    q = gp.equalizing_rotation(4)
    diag = np.real(np.diag(q @ e @ q.conj().T))
    spread = float(diag.max() - diag.min())
    ok = spread <= 1e-12 and abs(diag[0] - np.trace(e) / 4) <= 1e-12
    return ("rotation-equalizes-diagonal", ok, f"spread={spread:.2e}")


def _check_gp_crosscheck() -> tuple[str, bool, str]:
    rng = np.random.default_rng(3)
    ch = _random_channel(rng)
    w, mse = gp.global_precoder(ch, 2, 2.0 * 4.0)
    h_eq = ch.stacked() @ w
    f = wiener_filter(h_eq, ch.n0)
    rep = substream_mses(f, h_eq, ch.n0)
    gap = abs(rep.max_mse - mse)
    spread = rep.max_mse - rep.min_mse
    ok = gap <= 1e-9 and spread <= 1e-9
    return ("gp-equal-mse-crosscheck", ok, f"gap={gap:.2e} spread={spread:.2e}")


def _check_agp_reassembly() -> tuple[str, bool, str]:
    rng = np.random.default_rng(4)
    ch = _random_channel(rng)
    w, _ = gp.global_precoder(ch, 2, 8.0)
    blocks = gp.agp_extract(w, ParticipationState.full(2), ch.nt)
    ok = np.array_equal(np.vstack(blocks), w)
    return ("agp-full-jt-reassembly", ok, "exact block reassembly")


def _check_kkt_scalar() -> tuple[str, bool, str]:
    g, eta = sip.kkt_column_update(
        np.array([0.5 + 0j]), np.array([[1.0 + 0j]]), np.array([1.0 + 0j]), 1.0
    )
    free_ok = abs(g[0] - 0.5) < 1e-12 and eta == 0.0
    g2, eta2 = sip.kkt_column_update(
        np.array([0.5 + 0j]), np.array([[1.0 + 0j]]), np.array([1.0 + 0j]), 0.04
    )
    bound_ok = abs(abs(g2[0]) - 0.2) < 1e-7 and abs(eta2 - 1.5) < 1e-6
    ok = free_ok and bound_ok
    return ("kkt-scalar-solutions", ok, f"g={g[0]:.6f} g2={abs(g2[0]):.6f} eta2={eta2:.6f}")


def _check_kkt_slackness() -> tuple[str, bool, str]:
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(20):
        h_b = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
        f_row = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        h_prev = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        budget = float(rng.uniform(0.01, 0.5))
        g, eta = sip.kkt_column_update(h_prev, h_b, f_row, budget)
        worst = max(worst, abs(eta * (np.sum(np.abs(g) ** 2) - budget)))
    ok = worst <= 1e-8
    return ("kkt-complementary-slackness", ok, f"max residual={worst:.2e}")


def _check_sip_power() -> tuple[str, bool, str]:
    rng = np.random.default_rng(23)
    ch = _random_channel(rng)
    p = 4.0
    pset = sip.sip_run(ch, (1.0, 0.78), 2, p, sip.SipConfig())
    powers = pset.per_bs_power()
    ok = bool(np.all(powers <= p * (1 + 1e-9)))
    return ("sip-per-bs-power-feasible", ok, f"powers={powers}")


def _check_qpsk_roundtrip() -> tuple[str, bool, str]:
    bits = np.array([[0, 0, 1, 1], [0, 1, 0, 1]], dtype=np.uint8)
    sym = qpsk_map(bits)
    ok = np.array_equal(qpsk_demap(sym), bits) and np.allclose(np.abs(sym), 1.0)
    return ("qpsk-gray-roundtrip", ok, "map/demap identity")


def _check_replay() -> tuple[str, bool, str]:
    cfg = SimConfig(
        snr_grid=(10.0,), realizations=2, symbols_per_realization=200, master_seed=42
    )
    first = sweep(cfg)
    second = sweep(cfg)
    ok = first == second
    return ("seeded-replay-determinism", ok, "sweep repeated bit-identically")


def run_selftest() -> tuple[bool, list[str]]:
    """Execute every check; returns (all passed, report lines)."""
    checks: list[tuple[str, bool, str]] = []
    checks.extend(_check_participation_values())
    checks.append(_check_pdf_quadrature())
    checks.append(_check_eigensolver())
    checks.append(_check_wiener_optimality())
    checks.append(_check_mse_closed_form())
    checks.append(_check_waterfill())
    checks.append(_check_rotation())
    checks.append(_check_gp_crosscheck())
    checks.append(_check_agp_reassembly())
    checks.append(_check_kkt_scalar())
    checks.append(_check_kkt_slackness())
    checks.append(_check_sip_power())
    checks.append(_check_qpsk_roundtrip())
    checks.append(_check_replay())

    lines = []
    all_ok = True
    for name, ok, detail in checks:
        all_ok &= ok
        lines.append(f"{'ok  ' if ok else 'FAIL'} {name} ({detail})")
    lines.append(f"{sum(ok for _, ok, _ in checks)}/{len(checks)} checks passed")
    return all_ok, lines
