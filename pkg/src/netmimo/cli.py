"""Command-line front end: config parsing, sweeps, reports.

Configuration is flat ``key=value`` text ('#' starts a comment); command
line flags override file values.  Data goes to standard output or the
``--out`` file as CSV, everything else to standard error.  Results are
byte-identical for a fixed seed regardless of worker count.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field, replace

from .backhaul import (
    BackhaulParams,
    Deadline,
    ParticipationProfile,
    participation_probability,
)
from .montecarlo import (
    FEEDBACK_MODES,
    SCHEMES,
    SimConfig,
    SweepRow,
    mean_convergence_trace,
    sweep,
)
from .selftest import run_selftest
from .sip import SipConfig

CSV_HEADER = "scheme,B,nr,feedback,d,snr_db,mean_max_mse,mean_mse,ber,realizations,seed"

PAPER_SCALE_REALIZATIONS = 10_000
PAPER_SCALE_SYMBOLS = 1_000_000


class ConfigError(ValueError):
    pass


@dataclass
class RunPlan:
    """Everything one ``simulate`` invocation will execute."""

    b: int = 2
    nt: int = 4
    nr: int = 2
    l: int | None = None
    snr: tuple[float, ...] = tuple(float(x) for x in range(0, 21, 2))
    schemes: tuple[str, ...] = ("SIP", "AGP", "ST")
    feedback: str = "perfect"
    bits: tuple[int, ...] = (4,)
    realizations: int = 1000
    symbols: int = 10_000
    seed: int = 1
    alpha: float = 1.0
    beta: float = 2.5
    t0: tuple[float, ...] = ()
    deadline: float = 11.0
    p: tuple[float, ...] | None = None
    delta: float = 0.01
    xi_th: float = 0.01
    n_max: int = 100
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    filter: str = "realized"

    def stream_count(self) -> int:
        return self.l if self.l is not None else self.nr

    def helper_t0(self) -> tuple[float, ...]:
        if self.t0:
            if len(self.t0) == 1:
                return self.t0 * (self.b - 1)
            if len(self.t0) != self.b - 1:
                raise ConfigError("t0 must list one shift per helper BS")
            return self.t0
        # First helper on the nominal backhaul, farther ones congested.
        return tuple(7.5 if i == 0 else 8.5 for i in range(self.b - 1))

    def profile(self) -> ParticipationProfile:
        if self.p is not None:
            if len(self.p) != self.b - 1:
                raise ConfigError("p must list one probability per helper BS")
            return ParticipationProfile((1.0,) + self.p)
        helpers = [BackhaulParams(self.alpha, self.beta, t0) for t0 in self.helper_t0()]
        return ParticipationProfile.from_backhaul(helpers, Deadline(self.deadline))

    def sim_configs(self) -> list[SimConfig]:
        profile = self.profile()
        sip_cfg = SipConfig(self.delta, self.xi_th, self.n_max)
        bit_choices = self.bits if self.feedback == "codebook" else (0,)
        configs = []
        for scheme in self.schemes:
            for d in bit_choices:
                try:
                    configs.append(
                        SimConfig(
                            b_count=self.b,
                            nt=self.nt,
                            nr=self.nr,
                            l=self.stream_count(),
                            snr_grid=self.snr,
                            p_profile=profile,
                            scheme=scheme,
                            feedback=self.feedback,
                            bits=d if self.feedback == "codebook" else 4,
                            realizations=self.realizations,
                            symbols_per_realization=self.symbols,
                            master_seed=self.seed,
                            sip=sip_cfg,
                            assume_full_jt_filter=self.filter == "assumed",
                        )
                    )
                except ValueError as exc:
                    raise ConfigError(str(exc)) from exc
        return configs


_INT_KEYS = {"b", "nt", "nr", "l", "realizations", "symbols", "seed", "n_max", "workers"}
_FLOAT_KEYS = {"alpha", "beta", "deadline", "delta", "xi_th"}
_FLOAT_LIST_KEYS = {"snr", "t0", "p"}
_INT_LIST_KEYS = {"bits"}
_STR_KEYS = {"feedback", "filter"}
_STR_LIST_KEYS = {"schemes"}
_ALL_KEYS = (
    _INT_KEYS | _FLOAT_KEYS | _FLOAT_LIST_KEYS | _INT_LIST_KEYS | _STR_KEYS | _STR_LIST_KEYS
)


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in values:
                print(f"warning: duplicate key {key!r} at {path}:{lineno}, last wins", file=sys.stderr)
            values[key] = value
    return values


def _convert(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _FLOAT_LIST_KEYS:
            return tuple(float(v) for v in value.split(","))
        if key in _INT_LIST_KEYS:
            return tuple(int(v) for v in value.split(","))
        if key in _STR_LIST_KEYS:
            return tuple(v.strip() for v in value.split(","))
        return value.strip()
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key!r}: {value!r}") from exc


def parse_config(path: str | None, overrides: dict[str, str] | None = None) -> RunPlan:
    """Build a run plan from a config file plus flag overrides (flags win)."""
    values = _read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    plan = RunPlan()
    for key, value in values.items():
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(plan, key, _convert(key, value))

    if plan.b < 1:
        raise ConfigError("b must be at least 1")
    for scheme in plan.schemes:
        if scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {scheme!r} (choose from {', '.join(SCHEMES)})")
    if plan.feedback not in FEEDBACK_MODES:
        raise ConfigError(f"feedback must be one of {', '.join(FEEDBACK_MODES)}")
    if plan.filter not in ("realized", "assumed"):
        raise ConfigError("filter must be 'realized' or 'assumed'")
    if plan.workers < 1:
        raise ConfigError("workers must be at least 1")
    plan.profile()  # validates backhaul / probability settings eagerly
    plan.sim_configs()
    return plan


def _fmt(x: float) -> str:
    return format(x, ".8g")


def csv_line(row: SweepRow) -> str:
    return ",".join(
        [
            row.scheme,
            str(row.b),
            str(row.nr),
            row.feedback,
            str(row.d),
            _fmt(row.snr_db),
            _fmt(row.mean_max_mse),
            _fmt(row.mean_mse),
            _fmt(row.ber),
            str(row.realizations),
            str(row.seed),
        ]
    )


def run_simulate(plan: RunPlan, out_path: str | None, plot: bool) -> int:
    rows: list[SweepRow] = []
    for cfg in plan.sim_configs():
        label = f"{cfg.scheme}/{cfg.feedback}" + (
            f"/d={cfg.bits}" if cfg.feedback == "codebook" else ""
        )
        print(
            f"running {label}: {cfg.realizations} realizations x "
            f"{len(cfg.snr_grid)} SNR points ({plan.workers} workers)",
            file=sys.stderr,
        )
        rows.extend(sweep(cfg, workers=plan.workers))

    lines = [CSV_HEADER] + [csv_line(r) for r in rows]
    text = "\n".join(lines) + "\n"
    if out_path:
        try:
            with open(out_path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write {out_path}: {exc}", file=sys.stderr)
            return 1
        if plot:
            from . import plots

            for p in plots.render_sweep_figures(rows, out_path):
                print(f"wrote {p}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return 0


def run_trace(plan: RunPlan, snr_db: float, out_path: str | None, plot: bool) -> int:
    cfgs = [c for c in plan.sim_configs() if c.scheme == "SIP"]
    if not cfgs:
        print("error: trace requires the SIP scheme in the plan", file=sys.stderr)
        return 1
    cfg = replace(cfgs[0], snr_grid=(snr_db,))
    curve = mean_convergence_trace(cfg, snr_db)
    lines = ["iteration,max_mse"] + [f"{n},{_fmt(m)}" for n, m in curve]
    text = "\n".join(lines) + "\n"
    if out_path:
        try:
            with open(out_path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write {out_path}: {exc}", file=sys.stderr)
            return 1
        if plot:
            from . import plots

            print(f"wrote {plots.render_trace_figure(curve, out_path)}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netmimo",
        description="Joint-transmission network MIMO precoding experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an SNR sweep and emit CSV")
    sim.add_argument("--config", help="flat key=value config file")
    sim.add_argument("--out", help="CSV output path (default: stdout)")
    sim.add_argument("--workers", type=int, help="worker processes")
    sim.add_argument(
        "--paper-scale",
        action="store_true",
        help=f"use {PAPER_SCALE_REALIZATIONS} realizations x {PAPER_SCALE_SYMBOLS} symbols",
    )
    sim.add_argument("--plot", action="store_true", help="render figures next to --out")
    sim.add_argument("--schemes", help="comma-separated scheme list override")
    sim.add_argument("--feedback", choices=FEEDBACK_MODES, help="feedback mode override")
    sim.add_argument("--bits", help="codebook bits per BS (comma list)")
    sim.add_argument("--snr", help="SNR grid in dB (comma list)")
    sim.add_argument("--seed", type=int, help="master seed override")
    sim.add_argument("--realizations", type=int, help="channel realizations override")
    sim.add_argument("--symbols", type=int, help="QPSK symbols per realization override")

    pb = sub.add_parser("pb", help="print a helper participation probability")
    pb.add_argument("--alpha", type=float, required=True)
    pb.add_argument("--beta", type=float, required=True)
    pb.add_argument("--t0", type=float, required=True)
    pb.add_argument("--deadline", type=float, required=True)

    trace = sub.add_parser("trace", help="per-iteration worst-MSE CSV of the SIP refinement")
    trace.add_argument("--config", help="flat key=value config file")
    trace.add_argument("--snr", type=float, required=True, help="SNR point in dB")
    trace.add_argument("--out", help="CSV output path (default: stdout)")
    trace.add_argument("--plot", action="store_true", help="render the curve next to --out")
    trace.add_argument("--realizations", type=int, help="channel realizations override")
    trace.add_argument("--seed", type=int, help="master seed override")

    sub.add_parser("selftest", help="run the golden-value check suite")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "pb":
        p = participation_probability(
            BackhaulParams(args.alpha, args.beta, args.t0), Deadline(args.deadline)
        )
        print(f"{p:.6f}")
        return 0

    if args.command == "selftest":
        ok, lines = run_selftest()
        for line in lines:
            print(line)
        return 0 if ok else 1

    overrides: dict[str, str] = {}
    for key in ("schemes", "feedback", "bits", "snr", "seed", "realizations", "symbols", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    if args.command == "trace":
        overrides.pop("snr", None)  # trace --snr is the evaluation point, not a grid

    try:
        plan = parse_config(args.config, overrides)
        if args.command == "simulate" and args.paper_scale:
            plan.realizations = PAPER_SCALE_REALIZATIONS
            plan.symbols = PAPER_SCALE_SYMBOLS
        if getattr(args, "plot", False) and not args.out:
            print("error: --plot requires --out", file=sys.stderr)
            return 1
        if args.command == "simulate":
            return run_simulate(plan, args.out, args.plot)
        return run_trace(plan, args.snr, args.out, args.plot)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
