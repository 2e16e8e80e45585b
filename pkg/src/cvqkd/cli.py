"""Command-line front end.

Subcommands: ``rates`` (one operating point), ``sweep`` (a grid, optionally
the four reference curves), ``simulate`` (full sessions), ``bench`` and
``transcript dump``. Output is CSV or plain text on stdout; timing goes to
stderr so stdout stays byte-stable.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from cvqkd import __version__
from cvqkd.config import ATTACKS, MODES, SessionConfig, load_config
from cvqkd.core import gain_from_distance
from cvqkd.estimation import apply_margin
from cvqkd.rates import _mode_args, i_ab, i_be_max, optimize_va

CSV_COLUMNS = ("axis_value", "G", "V_A", "xi_used", "eta", "beta", "i_ab", "i_be_max", "delta_i", "delta_i_eff")
DEFAULT_MARGIN = 0.02
EXIT_USAGE = 2


def fmt(v) -> str:
    v = float(v)
    if abs(v) < 1e-12:
        v = 0.0
    return f"{v:.6g}"


def rate_row(axis_value, gain, va, xi, eta, beta, margin, mode, v_el, optimize):
    """One CSV row as a tuple of floats in :data:`CSV_COLUMNS` order."""
    if not (0 < gain <= 1 and 0 < eta <= 1 and va > 0):
        raise ValueError(f"need 0 < G <= 1, 0 < eta <= 1 and V_A > 0 (got G={gain:g}, eta={eta:g}, V_A={va:g})")
    if optimize:
        va, _ = optimize_va(gain, xi, eta, beta, mode=mode, margin_out=margin)
        xi = xi * va / 40.0
    xi_used = apply_margin(xi, gain, eta, margin) if margin else xi
    args = _mode_args(va, gain, xi_used, eta, mode, v_el)
    a = float(i_ab(*args))
    try:
        e = float(i_be_max(*args))
    except ValueError:
        e = float("nan")
    return (axis_value, gain, va, xi_used, eta, beta, a, e, a - e, beta * a - e)


def _csv(rows, extra=None) -> str:
    head = ("curve",) + CSV_COLUMNS if extra else CSV_COLUMNS
    lines = [",".join(head)]
    for i, r in enumerate(rows):
        cells = [fmt(v) for v in r]
        if extra:
            cells.insert(0, extra[i])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _margin(args) -> float:
    return 0.0 if args.margin is None else args.margin


def cmd_rates(args) -> int:
    if args.distance is not None:
        axis, gain = args.distance, gain_from_distance(args.distance, args.attenuation)
    else:
        # back-to-back link unless told otherwise
        axis = gain = 1.0 if args.gain is None else args.gain
    row = rate_row(axis, gain, args.va, args.xi, args.eta, args.beta, _margin(args), args.mode, args.v_el,
                   args.optimize_va)
    _emit(_csv([row]), args.out)
    return 0


CURVES = (
    ("solid", 0.0, False),
    ("dashed", None, False),
    ("solid_margin", 0.0, True),
    ("dashed_margin", None, True),
)


def sweep_rows(axis, start, stop, steps, va, xi, eta, beta, margin, mode, v_el, optimize, attenuation=0.2):
    if steps < 2 or not start < stop:
        raise ValueError("sweep needs steps >= 2 and start < stop")
    rows = []
    for v in np.linspace(start, stop, steps):
        gain = gain_from_distance(v, attenuation) if axis == "distance" else v
        rows.append(rate_row(v, gain, va, xi, eta, beta, margin, mode, v_el, optimize))
    return rows


def cmd_sweep(args) -> int:
    common = dict(va=args.va, eta=args.eta, beta=args.beta, mode=args.mode, v_el=args.v_el,
                  optimize=args.optimize_va, attenuation=args.attenuation)
    grid = (args.axis, args.start, args.stop, args.steps)
    if args.curves:
        rows, names = [], []
        margin = args.margin if args.margin is not None else DEFAULT_MARGIN
        for name, xi, with_margin in CURVES:
            r = sweep_rows(*grid, xi=args.xi if xi is None else xi, margin=margin if with_margin else 0.0, **common)
            rows += r
            names += [name] * len(r)
        _emit(_csv(rows, names), args.out)
    else:
        _emit(_csv(sweep_rows(*grid, xi=args.xi, margin=_margin(args), **common)), args.out)
    return 0


def session_config(args) -> SessionConfig:
    cfg = load_config(args.config) if args.config else SessionConfig()
    changes = {}
    for flag, key in (("va", "va"), ("eta", "eta"), ("beta", "beta"), ("xi", "xi"), ("mode", "mode"),
                      ("attack", "attack"), ("blocks", "blocks"), ("seed", "seed"), ("margin", "margin_out")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = value
    if args.gain is not None:
        changes.update(gain=args.gain, distance=None)
    if args.distance is not None:
        changes["distance"] = args.distance
    env = os.environ.get("CVQKD_SEED")
    if env:
        changes["seed"] = int(env)
    return cfg.replace(**changes)


def report_lines(outcome) -> list[str]:
    cfg = outcome.config
    lines = [f"config: va={cfg.va:g} eta={cfg.eta:g} G={cfg.channel_gain:.6g} blocks={cfg.blocks} "
             f"attack={cfg.attack} mode={cfg.mode} seed={cfg.seed}"]
    for i, b in enumerate(outcome.blocks):
        e = b.estimate
        lines.append(
            f"block {i}: offset={b.offset} theta={b.theta:.6g} G_hat={e.gain:.6g} xi_hat={e.excess_noise:.6g} "
            f"xi_se={e.excess_noise_se:.3g} xi_secure={e.excess_noise_secure:.6g} tamper={int(e.tamper_flag)} "
            f"slices={b.n_slices} beta={b.beta:.6g} ell={b.key_length}"
        )
    status = outcome.state if outcome.reason is None else f"{outcome.state} ({outcome.reason.name})"
    lines.append(f"state: {status}")
    lines.append(f"key bits: {outcome.key_bits}")
    if outcome.done and outcome.key_bits:
        lines.append(f"keys equal: {bool(np.array_equal(outcome.alice_key.bits, outcome.bob_key.bits))}")
    lines.append(f"transcript sha256: {outcome.transcript.digest()}")
    return lines


def cmd_simulate(args) -> int:
    from cvqkd.session import run_session, run_session_tcp

    try:
        cfg = session_config(args)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    outcome = run_session_tcp(cfg) if args.transport == "tcp" else run_session(cfg)
    dt = time.perf_counter() - t0
    print("\n".join(report_lines(outcome)))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "transcript.bin").write_bytes(outcome.transcript.to_bytes())
        if outcome.done:
            (out / "alice.key").write_bytes(outcome.alice_key.to_bytes())
            (out / "bob.key").write_bytes(outcome.bob_key.to_bytes())
    n = cfg.block_len * len(outcome.blocks)
    print(f"throughput: {n / dt:,.0f} symbols/s over {dt:.2f} s", file=sys.stderr)
    return outcome.exit_code


def bench_pipeline(n_symbols: int, batch: int = 100_000, seed: int = 0) -> float:
    """Symbols per second through emit, transmit and measure (plain arrays, no wire)."""
    from cvqkd.channel import PhysicsChannel
    from cvqkd.emitter import Emitter
    from cvqkd.receiver import choose_quadratures, measure_batch

    if n_symbols <= 0:
        return 0.0
    cfg = SessionConfig(block_len=batch - batch % 100 or 100, seed=seed)
    rng = np.random.default_rng(seed)
    emitter = Emitter.from_config(cfg, rng)
    channel = PhysicsChannel.from_config(cfg, rng)
    frames = cfg.frames_per_block
    done = 0
    t0 = time.perf_counter()
    while done < n_symbols:
        _, _, pulses = emitter.emit(frames)
        rx = channel(pulses, 0)
        measure_batch(rx, choose_quadratures(len(rx), rng), cfg.detector, rng)
        done += len(rx)
    return done / (time.perf_counter() - t0)


def bench_reconciliation(n_symbols: int, seed: int = 0) -> float:
    """Symbols per second through slice reconciliation at the reference point."""
    from cvqkd.reconciliation import choose_slices, design_boundaries, reconcile_block

    if n_symbols <= 0:
        return 0.0
    rng = np.random.default_rng(seed)
    va, eta = 40.0, 0.6
    slope = np.sqrt(eta)
    noise = 1.0 + eta * 0.06
    x = rng.normal(0, np.sqrt(va), n_symbols)
    y = slope * x + rng.normal(0, np.sqrt(noise), n_symbols)
    codec = design_boundaries(slope**2 * va + noise, choose_slices(float(i_ab(va, 1.0, 0.06, eta))))
    t0 = time.perf_counter()
    reconcile_block(x, y, codec, slope=slope, noise_var=noise, seed=seed)
    return n_symbols / (time.perf_counter() - t0)


def cmd_bench(args) -> int:
    if args.symbols <= 0:
        print("nothing to benchmark")
        return 0
    pipe = bench_pipeline(args.symbols)
    rec = bench_reconciliation(min(args.symbols, args.recon_symbols))
    print(f"pipeline: {pipe:,.0f} symbols/s (target 1,000,000)")
    print(f"reconciliation: {rec:,.0f} symbols/s (reference software figure about 100,000)")
    return 0


def cmd_transcript(args) -> int:
    from cvqkd.links import Transcript

    sys.stdout.write(Transcript.from_bytes(Path(args.file).read_bytes()).dump())
    return 0


def _physics_flags(p, xi_default):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--gain", type=float)
    g.add_argument("--distance", type=float, help="fiber length in km")
    p.add_argument("--va", type=float, default=40.0)
    p.add_argument("--xi", type=float, default=xi_default, help="excess noise (at V_A=40 with --optimize-va)")
    p.add_argument("--eta", type=float, default=0.6)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--margin", type=float, nargs="?", const=DEFAULT_MARGIN, default=None,
                   help=f"output-referred margin (bare flag: {DEFAULT_MARGIN})")
    p.add_argument("--mode", choices=MODES, default="realistic")
    p.add_argument("--v-el", type=float, default=0.01, help="electronic noise handed to Eve in paranoid mode")
    p.add_argument("--optimize-va", action="store_true")
    p.add_argument("--attenuation", type=float, default=0.2, help="dB/km")
    p.add_argument("--out")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvqkd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rates", help="closed-form rates at one operating point")
    _physics_flags(p, 0.06)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("sweep", help="rates over a gain or distance grid")
    _physics_flags(p, 0.06)
    p.add_argument("--axis", choices=("distance", "gain"), default="distance")
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=100.0)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--curves", action="store_true", help="emit the four reference curves with a curve column")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="run a full simulated session")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--gain", type=float)
    g.add_argument("--distance", type=float)
    p.add_argument("--va", type=float)
    p.add_argument("--xi", type=float, help="channel excess noise on top of the source budget")
    p.add_argument("--eta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--margin", type=float, nargs="?", const=DEFAULT_MARGIN, default=None)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--blocks", type=_positive_int)
    p.add_argument("--attack", choices=ATTACKS)
    p.add_argument("--config")
    p.add_argument("--out", help="directory for key files and the transcript")
    p.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="throughput of the simulation pipeline and reconciliation")
    p.add_argument("--symbols", type=int, default=1_000_000)
    p.add_argument("--recon-symbols", type=int, default=50_000)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("transcript", help="transcript tools")
    tsub = p.add_subparsers(dest="action", required=True)
    d = tsub.add_parser("dump", help="render a binary transcript as text")
    d.add_argument("file")
    d.set_defaults(func=cmd_transcript)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
