"""Acceptance criteria, each at its stated tolerance and time budget.

Every check prints one PASS/FAIL line (visible under ``pytest -v`` and when
the file is run directly with ``python tests/test_acceptance.py``).
"""

import contextlib
import io
import math
import sys
import time
from pathlib import Path

import numpy as np

from cvqkd.cli import bench_pipeline, bench_reconciliation, main as cli_main, sweep_rows
from cvqkd.config import SessionConfig
from cvqkd.emitter import draw_symbols, truncated_variance_factor
from cvqkd.rates import i_ab, i_be_max, max_distance
from cvqkd.reconciliation import choose_slices, design_boundaries, measure_beta, reconcile_block
from cvqkd.session import characterize, run_session, simulate_block
from cvqkd.wire import AbortReason

sys.path.insert(0, str(Path(__file__).parent))
from oracles import conditional_entropy_floor  # noqa: E402

REF = SessionConfig()
ETA = 0.6


def _line(n, ok, text):
    return f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}: {text}"


def criterion_1():
    t = time.perf_counter()
    a = float(i_ab(40, 1, 0, ETA))
    e = float(i_be_max(40, 1, 0, ETA))
    dt = time.perf_counter() - t
    ok = abs(a - 2.32193) <= 1e-5 and abs(e) <= 1e-10 and dt < 1e-3
    return ok, f"i_ab={a:.6f} i_be_max={e:.2e} in {dt * 1e3:.3f} ms"


def criterion_2():
    t = time.perf_counter()
    rows = sweep_rows("distance", 0.0, 100.0, 201, va=40, xi=0.06, eta=ETA, beta=1.0, margin=0.02,
                      mode="realistic", v_el=0.0, optimize=False)
    dt = time.perf_counter() - t
    at = {round(r[0], 6): r[8] for r in rows}
    d55, d60 = at[55.0], at[60.0]
    ok = d55 > 0 and d60 < 0 and dt < 1.0
    return ok, f"delta_i(55 km)={d55:+.5f} delta_i(60 km)={d60:+.5f} in {dt:.2f} s"


def criterion_3():
    t = time.perf_counter()
    opt = max_distance(40, 0.06, ETA, 0.8, optimize=True)
    fixed = max_distance(40, 0.06, ETA, 0.8, optimize=False)
    dt = time.perf_counter() - t
    # sensitivity only: the same search with the 0.02 output margin applied
    margined = max_distance(40, 0.06, ETA, 0.8, optimize=True, margin_out=0.02)
    ok_opt = not opt.capped and 15 <= opt.distance <= 30
    ok_fixed = 10 <= fixed.distance <= 15
    ok = ok_opt and ok_fixed and dt < 5
    return ok, (f"optimised V_A crossing {opt} (need [15, 30]); fixed V_A=40 crossing {fixed} "
                f"(need [10, 15]); optimised with 0.02 margin {margined} (info) in {dt:.2f} s")


def criterion_4():
    t = time.perf_counter()
    out = run_session(REF.replace(attack="intercept-resend"))
    dt = time.perf_counter() - t
    xi = out.blocks[0].estimate.excess_noise if out.blocks else float("nan")
    ok = (abs(xi - 2.0) <= 0.05 and out.reason == AbortReason.NO_POSITIVE_RATE
          and out.key_bits == 0 and dt < 10)
    se = out.blocks[0].estimate.excess_noise_se if out.blocks else float("nan")
    return ok, f"xi_hat={xi:.4f} (se {se:.3f}) state={out.state} reason={out.reason.name if out.reason else None} " \
               f"key={out.key_bits} in {dt:.2f} s"


def criterion_5():
    t = time.perf_counter()
    e = characterize(REF)
    dt = time.perf_counter() - t
    ok = abs(e.excess_noise - 0.06) <= 0.01 and dt < 10
    return ok, f"xi_hat={e.excess_noise:.4f} (se {e.excess_noise_se:.4f}, n={e.n_used}) in {dt:.2f} s"


def criterion_6():
    t = time.perf_counter()
    va = 40.0
    x, p = draw_symbols(va, 10_000_000, np.random.default_rng(REF.seed))
    v = 0.5 * (x.var() + p.var()) / va
    dt = time.perf_counter() - t
    ok = abs(v - 0.99698) <= 0.0005 and dt < 30
    return ok, (f"variance/V_A={v:.6f} (target 0.99698 +- 0.0005; exact truncated value "
                f"{truncated_variance_factor():.6f}) in {dt:.2f} s")


def criterion_7():
    t = time.perf_counter()
    worst, details = 0.0, []
    va_eff = REF.va * truncated_variance_factor()
    source = REF.modulator_variance + REF.phase_noise_variance
    for k, (g, xi) in enumerate([(g, xi) for g in (1.0, 0.5, 0.1) for xi in (0.0, 0.06)]):
        cfg = REF.replace(gain=g, xi=xi, seed=REF.seed + k)
        d = simulate_block(cfg)
        y = d.bob[d.kinds == 1]
        expect = ETA * g * va_eff + 1 + ETA * g * (source + xi) + REF.v_el
        se = expect * math.sqrt(2.0 / y.size)
        z = (float(np.mean(y * y)) - expect) / se
        worst = max(worst, abs(z))
        details.append(f"{z:+.2f}")
    dt = time.perf_counter() - t
    ok = worst <= 3 and dt < 60
    return ok, f"z-scores over the (G, xi) grid [{' '.join(details)}], max |z|={worst:.2f} in {dt:.2f} s"


def criterion_8():
    va_eff = REF.va * truncated_variance_factor()
    xi = REF.modulator_variance + REF.phase_noise_variance + REF.v_el / ETA
    slope, noise = math.sqrt(ETA), 1 + ETA * xi
    shannon = float(i_ab(va_eff, 1.0, xi, ETA))
    data = simulate_block(REF)
    key = data.kinds == 1
    a, b = data.alice[key], data.bob[key]
    codec = design_boundaries(slope**2 * va_eff + noise, choose_slices(shannon))
    floor = conditional_entropy_floor(codec.boundaries, slope, noise, va_eff)
    ok, betas, slowest = True, [], 0.0
    ref_bits = codec.bits(b)
    for run in range(3):
        t = time.perf_counter()
        bits, led = reconcile_block(a, b, codec, slope=slope, noise_var=noise, seed=run)
        slowest = max(slowest, time.perf_counter() - t)
        beta = measure_beta(led, codec.n_slices, shannon)
        betas.append(beta)
        ok &= np.array_equal(bits, ref_bits) and beta >= 0.7 and led.disclosed_bits / a.size >= floor
    ok &= slowest < 120
    return ok, (f"beta={', '.join(f'{x:.3f}' for x in betas)} (need >= 0.7), leak/symbol>={floor:.4f} floor, "
                f"bit-identical, slowest block {slowest:.2f} s")


def criterion_9(tmp_dir: Path):
    from cvqkd.privacy import SecretKey

    dirs = [tmp_dir / "run1", tmp_dir / "run2"]
    with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(io.StringIO()):
        codes = [cli_main(["simulate", "--seed", "42", "--out", str(d)]) for d in dirs]
    files = {name: [(d / name).read_bytes() for d in dirs] for name in ("transcript.bin", "alice.key", "bob.key")}
    same = all(a == b for a, b in files.values())
    ka = SecretKey.from_bytes(files["alice.key"][0])
    kb = SecretKey.from_bytes(files["bob.key"][0])
    ok = codes == [0, 0] and same and ka.length > 0 and np.array_equal(ka.bits, kb.bits)
    return ok, f"exit codes {codes}, transcripts and keys byte-identical={same}, key bits={ka.length}, confirmed"


def criterion_10():
    pipe = bench_pipeline(2_000_000)
    rec = bench_reconciliation(50_000)
    ok = pipe >= 1e6
    return ok, f"pipeline {pipe:,.0f} symbols/s (need >= 1e6); reconciliation {rec:,.0f} symbols/s (info, ~1e5 reference)"


def _check(capsys, n, result):
    ok, text = result
    with capsys.disabled():
        print("\n" + _line(n, ok, text))
    assert ok, text


def test_criterion_01_closed_forms(capsys):
    _check(capsys, 1, criterion_1())


def test_criterion_02_range_with_margin(capsys):
    _check(capsys, 2, criterion_2())


def test_criterion_03_effective_range(capsys):
    _check(capsys, 3, criterion_3())


def test_criterion_04_intercept_resend(capsys):
    _check(capsys, 4, criterion_4())


def test_criterion_05_noise_budget(capsys):
    _check(capsys, 5, criterion_5())


def test_criterion_06_truncation(capsys):
    _check(capsys, 6, criterion_6())


def test_criterion_07_receiver_identity(capsys):
    _check(capsys, 7, criterion_7())


def test_criterion_08_reconciliation(capsys):
    _check(capsys, 8, criterion_8())


def test_criterion_09_determinism(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("CVQKD_SEED", raising=False)
    _check(capsys, 9, criterion_9(tmp_path))


def test_criterion_10_throughput(capsys):
    _check(capsys, 10, criterion_10())


if __name__ == "__main__":
    import tempfile

    fails = 0
    for n in range(1, 11):
        fn = globals()[f"criterion_{n}"]
        if n == 9:
            with tempfile.TemporaryDirectory() as d:
                ok, text = fn(Path(d))
        else:
            ok, text = fn()
        fails += not ok
        print(_line(n, ok, text))
    sys.exit(1 if fails else 0)
