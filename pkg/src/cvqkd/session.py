"""End-to-end session: Alice and Bob as message-driven actors.

Each actor is a generator yielding :class:`Send` and :class:`Recv` operations.
The same actor code runs under the deterministic in-process scheduler
(:func:`run_session`), over sockets (:func:`run_session_tcp`) or against a
recorded transcript (:func:`replay_alice`). Pulses travel on the physics link,
where the channel (and any eavesdropper) is a transformer on the stream;
everything else goes over the classical link.
"""

from __future__ import annotations

import math
import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from cvqkd import wire
from cvqkd.channel import PhysicsChannel
from cvqkd.config import SessionConfig, dump_config, parse_config
from cvqkd.core import PulseBatch
from cvqkd.emitter import Emitter, FramePlan, truncated_variance_factor
from cvqkd.estimation import ChannelEstimate, apply_margin, estimate_block, fit_estimate
from cvqkd.framing import PhaseError, SyncError, correct_symbols, demultiplex, detect_offset, recover_phase
from cvqkd.links import A_TO_B, B_TO_A, CLASSICAL, PHYSICS, StreamLink, Transcript
from cvqkd.privacy import SecretKey, compress, secret_length, seed_length
from cvqkd.rates import RateReport, _mode_args, i_ab, i_be_max, rate_report
from cvqkd.receiver import X, Calibration, calibrate, choose_quadratures, measure_batch
from cvqkd.reconciliation import (
    LeakageLedger,
    SliceResponder,
    alice_reconcile,
    choose_slices,
    design_boundaries,
    measure_beta,
)
from cvqkd.wire import AbortReason, MsgType

PHASES = ("Calibrate", "Sync", "Exchange", "Estimate", "Reconcile", "Amplify", "Confirm", "Done")


@dataclass(frozen=True)
class Send:
    link: int
    msg: wire.WireMessage


@dataclass(frozen=True)
class Recv:
    link: int


class SessionAbort(Exception):
    """Raised inside an actor; ``announce`` means the peer still has to be told."""

    def __init__(self, reason: AbortReason, text: str = "", announce: bool = True):
        super().__init__(f"{reason.name}: {text}" if text else reason.name)
        self.reason = reason
        self.text = text
        self.announce = announce


class StateMachine:
    """Tracks the protocol phase; blocks loop from Exchange back after Confirm."""

    def __init__(self):
        self.phase = None
        self.history = []

    def enter(self, phase: str) -> None:
        if phase not in PHASES:
            raise ValueError(phase)
        if self.phase == "Aborted":
            raise RuntimeError("session already aborted")
        i = PHASES.index(phase)
        cur = -1 if self.phase is None else PHASES.index(self.phase)
        legal = i == cur + 1 or (self.phase == "Confirm" and phase == "Exchange")
        if not legal:
            raise RuntimeError(f"illegal transition {self.phase} -> {phase}")
        self.phase = phase
        self.history.append(phase)

    def abort(self) -> None:
        self.phase = "Aborted"
        self.history.append("Aborted")


@dataclass
class BlockReport:
    """Bob's record of one block."""

    offset: int
    theta: float
    theta_se: float
    estimate: ChannelEstimate
    test_estimate: ChannelEstimate
    revealed_estimate: ChannelEstimate
    va_eff: float
    n_slices: int = 0
    n_key: int = 0
    i_ab: float = float("nan")
    i_be_secure: float = float("nan")
    report: Optional[RateReport] = None
    beta: float = float("nan")
    disclosed_bits: int = 0
    key_length: int = 0


@dataclass
class EndpointResult:
    keys: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    reason: Optional[AbortReason] = None
    text: str = ""
    calibration: Optional[Calibration] = None
    states: Optional[StateMachine] = None


@dataclass
class SessionOutcome:
    """What a session produced, from both sides."""

    config: SessionConfig
    state: str
    reason: Optional[AbortReason]
    text: str
    blocks: list
    alice_key: SecretKey
    bob_key: SecretKey
    transcript: Transcript
    calibration: Optional[Calibration] = None
    history: tuple = ()

    @property
    def done(self) -> bool:
        return self.state == "Done"

    @property
    def exit_code(self) -> int:
        return 0 if self.reason is None else int(self.reason)

    @property
    def key_bits(self) -> int:
        return self.bob_key.length

    @property
    def beta(self) -> float:
        vals = [b.beta for b in self.blocks if not math.isnan(b.beta)]
        return float(np.mean(vals)) if vals else float("nan")


def _streams(seed: int):
    alice, bob, chan = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(alice), np.random.default_rng(bob), np.random.default_rng(chan)


def _trusted_v_el(cfg: SessionConfig, cal: Calibration | None) -> float:
    if not cfg.trust_electronic_noise:
        return 0.0
    return cal.electronic_noise if cal is not None else cfg.v_el


def _secure_i_be(va, gain, xi_secure, cfg: SessionConfig, v_el_trusted: float) -> float:
    """Eve's bound for the key rate; a non-physical bracket counts as infinite leakage."""
    try:
        return float(i_be_max(*_mode_args(va, gain, xi_secure, cfg.eta, cfg.mode, v_el_trusted)))
    except (ValueError, ZeroDivisionError, FloatingPointError):
        return math.inf


def go_decision(params: dict, cfg: SessionConfig, v_el_trusted: float = 0.0) -> Optional[AbortReason]:
    """Both sides apply this to the published estimate; ``None`` means continue."""
    if params["tamper"]:
        return AbortReason.TAMPER_DETECTED
    a = float(i_ab(*_mode_args(params["va_eff"], params["gain"], params["xi"], cfg.eta, cfg.mode, v_el_trusted)))
    e = _secure_i_be(params["va_eff"], params["gain"], params["xi_secure"], cfg, v_el_trusted)
    if not a - e > 0:
        return AbortReason.NO_POSITIVE_RATE
    return None


def _expect(msg: wire.WireMessage, *types: MsgType) -> wire.WireMessage:
    if msg.type == MsgType.ABORT:
        reason, text = wire.read_abort(msg)
        raise SessionAbort(reason, text, announce=False)
    if msg.type not in types:
        raise SessionAbort(AbortReason.PROTOCOL_ERROR, f"unexpected {msg.type.name}")
    return msg


def _over_link(gen):
    """Adapt a ``(message, wants_reply)`` driver to classical Send/Recv operations."""
    reply = None
    try:
        while True:
            msg, wants = gen.send(reply)
            yield Send(CLASSICAL, msg)
            reply = _expect((yield Recv(CLASSICAL)), *wire.CLASSICAL_TYPES - {MsgType.ABORT}) if wants else None
    except StopIteration as stop:
        return stop.value


def _slice_major(bits: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(bits.T).ravel()


# --------------------------------------------------------------------------- Alice


def alice_actor(cfg: SessionConfig, rng: np.random.Generator, result: EndpointResult):
    sm = result.states = StateMachine()
    plan = FramePlan.from_config(cfg)
    emitter = Emitter.from_config(cfg, rng)
    va_eff = cfg.va * truncated_variance_factor()
    try:
        sm.enter("Calibrate")
        sm.enter("Sync")
        yield Send(CLASSICAL, wire.WireMessage(MsgType.HELLO, dump_config(cfg).encode()))
        ack = _expect((yield Recv(CLASSICAL)), MsgType.CONFIG_ACK)
        if not wire.read_config_ack(ack):
            raise SessionAbort(AbortReason.CONFIG_MISMATCH, "peer rejected configuration", announce=False)
        sent = 0
        for _ in range(cfg.blocks):
            sm.enter("Exchange")
            x, p, pulses = emitter.emit(cfg.frames_per_block)
            for lo in range(0, len(pulses), cfg.batch_size):
                hi = min(lo + cfg.batch_size, len(pulses))
                yield Send(PHYSICS, wire.pulse_batch(sent + lo, pulses[lo:hi]))
            sent += len(pulses)
            _, quads = wire.read_sync_mark(_expect((yield Recv(CLASSICAL)), MsgType.SYNC_MARK))
            if quads.size != x.size:
                raise SessionAbort(AbortReason.PROTOCOL_ERROR, "quadrature record length mismatch")
            idx = wire.read_reveal_idx(_expect((yield Recv(CLASSICAL)), MsgType.REVEAL_IDX))
            if idx.size and (idx.min() < 0 or idx.max() >= x.size):
                raise SessionAbort(AbortReason.PROTOCOL_ERROR, "reveal index out of range")
            yield Send(CLASSICAL, wire.reveal_val(x[idx], p[idx]))

            sm.enter("Estimate")
            params = wire.read_param_est(_expect((yield Recv(CLASSICAL)), MsgType.PARAM_EST))
            v_trusted = params["v_el"]
            if go_decision(params, cfg, v_trusted) is not None:
                # Bob announces the abort
                _expect((yield Recv(CLASSICAL)), MsgType.ABORT)
                raise SessionAbort(AbortReason.PROTOCOL_ERROR, "peer did not abort")

            sm.enter("Reconcile")
            kinds = plan.block_kinds(cfg.frames_per_block)
            key_idx = np.setdiff1d(np.flatnonzero(kinds == 1), idx)
            cx, cp = correct_symbols(x[key_idx], p[key_idx], params["theta"])
            values = np.where(quads[key_idx] == X, cx, cp)
            codec = design_boundaries(params["bob_variance"], params["n_slices"])
            ledger = LeakageLedger(key_idx.size)
            noise_var = params["residual_variance"]
            bits, ok = yield from _over_link(
                alice_reconcile(values, codec, params["slope"], noise_var, rng, ledger)
            )
            if not ok:
                _expect((yield Recv(CLASSICAL)), MsgType.ABORT)
                raise SessionAbort(AbortReason.PROTOCOL_ERROR, "peer did not abort")

            sm.enter("Amplify")
            length, seed = wire.read_pa_seed(_expect((yield Recv(CLASSICAL)), MsgType.PA_SEED))
            e_sec = _secure_i_be(params["va_eff"], params["gain"], params["xi_secure"], cfg, v_trusted)
            if length != secret_length(key_idx.size, e_sec, ledger, codec.n_slices, cfg.safety_bits):
                raise SessionAbort(AbortReason.PROTOCOL_ERROR, "key length disagrees with leakage ledger")
            if seed.size != seed_length(bits.size, length):
                raise SessionAbort(AbortReason.PROTOCOL_ERROR, "privacy-amplification seed has wrong length")
            key = compress(_slice_major(bits), seed, length, len(result.keys))

            sm.enter("Confirm")
            yield Send(CLASSICAL, wire.key_confirm(0, True, key.confirmation_tag))
            _, ok, _ = wire.read_key_confirm(_expect((yield Recv(CLASSICAL)), MsgType.KEY_CONFIRM))
            if not ok:
                raise SessionAbort(AbortReason.RECONCILIATION_FAILED, "confirmation tags differ", announce=False)
            result.keys.append(key)
        sm.enter("Done")
    except (SessionAbort, wire.WireError, struct.error, ValueError) as exc:
        # anything else the peer can provoke with bad payloads is a protocol error
        err = exc if isinstance(exc, SessionAbort) else SessionAbort(AbortReason.PROTOCOL_ERROR, str(exc))
        sm.abort()
        result.reason, result.text = err.reason, err.text
        if err.announce:
            yield Send(CLASSICAL, wire.abort(err.reason, err.text))
    return result


# --------------------------------------------------------------------------- Bob


def _receive_block(cfg, rng, physics_batches, det):
    """Measure the block stream: link delay, the pulses, then vacuum padding."""
    d = cfg.link_delay
    pulses = PulseBatch.concat([PulseBatch.vacuum(d)] + physics_batches + [PulseBatch.vacuum(cfg.frame_len - d)])
    quads = choose_quadratures(len(pulses), rng)
    return measure_batch(pulses, quads, det, rng), quads


def bob_actor(cfg: SessionConfig, rng: np.random.Generator, result: EndpointResult, channel):
    sm = result.states = StateMachine()
    plan = FramePlan.from_config(cfg)
    det = cfg.detector
    tx, tp = plan.test_arrays()
    n_frames = cfg.frames_per_block
    try:
        sm.enter("Calibrate")
        cal = result.calibration = calibrate(det, cfg.calibration_samples, rng)
        v_trusted = _trusted_v_el(cfg, cal)

        sm.enter("Sync")
        hello = _expect((yield Recv(CLASSICAL)), MsgType.HELLO)
        try:
            same = parse_config(hello.payload.decode()) == cfg
        except (ValueError, UnicodeDecodeError):
            same = False
        yield Send(CLASSICAL, wire.config_ack(same))
        if not same:
            # Alice aborts on the refusal itself
            raise SessionAbort(AbortReason.CONFIG_MISMATCH, "configuration differs", announce=False)

        for _ in range(cfg.blocks):
            sm.enter("Exchange")
            batches, got = [], 0
            while got < cfg.block_len:
                msg = _expect((yield Recv(PHYSICS)), MsgType.PULSE_BATCH)
                start, batch = wire.read_pulse_batch(msg)
                batch = channel(batch, start)
                batches.append(batch)
                got += len(batch)
            if got != cfg.block_len:
                raise SessionAbort(AbortReason.PROTOCOL_ERROR, "pulse count overran the block")
            stream, squads = _receive_block(cfg, rng, batches, det)
            try:
                offset = detect_offset(stream, plan)
            except SyncError as err:
                raise SessionAbort(AbortReason.SYNC_FAILED, str(err)) from None
            block = demultiplex(stream, squads, plan, n_frames, offset)
            yield Send(CLASSICAL, wire.sync_mark(offset, block.quadratures))
            data_idx = np.flatnonzero(block.data_mask)
            n_rev = max(1, round(cfg.reveal_fraction * data_idx.size))
            rev = np.sort(rng.choice(data_idx, size=n_rev, replace=False))
            yield Send(CLASSICAL, wire.reveal_idx(rev))
            rx, rp = wire.read_reveal_val(_expect((yield Recv(CLASSICAL)), MsgType.REVEAL_VAL))
            if rx.size != rev.size:
                raise SessionAbort(AbortReason.PROTOCOL_ERROR, "revealed sample size mismatch")

            sm.enter("Estimate")
            test = block.test_mask
            y, q = block.values, block.quadratures
            n_test = int(test.sum())
            sx, sp = np.resize(tx, n_test), np.resize(tp, n_test)
            try:
                ph = recover_phase(y[test], q[test], sx, sp)
            except PhaseError as err:
                raise SessionAbort(AbortReason.SYNC_FAILED, str(err)) from None
            ctx, ctp = correct_symbols(sx, sp, ph.theta)
            crx, crp = correct_symbols(rx, rp, ph.theta)
            test_pairs = (np.where(q[test] == X, ctx, ctp), y[test])
            rev_pairs = (np.where(q[rev] == X, crx, crp), y[rev])
            try:
                pooled, t_est, r_est = estimate_block(test_pairs, rev_pairs, cfg.eta, v_trusted, cfg.margin_out)
            except ValueError as err:
                raise SessionAbort(AbortReason.NO_POSITIVE_RATE, str(err)) from None

            key_idx = np.setdiff1d(data_idx, rev)
            y_key = y[key_idx]
            v_b = float(np.mean(y_key**2))
            va_eff = cfg.va * truncated_variance_factor()
            a_hat = float(i_ab(*_mode_args(va_eff, pooled.gain, pooled.excess_noise, cfg.eta, cfg.mode, v_trusted)))
            m = cfg.n_slices or choose_slices(a_hat)
            params = {
                "theta": ph.theta, "theta_se": ph.theta_se, "gain": pooled.gain, "gain_se": pooled.gain_se,
                "xi": pooled.excess_noise, "xi_se": pooled.excess_noise_se,
                "xi_secure": pooled.excess_noise_secure, "slope": pooled.slope,
                "residual_variance": pooled.residual_variance, "bob_variance": v_b, "va_eff": va_eff, "v_el": v_trusted,
            }
            yield Send(CLASSICAL, wire.param_est(params, pooled.n_used, pooled.tamper_flag, m))
            published = wire.read_param_est(wire.param_est(params, pooled.n_used, pooled.tamper_flag, m))
            e_sec = _secure_i_be(va_eff, published["gain"], published["xi_secure"], cfg, v_trusted)
            report = None
            if math.isfinite(e_sec):
                report = rate_report(va_eff, pooled.gain, pooled.excess_noise_secure, cfg.eta, cfg.beta,
                                     cfg.mode, v_trusted, cfg.symbol_rate,
                                     cfg.data_per_frame / cfg.frame_len, cfg.reveal_fraction)
            info = BlockReport(offset, ph.theta, ph.theta_se, pooled, t_est, r_est, va_eff, m, key_idx.size,
                               a_hat, e_sec, report)
            result.blocks.append(info)
            verdict = go_decision(published, cfg, v_trusted)
            if verdict is not None:
                raise SessionAbort(verdict, f"xi = {pooled.excess_noise:.4f}")

            sm.enter("Reconcile")
            codec = design_boundaries(v_b, m)
            responder = SliceResponder(codec.bits(y_key))
            while not responder.finished:
                msg = yield Recv(CLASSICAL)
                try:
                    reply = responder.handle(_expect(msg, *wire.CLASSICAL_TYPES - {MsgType.ABORT}))
                except wire.WireError as err:
                    raise SessionAbort(AbortReason.PROTOCOL_ERROR, str(err)) from None
                if reply is not None:
                    yield Send(CLASSICAL, reply)
            info.disclosed_bits = responder.ledger.disclosed_bits
            if not responder.success:
                raise SessionAbort(AbortReason.RECONCILIATION_FAILED)
            info.beta = measure_beta(responder.ledger, m, a_hat)

            sm.enter("Amplify")
            length = secret_length(key_idx.size, e_sec, responder.ledger, m, cfg.safety_bits)
            info.key_length = length
            if length == 0:
                raise SessionAbort(AbortReason.NO_POSITIVE_RATE, "leakage exhausts the key")
            seed = rng.integers(0, 2, seed_length(key_idx.size * m, length), dtype=np.uint8)
            yield Send(CLASSICAL, wire.pa_seed(length, seed))
            key = compress(_slice_major(responder.bits), seed, length, len(result.keys))

            sm.enter("Confirm")
            _, _, tag = wire.read_key_confirm(_expect((yield Recv(CLASSICAL)), MsgType.KEY_CONFIRM))
            ok = tag == key.confirmation_tag
            yield Send(CLASSICAL, wire.key_confirm(1, ok, key.confirmation_tag))
            if not ok:
                raise SessionAbort(AbortReason.RECONCILIATION_FAILED, "confirmation tags differ", announce=False)
            result.keys.append(key)
        sm.enter("Done")
    except (SessionAbort, wire.WireError, struct.error, ValueError) as exc:
        # anything else the peer can provoke with bad payloads is a protocol error
        err = exc if isinstance(exc, SessionAbort) else SessionAbort(AbortReason.PROTOCOL_ERROR, str(exc))
        sm.abort()
        result.reason, result.text = err.reason, err.text
        if err.announce:
            yield Send(CLASSICAL, wire.abort(err.reason, err.text))
    return result


# --------------------------------------------------------------------------- schedulers

ALICE, BOB = 0, 1


def _outcome(cfg, alice: EndpointResult, bob: EndpointResult, transcript) -> SessionOutcome:
    reason = bob.reason if bob.reason is not None else alice.reason
    text = bob.text if bob.reason is not None else alice.text
    n_done = min(len(alice.keys), len(bob.keys))

    def joined(keys):
        bits = [k.bits for k in keys[:n_done]]
        return SecretKey(np.concatenate(bits) if bits else np.zeros(0, dtype=np.uint8))

    history = tuple(bob.states.history) if bob.states else ()
    return SessionOutcome(cfg, "Done" if reason is None else "Aborted", reason, text, bob.blocks,
                          joined(alice.keys), joined(bob.keys), transcript, bob.calibration, history)


def _run_actors(gens, transcript: Transcript):
    """Deterministic round-robin scheduler over in-memory queues.

    An actor runs until it waits on an empty queue. If both wait, the session
    has deadlocked and both see a link error.
    """
    queues = {(link, who): deque() for link in (CLASSICAL, PHYSICS) for who in (ALICE, BOB)}
    ops = [None, None]
    live = [True, True]
    results = [None, None]

    def step(who, value=None, exc=None):
        try:
            ops[who] = gens[who].throw(exc) if exc is not None else gens[who].send(value)
        except StopIteration as stop:
            live[who] = False
            results[who] = stop.value

    for who in (ALICE, BOB):
        step(who)
    while any(live):
        progressed = False
        for who in (ALICE, BOB):
            while live[who]:
                op = ops[who]
                if isinstance(op, Send):
                    frame = wire.encode(op.msg)
                    transcript.append(op.link, A_TO_B if who == ALICE else B_TO_A, frame)
                    if live[1 - who]:
                        queues[(op.link, 1 - who)].append(frame)
                    step(who)
                else:
                    q = queues[(op.link, who)]
                    if not q:
                        break
                    step(who, wire.decode(q.popleft()))
                progressed = True
        if not progressed:
            for who in (ALICE, BOB):
                if live[who]:
                    step(who, exc=SessionAbort(AbortReason.LINK_ERROR, "peer went silent", announce=False))
    return results


def _actors(cfg: SessionConfig, alice_cfg: SessionConfig | None = None):
    ra, rb, rc = _streams(cfg.seed)
    channel = PhysicsChannel.from_config(cfg, rc)
    a_res, b_res = EndpointResult(), EndpointResult()
    gens = [alice_actor(alice_cfg or cfg, ra, a_res), bob_actor(cfg, rb, b_res, channel)]
    return gens, a_res, b_res, channel


def run_session(config: SessionConfig, alice_config: SessionConfig | None = None) -> SessionOutcome:
    """Run a full session in-process; deterministic for a given ``config.seed``.

    ``alice_config`` lets Alice start from a different configuration (Bob then
    refuses it at the handshake).
    """
    transcript = Transcript()
    gens, a_res, b_res, _ = _actors(config, alice_config)
    _run_actors(gens, transcript)
    return _outcome(config, a_res, b_res, transcript)


def _run_endpoint(gen, links: dict, transcript: Transcript, direction: int, lock: threading.Lock):
    from cvqkd.links import LinkClosed

    value, exc = None, None
    try:
        while True:
            op = gen.throw(exc) if exc is not None else gen.send(value)
            value, exc = None, None
            try:
                if isinstance(op, Send):
                    frame = links[op.link].send(op.msg)
                    with lock:
                        transcript.append(op.link, direction, frame)
                else:
                    value, _ = links[op.link].recv()
            except (LinkClosed, OSError) as err:
                exc = SessionAbort(AbortReason.LINK_ERROR, str(err), announce=False)
            except wire.WireError as err:
                # malformed or unknown frame: tell the peer and stop
                exc = SessionAbort(AbortReason.PROTOCOL_ERROR, str(err))
    except StopIteration:
        pass
    finally:
        for link in links.values():
            try:
                link.sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass


def _tcp_pair(server: socket.socket) -> tuple[StreamLink, StreamLink]:
    client = socket.create_connection(server.getsockname())
    conn, _ = server.accept()
    for s in (client, conn):
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return StreamLink(client), StreamLink(conn)


def run_session_tcp(config: SessionConfig, host: str = "127.0.0.1") -> SessionOutcome:
    """Same session with Alice and Bob in separate threads talking over TCP.

    The transcript interleaving depends on thread timing; each direction of
    each link is still in a fixed order.
    """
    gens, a_res, b_res, _ = _actors(config)
    with socket.create_server((host, 0)) as server:
        a_cls, b_cls = _tcp_pair(server)
        a_phy, b_phy = _tcp_pair(server)
    transcript, lock = Transcript(), threading.Lock()
    threads = [
        threading.Thread(target=_run_endpoint, args=(gens[ALICE], {CLASSICAL: a_cls, PHYSICS: a_phy}, transcript, A_TO_B, lock)),
        threading.Thread(target=_run_endpoint, args=(gens[BOB], {CLASSICAL: b_cls, PHYSICS: b_phy}, transcript, B_TO_A, lock)),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for link in (a_cls, b_cls, a_phy, b_phy):
        link.close()
    return _outcome(config, a_res, b_res, transcript)


@dataclass
class ReplayResult:
    alice: EndpointResult
    matches: bool
    first_mismatch: Optional[int] = None


def replay_alice(config: SessionConfig, transcript: Transcript) -> ReplayResult:
    """Drive Alice from Bob's recorded messages and compare what she sends.

    ``matches`` is true when every frame Alice emits equals the recorded one.
    """
    from_bob = {CLASSICAL: deque(), PHYSICS: deque()}
    to_bob = {CLASSICAL: deque(), PHYSICS: deque()}
    for link, d, frame in transcript.records:
        (from_bob if d == B_TO_A else to_bob)[link].append(frame)
    ra, _, _ = _streams(config.seed)
    res = EndpointResult()
    gen = alice_actor(config, ra, res)
    n_sent, mismatch = 0, None
    value, exc = None, None
    try:
        while True:
            op = gen.throw(exc) if exc is not None else gen.send(value)
            value, exc = None, None
            if isinstance(op, Send):
                rec = to_bob[op.link]
                if mismatch is None and (not rec or rec.popleft() != wire.encode(op.msg)):
                    mismatch = n_sent
                n_sent += 1
            elif from_bob[op.link]:
                value = wire.decode(from_bob[op.link].popleft())
            else:
                exc = SessionAbort(AbortReason.LINK_ERROR, "transcript exhausted", announce=False)
    except StopIteration:
        pass
    if mismatch is None and any(to_bob.values()):
        mismatch = n_sent
    return ReplayResult(res, mismatch is None, mismatch)


# --------------------------------------------------------------------------- offline helpers


@dataclass
class BlockData:
    """One simulated block with Alice's phase-corrected symbols aligned to Bob's outcomes."""

    x: np.ndarray
    p: np.ndarray
    alice: np.ndarray
    bob: np.ndarray
    quadratures: np.ndarray
    kinds: np.ndarray
    offset: int
    theta: float


def simulate_block(config: SessionConfig, seed: int | None = None) -> BlockData:
    """Emit, transmit and measure one block, then align and phase-correct it.

    No classical protocol runs; this is the physics path used for
    characterisation and benchmarks.
    """
    ra, rb, rc = _streams(config.seed if seed is None else seed)
    plan = FramePlan.from_config(config)
    x, p, pulses = Emitter.from_config(config, ra).emit(config.frames_per_block)
    rx = PhysicsChannel.from_config(config, rc)(pulses, 0)
    stream, quads = _receive_block(config, rb, [rx], config.detector)
    offset = detect_offset(stream, plan)
    block = demultiplex(stream, quads, plan, config.frames_per_block, offset)
    test = block.test_mask
    ph = recover_phase(block.values[test], block.quadratures[test], x[test], p[test])
    cx, cp = correct_symbols(x, p, ph.theta)
    alice = np.where(block.quadratures == X, cx, cp)
    return BlockData(x, p, alice, block.values, block.quadratures, block.kinds, offset, ph.theta)


def characterize(config: SessionConfig, seed: int | None = None) -> ChannelEstimate:
    """Channel estimate from every pulse of one block (all symbols revealed)."""
    data = simulate_block(config, seed)
    v_el = config.v_el if config.trust_electronic_noise else 0.0
    return fit_estimate(data.alice, data.bob, config.eta, v_el, config.margin_out)
