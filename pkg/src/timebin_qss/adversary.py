"""Attack strategies acting on the photon path.

Outside eavesdropper (Eve):
    ``eve_ir_entangled``  measure coincidences, resend a two-slot entangled pair
    ``eve_ir_classical``  measure coincidences, resend two classically
                          correlated two-slot qubits
    ``eve_bs``            split off part of every pulse, store it and measure
                          after the slot roles are disclosed

Dishonest recipient (Bob):
    ``bob_ir_single``     resend a two-slot qubit to Alice from one coincidence
    ``bob_ir_sequential`` resend an (n+1)-slot qubit from n sequential coincidences

Interceptors see only photons. Inferred phases follow the correlation law:
equal ports mean a differential phase of 0, opposite ports a phase of pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import analytics, statevec
from .channel import merge_clicks, ClickLog, ALICE, BOB
from .source import EmissionEvent, PairStream, sample_grouped

EVE_IR_ENTANGLED = "eve_ir_entangled"
EVE_IR_CLASSICAL = "eve_ir_classical"
EVE_BS = "eve_bs"
BOB_IR_SINGLE = "bob_ir_single"
BOB_IR_SEQUENTIAL = "bob_ir_sequential"
KINDS = (EVE_IR_ENTANGLED, EVE_IR_CLASSICAL, EVE_BS, BOB_IR_SINGLE, BOB_IR_SEQUENTIAL)
BOB_KINDS = (BOB_IR_SINGLE, BOB_IR_SEQUENTIAL)


class AttackInfeasible(RuntimeError):
    """Raised when a sequential attack cannot fit in any packet."""


@dataclass(frozen=True)
class AdversaryModel:
    """Attack selection.

    ``n`` is the sequence length for ``bob_ir_sequential``. With
    ``rate_match`` a dishonest Bob thins his resends so Alice's click rate
    equals ``target_rate`` (or the honest rate supplied by the session when
    ``target_rate`` is None).
    """

    kind: str
    n: int = 1
    rate_match: bool = True
    target_rate: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if self.n < 1:
            raise ValueError(f"sequence length must be >= 1, got {self.n}")
        if self.kind == BOB_IR_SINGLE and self.n != 1:
            raise ValueError("bob_ir_single uses n = 1")

    @property
    def is_bob(self) -> bool:
        return self.kind in BOB_KINDS


@dataclass
class InterceptOutcome:
    coincidences: list[tuple[int, int]]
    resent: list = field(default_factory=list)
    key_guess: dict[int, int] = field(default_factory=dict)
    declared: list[tuple[int, int]] = field(default_factory=list)


# resend states -------------------------------------------------------------

def entangled_resend_state(slot: int, bit: int) -> statevec.PairState:
    """``(|k-1>|k-1> + e^{i dphi}|k>|k>)/sqrt(2)`` for coincidence slot ``k``."""
    amp = np.diag([1.0, 1.0 - 2.0 * bit]).astype(complex) / math.sqrt(2)
    return statevec.PairState(amp, slot - 1, slot - 1)


def classical_resend_state(slot: int, bit: int, phase_a_bit: int) -> statevec.PairState:
    """Product of two two-slot qubits whose phases differ by the inferred ``bit``."""
    phase_b_bit = phase_a_bit ^ bit
    qa = statevec.superposition([0.0, math.pi * phase_a_bit], start=slot - 1)
    qb = statevec.superposition([0.0, math.pi * phase_b_bit], start=slot - 1)
    return statevec.product_pair(qa, qb)


def bob_resend_state(first_slot: int, diff_bits: Sequence[int]) -> statevec.PhotonState:
    """Single photon over emission slots ``first_slot-1 .. first_slot+n-1``.

    The phase of the first slot is 0 and each following slot adds pi times its
    differential bit.
    """
    phases = [0.0]
    for b in diff_bits:
        phases.append(phases[-1] + math.pi * int(b))
    return statevec.superposition(phases, start=first_slot - 1)


@lru_cache(maxsize=None)
def _entangled_table(bit: int):
    return statevec.pair_outcome_table(entangled_resend_state(1, bit))


@lru_cache(maxsize=None)
def _classical_table(bit: int, phase_a_bit: int):
    return statevec.pair_outcome_table(classical_resend_state(1, bit, phase_a_bit))


@lru_cache(maxsize=4096)
def _bob_table(n: int, code: int):
    bits = [(code >> m) & 1 for m in range(n)]
    return statevec.photon_outcome_table(bob_resend_state(1, bits))


def _pack_bits(bits: np.ndarray) -> np.ndarray:
    """Rows of bits -> integers (bit m of the code = column m)."""
    weights = 1 << np.arange(bits.shape[1], dtype=np.int64)
    return (bits.astype(np.int64) * weights).sum(axis=1)


# measurement by an interceptor --------------------------------------------

@dataclass
class Coincidences:
    slots: np.ndarray
    bits: np.ndarray
    port_s: np.ndarray
    genuine: np.ndarray

    def __len__(self) -> int:
        return int(self.slots.size)


def measure_coincidences(
    rng: np.random.Generator, stream: PairStream, keep_s=None, keep_i=None
) -> Coincidences:
    """Coincidences seen by a party holding both photons (lossless by default).

    ``keep_s`` / ``keep_i`` select which signal and idler photons the party
    actually holds.
    """
    ids = stream.ids
    ks = np.ones(len(stream), bool) if keep_s is None else keep_s
    ki = np.ones(len(stream), bool) if keep_i is None else keep_i
    log_s = merge_clicks(rng, "s", stream.slot_s[ks], stream.port_s[ks], pairs=ids[ks])
    log_i = merge_clicks(rng, "i", stream.slot_i[ki], stream.port_i[ki], pairs=ids[ki])
    common, a, b = np.intersect1d(log_s.slots, log_i.slots, assume_unique=True, return_indices=True)
    bits = (log_s.ports[a] ^ log_i.ports[b]).astype(np.int8)
    genuine = log_s.pairs[a] == log_i.pairs[b]
    return Coincidences(common, bits, log_s.ports[a], genuine)


def sequential_windows(slots: np.ndarray, n: int) -> np.ndarray:
    """Start indices of greedy, non-overlapping runs of ``n`` consecutive slots."""
    if slots.size == 0:
        return np.zeros(0, dtype=np.int64)
    if n == 1:
        return np.arange(slots.size)
    brk = np.ones(slots.size, dtype=bool)
    brk[1:] = np.diff(slots) != 1
    run_start = np.maximum.accumulate(np.where(brk, np.arange(slots.size), 0))
    pos = np.arange(slots.size) - run_start
    run_id = np.cumsum(brk) - 1
    run_len = np.bincount(run_id)[run_id]
    return np.nonzero((pos % n == 0) & (run_len - pos >= n))[0]


def _stream_from_emission(rng: np.random.Generator, emission: EmissionEvent) -> PairStream:
    probs, shape = statevec.pair_outcome_table(emission.state)
    flat = rng.choice(probs.size, size=emission.pair_count, p=probs)
    ks, ps, ki, pi = np.unravel_index(flat, shape)
    start = np.full(emission.pair_count, emission.state.offset_s, dtype=np.int64)
    return PairStream(start, start + ks, ps.astype(np.int8), start + ki, pi.astype(np.int8))


# single-emission steps -----------------------------------------------------

def eve_ir_entangled_step(rng: np.random.Generator, emission: EmissionEvent) -> InterceptOutcome:
    co = measure_coincidences(rng, _stream_from_emission(rng, emission))
    pairs = [(int(k), int(b)) for k, b in zip(co.slots, co.bits)]
    return InterceptOutcome(
        coincidences=pairs,
        resent=[entangled_resend_state(k, b) for k, b in pairs],
        key_guess=dict(pairs),
    )


def eve_ir_classical_step(rng: np.random.Generator, emission: EmissionEvent) -> InterceptOutcome:
    co = measure_coincidences(rng, _stream_from_emission(rng, emission))
    pairs = [(int(k), int(b)) for k, b in zip(co.slots, co.bits)]
    phase_a = rng.integers(0, 2, size=len(pairs))
    return InterceptOutcome(
        coincidences=pairs,
        resent=[classical_resend_state(k, b, int(a)) for (k, b), a in zip(pairs, phase_a)],
        key_guess=dict(pairs),
    )


def eve_bs_analysis(mu: float, alpha: float, n_sif: int) -> tuple[float, float]:
    """Per-instance coincidence probability and known-bit bound for a beam-splitting Eve."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return analytics.eve_bs_info(mu, alpha, n_sif)


def _bob_resends(rng, co: Coincidences, n: int, select_prob: float):
    starts = sequential_windows(co.slots, n)
    starts = starts[rng.random(starts.size) < select_prob]
    idx = starts[:, None] + np.arange(n)[None, :]
    inferred = co.bits[idx] if starts.size else np.zeros((0, n), dtype=np.int8)
    declared_ports = rng.integers(0, 2, size=inferred.shape, dtype=np.int8)
    diff_bits = inferred ^ declared_ports
    return co.slots[starts], diff_bits, declared_ports


def bob_single_cheat_step(
    rng: np.random.Generator, emission: EmissionEvent, select_prob: float = 1.0
) -> InterceptOutcome:
    return bob_sequential_cheat_step(rng, [emission], 1, select_prob)


def bob_sequential_cheat_step(
    rng: np.random.Generator, emissions: Sequence[EmissionEvent], n: int, select_prob: float = 1.0
) -> InterceptOutcome:
    """Measure all pairs, pick runs of ``n`` coincidences and build Alice's photon.

    Bob's declared port in each window slot is random; Alice's state carries
    the inferred phase XOR that port so the two ports combine to the key.
    """
    emissions = list(emissions)
    if n < 1:
        raise ValueError("n must be >= 1")
    if emissions and n > max(e.packet.dim for e in emissions):
        raise AttackInfeasible(f"n = {n} exceeds every packet dimension")
    streams = [_stream_from_emission(rng, e) for e in emissions]
    fields = ("start", "slot_s", "port_s", "slot_i", "port_i")
    if streams:
        stream = PairStream(*(np.concatenate([getattr(s, f) for s in streams]) for f in fields))
    else:
        z = np.zeros(0, dtype=np.int64)
        stream = PairStream(z, z, z.astype(np.int8), z, z.astype(np.int8))
    co = measure_coincidences(rng, stream)
    first, diff_bits, ports = _bob_resends(rng, co, n, select_prob)
    declared = [(int(k) + m, int(ports[w, m])) for w, k in enumerate(first) for m in range(n)]
    return InterceptOutcome(
        coincidences=[(int(k), int(b)) for k, b in zip(co.slots, co.bits)],
        resent=[bob_resend_state(int(k), diff_bits[w]) for w, k in enumerate(first)],
        key_guess={k: p for k, p in declared},
        declared=declared,
    )


# session-level interception ------------------------------------------------

@dataclass
class Arrivals:
    """Photons reaching one recipient before detector merging."""

    slots: np.ndarray
    ports: np.ndarray
    pairs: np.ndarray

    @classmethod
    def empty(cls) -> "Arrivals":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.astype(np.int8), z)


@dataclass
class Delivery:
    alice: Arrivals
    bob: Arrivals
    bob_declared: Optional[ClickLog] = None
    stats: dict = field(default_factory=dict)
    eve_store: Optional[dict] = None


def honest_delivery(rng: np.random.Generator, stream: PairStream, alpha: float) -> Delivery:
    surv_s, surv_i = rng.random(len(stream)) < alpha, rng.random(len(stream)) < alpha
    ids = stream.ids
    return Delivery(
        alice=Arrivals(stream.slot_s[surv_s], stream.port_s[surv_s], ids[surv_s]),
        bob=Arrivals(stream.slot_i[surv_i], stream.port_i[surv_i], ids[surv_i]),
    )


def _unravel_pair_rows(flat, ls):
    pi = flat % 2
    rest = flat // 2
    ki = rest % ls
    rest //= ls
    return rest // 2, (rest % 2).astype(np.int8), ki, pi.astype(np.int8)


def eve_ir_delivery(
    rng: np.random.Generator, stream: PairStream, kind: str, id_offset: int
) -> Delivery:
    co = measure_coincidences(rng, stream)
    if kind == EVE_IR_ENTANGLED:
        keys = co.bits[:, None].astype(np.int64)
        flat = sample_grouped(rng, keys, lambda k: _entangled_table(k[0]))
    else:
        phase_a = rng.integers(0, 2, size=len(co), dtype=np.int64)
        keys = np.stack([co.bits.astype(np.int64), phase_a], axis=1)
        flat = sample_grouped(rng, keys, lambda k: _classical_table(k[0], k[1]))
    ks, ps, ki, pi = _unravel_pair_rows(flat, 3)
    base = co.slots - 1
    ids = id_offset + np.arange(len(co), dtype=np.int64)
    return Delivery(
        alice=Arrivals(base + ks, ps, ids),
        bob=Arrivals(base + ki, pi, ids),
        stats={
            "adversary_coincidences": len(co),
            "adversary_genuine_coincidences": int(co.genuine.sum()),
            "resends": len(co),
        },
        eve_store={"slots": co.slots, "bits": co.bits},
    )


def eve_bs_delivery(rng: np.random.Generator, stream: PairStream, alpha: float) -> Delivery:
    fwd_s = rng.random(len(stream)) < alpha
    fwd_i = rng.random(len(stream)) < alpha
    ids = stream.ids
    kept_pair = ~fwd_s & ~fwd_i
    eve_co = measure_coincidences(rng, stream, keep_s=~fwd_s, keep_i=~fwd_i)
    genuine_slots = stream.slot_s[kept_pair & stream.coincident]
    return Delivery(
        alice=Arrivals(stream.slot_s[fwd_s], stream.port_s[fwd_s], ids[fwd_s]),
        bob=Arrivals(stream.slot_i[fwd_i], stream.port_i[fwd_i], ids[fwd_i]),
        stats={"kept_pairs": int(kept_pair.sum())},
        eve_store={
            "genuine_slots": np.sort(genuine_slots),
            "co_slots": eve_co.slots,
            "co_bits": eve_co.bits,
        },
    )


def bob_delivery(
    rng: np.random.Generator,
    stream: PairStream,
    n: int,
    target_rate: Optional[float],
    n_slots: int,
    id_offset: int,
) -> Delivery:
    """Bob holds both photons; Alice receives only his resent single photons."""
    co = measure_coincidences(rng, stream)
    n_windows = sequential_windows(co.slots, n).size
    if target_rate is None:
        q = 1.0
    else:
        q = min(1.0, target_rate * n_slots / n_windows) if n_windows else 0.0
    first, diff_bits, ports = _bob_resends(rng, co, n, q)
    flat = sample_grouped(rng, _pack_bits(diff_bits)[:, None], lambda k: _bob_table(n, k[0]))
    rel_slot, port = flat // 2, (flat % 2).astype(np.int8)
    ids = id_offset + np.arange(first.size, dtype=np.int64)
    alice = Arrivals(first - 1 + rel_slot, port, ids)
    decl_slots = (first[:, None] + np.arange(n)[None, :]).ravel()
    decl = ClickLog(
        BOB,
        decl_slots,
        ports.ravel().astype(np.int8),
        np.zeros(decl_slots.size, dtype=np.int8),
        np.repeat(ids, n),
    )
    order = np.argsort(decl.slots, kind="stable")
    decl = ClickLog(BOB, decl.slots[order], decl.ports[order], decl.causes[order], decl.pairs[order])
    return Delivery(
        alice=alice,
        bob=Arrivals.empty(),
        bob_declared=decl,
        stats={
            "adversary_coincidences": len(co),
            "adversary_genuine_coincidences": int(co.genuine.sum()),
            "adversary_windows": int(n_windows),
            "resends": int(first.size),
            "selection_probability": q,
        },
        eve_store={"resend_first_slots": first, "n": n},
    )
