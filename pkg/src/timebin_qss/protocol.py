"""One protocol session, end to end.

The steps run in the order the parties can carry them out, so information only
flows forward:

1. Charlie lays out packets and emits pairs (:func:`source.generate_session`).
2. Photons travel to Alice and Bob; an adversary, if any, acts here while
   the slot roles are still private to Charlie.
3. Each recipient's detectors produce a click log (threshold detectors plus
   dark clicks).
4. Alice and Bob disclose click slots; coincident slots are sifted.
5. Charlie discloses the role of each sifted slot and keeps the key bits of the
   sifted signal slots.
6. Alice and Bob disclose their ports on a random test subset; Charlie
   estimates the error rate. The remaining bits are the shared key, which
   Alice and Bob can only rebuild together (``port_A XOR port_B``).
7. Alice and Bob check their click rates: overall (count-rate monitor) and in
   detection slots (detection monitor).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from . import adversary as adv
from .channel import ALICE, BOB, CAUSE_PHOTON, ClickLog, add_dark_counts, merge_clicks
from .scenario import Scenario
from .source import (
    ROLE_DETECTION,
    ROLE_ERROR,
    ROLE_SIGNAL,
    ROLE_VACANT,
    Session,
    SourceConfig,
    emit_pairs,
    generate_session,
)


class ProtocolError(RuntimeError):
    pass


class BookkeepingError(ProtocolError):
    """A disclosed slot does not belong to the session."""


class IncompleteDataError(ProtocolError):
    """A required port disclosure is missing."""


class EstimationError(ProtocolError):
    """Too few key bits to estimate the error rate."""


# disclosures ---------------------------------------------------------------

@dataclass
class PartyLog:
    """A recipient's private click log; only slots are disclosed."""

    log: ClickLog

    @property
    def party(self) -> str:
        return self.log.party

    def disclose_slots(self) -> np.ndarray:
        return self.log.slots.copy()

    def disclose_ports(self, slots: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.log.slots, slots)
        idx = np.minimum(idx, max(len(self.log) - 1, 0))
        if len(self.log) == 0 or np.any(self.log.slots[idx] != slots):
            raise IncompleteDataError(f"{self.party} has no click in some requested slots")
        return self.log.ports[idx]


@dataclass
class SiftResult:
    slots: np.ndarray
    roles: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.slots.size)

    def with_roles(self, roles: np.ndarray) -> "SiftResult":
        return SiftResult(self.slots, np.asarray(roles, dtype=np.int8))

    def of_role(self, role: int) -> np.ndarray:
        if self.roles is None:
            raise ProtocolError("roles not disclosed yet")
        return self.slots[self.roles == role]


@dataclass
class KeyBits:
    slots: np.ndarray
    bits: np.ndarray

    def __len__(self) -> int:
        return int(self.slots.size)


@dataclass
class QberEstimate:
    qber: float
    test_bits: int
    errors: int
    key: KeyBits
    reconstructed: KeyBits


def sift_coincidences(alice_slots: np.ndarray, bob_slots: np.ndarray) -> SiftResult:
    return SiftResult(np.intersect1d(alice_slots, bob_slots))


def disclose_roles(session: Session, sift: SiftResult) -> SiftResult:
    if len(sift) and (sift.slots.min() < 0 or sift.slots.max() >= session.n_slots):
        raise BookkeepingError("sifted slot outside the session")
    return sift.with_roles(session.roles[sift.slots])


def derive_charlie_key(session: Session, sift: SiftResult) -> KeyBits:
    """Charlie's key bits at the sifted signal slots."""
    if sift.roles is None:
        sift = disclose_roles(session, sift)
    slots = sift.of_role(ROLE_SIGNAL)
    return KeyBits(slots, session.key_bits(slots))


def reconstruct_key(alice: PartyLog, bob: PartyLog, slots: np.ndarray) -> KeyBits:
    """Key rebuilt jointly by Alice and Bob at ``slots``."""
    bits = (alice.disclose_ports(slots) ^ bob.disclose_ports(slots)).astype(np.int8)
    return KeyBits(np.asarray(slots), bits)


def estimate_qber(
    rng: np.random.Generator,
    charlie: KeyBits,
    alice: PartyLog,
    bob: PartyLog,
    test_fraction: float,
) -> QberEstimate:
    """Sacrifice a random subset of key bits to estimate the error rate.

    Returns the estimate together with the untested key (Charlie's bits and the
    jointly reconstructed bits).
    """
    n = len(charlie)
    if n == 0:
        raise EstimationError("no sifted key bits")
    n_test = max(1, int(math.ceil(test_fraction * n)))
    test = np.zeros(n, dtype=bool)
    test[rng.choice(n, size=min(n_test, n), replace=False)] = True
    recon = reconstruct_key(alice, bob, charlie.slots[test])
    errors = int(np.count_nonzero(recon.bits != charlie.bits[test]))
    keep = ~test
    kept_slots = charlie.slots[keep]
    return QberEstimate(
        qber=errors / int(test.sum()),
        test_bits=int(test.sum()),
        errors=errors,
        key=KeyBits(kept_slots, charlie.bits[keep]),
        reconstructed=reconstruct_key(alice, bob, kept_slots),
    )


# monitoring ----------------------------------------------------------------

def honest_photon_click_rate(source: SourceConfig, alpha: float) -> float:
    """Expected photon clicks per slot at one recipient without an adversary.

    Exact for threshold detectors: a packet's measurement slots 1 and N+1
    receive Poisson photon numbers of mean ``mu*alpha/2``, slots 2..N of mean
    ``mu*alpha`` (single-pair statistics: ``mu*N*alpha`` clicks per packet).
    """
    dims, p = source.dim_distribution()
    mu = source.mu
    if source.pair_statistics == "single":
        per_packet = mu * dims * alpha
    else:
        per_packet = 2 * -np.expm1(-mu * alpha / 2) + (dims - 1) * -np.expm1(-mu * alpha)
    extra = source.gap_extra_mean if source.scheme == "fixed_dimension_random_gap" else 0.0
    return float(np.dot(p, per_packet) / (np.dot(p, dims) + 2 + extra))


def honest_click_rate(source: SourceConfig, alpha: float, dark: float) -> float:
    ph = honest_photon_click_rate(source, alpha)
    return ph + dark * (1 - ph)


@dataclass(frozen=True)
class MonitorDecision:
    count_rate_anomaly: bool
    detection_anomaly: bool
    count_rate_z: float
    excess_detection_rate: float

    @property
    def abort(self) -> bool:
        return self.count_rate_anomaly or self.detection_anomaly


def monitor_rates(
    clicks: int,
    n_slots: int,
    detection_clicks: int,
    n_detection_slots: int,
    expected_rate: float,
    dark: float,
    significance: float = 1e-6,
    margin: float = 1.0,
    detection_monitor: bool = True,
) -> MonitorDecision:
    """Recipient-side checks.

    Count rate: two-sided binomial test of ``clicks`` against ``expected_rate``.
    Detection slots: the excess of detection-slot clicks over the dark
    expectation, per session slot, must exceed ``margin * dark`` and be
    significant against pure dark counts.
    """
    lo = stats.binom.ppf(significance / 2, n_slots, expected_rate)
    hi = stats.binom.isf(significance / 2, n_slots, expected_rate)
    count_anom = bool(clicks < lo or clicks > hi)
    sd = math.sqrt(n_slots * expected_rate * (1 - expected_rate)) or 1.0
    z = (clicks - n_slots * expected_rate) / sd

    excess = (detection_clicks - dark * n_detection_slots) / n_slots
    det_anom = False
    if detection_monitor and n_detection_slots > 0:
        crit = stats.binom.isf(significance, n_detection_slots, dark)
        det_anom = bool(excess > margin * dark and detection_clicks > crit)
    return MonitorDecision(count_anom, det_anom, float(z), float(excess))


# session -------------------------------------------------------------------

@dataclass
class SessionReport:
    """Integer tallies of one session; reports of several sessions add up."""

    n_slots: int = 0
    n_packets: int = 0
    n_pairs: int = 0
    signal_slots: int = 0
    error_slots: int = 0
    detection_slots: int = 0
    alice_clicks: int = 0
    bob_clicks: int = 0
    alice_photon_clicks: int = 0
    alice_detection_clicks: int = 0
    alice_detection_photon_clicks: int = 0
    sifted: int = 0
    sifted_signal: int = 0
    sifted_error: int = 0
    sifted_detection: int = 0
    sifted_vacant: int = 0
    sifted_signal_genuine: int = 0
    error_slot_equal_ports: int = 0
    key_errors: int = 0
    test_bits: int = 0
    test_errors: int = 0
    final_key_bits: int = 0
    count_rate_aborts: int = 0
    detection_aborts: int = 0
    aborts: int = 0
    sessions: int = 0
    adversary: dict = field(default_factory=dict)
    transcript: Optional[dict] = None

    def __add__(self, other: "SessionReport") -> "SessionReport":
        out = SessionReport()
        for f in fields(self):
            if f.type == "int":
                setattr(out, f.name, getattr(self, f.name) + getattr(other, f.name))
        keys = set(self.adversary) | set(other.adversary)
        out.adversary = {k: self.adversary.get(k, 0) + other.adversary.get(k, 0) for k in sorted(keys)}
        return out

    @classmethod
    def total(cls, reports) -> "SessionReport":
        out = cls()
        for r in reports:
            out = out + r
        return out

    # derived rates
    @property
    def qber(self) -> float:
        return self.test_errors / self.test_bits if self.test_bits else math.nan

    @property
    def key_error_rate(self) -> float:
        return self.key_errors / self.sifted_signal if self.sifted_signal else math.nan

    @property
    def key_rate(self) -> float:
        return self.sifted_signal / self.n_slots if self.n_slots else math.nan

    @property
    def alice_count_rate(self) -> float:
        return self.alice_clicks / self.n_slots if self.n_slots else math.nan

    @property
    def detection_rate(self) -> float:
        """Photon clicks at Alice's detection slots per session slot."""
        return self.alice_detection_photon_clicks / self.n_slots if self.n_slots else math.nan

    def to_dict(self, include_transcript: bool = False) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.type == "int"}
        d["adversary"] = dict(self.adversary)
        d["qber"] = self.qber
        d["key_rate"] = self.key_rate
        d["detection_rate"] = self.detection_rate
        if include_transcript and self.transcript is not None:
            d["transcript"] = {k: np.asarray(v).tolist() for k, v in self.transcript.items()}
        return d


def _deliver(rng, scenario: Scenario, stream, session: Session) -> adv.Delivery:
    a = scenario.adversary
    alpha = scenario.channel.alpha
    if a is None:
        return adv.honest_delivery(rng, stream, alpha)
    if a.kind in (adv.EVE_IR_ENTANGLED, adv.EVE_IR_CLASSICAL):
        return adv.eve_ir_delivery(rng, stream, a.kind, id_offset=len(stream))
    if a.kind == adv.EVE_BS:
        return adv.eve_bs_delivery(rng, stream, alpha)
    if a.n > int(session.dims.max()):
        raise adv.AttackInfeasible(f"n = {a.n} exceeds every packet dimension")
    target = None
    if a.rate_match:
        target = a.target_rate
        if target is None:
            target = honest_photon_click_rate(scenario.source, alpha)
    return adv.bob_delivery(rng, stream, a.n, target, session.n_slots, id_offset=len(stream))


def _adversary_tallies(delivery: adv.Delivery, session: Session, charlie: KeyBits) -> dict:
    out = {k: v for k, v in delivery.stats.items() if isinstance(v, (int, np.integer))}
    store = delivery.eve_store or {}
    if "genuine_slots" in store:
        g = store["genuine_slots"]
        out["eve_instances"] = len(charlie)
        out["eve_genuine_hits"] = int(np.count_nonzero(np.isin(g, charlie.slots)))
        co_slots, co_bits = store["co_slots"], store["co_bits"]
        common, i_co, i_key = np.intersect1d(co_slots, charlie.slots, return_indices=True)
        out["eve_coincident_instances"] = int(common.size)
        out["eve_correct_bits"] = int(np.count_nonzero(co_bits[i_co] == charlie.bits[i_key]))
    elif "slots" in store:
        common, i_co, i_key = np.intersect1d(store["slots"], charlie.slots, return_indices=True)
        out["eve_known_instances"] = int(common.size)
        out["eve_correct_bits"] = int(np.count_nonzero(store["bits"][i_co] == charlie.bits[i_key]))
    if "resend_first_slots" in store:
        first, n = store["resend_first_slots"], store["n"]
        win = first[:, None] + np.arange(n)[None, :]
        has_err = (session.roles[np.clip(win, 0, session.n_slots - 1)] == ROLE_ERROR).any(axis=1)
        out["resends_with_error_slot"] = int(has_err.sum())
    return out


def run_session(
    scenario: Scenario,
    rng: np.random.Generator,
    keep_transcript: bool = False,
) -> SessionReport:
    """Simulate one session and return its tallies."""
    src, ch = scenario.source, scenario.channel
    session = generate_session(rng, src, scenario.session_slots)
    stream = emit_pairs(rng, session, src)

    delivery = _deliver(rng, scenario, stream, session)

    n = session.n_slots
    a_arr = delivery.alice
    inside = a_arr.slots < n
    alice_log = merge_clicks(rng, ALICE, a_arr.slots[inside], a_arr.ports[inside], pairs=a_arr.pairs[inside])
    alice_log = add_dark_counts(rng, alice_log, ch.dark, n)
    if delivery.bob_declared is not None:
        bob_log = delivery.bob_declared
        keep = bob_log.slots < n
        bob_log = ClickLog(BOB, bob_log.slots[keep], bob_log.ports[keep], bob_log.causes[keep], bob_log.pairs[keep])
    else:
        b_arr = delivery.bob
        inside = b_arr.slots < n
        bob_log = merge_clicks(rng, BOB, b_arr.slots[inside], b_arr.ports[inside], pairs=b_arr.pairs[inside])
        bob_log = add_dark_counts(rng, bob_log, ch.dark, n)
    alice, bob = PartyLog(alice_log), PartyLog(bob_log)

    sift = disclose_roles(session, sift_coincidences(alice.disclose_slots(), bob.disclose_slots()))
    charlie = derive_charlie_key(session, sift)

    rep = SessionReport(sessions=1, n_slots=n, n_packets=session.n_packets, n_pairs=len(stream))
    counts = session.role_counts()
    rep.signal_slots, rep.error_slots, rep.detection_slots = (
        counts["signal"], counts["error"], counts["detection"],
    )
    det_mask = session.roles == ROLE_DETECTION
    rep.alice_clicks = len(alice_log)
    rep.bob_clicks = len(bob_log)
    rep.alice_photon_clicks = int(np.count_nonzero(alice_log.causes == CAUSE_PHOTON))
    rep.alice_detection_clicks = alice_log.count_in(det_mask)
    rep.alice_detection_photon_clicks = alice_log.count_in(det_mask, CAUSE_PHOTON)

    rep.sifted = len(sift)
    rep.sifted_signal = len(charlie)
    rep.sifted_error = int(np.count_nonzero(sift.roles == ROLE_ERROR))
    rep.sifted_detection = int(np.count_nonzero(sift.roles == ROLE_DETECTION))
    rep.sifted_vacant = int(np.count_nonzero(sift.roles == ROLE_VACANT))

    # simulation-side diagnostics (not available to the parties)
    ia = np.searchsorted(alice_log.slots, charlie.slots)
    ib = np.searchsorted(bob_log.slots, charlie.slots)
    pa, pb = alice_log.pairs[ia], bob_log.pairs[ib]
    rep.sifted_signal_genuine = int(np.count_nonzero((pa == pb) & (pa >= 0)))
    full = reconstruct_key(alice, bob, charlie.slots)
    rep.key_errors = int(np.count_nonzero(full.bits != charlie.bits))
    err_slots = sift.of_role(ROLE_ERROR)
    if err_slots.size:
        rep.error_slot_equal_ports = int(
            np.count_nonzero(alice.disclose_ports(err_slots) == bob.disclose_ports(err_slots))
        )

    if len(charlie):
        est = estimate_qber(rng, charlie, alice, bob, scenario.test_fraction)
        rep.test_bits, rep.test_errors = est.test_bits, est.errors
        rep.final_key_bits = len(est.key)

    mon = scenario.monitor
    decision = monitor_rates(
        rep.alice_clicks,
        n,
        rep.alice_detection_clicks,
        rep.detection_slots,
        honest_click_rate(src, ch.alpha, ch.dark),
        ch.dark,
        significance=mon.significance,
        margin=mon.detection_margin,
        detection_monitor=mon.detection_monitor,
    )
    rep.count_rate_aborts = int(decision.count_rate_anomaly)
    rep.detection_aborts = int(decision.detection_anomaly)
    rep.aborts = int(decision.abort)
    rep.adversary = _adversary_tallies(delivery, session, charlie)

    if keep_transcript:
        rep.transcript = {
            "slots": charlie.slots,
            "alice_ports": alice.disclose_ports(charlie.slots),
            "bob_ports": bob.disclose_ports(charlie.slots),
            "key_bits": charlie.bits,
        }
    return rep


def export_key_bits(bits: np.ndarray, path) -> Path:
    """Write key bits as a string of ``0``/``1`` characters."""
    p = Path(path)
    p.write_text("".join("1" if b else "0" for b in np.asarray(bits).ravel()) + "\n")
    return p
