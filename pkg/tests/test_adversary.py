import math

import numpy as np
import pytest

from timebin_qss import adversary as adv
from timebin_qss import statevec as sv
from timebin_qss.channel import ChannelConfig
from timebin_qss.protocol import run_session
from timebin_qss.scenario import MonitorConfig, Scenario
from timebin_qss.source import (
    ROLE_SIGNAL,
    PacketSpec,
    SourceConfig,
    emit_pairs,
    generate_session,
    phases_from_bits,
)


def scenario(alpha, kind=None, n=1, stats="single", dark=0.0, slots=400_000, **kw):
    model = None if kind is None else adv.AdversaryModel(kind, n=n)
    return Scenario(
        source=SourceConfig(mu=0.1, dims=(4,), pair_statistics=stats),
        channel=ChannelConfig(alpha=alpha, dark=dark),
        adversary=model,
        session_slots=slots,
        **kw,
    )


def test_model_validation():
    with pytest.raises(ValueError):
        adv.AdversaryModel("mallory")
    with pytest.raises(ValueError):
        adv.AdversaryModel(adv.BOB_IR_SEQUENTIAL, n=0)
    with pytest.raises(ValueError):
        adv.AdversaryModel(adv.BOB_IR_SINGLE, n=2)
    assert adv.AdversaryModel(adv.BOB_IR_SEQUENTIAL, n=3).is_bob
    assert not adv.AdversaryModel(adv.EVE_BS).is_bob


def test_sequential_windows_greedy():
    slots = np.array([1, 2, 3, 4, 5, 8, 9, 12])
    assert list(adv.sequential_windows(slots, 2)) == [0, 2, 5]
    assert list(adv.sequential_windows(slots, 3)) == [0]
    assert list(adv.sequential_windows(slots, 1)) == list(range(8))
    assert adv.sequential_windows(np.array([], dtype=int), 2).size == 0


def _fixed_emission(bits, count):
    from timebin_qss.source import EmissionEvent

    p = PacketSpec(dim=len(bits), phases=phases_from_bits(bits), start_slot=1)
    return EmissionEvent(packet=p, pair_count=count, state=p.state())


def test_eve_steps_resend_normalized_states(rng):
    e = _fixed_emission([0, 1, 1, 0], 30)
    for step in (adv.eve_ir_entangled_step, adv.eve_ir_classical_step):
        out = step(rng, e)
        assert len(out.resent) == len(out.coincidences)
        for st in out.resent:
            assert st.norm2() == pytest.approx(1.0)


def test_no_coincidence_nothing_resent(rng):
    e = _fixed_emission([0, 1, 0], 0)
    out = adv.eve_ir_entangled_step(rng, e)
    assert out.coincidences == [] and out.resent == []


def test_eve_signal_slot_inference_is_exact(rng):
    bits = [0, 1, 1, 0, 1]
    e = _fixed_emission(bits, 1)
    for _ in range(200):
        out = adv.eve_ir_entangled_step(rng, e)
        for k, b in out.coincidences:
            if 2 <= k <= len(bits):
                assert b == bits[k - 1] ^ bits[k - 2]


def test_eve_bs_analysis():
    assert adv.eve_bs_analysis(0.1, 0.5, 10_000) == pytest.approx((0.0125, 500))
    with pytest.raises(ValueError):
        adv.eve_bs_analysis(0.1, 1.0, 1)


def test_bob_single_signal_resend_correlates(rng):
    # Alice's click in slot k, combined with Bob's declared port, gives Charlie's bit
    bits = [0, 1, 1, 0]
    e = _fixed_emission(bits, 1)
    hits = 0
    for _ in range(3000):
        out = adv.bob_single_cheat_step(rng, e)
        for st, (k, port) in zip(out.resent, out.declared):
            if not 2 <= k <= 4:
                continue
            probs, shape = sv.photon_outcome_table(st)
            idx = rng.choice(probs.size, p=probs)
            slot, a_port = np.unravel_index(idx, shape)
            if slot + st.offset == k:
                hits += 1
                assert a_port ^ port == bits[k - 1] ^ bits[k - 2]
    assert hits > 100


def test_bob_error_slot_resend_detection_probability():
    st = adv.bob_resend_state(5, [1])  # coincidence in slot N+1 = 5 of a 4-slot packet
    probs = sv.click_distribution(sv.apply_interferometer_single(st))
    assert probs[(6, 0)] + probs[(6, 1)] == pytest.approx(0.25)


def test_bob_three_sequence_detection_probability():
    st = adv.bob_resend_state(8 + 2 - 3, [1, 0, 1])
    probs = sv.click_distribution(sv.apply_interferometer_single(st))
    assert probs[(10, 0)] + probs[(10, 1)] == pytest.approx(1 / 8)


def test_sequential_infeasible(rng):
    e = _fixed_emission([0, 1], 3)
    with pytest.raises(adv.AttackInfeasible):
        adv.bob_sequential_cheat_step(rng, [e], 3)
    with pytest.raises(adv.AttackInfeasible):
        run_session(scenario(0.01, adv.BOB_IR_SEQUENTIAL, n=5, stats="poisson"), rng)


def test_sequential_step_declares_n_slots_per_resend(rng):
    e = _fixed_emission([0, 1, 1, 0, 0, 1], 60)
    out = adv.bob_sequential_cheat_step(rng, [e], 2)
    assert len(out.declared) == 2 * len(out.resent)
    for st in out.resent:
        assert st.amp.size == 3


def test_eve_strategy_comparison_exact():
    def qber(states, bit):
        errs = []
        for s in states:
            d = sv.coincidence_distribution(sv.apply_interferometer_pair(s))
            errs.append(sv.conditional_error_probability(d, {5: bit}))
        return max(errs)

    for bit in (0, 1):
        ent = qber([adv.entangled_resend_state(5, bit)], bit)
        cls = qber([adv.classical_resend_state(5, bit, a) for a in (0, 1)], bit)
        assert cls == pytest.approx(1 / 6) and ent == pytest.approx(1 / 4)
        assert cls < ent


def test_bob_error_resend_fraction_single(rng):
    rep = run_session(scenario(0.1, adv.BOB_IR_SINGLE, slots=3_000_000), rng)
    n = rep.adversary["resends"]
    y = rep.adversary["resends_with_error_slot"] / n
    assert y == pytest.approx(0.25, abs=3 * math.sqrt(0.25 * 0.75 / n))


@pytest.mark.parametrize("alpha", [0.02, 0.1, 0.3])
def test_bob_rate_matching(alpha):
    rng = np.random.default_rng(int(alpha * 1000))
    rep = run_session(scenario(alpha, adv.BOB_IR_SINGLE, slots=2_000_000), rng)
    want = (2 / 3) * 0.1 * alpha
    se = math.sqrt(want * (1 - want) / rep.n_slots)
    assert rep.alice_count_rate == pytest.approx(want, abs=3 * se)
    assert rep.count_rate_aborts == 0


def test_bob_cannot_match_above_alpha_min(rng):
    rep = run_session(scenario(0.8, adv.BOB_IR_SINGLE, slots=300_000), rng)
    assert rep.count_rate_aborts == 1


@pytest.mark.parametrize("n", [2, 3])
def test_sequential_feasibility_boundary(n):
    # Bob's n-sequence rate exceeds the honest click rate only below alpha_min(n)
    rng = np.random.default_rng(n)
    cfg = SourceConfig(mu=0.1, dims=(4,))
    s = generate_session(rng, cfg, 3_000_000)
    co = adv.measure_coincidences(rng, emit_pairs(rng, s, cfg))
    window_rate = adv.sequential_windows(co.slots, n).size / s.n_slots
    a_min = 0.1 ** (n - 1) / 2**n
    for alpha, feasible in ((a_min / 3, True), (3 * a_min, False)):
        assert (window_rate > (2 / 3) * 0.1 * alpha) == feasible


def test_without_detection_monitor_bob_is_invisible(rng):
    sc = scenario(0.1, adv.BOB_IR_SINGLE, slots=2_000_000, monitor=MonitorConfig(detection_monitor=False))
    rep = run_session(sc, rng)
    assert rep.key_errors == 0 and rep.test_errors == 0
    assert rep.sifted_signal > 1000
    assert rep.aborts == 0
    # and with the monitor the same attack is caught
    rep2 = run_session(scenario(0.1, adv.BOB_IR_SINGLE, slots=2_000_000), np.random.default_rng(3))
    assert rep2.detection_aborts == 1


def test_bob_learns_whole_key(rng):
    rep = run_session(scenario(0.1, adv.BOB_IR_SINGLE, slots=500_000), rng, keep_transcript=True)
    t = rep.transcript
    # Bob chose his declared ports; with Alice's disclosed ports he rebuilds every key bit
    assert np.array_equal(t["alice_ports"] ^ t["bob_ports"], t["key_bits"])


def test_eve_ir_session_raises_errors(rng):
    rep = run_session(scenario(0.1, adv.EVE_IR_CLASSICAL, stats="poisson"), rng)
    assert rep.qber > 0.1
    assert rep.aborts == 1


def test_eve_bs_session_leaves_rates_unchanged():
    honest = run_session(scenario(0.1, None, stats="poisson"), np.random.default_rng(5))
    bs = run_session(scenario(0.1, adv.EVE_BS, stats="poisson"), np.random.default_rng(5))
    assert bs.aborts == 0
    assert bs.adversary["eve_instances"] == bs.sifted_signal
    assert abs(bs.alice_clicks - honest.alice_clicks) < 5 * math.sqrt(honest.alice_clicks)


def test_resend_state_normalization():
    for bits in ([0], [1, 0], [1, 1, 0, 1]):
        assert adv.bob_resend_state(3, bits).norm2() == pytest.approx(1.0)
    assert adv.entangled_resend_state(3, 1).norm2() == pytest.approx(1.0)
    assert adv.classical_resend_state(3, 1, 1).norm2() == pytest.approx(1.0)


def test_role_blind_delivery(rng):
    # interceptors receive only the pair stream, which carries no slot roles
    cfg = SourceConfig(mu=0.1, dims=(4,))
    s = generate_session(rng, cfg, 10_000)
    stream = emit_pairs(rng, s, cfg)
    assert not any("role" in f for f in vars(stream))
    d = adv.bob_delivery(rng, stream, 1, None, s.n_slots, len(stream))
    assert d.stats["resends"] == d.stats["adversary_windows"]
    assert np.all(np.diff(d.bob_declared.slots) > 0)
    assert np.count_nonzero(s.roles[d.bob_declared.slots] == ROLE_SIGNAL) > 0
