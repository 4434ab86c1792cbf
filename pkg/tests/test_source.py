import math
from fractions import Fraction

import numpy as np
import pytest

from timebin_qss import source as src
from timebin_qss.source import ROLE_DETECTION, ROLE_ERROR, ROLE_SIGNAL, ROLE_VACANT


def test_packet_roles_layout():
    p = src.PacketSpec(dim=4, phases=(0.0,) * 4, start_slot=1)
    assert p.roles == ("error", "signal", "signal", "signal", "error", "detection")


def test_packet_roles_long_gap():
    p = src.PacketSpec(dim=3, phases=(0.0,) * 3, start_slot=1, gap=4)
    assert p.roles == ("error", "signal", "signal", "error", "detection", "vacant", "detection")


def test_differential_bits():
    p = src.PacketSpec(dim=4, phases=src.phases_from_bits([0, 1, 1, 0]), start_slot=1)
    assert p.differential_bits() == (1, 0, 1)


def test_pump_pattern_is_half_phase_and_vacant_off():
    p = src.PacketSpec(dim=3, phases=(0.0, math.pi, 0.0), start_slot=1)
    pat = src.pump_phase_pattern(p)
    assert pat.phases == (0.0, math.pi / 2, 0.0, 0.0, 0.0)
    assert pat.on == (True, True, True, False, False)


def test_draw_packet_first_phase_zero(rng):
    for _ in range(20):
        p = src.draw_packet(rng, src.SourceConfig(dims=(2, 3, 4)), start_slot=1)
        assert p.phases[0] == 0.0
        assert p.dim in (2, 3, 4)
        assert p.gap == 2


def test_sample_emissions_mean(rng):
    p = src.PacketSpec(dim=4, phases=(0.0,) * 4, start_slot=1)
    counts = [src.sample_emissions(rng, p, 0.1).pair_count for _ in range(20_000)]
    assert np.mean(counts) == pytest.approx(0.4, abs=3 * math.sqrt(0.4 / 20_000))
    single = [src.sample_emissions(rng, p, 0.1, "single").pair_count for _ in range(2000)]
    assert set(single) <= {0, 1}


def test_config_validation():
    with pytest.raises(src.ConfigurationError):
        src.SourceConfig(mu=1.2)
    with pytest.raises(src.ConfigurationError):
        src.SourceConfig(dims=(1,))
    with pytest.raises(src.ConfigurationError):
        src.SourceConfig(scheme="nope")
    with pytest.raises(src.ConfigurationError):
        src.SourceConfig(dims=(3, 4), scheme="fixed_dimension_random_gap")
    with pytest.raises(src.ConfigurationError):
        src.SourceConfig(mu=0.3, dims=(4,), pair_statistics="single")
    with pytest.raises(src.ConfigurationError):
        src.SourceConfig(dims=(3, 4), dim_weights=(1.0,))


def test_expected_signal_fraction_fixed():
    assert src.expected_signal_fraction(src.SourceConfig(dims=(4,))) == Fraction(1, 2)


def test_expected_signal_fraction_uniform_two_to_six():
    # (E[N] - 1) / (E[N] + 2) with E[N] = 4
    assert src.expected_signal_fraction(src.SourceConfig(dims=(2, 3, 4, 5, 6))) == Fraction(1, 2)


def test_session_layout(rng):
    s = src.generate_session(rng, src.SourceConfig(dims=(2, 3, 5)), 50_000)
    assert s.n_slots >= 50_000
    assert s.roles[0] == ROLE_DETECTION
    assert np.all(s.phase_bits[s.starts] == 0)
    for i in rng.choice(s.n_packets, size=50, replace=False):
        pkt = s.packet(i)
        rel = s.roles[pkt.start_slot : pkt.start_slot + pkt.length]
        want = [src.ROLE_NAMES.index(r) for r in pkt.roles]
        assert list(rel) == want
    # occupied slots never exceed a packet
    assert s.starts[-1] + s.dims[-1] + s.gaps[-1] == s.n_slots


def test_session_role_fractions(rng):
    s = src.generate_session(rng, src.SourceConfig(dims=(2, 3, 4, 5, 6)), 600_000)
    c = s.role_counts()
    n = s.n_slots
    sig = float(src.expected_signal_fraction(src.SourceConfig(dims=(2, 3, 4, 5, 6))))
    for name, want in (("signal", sig), ("error", 2 * (1 - sig) / 3), ("detection", (1 - sig) / 3)):
        se = math.sqrt(want * (1 - want) / n) * 4  # slots are not independent; generous
        assert c[name] / n == pytest.approx(want, abs=max(se, 2e-3))


def test_fixed_dimension_random_gap(rng):
    cfg = src.SourceConfig(dims=(4,), scheme="fixed_dimension_random_gap", gap_extra_mean=1.5)
    s = src.generate_session(rng, cfg, 400_000)
    assert s.gaps.min() >= 2
    assert s.gaps.mean() - 2 == pytest.approx(1.5, abs=0.05)
    assert np.count_nonzero(s.roles == ROLE_VACANT) > 0
    frac = np.count_nonzero(s.roles == ROLE_SIGNAL) / s.n_slots
    assert frac == pytest.approx(src.expected_signal_fraction(cfg), abs=0.01)


def test_emit_pairs_within_packets(rng):
    cfg = src.SourceConfig(dims=(3, 6))
    s = src.generate_session(rng, cfg, 100_000)
    ps = src.emit_pairs(rng, s, cfg)
    pkt_of = np.searchsorted(s.starts, ps.start)
    dims = s.dims[pkt_of]
    for slots in (ps.slot_s, ps.slot_i):
        rel = slots - ps.start
        assert rel.min() >= 0
        assert np.all(rel <= dims)
    assert set(np.unique(ps.port_s)) <= {0, 1}


def test_emitted_coincidences_obey_correlation_law(rng):
    cfg = src.SourceConfig(dims=(4,))
    s = src.generate_session(rng, cfg, 200_000)
    ps = src.emit_pairs(rng, s, cfg)
    co = ps.coincident & (s.roles[ps.slot_s] == ROLE_SIGNAL)
    bits = s.key_bits(ps.slot_s[co])
    assert co.sum() > 1000
    assert np.array_equal(ps.port_s[co] ^ ps.port_i[co], bits)


def test_coincidence_role_mix(rng):
    # signal : error coincidences = S*R_s : p_e*R_e = 3 : 1 at S = 1/2
    cfg = src.SourceConfig(dims=(4,))
    s = src.generate_session(rng, cfg, 1_000_000)
    ps = src.emit_pairs(rng, s, cfg)
    roles = s.roles[ps.slot_s[ps.coincident]]
    n_sig = np.count_nonzero(roles == ROLE_SIGNAL)
    n_err = np.count_nonzero(roles == ROLE_ERROR)
    assert np.count_nonzero(roles == ROLE_DETECTION) == 0
    frac = n_sig / (n_sig + n_err)
    assert frac == pytest.approx(0.75, abs=3 * math.sqrt(0.75 * 0.25 / (n_sig + n_err)))


def test_outcome_table_cache_matches_state():
    probs, shape = src.packet_outcome_table(4, 0b0110)
    assert shape == (5, 2, 5, 2)
    assert probs.sum() == pytest.approx(1.0)


def test_single_statistics_at_most_one_pair(rng):
    cfg = src.SourceConfig(dims=(4,), pair_statistics="single")
    s = src.generate_session(rng, cfg, 100_000)
    ps = src.emit_pairs(rng, s, cfg)
    assert len(np.unique(ps.start)) == len(ps)
