import csv
import io
import math
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from timebin_qss import analytics as an

MU, S, D = F(1, 10), F(1, 2), F(1, 100_000)


def test_slot_probabilities_half():
    p = an.slot_probabilities(S)
    assert (p.p_e, p.p_d, p.M) == (F(1, 3), F(1, 6), F(2, 3))


def test_slot_probabilities_quarter():
    p = an.slot_probabilities(F(1, 4))
    assert (p.p_e, p.p_d, p.M) == (F(1, 2), F(1, 4), F(1, 2))


def test_slot_probabilities_all_signal_limit():
    p = an.slot_probabilities(1 - 1e-12)
    assert p.p_e < 1e-11 and p.p_d < 1e-11 and p.M == pytest.approx(1.0)


@given(st.fractions(min_value=F(1, 1000), max_value=F(999, 1000)))
def test_slot_identities(s):
    p = an.slot_probabilities(s)
    assert p.S + p.p_e + p.p_d == 1
    assert p.M == p.S + p.p_e / 2


@pytest.mark.parametrize("bad", [0, 1, -0.1, 1.5])
def test_slot_domain(bad):
    with pytest.raises(an.DomainError):
        an.slot_probabilities(bad)


@pytest.mark.parametrize("N", range(2, 12))
def test_fixed_dimension_consistency(N):
    s = an.fixed_dimension_S(N)
    p = an.slot_probabilities(s)
    assert p.p_e == F(2, N + 2)
    assert p.p_d == F(1, N + 2)


def test_honest_key_rate():
    assert an.honest_key_rate(MU, S, F(1, 10)) == F(1, 4000)
    assert an.honest_key_rate(0.1, 0.5, 0.0) == 0
    assert an.honest_key_rate(MU, S, F(2, 10)) == 4 * an.honest_key_rate(MU, S, F(1, 10))


def test_bob_single_metrics_values():
    m = an.bob_single_metrics(MU, S, D)
    assert m.R_s == F(1, 20) and m.R_e == F(1, 40)
    assert m.alpha_min == F(1, 2)
    assert m.alpha_th == F(24, 10_000)
    assert an.to_db(m.alpha_th) == pytest.approx(-26.2, abs=0.01)
    assert m.y == F(1, 4)
    assert m.detection_probability == F(1, 4)


@given(st.fractions(F(1, 100), F(99, 100)), st.fractions(F(1, 100), F(99, 100)))
def test_single_alpha_min_always_half(mu, s):
    assert an.bob_single_metrics(mu, s, D).alpha_min == F(1, 2)


def test_single_detection_rate_formula():
    m = an.bob_single_metrics(MU, S, D, alpha=F(1, 10))
    assert m.detection_rate == F(2, 3) * MU * F(1, 10) * F(1, 4) / 4


def test_single_domain_error_at_S_one():
    with pytest.raises(an.DomainError):
        an.bob_single_metrics(MU, 1, D)


def test_sequential_reduces_to_single():
    one = an.bob_sequential_metrics(1, MU, S, D)
    single = an.bob_single_metrics(MU, S, D)
    assert one.alpha_min == single.alpha_min
    assert one.alpha_th == single.alpha_th
    assert one.R_coin == single.R_coin
    assert not one.approximate


def test_sequential_n2_values():
    m = an.bob_sequential_metrics(2, MU, S, D, N_all=10**6)
    assert m.alpha_min == F(1, 40)
    assert an.to_db(m.alpha_min) == pytest.approx(-16.0, abs=0.05)
    assert m.alpha_th == F(36, 10_000)
    assert an.to_db(m.alpha_th) == pytest.approx(-24.4, abs=0.05)
    assert m.detection_probability == F(1, 6)
    assert m.N_s == S * MU**2 / 4 * 10**6
    assert m.N_e == F(1, 3) * MU**2 / 8 * 10**6
    assert m.approximate


def test_sequential_alpha_min_equals_coincidence_ratio():
    for n in range(1, 7):
        m = an.bob_sequential_metrics(n, MU, S, D)
        assert m.R_coin / (an.slot_probabilities(S).M * MU) == m.alpha_min


def test_sequential_domain():
    with pytest.raises(an.DomainError):
        an.bob_sequential_metrics(0, MU, S, D)


def test_monotonicity():
    rows = an.fig3_rows(MU, S, D, range(1, 11))
    for a, b in zip(rows, rows[1:]):
        assert b.alpha_thn > a.alpha_thn
        assert b.alpha_min < a.alpha_min
    lo = an.bob_sequential_metrics(2, MU, S, D).alpha_th
    hi = an.bob_sequential_metrics(2, MU, S, 2 * D).alpha_th
    assert hi > lo


def test_eve_bs_info():
    assert an.eve_bs_info(0.1, 0.0, 1)[0] == pytest.approx(0.05)
    assert an.eve_bs_info(0.1, 1.0, 1)[0] == 0
    assert an.eve_bs_info(0.1, 0.5, 1)[0] == pytest.approx(0.0125)
    assert an.eve_bs_info(MU, F(1, 2), 10_000)[1] == 500
    with pytest.raises(an.DomainError):
        an.eve_bs_info(0.1, 1.5, 1)


def test_security_threshold_reference_parameters():
    rep = an.security_threshold(MU, S, D, n_max=6)
    assert rep.security_threshold == F(36, 10_000)
    assert rep.argmax_n == 2
    assert [r.binding for r in rep.rows[:3]] == [F(24, 10_000), F(36, 10_000), F(125, 100_000)]
    assert rep.security_threshold_db == pytest.approx(-24.4, abs=0.05)


def test_crossover_at_two_over_ten():
    assert an.security_threshold(MU, S, D, n_max=10).argmax_n == 2


def test_security_threshold_zero_dark():
    rep = an.security_threshold(MU, S, 0, n_max=6)
    assert all(r.alpha_thn == 0 for r in rep.rows)
    assert rep.security_threshold == 0


def test_security_threshold_single_only():
    assert an.security_threshold(MU, S, D, n_max=1).security_threshold == F(24, 10_000)
    with pytest.raises(an.DomainError):
        an.security_threshold(MU, S, D, n_max=0)


def test_unreachable_flagged():
    rows = an.fig3_rows(0.1, 0.5, 0.05, range(1, 4))
    assert any(not r.reachable for r in rows)
    assert all(r.reachable == (r.alpha_thn <= 1) for r in rows)


def test_fig3_table_structure():
    rows = an.fig3_table(0.1, 0.5, 1e-5, range(1, 7))
    for r in rows:
        n = r["n"]
        assert r["alpha_thn"] == pytest.approx(2.4e-3 * (n + 1) / 2, rel=1e-12)
        assert r["alpha_min"] == pytest.approx(0.1 ** (n - 1) / 2**n, rel=1e-12)
        assert r["alpha_min_db"] == pytest.approx(10 * math.log10(r["alpha_min"]), abs=1e-12)
    for a, b in zip(rows, rows[1:]):
        assert b["alpha_min"] / a["alpha_min"] == pytest.approx(0.05)
    assert (rows[0]["alpha_min"], rows[0]["alpha_thn"]) == pytest.approx((0.5, 2.4e-3))


def test_fig3_csv_header_and_roundtrip():
    text = an.fig3_csv(an.fig3_table(0.1, 0.5, 1e-5, range(1, 7)))
    reader = csv.DictReader(io.StringIO(text))
    assert tuple(reader.fieldnames) == an.FIG3_COLUMNS
    rows = list(reader)
    assert len(rows) == 6
    assert float(rows[1]["alpha_thn"]) == an.fig3_table(0.1, 0.5, 1e-5, [2])[0]["alpha_thn"]


def test_fig3_empty_range():
    with pytest.raises(an.DomainError):
        an.fig3_table(0.1, 0.5, 1e-5, [])


def test_db_conversions():
    assert an.to_db(1) == 0
    assert an.from_db(-26.2) == pytest.approx(2.4e-3, rel=0.01)
    assert an.to_db(0) == -math.inf
    with pytest.raises(an.DomainError):
        an.to_db(-1)


def test_loss_budget_worked_example():
    b = an.loss_budget(threshold_db=-24.0)
    assert b.detector_efficiency_db == pytest.approx(10.0)
    assert b.link_loss_db == pytest.approx(10.0)
    assert b.arm_length_km == pytest.approx(50.0)
    assert b.total_length_km == pytest.approx(100.0)


def test_threshold_report_dict():
    d = an.security_threshold(0.1, 0.5, 1e-5).to_dict()
    assert d["argmax_n"] == 2
    assert d["rows"][0]["approximate"] is False and d["rows"][1]["approximate"] is True
