"""Validation suite: one check per acceptance criterion.

Each check returns a :class:`CheckResult` whose ``details`` hold the compared
numbers. Monte Carlo checks are seeded, so a given ``(seed, scale)`` always
produces the same verdicts. ``scale`` multiplies Monte Carlo sample sizes.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import adversary as adv
from . import analytics, statevec
from .channel import ChannelConfig
from .harness import Estimate, compare_to_analytic, estimate_rate, run_trials, trial_rng
from .protocol import SessionReport, run_session
from .scenario import MonitorConfig, Scenario
from .source import SourceConfig, sample_grouped

EXACT_TOL = 1e-12
SIGMA = 3.0

REF_MU = 0.1
REF_S = 0.5
REF_DARK = 1e-5


@dataclass
class CheckResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number}: {verdict}  {self.title}  ({self.seconds:.2f} s)"

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed, "details": self.details}


def _timed(number: int, title: str, fn: Callable[[], tuple[bool, dict]]) -> CheckResult:
    t0 = time.perf_counter()
    passed, details = fn()
    return CheckResult(number, title, bool(passed), details, time.perf_counter() - t0)


def _jsonable(report) -> list[dict]:
    return [e.to_dict() for e in report.entries]


# 1 -------------------------------------------------------------------------

def coincidence_law_deviation(n_min: int = 2, n_max: int = 8) -> float:
    """Largest deviation from the per-slot coincidence law over all packets.

    Signal slots coincide with probability 1/(2N), all on equal ports for a
    zero differential phase and on opposite ports for pi; error slots with
    probability 1/(4N).
    """
    worst = 0.0
    for n in range(n_min, n_max + 1):
        for tail in itertools.product((0, 1), repeat=n - 1):
            bits = (0,) + tail
            dist = statevec.coincidence_distribution(
                statevec.apply_interferometer_pair(statevec.packet_state_from_bits(bits, start=1))
            )
            for k in range(2, n + 1):
                p = dist.slot_probability(k)
                eq = dist.equal_port_probability(k)
                want_eq = p if bits[k - 1] == bits[k - 2] else 0.0
                worst = max(worst, abs(p - 1 / (2 * n)), abs(eq - want_eq))
            for k in (1, n + 1):
                worst = max(worst, abs(dist.slot_probability(k) - 1 / (4 * n)))
                worst = max(worst, abs(dist.equal_port_probability(k) - 1 / (8 * n)))
    return worst


def check_coincidence_rates() -> CheckResult:
    def run():
        dev = coincidence_law_deviation(2, 8)
        return dev <= EXACT_TOL, {"max_deviation": dev, "tolerance": EXACT_TOL}

    return _timed(1, "per-slot coincidence rates 1/(2N) and 1/(4N), N = 2..8", run)


# 2 -------------------------------------------------------------------------

def eve_resend_exact(kind: str) -> dict:
    """Exact conditional error and coincidence probability of one resent pair."""
    errs, tots = [], []
    for bit in (0, 1):
        if kind == adv.EVE_IR_ENTANGLED:
            states = [adv.entangled_resend_state(5, bit)]
        else:
            states = [adv.classical_resend_state(5, bit, a) for a in (0, 1)]
        for st in states:
            dist = statevec.coincidence_distribution(statevec.apply_interferometer_pair(st))
            errs.append(statevec.conditional_error_probability(dist, {5: bit}))
            tots.append(dist.total())
    return {"qber": errs, "coincidence_probability": tots}


def eve_resend_counts(rng: np.random.Generator, kind: str, n_resends: int) -> tuple[int, int]:
    """Sample resent pairs and score recipients' coincidences.

    The reference bit is Eve's inferred bit at the slot she measured and an
    independent uniform bit at the neighbouring slots. Returns
    ``(errors, coincidences)``.
    """
    bits = rng.integers(0, 2, size=n_resends, dtype=np.int64)
    if kind == adv.EVE_IR_ENTANGLED:
        flat = sample_grouped(rng, bits[:, None], lambda k: adv._entangled_table(k[0]))
    else:
        phase_a = rng.integers(0, 2, size=n_resends, dtype=np.int64)
        flat = sample_grouped(
            rng, np.stack([bits, phase_a], axis=1), lambda k: adv._classical_table(k[0], k[1])
        )
    ks, ps, ki, pi = adv._unravel_pair_rows(flat, 3)
    co = ks == ki
    ref = np.where(ks == 1, bits, rng.integers(0, 2, size=n_resends))
    errors = int(np.count_nonzero(co & ((ps ^ pi) != ref)))
    return errors, int(co.sum())


def check_eve_intercept_resend(seed: int = 2, scale: float = 1.0) -> CheckResult:
    def run():
        n = int(200_000 * scale)
        rng = trial_rng(seed, 0)
        want = {adv.EVE_IR_ENTANGLED: Fraction(1, 4), adv.EVE_IR_CLASSICAL: Fraction(1, 6)}
        want_total = {adv.EVE_IR_ENTANGLED: Fraction(1, 2), adv.EVE_IR_CLASSICAL: Fraction(3, 8)}
        ok, details = True, {}
        estimates, analytic = {}, {}
        for kind in want:
            ex = eve_resend_exact(kind)
            dev = max(abs(q - float(want[kind])) for q in ex["qber"])
            dev_t = max(abs(t - float(want_total[kind])) for t in ex["coincidence_probability"])
            ok &= dev <= EXACT_TOL and dev_t <= EXACT_TOL
            details[f"{kind}_exact_max_deviation"] = max(dev, dev_t)
            errors, coinc = eve_resend_counts(rng, kind, n)
            estimates[f"{kind}_qber"] = estimate_rate(errors, coinc)
            estimates[f"{kind}_coincidence_probability"] = estimate_rate(coinc, n)
            analytic[f"{kind}_qber"] = float(want[kind])
            analytic[f"{kind}_coincidence_probability"] = float(want_total[kind])
        rep = compare_to_analytic(estimates, analytic, SIGMA)
        details["resends_per_kind"] = n
        details["comparison"] = _jsonable(rep)
        ok &= rep.passed and n >= 100_000
        # classical resend is the better strategy for Eve
        ok &= want[adv.EVE_IR_CLASSICAL] < want[adv.EVE_IR_ENTANGLED]
        return ok, details

    return _timed(2, "intercept-resend error rates 1/4 (entangled) and 1/6 (classical)", run)


# 3 -------------------------------------------------------------------------

def detection_click_probability(n: int, bits, dim: int = 8) -> float:
    """Alice's detection-slot click probability for a resend ending on slot N+1."""
    first = dim + 2 - n
    st = statevec.apply_interferometer_single(adv.bob_resend_state(first, bits))
    dist = statevec.click_distribution(st)
    return dist[(dim + 2, 0)] + dist[(dim + 2, 1)]


def check_detection_probabilities(seed: int = 3, scale: float = 1.0) -> CheckResult:
    def run():
        ok, details = True, {}
        worst = 0.0
        for n in range(1, 7):
            for bits in itertools.product((0, 1), repeat=n):
                worst = max(worst, abs(detection_click_probability(n, bits) - 1 / (2 * (n + 1))))
        # single-resend state in a 4-dimensional packet
        p11 = detection_click_probability(1, (0,), dim=4)
        worst = max(worst, abs(p11 - 0.25))
        details["exact_max_deviation"] = worst
        ok &= worst <= EXACT_TOL

        rng = trial_rng(seed, 0)
        m = int(100_000 * scale)
        estimates, analytic = {}, {}
        for n in range(1, 7):
            codes = rng.integers(0, 2**n, size=m, dtype=np.int64)
            flat = sample_grouped(rng, codes[:, None], lambda k, n=n: adv._bob_table(n, k[0]))
            hits = int(np.count_nonzero(flat // 2 == n + 1))
            estimates[f"n={n}"] = estimate_rate(hits, m)
            analytic[f"n={n}"] = 1 / (2 * (n + 1))
        rep = compare_to_analytic(estimates, analytic, SIGMA)
        details["resends_per_n"] = m
        details["comparison"] = _jsonable(rep)
        ok &= rep.passed and m >= 100_000
        return ok, details

    return _timed(3, "detection-slot click probabilities 1/4 and 1/(2(n+1)), n = 1..6", run)


# 4 -------------------------------------------------------------------------

def check_closed_forms() -> CheckResult:
    def run():
        mu, S, d = Fraction(1, 10), Fraction(1, 2), Fraction(1, 100_000)
        single = analytics.bob_single_metrics(mu, S, d)
        seq2 = analytics.bob_sequential_metrics(2, mu, S, d)
        rep = analytics.security_threshold(mu, S, d, n_max=6)
        checks = {
            "alpha_min": (single.alpha_min, Fraction(1, 2)),
            "alpha_th": (single.alpha_th, Fraction(24, 10_000)),
            "alpha_thn(2)": (seq2.alpha_th, Fraction(36, 10_000)),
            "security_threshold": (rep.security_threshold, Fraction(36, 10_000)),
        }
        ok = True
        details = {}
        for name, (got, want) in checks.items():
            dev = abs(float(got - want))
            ok &= dev <= EXACT_TOL
            details[name] = {"value": str(got), "expected": str(want), "deviation": dev}
        dbs = {"alpha_th_db": (analytics.to_db(single.alpha_th), -26.2), "alpha_thn2_db": (analytics.to_db(seq2.alpha_th), -24.4)}
        for name, (got, want) in dbs.items():
            ok &= abs(got - want) < 0.05
            details[name] = got
        ok &= rep.argmax_n == 2
        details["argmax_n"] = rep.argmax_n
        details["per_n_binding"] = [str(r.binding) for r in rep.rows]
        return ok, details

    return _timed(4, "closed-form thresholds at mu=0.1, S=0.5, d=1e-5", run)


# 5 -------------------------------------------------------------------------

def check_fig3(csv_text: Optional[str] = None) -> CheckResult:
    """Compare a fig3 CSV (produced through the command line when not given)."""

    def run():
        text = csv_text
        if text is None:
            from .cli import main

            with tempfile.TemporaryDirectory() as tmp:
                out = Path(tmp) / "fig3.csv"
                code = main(["fig3", "--mu", "0.1", "--dark", "1e-5", "--S", "0.5", "--n", "1..6", "--output", str(out)])
                if code != 0:
                    return False, {"exit_code": code}
                text = out.read_text()
        reader = csv.DictReader(io.StringIO(text))
        rows = list(reader)
        ok = tuple(reader.fieldnames or ()) == analytics.FIG3_COLUMNS and len(rows) == 6
        worst = 0.0
        for row in rows:
            n = int(row["n"])
            a_min = REF_MU ** (n - 1) / 2**n
            a_th = 6 * REF_DARK * (n + 1) / (REF_MU * (1 - REF_S))
            worst = max(
                worst,
                abs(float(row["alpha_min"]) - a_min),
                abs(float(row["alpha_thn"]) - a_th),
                abs(float(row["alpha_min_db"]) - 10 * math.log10(a_min)),
                abs(float(row["alpha_thn_db"]) - 10 * math.log10(a_th)),
            )
        a_min_col = [float(r["alpha_min"]) for r in rows]
        a_th_col = [float(r["alpha_thn"]) for r in rows]
        mono = all(x > y for x, y in zip(a_min_col, a_min_col[1:])) and all(
            x < y for x, y in zip(a_th_col, a_th_col[1:])
        )
        ok = ok and worst <= EXACT_TOL and mono
        return ok, {"rows": len(rows), "max_deviation": worst, "monotone": mono}

    return _timed(5, "fig3 CSV rows match the threshold closed forms, n = 1..6", run)


# 6 -------------------------------------------------------------------------

def _scenario(alpha, dark=0.0, stats_mode="single", adversary=None, slots=2_000_000, trials=1, seed=0, monitor=None):
    return Scenario(
        source=SourceConfig(mu=REF_MU, dims=(4,), pair_statistics=stats_mode),
        channel=ChannelConfig(alpha=alpha, dark=dark),
        adversary=adversary,
        session_slots=slots,
        trials=trials,
        seed=seed,
        monitor=monitor or MonitorConfig(),
    )


def check_honest(seed: int = 6, scale: float = 1.0) -> CheckResult:
    def run():
        details = {}
        ideal = run_session(_scenario(1.0, 0.0, slots=500_000), trial_rng(seed, 0), keep_transcript=True)
        t = ideal.transcript
        recon_exact = bool(np.array_equal(t["alice_ports"] ^ t["bob_ports"], t["key_bits"]))
        ideal_ok = (
            ideal.test_bits > 0
            and ideal.test_errors == 0
            and ideal.key_errors == 0
            and ideal.alice_detection_clicks == 0
            and ideal.sifted_detection == 0
            and recon_exact
            and ideal.aborts == 0
        )
        details["ideal"] = {
            "key_bits": ideal.sifted_signal,
            "qber": ideal.qber,
            "detection_clicks": ideal.alice_detection_clicks,
            "reconstruction_exact": recon_exact,
        }
        trials = max(1, int(round(5 * scale)))
        lossy = run_trials(_scenario(0.1, 0.0, slots=2_000_000, trials=trials, seed=seed + 1)).total
        est = {"key_rate": estimate_rate(lossy.sifted_signal, lossy.n_slots)}
        rep = compare_to_analytic(est, {"key_rate": analytics.honest_key_rate(REF_MU, REF_S, 0.1)}, SIGMA)
        details["lossy_slots"] = lossy.n_slots
        details["comparison"] = _jsonable(rep)
        return ideal_ok and rep.passed and lossy.n_slots >= 10_000_000, details

    return _timed(6, "honest sessions: ideal key agreement and key rate mu*S*alpha^2/2", run)


# 7 -------------------------------------------------------------------------

def bob_detection_rate(alpha: float, S=REF_S, mu=REF_MU, n: int = 1) -> float:
    m = analytics.bob_sequential_metrics(n, mu, S, REF_DARK, alpha=alpha)
    return float(m.detection_rate)


def check_dishonest_bob(seed: int = 7, scale: float = 1.0) -> CheckResult:
    def run():
        details = {}
        ok = True
        d = REF_DARK
        single = adv.AdversaryModel(adv.BOB_IR_SINGLE)
        trials = max(1, int(round(5 * scale)))

        # detection-slot rate at alpha = 0.1
        sc = _scenario(0.1, d, adversary=single, slots=2_000_000, trials=trials, seed=seed)
        tot = run_trials(sc).total
        est = {
            "detection_rate": estimate_rate(tot.alice_detection_photon_clicks, tot.n_slots),
            "alice_count_rate": estimate_rate(tot.alice_clicks, tot.n_slots),
            "error_resend_fraction": estimate_rate(tot.adversary["resends_with_error_slot"], tot.adversary["resends"]),
        }
        M = (2 * REF_S + 1) / 3
        ana = {
            "detection_rate": bob_detection_rate(0.1),
            "alice_count_rate": M * REF_MU * 0.1 + d * (1 - M * REF_MU * 0.1),
            "error_resend_fraction": float(analytics.bob_single_metrics(REF_MU, REF_S, d).y),
        }
        rep = compare_to_analytic(est, ana, SIGMA)
        ok &= rep.passed and tot.n_slots >= 10_000_000
        details["rate_comparison"] = _jsonable(rep)

        # abort decision follows the closed-form rate against the dark threshold
        a_th = float(analytics.bob_single_metrics(REF_MU, REF_S, d).alpha_th)
        sweep = []
        for i, alpha in enumerate((0.4 * a_th, 2.5 * a_th, 0.1, 0.25)):
            r = run_session(_scenario(alpha, d, adversary=single, slots=2_000_000), trial_rng(seed, 100 + i))
            expect = bob_detection_rate(alpha) > d
            got = bool(r.detection_aborts)
            ok &= got == expect and r.count_rate_aborts == 0
            sweep.append({
                "alpha": alpha,
                "analytic_rate": bob_detection_rate(alpha),
                "observed_excess_rate": (r.alice_detection_clicks - d * r.detection_slots) / r.n_slots,
                "abort_expected": expect,
                "abort": got,
                "count_rate_abort": bool(r.count_rate_aborts),
            })
        details["abort_sweep"] = sweep

        # n = 2 sequential below both thresholds: no abort
        seq = adv.AdversaryModel(adv.BOB_IR_SEQUENTIAL, n=2)
        row = analytics.bob_sequential_metrics(2, REF_MU, REF_S, d)
        alpha = 1e-3
        below = alpha < float(row.alpha_min) and alpha < float(row.alpha_th)
        sc = _scenario(alpha, d, stats_mode="poisson", adversary=seq, slots=2_000_000, trials=trials, seed=seed + 1)
        res = run_trials(sc)
        aborts = sum(r.aborts for r in res.reports)
        ok &= below and aborts == 0
        details["sequential"] = {"alpha": alpha, "below_both_thresholds": below, "sessions": len(res.reports), "aborts": aborts}
        return ok, details

    return _timed(7, "dishonest Bob: detection-slot rate, abort rule, undetected n=2 attack", run)


# 8 -------------------------------------------------------------------------

def eve_bs_estimate(total: SessionReport) -> Estimate:
    """Mean number of Eve's stored coincident pairs per disclosed key instance.

    The count per instance is Poisson distributed, so its variance equals the
    mean.
    """
    n = total.adversary["eve_instances"]
    mean = total.adversary["eve_genuine_hits"] / n
    return Estimate(mean, math.sqrt(mean / n), n)


def check_beam_splitting(seed: int = 8, scale: float = 1.0) -> CheckResult:
    def run():
        ok, details = True, {}
        estimates, analytic = {}, {}
        bs = adv.AdversaryModel(adv.EVE_BS)
        for alpha, slots, trials in ((0.1, 2_000_000, 5), (0.5, 1_000_000, 2)):
            t = max(1, int(round(trials * scale)))
            sc = _scenario(alpha, 0.0, stats_mode="poisson", adversary=bs, slots=slots, trials=t, seed=seed)
            tot = run_trials(sc).total
            estimates[f"alpha={alpha}"] = eve_bs_estimate(tot)
            p, bound = adv.eve_bs_analysis(REF_MU, alpha, tot.sifted_signal)
            analytic[f"alpha={alpha}"] = p
            want_bound = REF_MU * tot.sifted_signal / 2
            ok &= abs(bound - want_bound) <= EXACT_TOL * max(1.0, want_bound)
            details[f"bound_alpha={alpha}"] = {"n_sif": tot.sifted_signal, "bound": bound}
        rep = compare_to_analytic(estimates, analytic, SIGMA)
        details["comparison"] = _jsonable(rep)
        return ok and rep.passed, details

    return _timed(8, "beam-splitting coincidence probability mu*(1-alpha)^2/2 and bound mu*n_sif/2", run)


# 9 -------------------------------------------------------------------------

def single_party_independence(ports: np.ndarray, key: np.ndarray) -> float:
    """p-value of a chi-square independence test between ports and key bits."""
    table = np.zeros((2, 2))
    np.add.at(table, (ports.astype(int), key.astype(int)), 1)
    if np.any(table.sum(axis=0) == 0) or np.any(table.sum(axis=1) == 0):
        return 1.0
    return float(stats.chi2_contingency(table, correction=False).pvalue)


def check_key_secrecy(seed: int = 9, scale: float = 1.0) -> CheckResult:
    def run():
        slots = int(1_000_000 * scale)
        r = run_session(_scenario(1.0, 0.0, slots=slots), trial_rng(seed, 0), keep_transcript=True)
        t = r.transcript
        p_a = single_party_independence(t["alice_ports"], t["key_bits"])
        p_b = single_party_independence(t["bob_ports"], t["key_bits"])
        xor_exact = bool(np.array_equal(t["alice_ports"] ^ t["bob_ports"], t["key_bits"]))
        ok = p_a > 0.01 and p_b > 0.01 and xor_exact and len(t["key_bits"]) > 1000
        return ok, {"key_bits": int(len(t["key_bits"])), "p_alice": p_a, "p_bob": p_b, "xor_exact": xor_exact}

    return _timed(9, "single-party ports independent of the key, XOR reconstruction exact", run)


CHECKS = {
    1: lambda seed, scale: check_coincidence_rates(),
    2: lambda seed, scale: check_eve_intercept_resend(seed + 2, scale),
    3: lambda seed, scale: check_detection_probabilities(seed + 3, scale),
    4: lambda seed, scale: check_closed_forms(),
    5: lambda seed, scale: check_fig3(),
    6: lambda seed, scale: check_honest(seed + 6, scale),
    7: lambda seed, scale: check_dishonest_bob(seed + 7, scale),
    8: lambda seed, scale: check_beam_splitting(seed + 8, scale),
    9: lambda seed, scale: check_key_secrecy(seed + 9, scale),
}


def run_validation(seed: int = 0, scale: float = 1.0, only=None, progress=None) -> list[CheckResult]:
    out = []
    for number in sorted(only or CHECKS):
        res = CHECKS[number](seed, scale)
        if progress is not None:
            progress(res)
        out.append(res)
    return out
