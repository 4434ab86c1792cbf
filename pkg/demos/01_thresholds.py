"""Security thresholds of the time-bin secret-sharing scheme.

A dishonest recipient can hide a resend attack only while the channel is lossy
enough. This script prints, for each attack length n, the two transmittances
that bound the attack and the resulting security threshold, then converts the
threshold into a fiber length.

Run: python3 demos/01_thresholds.py
"""
from fractions import Fraction

from timebin_qss import analytics as an

mu, S, d = Fraction(1, 10), Fraction(1, 2), Fraction(1, 100_000)

# slot statistics for S = 1/2, i.e. fixed packets of N = 4 time slots
p = an.slot_probabilities(S)
print(f"S = {S}  p_e = {p.p_e}  p_d = {p.p_d}  mark ratio M = {p.M}")

# alpha_min: below it Bob can fake the honest count rate
# alpha_thn: above it Bob's detection-slot clicks outnumber dark counts
print(f"\n{'n':>2} {'alpha_min':>12} {'dB':>7} {'alpha_thn':>12} {'dB':>7}")
for row in an.fig3_rows(mu, S, d, range(1, 7)):
    print(
        f"{row.n:>2} {str(row.alpha_min):>12} {row.alpha_min_db:7.1f}"
        f" {str(row.alpha_thn):>12} {row.alpha_thn_db:7.1f}"
    )

rep = an.security_threshold(mu, S, d)
print(f"\nsecurity threshold {rep.security_threshold} ({rep.security_threshold_db:.1f} dB), "
      f"set by n = {rep.argmax_n}")

# detector efficiency and out-coupling eat part of the budget; fiber gets the rest
budget = an.loss_budget(threshold_db=rep.security_threshold_db)
print(f"fiber budget {budget.link_loss_db:.1f} dB per arm -> "
      f"{budget.arm_length_km:.0f} km per arm, {budget.total_length_km:.0f} km end to end")

# the single-resend numbers in exact arithmetic
m = an.bob_single_metrics(mu, S, d, alpha=Fraction(1, 10))
print(f"\nsingle resend: y = {m.y}, detection click probability {m.detection_probability}, "
      f"induced detection rate at alpha=0.1: {float(m.detection_rate):.3e} per slot (dark {float(d):.0e})")
