"""A dishonest recipient and the vacant-slot countermeasure.

Bob measures Charlie's pairs himself, keeps the outcomes, and sends Alice
single photons prepared so that the reconstructed key matches. Without
vacant slots nobody notices. With them, a resend made from an error-slot
coincidence lights up Alice's detection slot, which she monitors.

Run: python3 demos/04_dishonest_bob.py
"""
import numpy as np

from timebin_qss import adversary as adv
from timebin_qss import analytics as an
from timebin_qss.channel import ChannelConfig
from timebin_qss.protocol import run_session
from timebin_qss.scenario import MonitorConfig, Scenario
from timebin_qss.source import SourceConfig

rng = np.random.default_rng(11)
mu, S, d = 0.1, 0.5, 1e-5
single = adv.AdversaryModel(adv.BOB_IR_SINGLE)


def scenario(alpha, model, stats="single", **kw):
    return Scenario(
        source=SourceConfig(mu=mu, dims=(4,), pair_statistics=stats),
        channel=ChannelConfig(alpha=alpha, dark=d),
        adversary=model,
        session_slots=2_000_000,
        **kw,
    )


# detection-slot monitoring switched off: Bob reads the whole key, no errors
rep = run_session(scenario(0.1, single, monitor=MonitorConfig(detection_monitor=False)), rng)
print(f"monitor off: {rep.sifted_signal} key bits, key error rate {rep.key_error_rate:.3f}, aborted: {bool(rep.aborts)}")

# monitor on: Bob is caught once alpha exceeds alpha_th
a_th = float(an.bob_single_metrics(mu, S, d).alpha_th)
print(f"\nsingle resend, alpha_th = {a_th:.2e}")
for alpha in (0.4 * a_th, 2.5 * a_th, 0.1, 0.25):
    rep = run_session(scenario(alpha, single), rng)
    want = float(an.bob_single_metrics(mu, S, d, alpha=alpha).detection_rate)
    print(f"  alpha {alpha:.2e}: detection rate {rep.detection_rate:.2e} (closed form {want:.2e}, "
          f"dark {d:.0e}) -> aborted: {bool(rep.aborts)}")

# resending from two sequential coincidences dilutes the detection-slot signal;
# below both n=2 thresholds the cheat goes through. Sequences need two pairs in
# one packet, so some of Bob's coincidences mix photons of different pairs and
# carry a random bit; honest multi-pair packets produce the same kind of errors.
row = an.bob_sequential_metrics(2, mu, S, d)
alpha = 1e-3
rep = run_session(scenario(alpha, adv.AdversaryModel(adv.BOB_IR_SEQUENTIAL, n=2), stats="poisson"), rng)
print(f"\nn=2 at alpha {alpha:.0e} (alpha_min {float(row.alpha_min):.1e}, alpha_thn {float(row.alpha_th):.1e}): "
      f"{rep.sifted_signal} key bits, key error rate {rep.key_error_rate:.3f}, aborted: {bool(rep.aborts)}")
