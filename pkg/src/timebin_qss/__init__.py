"""Three-party secret sharing over time-bin entangled photon pairs, simulated.

Charlie distributes time-bin entangled photon pairs to Alice and Bob; the key
bit of each signal slot is recoverable only from both recipients' detector
ports together. Vacant slots expose a dishonest recipient who resends forged
photons.
"""
from .analytics import (
    bob_sequential_metrics,
    bob_single_metrics,
    eve_bs_info,
    fig3_table,
    honest_key_rate,
    security_threshold,
    slot_probabilities,
)
from .harness import compare_to_analytic, estimate_rate, run_trials
from .protocol import SessionReport, run_session
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "Scenario",
    "SessionReport",
    "bob_sequential_metrics",
    "bob_single_metrics",
    "compare_to_analytic",
    "estimate_rate",
    "eve_bs_info",
    "fig3_table",
    "honest_key_rate",
    "load_scenario",
    "run_session",
    "run_trials",
    "security_threshold",
    "slot_probabilities",
]
