"""Monte Carlo runner and comparison against closed forms.

Trial ``i`` of a run with master seed ``s`` draws from
``np.random.SeedSequence([s, i])``, so every trial's random stream is fixed
regardless of how trials are scheduled. Aggregation is a plain sum of integer
tallies, hence independent of completion order.

The default worker count comes from the ``QSS_WORKERS`` environment variable
(1 when unset).
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .protocol import SessionReport, run_session
from .scenario import Scenario

WORKERS_ENV = "QSS_WORKERS"


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("standard error must be >= 0")

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}


def estimate_rate(counts: int, exposure: int) -> Estimate:
    """Binomial rate estimate ``counts / exposure`` with stderr ``sqrt(p(1-p)/n)``."""
    if exposure <= 0:
        raise ValueError("exposure must be positive")
    if counts < 0 or counts > exposure:
        raise ValueError(f"counts {counts} outside [0, {exposure}]")
    p = counts / exposure
    return Estimate(p, math.sqrt(p * (1 - p) / exposure), int(exposure))


def estimate_mean(values) -> Estimate:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no samples")
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return Estimate(float(v.mean()), se, int(v.size))


@dataclass(frozen=True)
class ComparisonEntry:
    name: str
    analytic: Optional[float]
    estimate: Optional[Estimate]
    z: Optional[float]
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "analytic": self.analytic,
            "mean": None if self.estimate is None else self.estimate.mean,
            "stderr": None if self.estimate is None else self.estimate.stderr,
            "n": None if self.estimate is None else self.estimate.n,
            "z": self.z,
            "passed": self.passed,
            "note": self.note,
        }


@dataclass(frozen=True)
class ComparisonReport:
    sigma: float
    entries: tuple[ComparisonEntry, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, name: str) -> ComparisonEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "passed": self.passed, "entries": [e.to_dict() for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        cols = ("name", "analytic", "mean", "stderr", "n", "z", "passed", "note")
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for e in self.entries:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                        for k, v in e.to_dict().items()})
        return buf.getvalue()


def z_score(est: Estimate, analytic: float) -> float:
    diff = est.mean - analytic
    if est.stderr == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / est.stderr


def compare_to_analytic(
    estimates: Mapping[str, Estimate], analytic: Mapping[str, float], sigma: float = 3.0
) -> ComparisonReport:
    """Pass iff ``|z| <= sigma``. Names without a counterpart fail with a note."""
    entries = []
    for name in sorted(set(estimates) | set(analytic)):
        est = estimates.get(name)
        ref = analytic.get(name)
        if est is None:
            entries.append(ComparisonEntry(name, float(ref), None, None, False, "missing estimate"))
        elif ref is None:
            entries.append(ComparisonEntry(name, None, est, None, False, "missing analytic value"))
        else:
            z = z_score(est, float(ref))
            entries.append(ComparisonEntry(name, float(ref), est, z, abs(z) <= sigma))
    return ComparisonReport(sigma, tuple(entries))


# running -------------------------------------------------------------------

def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def _run_one(args) -> SessionReport:
    scenario, trial = args
    return run_session(scenario, trial_rng(scenario.seed, trial))


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise HarnessError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise HarnessError(f"{WORKERS_ENV} must be >= 1")
    return n


@dataclass
class TrialResults:
    scenario: Scenario
    reports: list[SessionReport]

    @property
    def total(self) -> SessionReport:
        return SessionReport.total(self.reports)


def run_trials(scenario: Scenario, workers: Optional[int] = None) -> TrialResults:
    """Run ``scenario.trials`` independent sessions (in parallel when ``workers > 1``)."""
    workers = default_workers() if workers is None else workers
    jobs = [(scenario, i) for i in range(scenario.trials)]
    try:
        if workers <= 1 or len(jobs) == 1:
            reports = [_run_one(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                reports = list(pool.map(_run_one, jobs))
    except MemoryError as exc:
        raise HarnessError(f"out of memory running {scenario.session_slots} slots per session") from exc
    return TrialResults(scenario, reports)


def session_estimates(total: SessionReport) -> dict[str, Estimate]:
    """Rate estimates from aggregated tallies (exposure = session slots or tested bits)."""
    n = total.n_slots
    out = {
        "key_rate": estimate_rate(total.sifted_signal, n),
        "alice_count_rate": estimate_rate(total.alice_clicks, n),
        "detection_rate": estimate_rate(total.alice_detection_photon_clicks, n),
    }
    if total.test_bits:
        out["qber"] = estimate_rate(total.test_errors, total.test_bits)
    if total.sifted_error:
        out["error_slot_equal_ports"] = estimate_rate(total.error_slot_equal_ports, total.sifted_error)
    return out
