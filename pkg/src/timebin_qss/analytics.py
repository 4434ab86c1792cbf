"""Closed-form rates and transmittance thresholds.

Every function is plain arithmetic, so passing :class:`fractions.Fraction`
arguments yields exact rational results (dB conversions excepted).

Symbols used throughout: ``mu`` mean photon pairs per occupied pulse, ``S``
probability that a slot is a signal slot, ``d`` dark-click probability per slot
per recipient, ``alpha`` transmittance per arm, ``n`` number of sequential
coincidences in a dishonest-recipient attack.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Optional


class DomainError(ValueError):
    """Raised when a parameter lies outside the domain of a closed form."""


def to_db(x) -> float:
    """Transmittance (power ratio) to dB; ``-inf`` for zero."""
    x = float(x)
    if x < 0:
        raise DomainError(f"cannot convert negative value {x} to dB")
    return -math.inf if x == 0 else 10.0 * math.log10(x)


def from_db(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _check_S(S):
    if not 0 < S < 1:
        raise DomainError(f"signal-slot probability must lie in (0, 1), got {S}")


@dataclass(frozen=True)
class SlotParams:
    S: object
    p_e: object
    p_d: object
    M: object


def slot_probabilities(S) -> SlotParams:
    """Error/detection slot probabilities and mark ratio for a given ``S``."""
    _check_S(S)
    p_e = 2 * (1 - S) / 3
    p_d = (1 - S) / 3
    M = (2 * S + 1) / 3
    return SlotParams(S=S, p_e=p_e, p_d=p_d, M=M)


def fixed_dimension_S(N: int):
    """Signal fraction of a fixed-dimension packet with two vacant slots."""
    if N < 2:
        raise DomainError(f"packet dimension must be >= 2, got {N}")
    return Fraction(N - 1, N + 2)


def honest_key_rate(mu, S, alpha):
    """Sifted key (signal-slot coincidence) rate per slot, accidentals ignored."""
    return mu * S * alpha**2 / 2


def honest_count_rate(mu, S, alpha):
    """First-order click rate per slot seen by each recipient."""
    return slot_probabilities(S).M * mu * alpha


@dataclass(frozen=True)
class AttackMetrics:
    n: int
    R_s: object
    R_e: object
    R_coin: object
    y: object
    alpha_min: object
    alpha_th: object
    detection_probability: object
    detection_rate: Optional[object] = None
    N_s: Optional[object] = None
    N_e: Optional[object] = None
    approximate: bool = False


def _ratio(num: int, den: int, like):
    return Fraction(num, den) if isinstance(like, Fraction) else num / den


def _signal_error_rates(mu):
    return mu / 2, mu / 4


def bob_single_metrics(mu, S, d, alpha=None) -> AttackMetrics:
    """Dishonest recipient resending from single coincidences.

    ``alpha_min`` is the transmittance below which the cheater can keep the
    honest recipient's count rate; ``alpha_th`` is the transmittance above
    which the induced detection-slot clicks outnumber dark clicks.
    """
    _check_S(S)
    slots = slot_probabilities(S)
    R_s, R_e = _signal_error_rates(mu)
    R_coin = R_s * S + R_e * slots.p_e
    # R_coin == M mu / 2 identically, hence the fixed 1/2
    alpha_min = R_coin / (slots.M * mu)
    y = (1 - S) / (2 * S + 1)
    alpha_th = 12 * d / (mu * (1 - S))
    det_p = _ratio(1, 4, mu)
    rate = None if alpha is None else slots.M * mu * alpha * y / 4
    return AttackMetrics(
        n=1, R_s=R_s, R_e=R_e, R_coin=R_coin, y=y, alpha_min=alpha_min,
        alpha_th=alpha_th, detection_probability=det_p, detection_rate=rate,
    )


def bob_sequential_metrics(n: int, mu, S, d, N_all=None, alpha=None) -> AttackMetrics:
    """Dishonest recipient resending (n+1)-slot states from n sequential coincidences.

    The sequential counts are small-``R_s`` approximations and the result is
    flagged ``approximate`` for ``n > 1``. ``N_all`` only scales the absolute
    counts ``N_s`` and ``N_e``.
    """
    if n < 1:
        raise DomainError(f"sequence length must be >= 1, got {n}")
    _check_S(S)
    slots = slot_probabilities(S)
    R_s, R_e = _signal_error_rates(mu)
    R_coin = R_s**n * S + R_e * R_s ** (n - 1) * slots.p_e
    alpha_min = mu ** (n - 1) / 2**n
    y = (1 - S) / (2 * S + 1)
    alpha_thn = 6 * d * (n + 1) / (mu * (1 - S))
    det_p = _ratio(1, 2 * (n + 1), mu)
    rate = None if alpha is None else slots.M * mu * alpha * y / (2 * (n + 1))
    N_s = N_e = None
    if N_all is not None:
        N_s = S * mu**n / 2**n * N_all
        N_e = slots.p_e * mu**n / (2 * 2**n) * N_all
    return AttackMetrics(
        n=n, R_s=R_s, R_e=R_e, R_coin=R_coin, y=y, alpha_min=alpha_min,
        alpha_th=alpha_thn, detection_probability=det_p, detection_rate=rate,
        N_s=N_s, N_e=N_e, approximate=n > 1,
    )


def eve_bs_info(mu, alpha, n_sif):
    """Beam-splitting eavesdropper: per-instance coincidence probability and known-bit bound."""
    if not 0 <= alpha <= 1:
        raise DomainError(f"transmittance must lie in [0, 1], got {alpha}")
    return mu * (1 - alpha) ** 2 / 2, mu * n_sif / 2


@dataclass(frozen=True)
class ThresholdRow:
    n: int
    alpha_min: object
    alpha_thn: object

    @property
    def alpha_min_db(self) -> float:
        return to_db(self.alpha_min)

    @property
    def alpha_thn_db(self) -> float:
        return to_db(self.alpha_thn)

    @property
    def binding(self):
        """Transmittance below which this attack goes unnoticed."""
        return min(self.alpha_min, self.alpha_thn)

    @property
    def reachable(self) -> bool:
        """False when the detection threshold exceeds any physical transmittance."""
        return self.alpha_thn <= 1


@dataclass(frozen=True)
class ThresholdReport:
    mu: object
    S: object
    d: object
    rows: list[ThresholdRow] = field(default_factory=list)

    @property
    def best(self) -> ThresholdRow:
        return max(self.rows, key=lambda r: r.binding)

    @property
    def security_threshold(self):
        return self.best.binding

    @property
    def security_threshold_db(self) -> float:
        return to_db(self.security_threshold)

    @property
    def argmax_n(self) -> int:
        return self.best.n

    def to_dict(self) -> dict:
        return {
            "mu": float(self.mu),
            "S": float(self.S),
            "dark": float(self.d),
            "rows": [
                {
                    "n": r.n,
                    "alpha_min": float(r.alpha_min),
                    "alpha_min_db": r.alpha_min_db,
                    "alpha_thn": float(r.alpha_thn),
                    "alpha_thn_db": r.alpha_thn_db,
                    "binding": float(r.binding),
                    "reachable": r.reachable,
                    "approximate": r.n > 1,
                }
                for r in self.rows
            ],
            "security_threshold": float(self.security_threshold),
            "security_threshold_db": self.security_threshold_db,
            "argmax_n": self.argmax_n,
        }


def security_threshold(mu, S, d, n_max: int = 6) -> ThresholdReport:
    """Smallest transmittance that still exposes every attack with ``n <= n_max``.

    For each ``n`` the cheater succeeds below ``min(alpha_min(n), alpha_thn(n))``;
    the system is secure above the largest of these.
    """
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    return ThresholdReport(mu, S, d, fig3_rows(mu, S, d, range(1, n_max + 1)))


def fig3_rows(mu, S, d, n_range: Iterable[int]) -> list[ThresholdRow]:
    rows = []
    for n in n_range:
        m = bob_sequential_metrics(n, mu, S, d)
        rows.append(ThresholdRow(n=n, alpha_min=m.alpha_min, alpha_thn=m.alpha_th))
    if not rows:
        raise DomainError("empty range of sequence lengths")
    return rows


FIG3_COLUMNS = ("n", "alpha_min", "alpha_min_db", "alpha_thn", "alpha_thn_db")


def fig3_table(mu, S, d, n_range: Iterable[int]) -> list[dict]:
    return [
        {
            "n": r.n,
            "alpha_min": float(r.alpha_min),
            "alpha_min_db": r.alpha_min_db,
            "alpha_thn": float(r.alpha_thn),
            "alpha_thn_db": r.alpha_thn_db,
        }
        for r in fig3_rows(mu, S, d, n_range)
    ]


def fig3_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=FIG3_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in FIG3_COLUMNS})
    return buf.getvalue()


@dataclass(frozen=True)
class LossBudget:
    threshold_db: float
    detector_efficiency_db: float
    coupling_loss_db: float
    link_loss_db: float
    fiber_loss_db_per_km: float

    @property
    def arm_length_km(self) -> float:
        return self.link_loss_db / self.fiber_loss_db_per_km

    @property
    def total_length_km(self) -> float:
        return 2 * self.arm_length_km

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(arm_length_km=self.arm_length_km, total_length_km=self.total_length_km)
        return d


def loss_budget(
    threshold_db: float = -24.0,
    detector_efficiency: float = 0.1,
    coupling_loss_db: float = 4.0,
    fiber_loss_db_per_km: float = 0.2,
) -> LossBudget:
    """Fiber length supported by a transmittance threshold.

    The threshold transmittance includes detector efficiency and source
    out-coupling, so only what remains is available for fiber between the
    source and each recipient.
    """
    det_db = -to_db(detector_efficiency)
    link = -threshold_db - det_db - coupling_loss_db
    return LossBudget(threshold_db, det_db, coupling_loss_db, max(link, 0.0), fiber_loss_db_per_km)
