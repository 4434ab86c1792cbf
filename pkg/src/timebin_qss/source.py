"""Charlie's modulated high-dimensional time-bin entanglement source.

A packet occupies ``N`` consecutive emission slots followed by vacant slots
(exactly two in the randomized-dimension scheme, a random number >= 2 in the
fixed-dimension scheme). Seen through the recipients' interferometers, the
packet's measurement slots relative to its first slot are

    1, N+1      error slots (uncorrelated coincidences)
    2 .. N      signal slots (correlation sign = key bit)
    N+2         detection slot (never clicks for honest parties)

Absolute slot 0 of a session is a leading vacant slot; it acts as the
detection slot in front of the first packet.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import statevec

ROLE_VACANT, ROLE_ERROR, ROLE_SIGNAL, ROLE_DETECTION = 0, 1, 2, 3
ROLE_NAMES = ("vacant", "error", "signal", "detection")

SCHEMES = ("randomized_dimension", "fixed_dimension_random_gap")
PAIR_STATISTICS = ("poisson", "single")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SourceConfig:
    """Source settings.

    ``dims`` and ``dim_weights`` give the packet-dimension distribution
    (uniform when weights are omitted). The fixed-dimension scheme takes a
    single dimension and draws the number of vacant slots after each packet as
    ``2 + G`` with ``G`` geometric on {0, 1, ...} of mean ``gap_extra_mean``.

    ``pair_statistics="single"`` keeps at most one pair per packet (emitted
    with probability ``mu*N``), which removes accidental coincidences exactly
    as the closed-form rates assume. ``"poisson"`` is the physical source.
    """

    mu: float = 0.1
    dims: tuple[int, ...] = (4,)
    dim_weights: Optional[tuple[float, ...]] = None
    scheme: str = "randomized_dimension"
    gap_extra_mean: float = 1.0
    pair_statistics: str = "poisson"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        if self.dim_weights is not None:
            object.__setattr__(self, "dim_weights", tuple(float(w) for w in self.dim_weights))
        if not 0 < self.mu < 1:
            raise ConfigurationError(f"mu must lie in (0, 1), got {self.mu}")
        if not self.dims:
            raise ConfigurationError("empty dimension distribution")
        if min(self.dims) < 2:
            raise ConfigurationError(f"packet dimensions must be >= 2, got {self.dims}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.pair_statistics not in PAIR_STATISTICS:
            raise ConfigurationError(f"unknown pair statistics {self.pair_statistics!r}")
        if self.dim_weights is not None:
            w = np.asarray(self.dim_weights)
            if w.shape != (len(self.dims),) or np.any(w < 0) or w.sum() <= 0:
                raise ConfigurationError("dim_weights must be non-negative, one per dimension")
        if self.scheme == "fixed_dimension_random_gap":
            if len(set(self.dims)) != 1:
                raise ConfigurationError("fixed_dimension_random_gap takes exactly one dimension")
            if self.gap_extra_mean < 0:
                raise ConfigurationError("gap_extra_mean must be >= 0")
        if self.pair_statistics == "single" and self.mu * max(self.dims) > 1:
            raise ConfigurationError("single-pair statistics need mu*N <= 1")

    def dim_distribution(self) -> tuple[np.ndarray, np.ndarray]:
        dims = np.asarray(self.dims)
        if self.dim_weights is None:
            p = np.full(len(dims), 1.0 / len(dims))
        else:
            w = np.asarray(self.dim_weights, dtype=float)
            p = w / w.sum()
        return dims, p


@dataclass(frozen=True)
class PacketSpec:
    dim: int
    phases: tuple[float, ...]
    start_slot: int
    gap: int = 2

    @property
    def phase_bits(self) -> tuple[int, ...]:
        return tuple(int(round(p / math.pi)) % 2 for p in self.phases)

    @property
    def length(self) -> int:
        return self.dim + self.gap

    @property
    def roles(self) -> tuple[str, ...]:
        """Role of each relative measurement slot ``1 .. N+gap``."""
        out = []
        for rel in range(1, self.length + 1):
            out.append(ROLE_NAMES[_relative_role(rel, self.dim, self.gap)])
        return tuple(out)

    def role(self, rel_slot: int) -> str:
        return ROLE_NAMES[_relative_role(rel_slot, self.dim, self.gap)]

    def state(self) -> statevec.PairState:
        return statevec.packet_state(self.phases, start=self.start_slot)

    def differential_bits(self) -> tuple[int, ...]:
        """Key bit of each signal slot 2..N (1 when the phase flips by pi)."""
        b = self.phase_bits
        return tuple(b[k] ^ b[k - 1] for k in range(1, self.dim))


def _relative_role(rel: int, dim: int, gap: int) -> int:
    if rel == 1 or rel == dim + 1:
        return ROLE_ERROR
    if 2 <= rel <= dim:
        return ROLE_SIGNAL
    if rel == dim + 2 or rel == dim + gap:
        return ROLE_DETECTION
    return ROLE_VACANT


@dataclass(frozen=True)
class PumpPattern:
    phases: tuple[float, ...]
    on: tuple[bool, ...]


@dataclass(frozen=True)
class EmissionEvent:
    packet: PacketSpec
    pair_count: int
    state: statevec.PairState


def _draw_gap(rng: np.random.Generator, config: SourceConfig, size=None):
    if config.scheme == "randomized_dimension":
        return 2 if size is None else np.full(size, 2, dtype=np.int64)
    p = 1.0 / (1.0 + config.gap_extra_mean)
    return 2 + rng.geometric(p, size=size) - 1


def draw_packet(rng: np.random.Generator, config: SourceConfig, start_slot: int) -> PacketSpec:
    dims, p = config.dim_distribution()
    dim = int(rng.choice(dims, p=p))
    gap = int(_draw_gap(rng, config))
    bits = rng.integers(0, 2, size=dim)
    bits[0] = 0
    return PacketSpec(dim=dim, phases=tuple(float(b) * math.pi for b in bits), start_slot=start_slot, gap=gap)


def pump_phase_pattern(packet: PacketSpec) -> PumpPattern:
    """Pump phases (half the pair phase) with the trailing vacant pulses switched off."""
    phases = [p / 2 for p in packet.phases] + [0.0] * packet.gap
    on = [True] * packet.dim + [False] * packet.gap
    return PumpPattern(tuple(phases), tuple(on))


def _pair_count(rng: np.random.Generator, mean, statistics: str, size=None):
    if statistics == "poisson":
        return rng.poisson(mean, size=size)
    return (rng.random(size) < mean).astype(np.int64) if size is not None else int(rng.random() < mean)


def sample_emissions(
    rng: np.random.Generator, packet: PacketSpec, mu: float, statistics: str = "poisson"
) -> EmissionEvent:
    if not 0 < mu < 1:
        raise ConfigurationError(f"mu must lie in (0, 1), got {mu}")
    count = int(_pair_count(rng, mu * packet.dim, statistics))
    return EmissionEvent(packet=packet, pair_count=count, state=packet.state())


def expected_signal_fraction(config: SourceConfig):
    """Slot-weighted signal fraction ``E[N-1] / E[N+gap]``.

    Exact (a Fraction) for uniform dimension distributions in the
    randomized-dimension scheme.
    """
    if config.scheme == "fixed_dimension_random_gap":
        n = config.dims[0]
        return (n - 1) / (n + 2 + config.gap_extra_mean)
    if config.dim_weights is None:
        k = len(config.dims)
        mean_n = Fraction(sum(config.dims), k)
        return (mean_n - 1) / (mean_n + 2)
    dims, p = config.dim_distribution()
    mean_n = float(np.dot(dims, p))
    return (mean_n - 1) / (mean_n + 2)


def expected_mark_ratio(config: SourceConfig):
    if config.scheme == "fixed_dimension_random_gap":
        n = config.dims[0]
        return n / (n + 2 + config.gap_extra_mean)
    S = expected_signal_fraction(config)
    return (2 * S + 1) / 3


@dataclass
class Session:
    """Charlie's private record of one session: layout, phases and roles."""

    n_slots: int
    starts: np.ndarray
    dims: np.ndarray
    gaps: np.ndarray
    phase_bits: np.ndarray
    roles: np.ndarray
    pattern_codes: np.ndarray

    @property
    def n_packets(self) -> int:
        return int(self.starts.size)

    def key_bits(self, slots: np.ndarray) -> np.ndarray:
        """Differential phase bit at measurement ``slots`` (meaningful for signal slots)."""
        slots = np.asarray(slots, dtype=np.int64)
        return (self.phase_bits[slots] ^ self.phase_bits[slots - 1]).astype(np.int8)

    def role_counts(self) -> dict[str, int]:
        counts = np.bincount(self.roles, minlength=4)
        return {name: int(counts[i]) for i, name in enumerate(ROLE_NAMES)}

    def packet(self, i: int) -> PacketSpec:
        s, n, g = int(self.starts[i]), int(self.dims[i]), int(self.gaps[i])
        bits = self.phase_bits[s : s + n]
        return PacketSpec(dim=n, phases=tuple(float(b) * math.pi for b in bits), start_slot=s, gap=g)


def generate_session(rng: np.random.Generator, config: SourceConfig, session_slots: int) -> Session:
    """Lay out packets until at least ``session_slots`` slots are filled."""
    if session_slots < 1:
        raise ConfigurationError("session length must be positive")
    dims_support, p = config.dim_distribution()
    mean_len = float(np.dot(dims_support, p)) + 2 + (
        config.gap_extra_mean if config.scheme == "fixed_dimension_random_gap" else 0
    )
    dims_parts, gaps_parts, total = [], [], 1
    while total < session_slots:
        batch = int((session_slots - total) / mean_len * 1.1) + 16
        d = rng.choice(dims_support, p=p, size=batch).astype(np.int64)
        g = _draw_gap(rng, config, size=batch).astype(np.int64)
        lengths = np.cumsum(d + g)
        need = int(np.searchsorted(lengths, session_slots - total, side="left")) + 1
        need = min(need, batch)
        dims_parts.append(d[:need])
        gaps_parts.append(g[:need])
        total += int(lengths[need - 1])
    dims = np.concatenate(dims_parts)
    gaps = np.concatenate(gaps_parts)
    lengths = dims + gaps
    starts = 1 + np.concatenate(([0], np.cumsum(lengths)[:-1]))
    n_slots = int(1 + lengths.sum())

    occupied = np.zeros(n_slots, dtype=bool)
    # slot -> packet via run-length expansion
    rel = np.arange(n_slots) - np.repeat(np.concatenate(([0], starts)), np.concatenate(([1], lengths)))
    pkt_dim = np.repeat(np.concatenate(([0], dims)), np.concatenate(([1], lengths)))
    pkt_gap = np.repeat(np.concatenate(([0], gaps)), np.concatenate(([1], lengths)))
    occupied[1:] = rel[1:] < pkt_dim[1:]

    phase_bits = np.zeros(n_slots, dtype=np.int8)
    phase_bits[occupied] = rng.integers(0, 2, size=int(occupied.sum()), dtype=np.int8)
    # global phase convention: first slot of every packet carries phase 0
    phase_bits[starts] = 0

    r = rel + 1  # 1-based relative measurement slot
    roles = np.full(n_slots, ROLE_VACANT, dtype=np.int8)
    inner = np.arange(n_slots) >= 1
    roles[inner & ((r == 1) | (r == pkt_dim + 1))] = ROLE_ERROR
    roles[inner & (r >= 2) & (r <= pkt_dim)] = ROLE_SIGNAL
    roles[inner & ((r == pkt_dim + 2) | (r == pkt_dim + pkt_gap))] = ROLE_DETECTION
    roles[0] = ROLE_DETECTION

    codes = _pattern_codes(phase_bits, starts, dims)
    return Session(n_slots, starts, dims, gaps, phase_bits, roles, codes)


def _pattern_codes(phase_bits: np.ndarray, starts: np.ndarray, dims: np.ndarray) -> np.ndarray:
    """Integer code of each packet's relative phase pattern (bit k = phase of slot k)."""
    codes = np.zeros(starts.size, dtype=np.int64)
    for k in range(1, int(dims.max())):
        has = dims > k
        idx = starts[has] + k
        codes[has] |= phase_bits[idx].astype(np.int64) << k
    return codes


@lru_cache(maxsize=4096)
def packet_outcome_table(dim: int, code: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Joint interferometer outcome distribution of one pair of a packet.

    Slots are relative to the packet's first emission slot (index 0).
    """
    bits = [(code >> k) & 1 for k in range(dim)]
    return statevec.pair_outcome_table(statevec.packet_state_from_bits(bits, start=0))


@dataclass
class PairStream:
    """Photon pairs on the fiber, one row per pair, with the outcome each pair
    would produce in an interferometer. Carries no slot-role information."""

    start: np.ndarray
    slot_s: np.ndarray
    port_s: np.ndarray
    slot_i: np.ndarray
    port_i: np.ndarray

    def __len__(self) -> int:
        return int(self.start.size)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.int64)

    @property
    def coincident(self) -> np.ndarray:
        return self.slot_s == self.slot_i


def sample_grouped(rng: np.random.Generator, keys: np.ndarray, table_fn) -> np.ndarray:
    """Draw one outcome index per row, grouping rows that share a distribution.

    ``table_fn(key)`` returns ``(probabilities, shape)``. Returns flat outcome
    indices; callers unravel with the shape for their key.
    """
    out = np.zeros(keys.shape[0], dtype=np.int64)
    if keys.shape[0] == 0:
        return out
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for g, key in enumerate(uniq):
        rows = np.nonzero(inverse == g)[0]
        probs, _ = table_fn(tuple(int(x) for x in np.atleast_1d(key)))
        out[rows] = rng.choice(probs.size, size=rows.size, p=probs)
    return out


def emit_pairs(rng: np.random.Generator, session: Session, config: SourceConfig) -> PairStream:
    """Sample pair counts per packet and each pair's interferometer outcome."""
    counts = _pair_count(rng, config.mu * session.dims, config.pair_statistics, size=session.n_packets)
    pkt = np.repeat(np.arange(session.n_packets), counts)
    dims = session.dims[pkt]
    codes = session.pattern_codes[pkt]
    starts = session.starts[pkt]
    keys = np.stack([dims, codes], axis=1)
    flat = sample_grouped(rng, keys, lambda k: packet_outcome_table(k[0], k[1]))
    ls = dims + 1
    # shape (ls, 2, ls, 2) per row
    port_i = flat % 2
    rest = flat // 2
    slot_i = rest % ls
    rest //= ls
    port_s = rest % 2
    slot_s = rest // 2
    return PairStream(
        start=starts,
        slot_s=starts + slot_s,
        port_s=port_s.astype(np.int8),
        slot_i=starts + slot_i,
        port_i=port_i.astype(np.int8),
    )


def phases_from_bits(bits: Sequence[int]) -> tuple[float, ...]:
    return tuple(float(b) * math.pi for b in bits)
