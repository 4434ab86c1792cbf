"""Lossy fiber, threshold detectors and dark counts.

Per-party click logs are stored column-wise (:class:`ClickLog`) so that
sessions of tens of millions of slots stay cheap; :class:`ClickRecord` is the
row view.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import statevec
from .analytics import from_db

ALICE, BOB = "alice", "bob"
CAUSE_PHOTON, CAUSE_DARK = 0, 1
CAUSE_NAMES = ("photon", "dark")


@dataclass(frozen=True)
class ChannelConfig:
    """``alpha`` is the per-arm transmittance including detector efficiency;
    ``dark`` the dark-click probability per slot per recipient (both detectors)."""

    alpha: float
    dark: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 <= self.dark < 1:
            raise ValueError(f"dark must lie in [0, 1), got {self.dark}")

    @classmethod
    def from_db(cls, alpha_db: float, dark: float = 0.0) -> "ChannelConfig":
        return cls(alpha=from_db(alpha_db), dark=dark)


@dataclass(frozen=True)
class ClickRecord:
    party: str
    slot: int
    port: int
    cause: str = "photon"


@dataclass
class ClickLog:
    """One recipient's clicks: at most one per slot, sorted by slot.

    ``pairs`` holds the id of the photon pair that produced each photon click
    (``-1`` for dark clicks and for photons without a pair partner).
    """

    party: str
    slots: np.ndarray
    ports: np.ndarray
    causes: np.ndarray
    pairs: np.ndarray

    def __len__(self) -> int:
        return int(self.slots.size)

    @classmethod
    def empty(cls, party: str) -> "ClickLog":
        z = np.zeros(0, dtype=np.int64)
        return cls(party, z, z.astype(np.int8), z.astype(np.int8), z)

    def records(self) -> list[ClickRecord]:
        return [
            ClickRecord(self.party, int(s), int(p), CAUSE_NAMES[c])
            for s, p, c in zip(self.slots, self.ports, self.causes)
        ]

    def count_in(self, mask_by_slot: np.ndarray, cause: Optional[int] = None) -> int:
        sel = mask_by_slot[self.slots]
        if cause is not None:
            sel &= self.causes == cause
        return int(np.count_nonzero(sel))


def merge_clicks(
    rng: np.random.Generator,
    party: str,
    slots: np.ndarray,
    ports: np.ndarray,
    causes: Optional[np.ndarray] = None,
    pairs: Optional[np.ndarray] = None,
) -> ClickLog:
    """Collapse photons arriving in the same slot into a single click.

    Photon clicks take precedence over dark clicks; among several photons the
    reported port is that of a uniformly chosen one.
    """
    slots = np.asarray(slots, dtype=np.int64)
    n = slots.size
    ports = np.asarray(ports, dtype=np.int8)
    causes = np.zeros(n, dtype=np.int8) if causes is None else np.asarray(causes, dtype=np.int8)
    pairs = np.full(n, -1, dtype=np.int64) if pairs is None else np.asarray(pairs, dtype=np.int64)
    if n == 0:
        return ClickLog.empty(party)
    perm = rng.permutation(n)
    order = perm[np.lexsort((causes[perm], slots[perm]))]
    s = slots[order]
    first = np.ones(n, dtype=bool)
    first[1:] = s[1:] != s[:-1]
    keep = order[first]
    return ClickLog(party, slots[keep], ports[keep], causes[keep], pairs[keep])


def transmit_pair(rng: np.random.Generator, emission, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Independent survival flags for the signal and idler photon of each pair."""
    count = emission if isinstance(emission, (int, np.integer)) else emission.pair_count
    return rng.random(count) < alpha, rng.random(count) < alpha


def _sample_outcome(rng, probs: np.ndarray, shape: tuple[int, ...]) -> tuple[int, ...]:
    return np.unravel_index(rng.choice(probs.size, p=probs), shape)


def sample_measurement(
    rng: np.random.Generator,
    state: Union[statevec.PairState, statevec.PhotonState],
    survivors: Sequence[bool],
    parties: tuple[str, str] = (ALICE, BOB),
) -> list[ClickRecord]:
    """Clicks produced by one state whose photons survived per ``survivors``.

    A pair state is sampled from its joint interferometer distribution and the
    lost photon (if any) is dropped, which reproduces the surviving photon's
    marginal click distribution.
    """
    if isinstance(state, statevec.PhotonState):
        if not survivors[0]:
            return []
        probs, shape = statevec.photon_outcome_table(state)
        k, p = _sample_outcome(rng, probs, shape)
        return [ClickRecord(parties[0], int(k) + state.offset, int(p))]
    if not any(survivors):
        return []
    probs, shape = statevec.pair_outcome_table(state)
    ks, ps, ki, pi = _sample_outcome(rng, probs, shape)
    out = []
    if survivors[0]:
        out.append(ClickRecord(parties[0], int(ks) + state.offset_s, int(ps)))
    if survivors[1]:
        out.append(ClickRecord(parties[1], int(ki) + state.offset_i, int(pi)))
    return out


def apply_dark_counts(
    rng: np.random.Generator,
    records: Iterable[ClickRecord],
    dark: float,
    session_slots: int,
    parties: Sequence[str] = (ALICE, BOB),
) -> list[ClickRecord]:
    """Add dark clicks to a record list; photon clicks win on shared slots."""
    records = list(records)
    if dark < 0:
        raise ValueError("dark-count probability must be >= 0")
    if dark == 0:
        return records
    taken = {(r.party, r.slot) for r in records}
    out = list(records)
    for party in parties:
        for slot in _dark_slots(rng, dark, session_slots):
            if (party, int(slot)) not in taken:
                out.append(ClickRecord(party, int(slot), int(rng.integers(2)), "dark"))
    return sorted(out, key=lambda r: (r.party, r.slot))


def _dark_slots(rng: np.random.Generator, dark: float, n_slots: int) -> np.ndarray:
    k = rng.binomial(n_slots, dark)
    return np.sort(rng.choice(n_slots, size=k, replace=False))


def add_dark_counts(rng: np.random.Generator, log: ClickLog, dark: float, n_slots: int) -> ClickLog:
    if dark == 0:
        return log
    ds = _dark_slots(rng, dark, n_slots)
    dp = rng.integers(0, 2, size=ds.size, dtype=np.int8)
    return merge_clicks(
        rng,
        log.party,
        np.concatenate([log.slots, ds]),
        np.concatenate([log.ports, dp]),
        np.concatenate([log.causes, np.full(ds.size, CAUSE_DARK, dtype=np.int8)]),
        np.concatenate([log.pairs, np.full(ds.size, -1, dtype=np.int64)]),
    )
