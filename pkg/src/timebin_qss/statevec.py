"""Complex-amplitude model of time-bin photons and the one-bit-delay interferometer.

States are dense numpy arrays indexed by time slot, with an integer ``offset``
giving the slot label of the first array entry. After the interferometer every
photon also carries a detector port, ``A_PORT`` (0, "a") or ``B_PORT`` (1, "b").

The interferometer maps a photon in slot ``k`` to

    |k> -> 1/2 (|k,a> - |k,b> + |k+1,a> + |k+1,b>)

i.e. the short arm leaves in slot ``k`` with a relative sign between the
ports and the long arm is delayed by one slot. Port labels are a convention;
swapping them flips every bit consistently on both sides.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

A_PORT = 0
B_PORT = 1
PORT_NAMES = ("a", "b")

NORM_ATOL = 1e-12


class InvalidDimensionError(ValueError):
    """Raised when a packet has fewer than two occupied slots."""


class InvalidPhaseError(ValueError):
    """Raised when a packet phase is not 0 or pi relative to the first slot."""


def phase_factor(phi: float) -> complex:
    """``exp(1j*phi)`` with exact values at multiples of pi/2."""
    quarter = phi / (math.pi / 2)
    r = round(quarter)
    if abs(quarter - r) < 1e-12:
        return (1, 1j, -1, -1j)[r % 4]
    return complex(math.cos(phi), math.sin(phi))


def bit_factor(bits: np.ndarray) -> np.ndarray:
    """Map phase bits (0 -> phase 0, 1 -> phase pi) to +1/-1."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=float)


def _check_finite(amp: np.ndarray) -> None:
    if not np.all(np.isfinite(amp)):
        raise FloatingPointError("non-finite amplitude")


@dataclass(frozen=True)
class PhotonState:
    """Single photon before the interferometer: amplitude per slot."""

    amp: np.ndarray
    offset: int = 0

    def __post_init__(self):
        amp = np.asarray(self.amp, dtype=complex)
        if amp.ndim != 1:
            raise ValueError("PhotonState amplitudes must be one-dimensional")
        _check_finite(amp)
        object.__setattr__(self, "amp", amp)

    @property
    def slots(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.amp.shape[0])

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amp) ** 2))

    def as_dict(self) -> dict[int, complex]:
        return {int(k): complex(a) for k, a in zip(self.slots, self.amp) if a != 0}


@dataclass(frozen=True)
class PortedPhotonState:
    """Single photon after the interferometer: amplitude per (slot, port)."""

    amp: np.ndarray
    offset: int = 0

    def __post_init__(self):
        amp = np.asarray(self.amp, dtype=complex)
        if amp.ndim != 2 or amp.shape[1] != 2:
            raise ValueError("PortedPhotonState amplitudes must have shape (slots, 2)")
        _check_finite(amp)
        object.__setattr__(self, "amp", amp)

    @property
    def slots(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.amp.shape[0])

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amp) ** 2))

    def as_dict(self) -> dict[tuple[int, int], complex]:
        out = {}
        for i, k in enumerate(self.slots):
            for p in (A_PORT, B_PORT):
                if self.amp[i, p] != 0:
                    out[(int(k), p)] = complex(self.amp[i, p])
        return out


@dataclass(frozen=True)
class PairState:
    """Photon pair before the interferometers.

    ``amp[i, j]`` is the amplitude of signal in slot ``offset_s + i`` and idler
    in slot ``offset_i + j``.
    """

    amp: np.ndarray
    offset_s: int = 0
    offset_i: int = 0

    def __post_init__(self):
        amp = np.asarray(self.amp, dtype=complex)
        if amp.ndim != 2:
            raise ValueError("PairState amplitudes must be two-dimensional")
        _check_finite(amp)
        object.__setattr__(self, "amp", amp)

    @property
    def dim(self) -> int:
        return int(np.count_nonzero(np.any(self.amp != 0, axis=1)))

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amp) ** 2))

    def as_dict(self) -> dict[tuple[int, int], complex]:
        out = {}
        for i, j in zip(*np.nonzero(self.amp)):
            out[(int(i) + self.offset_s, int(j) + self.offset_i)] = complex(self.amp[i, j])
        return out


@dataclass(frozen=True)
class PortedPairState:
    """Photon pair after both interferometers: ``amp[s, ps, i, pi]``."""

    amp: np.ndarray
    offset_s: int = 0
    offset_i: int = 0

    def __post_init__(self):
        amp = np.asarray(self.amp, dtype=complex)
        if amp.ndim != 4 or amp.shape[1] != 2 or amp.shape[3] != 2:
            raise ValueError("PortedPairState amplitudes must have shape (Ls, 2, Li, 2)")
        _check_finite(amp)
        object.__setattr__(self, "amp", amp)

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amp) ** 2))

    def amplitude(self, slot_s: int, port_s: int, slot_i: int, port_i: int) -> complex:
        i, j = slot_s - self.offset_s, slot_i - self.offset_i
        if not (0 <= i < self.amp.shape[0] and 0 <= j < self.amp.shape[2]):
            return 0j
        return complex(self.amp[i, port_s, j, port_i])

    def as_dict(self) -> dict[tuple[int, int, int, int], complex]:
        out = {}
        for i, ps, j, pi in zip(*np.nonzero(self.amp)):
            key = (int(i) + self.offset_s, int(ps), int(j) + self.offset_i, int(pi))
            out[key] = complex(self.amp[i, ps, j, pi])
        return out

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amp) ** 2


@dataclass(frozen=True)
class CoincidenceDistribution:
    """Same-slot coincidence probabilities keyed by ``(slot, port_s, port_i)``."""

    entries: dict[tuple[int, int, int], float]
    residual: float = field(default=0.0)

    def slot_probability(self, slot: int) -> float:
        return sum(p for (k, _, _), p in self.entries.items() if k == slot)

    def equal_port_probability(self, slot: int) -> float:
        return sum(p for (k, ps, pi), p in self.entries.items() if k == slot and ps == pi)

    def total(self) -> float:
        return sum(self.entries.values())

    def slots(self) -> list[int]:
        return sorted({k for k, _, _ in self.entries})


def superposition(phases: Sequence[float], start: int = 0) -> PhotonState:
    """Equal-weight single photon ``sum_k exp(i phi_k)|start+k> / sqrt(n)``."""
    phases = list(phases)
    if not phases:
        raise InvalidDimensionError("empty superposition")
    amp = np.array([phase_factor(p) for p in phases], dtype=complex) / math.sqrt(len(phases))
    return PhotonState(amp, start)


def packet_state(phases: Sequence[float], start: int = 1) -> PairState:
    """Diagonal pair state ``sum_k exp(i phi_k)|k>_s|k>_i / sqrt(N)``.

    Phases are shifted so the first slot carries phase 0; every remaining
    phase must then be 0 or pi.
    """
    phases = [float(p) for p in phases]
    if len(phases) < 2:
        raise InvalidDimensionError(f"packet dimension must be >= 2, got {len(phases)}")
    rel = [p - phases[0] for p in phases]
    factors = []
    for p in rel:
        f = phase_factor(p)
        if f not in (1, -1):
            raise InvalidPhaseError(f"relative phase {p} is not in {{0, pi}}")
        factors.append(f)
    n = len(phases)
    amp = np.diag(np.array(factors, dtype=complex)) / math.sqrt(n)
    return PairState(amp, start, start)


def packet_state_from_bits(phase_bits: Sequence[int], start: int = 1) -> PairState:
    bits = np.asarray(phase_bits, dtype=int)
    if bits.size < 2:
        raise InvalidDimensionError(f"packet dimension must be >= 2, got {bits.size}")
    signs = bit_factor(bits ^ bits[0])
    return PairState(np.diag(signs.astype(complex)) / math.sqrt(bits.size), start, start)


def product_pair(signal: PhotonState, idler: PhotonState) -> PairState:
    return PairState(np.outer(signal.amp, idler.amp), signal.offset, idler.offset)


@lru_cache(maxsize=64)
def _transfer(length: int) -> np.ndarray:
    """Interferometer matrix ``T[out_slot, port, in_slot]`` for ``length`` input slots."""
    t = np.zeros((length + 1, 2, length))
    k = np.arange(length)
    t[k, A_PORT, k] = 0.5
    t[k, B_PORT, k] = -0.5
    t[k + 1, A_PORT, k] = 0.5
    t[k + 1, B_PORT, k] = 0.5
    t.setflags(write=False)
    return t


def apply_interferometer_single(state: PhotonState) -> PortedPhotonState:
    out = np.einsum("spk,k->sp", _transfer(state.amp.shape[0]), state.amp)
    return PortedPhotonState(out, state.offset)


def apply_interferometer_pair(state: PairState) -> PortedPairState:
    ts = _transfer(state.amp.shape[0])
    ti = _transfer(state.amp.shape[1])
    out = np.einsum("apk,bql,kl->apbq", ts, ti, state.amp)
    return PortedPairState(out, state.offset_s, state.offset_i)


def coincidence_distribution(state: PortedPairState) -> CoincidenceDistribution:
    probs = state.probabilities()
    ls, li = probs.shape[0], probs.shape[2]
    lo = max(state.offset_s, state.offset_i)
    hi = min(state.offset_s + ls, state.offset_i + li)
    entries = {}
    for k in range(lo, hi):
        block = probs[k - state.offset_s, :, k - state.offset_i, :]
        for ps in (A_PORT, B_PORT):
            for pi in (A_PORT, B_PORT):
                entries[(k, ps, pi)] = float(block[ps, pi])
    residual = max(0.0, float(probs.sum()) - sum(entries.values()))
    return CoincidenceDistribution(entries, residual)


def click_distribution(state: PortedPhotonState) -> dict[tuple[int, int], float]:
    probs = np.abs(state.amp) ** 2
    return {
        (int(k), p): float(probs[i, p])
        for i, k in enumerate(state.slots)
        for p in (A_PORT, B_PORT)
    }


def conditional_error_probability(dist: CoincidenceDistribution, reference: dict[int, int]) -> float:
    """Error rate among coincidences, scoring each slot against a reference bit.

    ``reference`` maps slot -> expected bit (0 = equal ports, 1 = opposite).
    Slots absent from ``reference`` are treated as carrying an independent
    uniformly random reference bit, so they contribute half their weight as
    errors.
    """
    total = dist.total()
    if total == 0:
        raise ValueError("distribution has no coincidences")
    err = 0.0
    for (k, ps, pi), p in dist.entries.items():
        if k in reference:
            err += p * ((ps ^ pi) != reference[k])
        else:
            err += 0.5 * p
    return err / total


def pair_outcome_table(state: PairState) -> tuple[np.ndarray, tuple[int, ...]]:
    """Flattened joint outcome probabilities and the unravel shape.

    Index order is ``(slot_s, port_s, slot_i, port_i)`` relative to the state
    offsets. Used as the sampling distribution for Monte Carlo.
    """
    probs = apply_interferometer_pair(state).probabilities()
    flat = probs.ravel()
    return flat / flat.sum(), probs.shape


def photon_outcome_table(state: PhotonState) -> tuple[np.ndarray, tuple[int, ...]]:
    probs = np.abs(apply_interferometer_single(state).amp) ** 2
    flat = probs.ravel()
    return flat / flat.sum(), probs.shape

