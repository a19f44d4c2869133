"""Tapped-delay-line MU-MIMO channels and their analytic frequency responses."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PowerDelayProfile:
    delays: np.ndarray  # seconds
    powers: np.ndarray  # dB
    name: str = ""

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        powers = np.asarray(self.powers, dtype=float)
        if delays.shape != powers.shape or delays.ndim != 1 or delays.size == 0:
            raise ValueError("delays and powers must be equal-length 1-D vectors")
        if np.any(delays < 0) or np.any(np.diff(delays) <= 0):
            raise ValueError("delays must be nonnegative and strictly increasing")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "powers", powers)

    def linear_powers(self) -> np.ndarray:
        lin = 10.0 ** (self.powers / 10.0)
        return lin / lin.sum()

    def delay_samples(self, sample_rate: float) -> np.ndarray:
        return np.rint(self.delays * sample_rate).astype(int)


VEH_A = PowerDelayProfile(
    delays=np.array([0, 310, 710, 1090, 1730, 2510]) * 1e-9,
    powers=np.array([0.0, -1.0, -9.0, -10.0, -15.0, -20.0]),
    name="VehA",
)
VEH_B = PowerDelayProfile(
    delays=np.array([0, 300, 8900, 12900, 17100, 20000]) * 1e-9,
    powers=np.array([-2.5, 0.0, -12.8, -10.0, -25.2, -16.0]),
    name="VehB",
)
FLAT = PowerDelayProfile(delays=np.array([0.0]), powers=np.array([0.0]), name="Flat")

PROFILES = {p.name: p for p in (VEH_A, VEH_B, FLAT)}


def get_profile(name: str) -> PowerDelayProfile:
    key = {k.lower(): k for k in PROFILES}.get(name.lower())
    if key is None:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return PROFILES[key]


@dataclass(frozen=True)
class ChannelModel:
    """Quasi-static MIMO impulse response, ``taps[rx, tx, k]`` at delay ``delay_samples[k]``."""

    taps: np.ndarray
    delay_samples: np.ndarray

    def __post_init__(self):
        taps = np.array(self.taps, dtype=complex)
        delays = np.array(self.delay_samples, dtype=int)
        if taps.ndim != 3 or taps.shape[2] != delays.size:
            raise ValueError("taps must be (n_rx, n_tx, n_delays) matching delay_samples")
        if np.any(delays < 0) or np.any(np.diff(delays) <= 0):
            raise ValueError("delay samples must be nonnegative and strictly increasing")
        taps.setflags(write=False)
        delays.setflags(write=False)
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "delay_samples", delays)

    @property
    def n_rx(self) -> int:
        return self.taps.shape[0]

    @property
    def n_tx(self) -> int:
        return self.taps.shape[1]

    @property
    def max_delay(self) -> int:
        return int(self.delay_samples[-1])

    def impulse_response(self) -> np.ndarray:
        """Dense ``(n_rx, n_tx, max_delay + 1)`` tap tensor."""
        dense = np.zeros((self.n_rx, self.n_tx, self.max_delay + 1), dtype=complex)
        dense[:, :, self.delay_samples] = self.taps
        return dense

    def to_dict(self) -> dict:
        return {
            "n_rx": self.n_rx,
            "n_tx": self.n_tx,
            "delay_samples": self.delay_samples.tolist(),
            "taps_re": self.taps.real.tolist(),
            "taps_im": self.taps.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelModel":
        taps = np.asarray(data["taps_re"]) + 1j * np.asarray(data["taps_im"])
        return cls(taps=taps, delay_samples=np.asarray(data["delay_samples"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "ChannelModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def sample_channel(
    profile: PowerDelayProfile,
    n_rx: int,
    n_tx: int,
    sample_rate: float,
    rng_seed=None,
    max_delay_samples: int | None = None,
) -> ChannelModel:
    """Draw i.i.d. Rayleigh taps for every antenna pair.

    Path delays are rounded to the sample grid; paths that land on the same
    sample are combined by adding their independent draws. ``rng_seed`` may be
    an int, a SeedSequence or a Generator.
    """
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    rng = np.random.default_rng(rng_seed)
    delays = profile.delay_samples(sample_rate)
    if max_delay_samples is not None and delays.max() > max_delay_samples:
        raise ValueError(
            f"profile {profile.name} spans {delays.max()} samples, above the "
            f"maximum of {max_delay_samples}"
        )
    powers = profile.linear_powers()
    draws = rng.standard_normal((len(delays), 2, n_rx, n_tx))
    paths = np.sqrt(powers / 2.0)[:, None, None] * (draws[:, 0] + 1j * draws[:, 1])
    unique = np.unique(delays)
    taps = np.zeros((n_rx, n_tx, unique.size), dtype=complex)
    for k, b in enumerate(unique):
        taps[:, :, k] = paths[delays == b].sum(axis=0)
    return ChannelModel(taps=taps, delay_samples=unique)


def subcarrier_omegas(two_m: int) -> np.ndarray:
    """omega_m = 2 pi m / (2M) for 0-based m, so omega_0 = 0 and spacing pi/M."""
    return 2.0 * np.pi * np.arange(two_m) / two_m


@dataclass(frozen=True)
class FreqResponseSet:
    """H(w_m) and its first two w-derivatives, each of shape ``(2M, n_rx, n_tx)``."""

    h0: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    omegas: np.ndarray

    @property
    def two_m(self) -> int:
        return self.omegas.size

    def hermitian(self) -> "FreqResponseSet":
        """Response set for the reciprocal link, H(w)^H at every w and derivative order."""
        swap = lambda h: np.conj(np.swapaxes(h, 1, 2))
        return FreqResponseSet(swap(self.h0), swap(self.h1), swap(self.h2), self.omegas)

    def at(self, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.h0[m], self.h1[m], self.h2[m]


def evaluate_response(ch: ChannelModel, omegas: np.ndarray, order: int = 0) -> np.ndarray:
    """k-th derivative of H(w) = sum_b H[b] exp(-j w b) at arbitrary frequencies."""
    b = ch.delay_samples.astype(float)
    kernel = np.exp(-1j * np.outer(np.asarray(omegas, dtype=float), b)) * ((-1j * b) ** order)
    return np.einsum("wb,ijb->wij", kernel, ch.taps)


def freq_response(ch: ChannelModel, two_m: int, max_order: int = 2) -> FreqResponseSet:
    if not 0 <= max_order <= 2:
        raise ValueError("max_order must be 0, 1 or 2")
    omegas = subcarrier_omegas(two_m)
    hs = []
    for k in range(3):
        if k <= max_order:
            hs.append(evaluate_response(ch, omegas, k))
        else:
            hs.append(np.zeros((two_m, ch.n_rx, ch.n_tx), dtype=complex))
    return FreqResponseSet(*hs, omegas=omegas)


def transpose_link(ch: ChannelModel) -> ChannelModel:
    """Reciprocal channel: every delay tap conjugate-transposed.

    The result's response at w equals H(-w)^H of the original, so on the
    subcarrier grid it matches the Hermitian at the mirrored subcarrier.
    """
    return ChannelModel(
        taps=np.conj(np.swapaxes(ch.taps, 0, 1)), delay_samples=ch.delay_samples
    )


def selectivity(fresp: FreqResponseSet) -> float:
    """max over subcarriers of ||H'(w_m)||_F / ||H(w_m)||_F."""
    n1 = np.linalg.norm(fresp.h1, axis=(1, 2))
    n0 = np.linalg.norm(fresp.h0, axis=(1, 2))
    return float(np.max(n1 / n0))
