"""FBMC-OQAM synthesis and analysis with single-tap per-subcarrier precoding.

Scaling conventions: the synthesis basis carries the 1/M factor, the analysis
filter does not, so a unit-gain pulse (sum p^2 = M) gives a back-to-back gain
of one. Noise injected by :func:`transmit_through` is scaled so the demodulated
per-subcarrier complex noise has variance ``n0``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from math import factorial
from pathlib import Path

import numpy as np

from .channel import ChannelModel
from .pulse import PrototypePulse, pulse_derivative


class Constellation(str, Enum):
    QAM4 = "QAM4"
    QAM16 = "QAM16"

    @property
    def size(self) -> int:
        return 4 if self is Constellation.QAM4 else 16

    @property
    def levels(self) -> np.ndarray:
        """Per-dimension amplitude levels, Gray-ordered, scaled for unit complex power."""
        if self is Constellation.QAM4:
            raw = np.array([-1.0, 1.0])
        else:
            raw = np.array([-3.0, -1.0, 3.0, 1.0])  # Gray labels 00, 01, 10, 11
        return raw / np.sqrt(2.0 * np.mean(raw**2))

    def points(self) -> np.ndarray:
        """Constellation points indexed by ``i_label * n + q_label``."""
        lv = self.levels
        return (lv[:, None] + 1j * lv[None, :]).ravel()

    def modulate(self, labels: np.ndarray) -> np.ndarray:
        return self.points()[labels]

    def detect(self, symbols: np.ndarray) -> np.ndarray:
        """Minimum-distance labels; separable per dimension on the square grid."""
        lv = self.levels
        n = lv.size
        order = np.argsort(lv)
        sorted_lv = lv[order]
        edges = 0.5 * (sorted_lv[1:] + sorted_lv[:-1])
        i = order[np.searchsorted(edges, np.real(symbols))]
        q = order[np.searchsorted(edges, np.imag(symbols))]
        return i * n + q


def as_constellation(value) -> Constellation:
    if isinstance(value, Constellation):
        return value
    return Constellation(str(value).upper())


@dataclass(frozen=True)
class FrameConfig:
    two_m: int
    n_sym: int
    n_streams: int
    guard_symbols: int

    def __post_init__(self):
        if self.two_m < 4 or self.two_m % 2:
            raise ValueError("two_m must be an even number of at least 4")
        if self.n_sym <= 2 * self.guard_symbols:
            raise ValueError("n_sym must exceed twice the guard")
        if self.n_streams < 1:
            raise ValueError("n_streams must be positive")

    @property
    def M(self) -> int:
        return self.two_m // 2

    @property
    def interior(self) -> slice:
        return slice(self.guard_symbols, self.n_sym - self.guard_symbols)

    def check_pulse(self, pulse: PrototypePulse) -> None:
        if pulse.half_subcarriers != self.M:
            raise ValueError("pulse M does not match the frame")
        if self.guard_symbols < pulse.overlap:
            raise ValueError("guard_symbols must be at least the pulse overlap")


@dataclass(frozen=True)
class RealSymbolGrid:
    """Real OQAM symbols ``values[l, m, stream]``."""

    values: np.ndarray

    @property
    def n_sym(self) -> int:
        return self.values.shape[0]

    @property
    def two_m(self) -> int:
        return self.values.shape[1]

    @property
    def n_streams(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class SampleStream:
    """Time samples ``samples[antenna, n]``.

    ``noise_scale`` is the per-sample noise variance that produces unit
    demodulated noise variance; it is fixed by the pulse at synthesis time.
    """

    samples: np.ndarray
    rate: float = 1.0
    noise_scale: float = 1.0

    @property
    def n_antennas(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


def qam_to_oqam(qam: np.ndarray, constellation=None) -> RealSymbolGrid:
    """Stagger complex symbols ``qam[k, m, s]`` onto real slots ``l = 2k`` (real) and ``2k+1`` (imag)."""
    qam = np.asarray(qam)
    out = np.empty((2 * qam.shape[0],) + qam.shape[1:])
    out[0::2] = qam.real
    out[1::2] = qam.imag
    return RealSymbolGrid(out)


def oqam_to_qam(values: np.ndarray) -> np.ndarray:
    """Inverse staggering; ``values`` may be real or carry the pre-real-part output."""
    values = np.real(np.asarray(values))
    if values.shape[0] % 2:
        raise ValueError("need an even number of real symbols")
    return values[0::2] + 1j * values[1::2]


def random_symbols(rng: np.random.Generator, n_sym: int, two_m: int, n_streams: int, constellation) -> tuple[np.ndarray, RealSymbolGrid]:
    """Uniform labels of shape ``(n_sym//2, 2M, S)`` and their staggered reals."""
    const = as_constellation(constellation)
    labels = rng.integers(0, const.size, (n_sym // 2, two_m, n_streams))
    return labels, qam_to_oqam(const.modulate(labels))


def _matrices(obj, attr: str) -> np.ndarray:
    mats = getattr(obj, attr, obj)
    return np.asarray(mats)


def _phases(n_sym: int, two_m: int, L: int, sign: int) -> np.ndarray:
    # sign=+1: j^(l+m) (-1)^(ml) exp(-j pi m (L-1)/(2M)); sign=-1: its conjugate
    l = np.arange(n_sym)[:, None]
    m = np.arange(two_m)[None, :]
    jpow = np.array([1, 1j, -1, -1j])[(l + m) % 4]
    flip = np.where((m * l) % 2, -1.0, 1.0)
    ph = jpow * flip * np.exp(-1j * np.pi * m * (L - 1) / two_m)
    return ph if sign > 0 else np.conj(ph)


def synthesize_coefficients(c: np.ndarray, pulse: PrototypePulse, method: str = "fast") -> np.ndarray:
    """Modulate precoded coefficients ``c[l, m, antenna]``; returns ``s[antenna, n]``."""
    c = np.asarray(c, dtype=complex)
    n_sym, two_m, n_ant = c.shape
    M = two_m // 2
    if two_m != 2 * pulse.half_subcarriers:
        raise ValueError("grid width does not match the pulse")
    p = pulse.samples
    L = p.size
    n_out = (n_sym - 1) * M + L
    if method == "direct":
        n = np.arange(n_out)
        s = np.zeros((n_ant, n_out), dtype=complex)
        for l in range(n_sym):
            g = np.zeros(n_out)
            g[l * M : l * M + L] = p
            for m in range(two_m):
                basis = (1j ** ((l + m) % 4)) / M * g * np.exp(1j * np.pi * m * (n - (L - 1) / 2) / M)
                s += c[l, m][:, None] * basis[None, :]
        return s
    if method != "fast":
        raise ValueError("method must be 'fast' or 'direct'")
    kappa = pulse.overlap
    X = c * _phases(n_sym, two_m, L, +1)[:, :, None]
    g = np.fft.ifft(X, axis=1) * two_m
    u = np.tile(g, (1, kappa, 1)) * (p / M)[None, :, None]
    blocks = np.zeros((n_out // M, M, n_ant), dtype=complex)
    ub = u.reshape(n_sym, 2 * kappa, M, n_ant)
    for j in range(2 * kappa):
        blocks[j : j + n_sym] += ub[:, j]
    return blocks.reshape(n_out, n_ant).T


def synthesize(d: RealSymbolGrid | np.ndarray, precoders, pulse: PrototypePulse, method: str = "fast", rate: float = 1.0) -> SampleStream:
    """Precode real symbols with ``A(w_m)`` and run the synthesis filterbank.

    ``precoders`` is a SubcarrierDesign or an array ``(2M, N_T, S)``.
    """
    values = d.values if isinstance(d, RealSymbolGrid) else np.asarray(d)
    A = _matrices(precoders, "a_mats")
    if A.ndim != 3 or A.shape[0] != values.shape[1] or A.shape[2] != values.shape[2]:
        raise ValueError(f"precoders {A.shape} incompatible with symbols {values.shape}")
    c = np.einsum("mts,lms->lmt", A, values)
    s = synthesize_coefficients(c, pulse, method=method)
    return SampleStream(s, rate=rate, noise_scale=1.0 / pulse.energy)


def convolve_channel(s: np.ndarray, ch: ChannelModel) -> np.ndarray:
    if s.shape[0] != ch.n_tx:
        raise ValueError(f"stream has {s.shape[0]} antennas, channel expects {ch.n_tx}")
    n = s.shape[1]
    r = np.zeros((ch.n_rx, n + ch.max_delay), dtype=complex)
    for k, b in enumerate(ch.delay_samples):
        r[:, b : b + n] += ch.taps[:, :, k] @ s
    return r


def transmit_through(s: SampleStream, ch: ChannelModel | None, n0: float, rng_seed=None) -> SampleStream:
    """Apply the tapped delay line and add circular white Gaussian noise."""
    r = s.samples if ch is None else convolve_channel(s.samples, ch)
    if n0 < 0:
        raise ValueError("n0 must be nonnegative")
    if n0 > 0:
        rng = np.random.default_rng(rng_seed)
        r = r + np.sqrt(n0 * s.noise_scale) * complex_noise(rng, r.shape)
    return SampleStream(r, rate=s.rate, noise_scale=s.noise_scale)


def complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circular complex Gaussian samples."""
    w = rng.standard_normal((2,) + tuple(shape))
    return (w[0] + 1j * w[1]) * np.sqrt(0.5)


def demodulate(r: np.ndarray, pulse: PrototypePulse, n_sym: int, method: str = "fast") -> np.ndarray:
    """Analysis filterbank; returns ``z[l, m, antenna]`` before decoding."""
    r = np.atleast_2d(np.asarray(r, dtype=complex))
    n_ant, n = r.shape
    M = pulse.half_subcarriers
    two_m = 2 * M
    qt = pulse.samples[::-1]
    L = qt.size
    need = (n_sym - 1) * M + L
    if n < need:
        r = np.hstack([r, np.zeros((n_ant, need - n), dtype=complex)])
    if method == "direct":
        nn = np.arange(r.shape[1])
        z = np.zeros((n_sym, two_m, n_ant), dtype=complex)
        for l in range(n_sym):
            g = np.zeros(r.shape[1])
            g[l * M : l * M + L] = qt
            for m in range(two_m):
                basis = (1j ** ((l + m) % 4)) * g * np.exp(1j * np.pi * m * (nn - (L - 1) / 2) / M)
                z[l, m] = r @ np.conj(basis)
        return z
    if method != "fast":
        raise ValueError("method must be 'fast' or 'direct'")
    idx = np.arange(n_sym)[:, None] * M + np.arange(L)[None, :]
    seg = r.T[idx] * qt[None, :, None]
    folded = seg.reshape(n_sym, pulse.overlap, two_m, n_ant).sum(axis=1)
    return np.fft.fft(folded, axis=1) * _phases(n_sym, two_m, L, -1)[:, :, None]


def apply_decoders(z: np.ndarray, decoders) -> np.ndarray:
    B = _matrices(decoders, "b_mats")
    if B.ndim != 3 or B.shape[0] != z.shape[1] or B.shape[2] != z.shape[2]:
        raise ValueError(f"decoders {B.shape} incompatible with demodulated grid {z.shape}")
    return np.einsum("msr,lmr->lms", B, z)


def analyze(r: SampleStream | np.ndarray, decoders, pulse: PrototypePulse, cfg: FrameConfig, method: str = "fast") -> tuple[np.ndarray, RealSymbolGrid]:
    """Demodulate, decode with ``B(w_m)`` and take the real part."""
    cfg.check_pulse(pulse)
    samples = r.samples if isinstance(r, SampleStream) else r
    z = demodulate(samples, pulse, cfg.n_sym, method=method)
    x = apply_decoders(z, decoders)
    return x, RealSymbolGrid(x.real)


def derivative_expansion(c: np.ndarray, fresp, pulse: PrototypePulse, n_sym: int, order: int = 2) -> np.ndarray:
    """Approximate the demodulated grid from the channel response derivatives.

    ``z[l, m] ~ sum_k (1/k!) (-j/2M)^k H^(k)(w_m) y_k[l, m]`` where ``y_k`` is the
    back-to-back output of the precoded coefficients ``c`` analyzed with the
    k-th derivative pulse.
    """
    s = synthesize_coefficients(c, pulse)
    two_m = 2 * pulse.half_subcarriers
    hs = (fresp.h0, fresp.h1, fresp.h2)
    out = 0.0
    for k in range(order + 1):
        y = demodulate(s, pulse_derivative(pulse, k), n_sym)
        coeff = (-1j / two_m) ** k / factorial(k)
        out = out + coeff * np.einsum("mrt,lmt->lmr", hs[k], y)
    return out


def identity_design(two_m: int, n: int) -> np.ndarray:
    return np.broadcast_to(np.eye(n, dtype=complex), (two_m, n, n))


# Raw sample dump: 8-byte magic, uint32 n_antennas, uint64 n_samples,
# float64 rate, then little-endian interleaved float32 (re, im) antenna-major.
DUMP_MAGIC = b"FBMCSMP1"
_DUMP_HEADER = struct.Struct("<8sIQd")


def dump_samples(stream: SampleStream, path: str | Path) -> None:
    data = np.empty((stream.n_antennas, stream.n_samples, 2), dtype="<f4")
    data[..., 0] = stream.samples.real
    data[..., 1] = stream.samples.imag
    with open(path, "wb") as fh:
        fh.write(_DUMP_HEADER.pack(DUMP_MAGIC, stream.n_antennas, stream.n_samples, float(stream.rate)))
        fh.write(data.tobytes())


def load_samples(path: str | Path) -> SampleStream:
    raw = Path(path).read_bytes()
    magic, n_ant, n_samp, rate = _DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ValueError("not a sample dump")
    data = np.frombuffer(raw, dtype="<f4", offset=_DUMP_HEADER.size).reshape(n_ant, n_samp, 2)
    return SampleStream(data[..., 0] + 1j * data[..., 1], rate=rate)
