"""Prototype pulses, their sampled analog derivatives and the eta pulse quantities.

Sample grid: ``p[n] = p((n - (L - 1)/2) * Ts/(2M))`` for ``n = 0..L-1`` with
``L = 2*M*kappa``; ``Ts`` is carried as 1 so that ``p^(r)[n]`` holds
``Ts**r * p^(r)(t)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PHYDYAS_COEFFICIENTS = {
    4: (1.0, 0.971960, np.sqrt(2.0) / 2.0, 0.235147),
}

# index tuples (m, n, r, s) populated in every EtaTable
ETA_INDICES = (
    (0, 0, 0, 0),
    (0, 0, 0, 1),
    (1, 0, 1, 0),
    (0, 0, 1, 1),
    (2, 0, 0, 0),
    (1, 0, 0, 1),
)


class Symmetry(str, Enum):
    SYMMETRIC = "symmetric"
    ANTISYMMETRIC = "antisymmetric"

    def flipped(self) -> "Symmetry":
        if self is Symmetry.SYMMETRIC:
            return Symmetry.ANTISYMMETRIC
        return Symmetry.SYMMETRIC

    @property
    def parity(self) -> int:
        """s(p): 0 for even pulses, 1 for odd ones."""
        return 0 if self is Symmetry.SYMMETRIC else 1


@dataclass(frozen=True)
class PrototypePulse:
    """Sampled prototype pulse (or one of its analog derivatives).

    ``family`` names the analog closed form the samples come from
    (``"phydyas"``, ``"smooth_pr"`` or ``"custom"``); derivatives can only be
    taken for the first two. ``scale`` is the normalization factor applied to
    the raw closed form and is shared by every derivative order.
    """

    samples: np.ndarray
    half_subcarriers: int
    overlap: int
    symmetry: Symmetry | None = Symmetry.SYMMETRIC
    derivative_order: int = 0
    family: str = "custom"
    coefficients: tuple[float, ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size != self.length:
            raise ValueError(
                f"pulse needs 2*M*kappa = {self.length} samples, got {samples.shape}"
            )

    @property
    def length(self) -> int:
        return 2 * self.half_subcarriers * self.overlap

    @property
    def energy(self) -> float:
        return float(self.samples @ self.samples)

    def polyphase(self) -> np.ndarray:
        """The 2M x kappa matrix with the samples arranged in columns."""
        return self.samples.reshape(self.overlap, 2 * self.half_subcarriers).T

    def symmetry_error(self) -> float:
        """Largest deviation from the declared (anti)symmetry."""
        if self.symmetry is None:
            return float("nan")
        sign = 1.0 if self.symmetry is Symmetry.SYMMETRIC else -1.0
        return float(np.max(np.abs(self.samples - sign * self.samples[::-1])))

    def with_samples(self, samples: np.ndarray, **changes) -> "PrototypePulse":
        fields = dict(
            half_subcarriers=self.half_subcarriers,
            overlap=self.overlap,
            symmetry=self.symmetry,
            derivative_order=self.derivative_order,
            family=self.family,
            coefficients=self.coefficients,
            scale=self.scale,
        )
        fields.update(changes)
        return PrototypePulse(samples=samples, **fields)


def sample_times(M: int, kappa: int) -> np.ndarray:
    """Sampling instants in units of the multicarrier symbol period."""
    L = 2 * M * kappa
    return (np.arange(L) - (L - 1) / 2.0) / (2 * M)


def _phydyas_raw(M: int, kappa: int, coeffs: Sequence[float], r: int, t: np.ndarray | None = None) -> np.ndarray:
    if t is None:
        t = sample_times(M, kappa)
    out = np.full(np.shape(t), coeffs[0] if r == 0 else 0.0)
    for k in range(1, len(coeffs)):
        w = 2.0 * np.pi * k / kappa
        # r-th derivative of cos(w t) is w^r cos(w t + r pi/2)
        out += 2.0 * coeffs[k] * w**r * np.cos(w * t + r * np.pi / 2.0)
    return out


def _smooth_pr_raw(M: int, r: int, t: np.ndarray | None = None) -> np.ndarray:
    # w(x) = sin(pi/2 * v(x)), v(x) = sin^2(pi/2 * sin^2(pi x)), x = t + 1/2 in [0, 1]
    x = (sample_times(M, 1) if t is None else np.asarray(t, dtype=float)) + 0.5
    s0 = np.sin(np.pi * x) ** 2
    s1 = np.pi * np.sin(2 * np.pi * x)
    s2 = 2 * np.pi**2 * np.cos(2 * np.pi * x)
    a0, a1, a2 = (np.pi / 2) * s0, (np.pi / 2) * s1, (np.pi / 2) * s2
    v0 = np.sin(a0) ** 2
    v1 = np.sin(2 * a0) * a1
    v2 = 2 * np.cos(2 * a0) * a1**2 + np.sin(2 * a0) * a2
    b0, b1, b2 = (np.pi / 2) * v0, (np.pi / 2) * v1, (np.pi / 2) * v2
    if r == 0:
        return np.sin(b0)
    if r == 1:
        return np.cos(b0) * b1
    return -np.sin(b0) * b1**2 + np.cos(b0) * b2


def _reconstruction_gain(samples: np.ndarray, M: int) -> float:
    # mean of the centre column of U+ R(p, p); equals sum(p^2)/M for symmetric p
    return float(samples @ samples) / M


def make_phydyas_pulse(
    M: int, kappa: int = 4, coefficients: Sequence[float] | None = None
) -> PrototypePulse:
    """PHYDYAS frequency-sampling pulse scaled to unit reconstruction gain."""
    if M < 2:
        raise ValueError("M must be at least 2")
    if coefficients is None:
        if kappa not in PHYDYAS_COEFFICIENTS:
            raise ValueError(
                f"no built-in PHYDYAS coefficients for kappa={kappa}; pass coefficients"
            )
        coefficients = PHYDYAS_COEFFICIENTS[kappa]
    coefficients = tuple(float(c) for c in coefficients)
    if len(coefficients) > kappa:
        raise ValueError("at most kappa frequency coefficients are allowed")
    raw = _phydyas_raw(M, kappa, coefficients, 0)
    scale = 1.0 / np.sqrt(_reconstruction_gain(raw, M))
    samples = raw * scale
    # enforce exact symmetry of the grid
    samples = 0.5 * (samples + samples[::-1])
    return PrototypePulse(
        samples=samples,
        half_subcarriers=M,
        overlap=kappa,
        symmetry=Symmetry.SYMMETRIC,
        family="phydyas",
        coefficients=coefficients,
        scale=scale,
    )


def make_smooth_pr_pulse(M: int) -> PrototypePulse:
    """Exactly-PR, smooth, symmetric pulse with overlap 1.

    Iterated sine window ``sin(pi/2 * sin^2(pi/2 * sin^2(pi x)))``: it meets
    the Princen-Bradley condition at every M and its first three derivatives
    vanish at the support end-points.
    """
    if M < 2:
        raise ValueError("M must be at least 2")
    raw = _smooth_pr_raw(M, 0)
    samples = 0.5 * (raw + raw[::-1])
    return PrototypePulse(
        samples=samples,
        half_subcarriers=M,
        overlap=1,
        symmetry=Symmetry.SYMMETRIC,
        family="smooth_pr",
        scale=1.0,
    )


def pulse_derivative(pulse: PrototypePulse, r: int) -> PrototypePulse:
    """Samples of ``Ts**r * p^(r)(t)`` from the analog closed form of ``pulse``."""
    if pulse.derivative_order != 0:
        raise ValueError("derivatives are taken from the base pulse")
    if r not in (0, 1, 2):
        raise ValueError(f"derivative order {r} unsupported (0, 1 or 2)")
    if r == 0:
        return pulse
    M, kappa = pulse.half_subcarriers, pulse.overlap
    if pulse.family == "phydyas":
        raw = _phydyas_raw(M, kappa, pulse.coefficients, r)
    elif pulse.family == "smooth_pr":
        raw = _smooth_pr_raw(M, r)
    else:
        raise ValueError("pulse has no analog closed form; cannot differentiate")
    samples = raw * pulse.scale
    sign = -1.0 if r % 2 else 1.0
    samples = 0.5 * (samples + sign * samples[::-1])
    symmetry = pulse.symmetry
    if r % 2 and symmetry is not None:
        symmetry = symmetry.flipped()
    return pulse.with_samples(samples, derivative_order=r, symmetry=symmetry)


def evaluate_pulse(pulse: PrototypePulse, t, r: int = 0) -> np.ndarray:
    """Closed-form ``Ts**r * p^(r)(t)`` at arbitrary times ``t`` (units of Ts), with the pulse's scaling."""
    t = np.asarray(t, dtype=float)
    if pulse.family == "phydyas":
        raw = _phydyas_raw(pulse.half_subcarriers, pulse.overlap, pulse.coefficients, r, t)
    elif pulse.family == "smooth_pr":
        raw = _smooth_pr_raw(pulse.half_subcarriers, r, t)
    else:
        raise ValueError("pulse has no analog closed form")
    return raw * pulse.scale


@dataclass(frozen=True)
class PulseMatrixPair:
    rmat: np.ndarray
    smat: np.ndarray

    @property
    def half_subcarriers(self) -> int:
        return self.rmat.shape[0] // 2


def _rowwise_convolution(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    rows, k = a.shape
    out = np.zeros((rows, 2 * k - 1))
    for i in range(k):
        out[:, i : i + k] += a[:, i : i + 1] * b
    return out


def _check_same_grid(*pulses: PrototypePulse) -> None:
    ref = pulses[0]
    for q in pulses[1:]:
        if (q.half_subcarriers, q.overlap) != (ref.half_subcarriers, ref.overlap):
            raise ValueError("pulses must share M and kappa")


def pulse_matrices(p: PrototypePulse, q: PrototypePulse) -> PulseMatrixPair:
    _check_same_grid(p, q)
    M = p.half_subcarriers
    P = p.polyphase()
    JQ = q.polyphase()[::-1]
    swapped = np.vstack([P[M:], P[:M]])
    return PulseMatrixPair(
        rmat=_rowwise_convolution(P, JQ), smat=_rowwise_convolution(swapped, JQ)
    )


def apply_u(x: np.ndarray, sign: int) -> np.ndarray:
    """Left-multiply by ``I_2 kron (I_M + sign*J_M)``."""
    M = x.shape[0] // 2
    flipped = np.vstack([x[:M][::-1], x[M:][::-1]])
    return x + sign * flipped


def eta(
    p: PrototypePulse,
    q: PrototypePulse,
    r: PrototypePulse,
    s: PrototypePulse,
    sign: str = "pm",
) -> float:
    """eta^(+,-) (``sign="pm"``) or eta^(-,+) (``sign="mp"``) of four pulses."""
    _check_same_grid(p, q, r, s)
    if sign not in ("pm", "mp"):
        raise ValueError("sign must be 'pm' or 'mp'")
    pq = pulse_matrices(p, q)
    rs = pulse_matrices(r, s)
    u_r, u_s = (1, -1) if sign == "pm" else (-1, 1)
    # tr[U X Y^T] = sum(U X * Y)
    total = np.sum(apply_u(pq.rmat, u_r) * rs.rmat) + np.sum(apply_u(pq.smat, u_s) * rs.smat)
    return float(total) / (2 * p.half_subcarriers)


def pr_residual(pulse: PrototypePulse) -> float:
    """Largest deviation of U+R(p,p) from its ideal centre column of ones and of U-S(p,p) from 0."""
    pair = pulse_matrices(pulse, pulse)
    ur = apply_u(pair.rmat, 1)
    ur[:, pulse.overlap - 1] -= 1.0
    us = apply_u(pair.smat, -1)
    return float(max(np.max(np.abs(ur)), np.max(np.abs(us))))


def interference_power(pulse: PrototypePulse) -> float:
    """Back-to-back self-interference power relative to the symbol power."""
    return 2.0 * eta(pulse, pulse, pulse, pulse) - 1.0


@dataclass(frozen=True)
class EtaTable:
    eta_pm: dict[tuple[int, int, int, int], float]
    eta_mp: dict[tuple[int, int, int, int], float]
    alpha: float
    beta: float
    half_subcarriers: int
    extra: dict = field(default_factory=dict)

    def get(self, idx: tuple[int, int, int, int], sign: str = "pm") -> float:
        return (self.eta_pm if sign == "pm" else self.eta_mp)[tuple(idx)]

    @classmethod
    def from_alpha_beta(cls, alpha: float, beta: float, M: int) -> "EtaTable":
        """Table holding only the values read by the designs and the closed-form MSE."""
        scale = (2 * M) ** 2 / 2.0
        a, b = alpha * scale, beta * scale
        eta_pm = {(0, 0, 0, 0): 0.5, (1, 0, 1, 0): a, (0, 0, 1, 1): -a}
        eta_mp = {(0, 0, 0, 0): 0.5, (1, 0, 1, 0): a, (0, 0, 1, 1): b}
        return cls(eta_pm, eta_mp, float(alpha), float(beta), M)

    @property
    def distortion_coefficients(self) -> tuple[float, float]:
        """(2 eta_1010^(+,-), 4(eta_1010^(+,-) + eta_0011^(-,+))) / (2M)^2."""
        two_m_sq = (2 * self.half_subcarriers) ** 2
        e1010 = self.eta_pm[(1, 0, 1, 0)]
        e0011 = self.eta_mp[(0, 0, 1, 1)]
        return 2 * e1010 / two_m_sq, 4 * (e1010 + e0011) / two_m_sq


def eta_table(
    pulse: PrototypePulse,
    M: int | None = None,
    indices: Iterable[tuple[int, int, int, int]] = ETA_INDICES,
) -> EtaTable:
    if M is None:
        M = pulse.half_subcarriers
    if M != pulse.half_subcarriers:
        raise ValueError("M does not match the pulse grid")
    derivs = [pulse_derivative(pulse, r) for r in range(3)]
    eta_pm, eta_mp = {}, {}
    for idx in indices:
        args = [derivs[k] for k in idx]
        eta_pm[tuple(idx)] = eta(*args, sign="pm")
        eta_mp[tuple(idx)] = eta(*args, sign="mp")
    if not all(np.isfinite(v) for v in (*eta_pm.values(), *eta_mp.values())):
        raise FloatingPointError("non-finite eta value")
    two_m_sq = (2 * M) ** 2
    alpha = 2 * eta_pm[(1, 0, 1, 0)] / two_m_sq
    beta = 2 * eta_mp[(0, 0, 1, 1)] / two_m_sq
    return EtaTable(eta_pm, eta_mp, alpha, beta, M)


def eta_relations(table: EtaTable) -> dict[str, float]:
    """Residuals of the four eta relations and of the solved consequence system."""
    pm, mp = table.eta_pm, table.eta_mp
    a, b = pm[(1, 0, 1, 0)], mp[(0, 0, 1, 1)]
    return {
        "rel_eta_1": (pm[(1, 0, 0, 1)] - mp[(1, 0, 0, 1)]) - (pm[(0, 0, 1, 1)] - mp[(0, 0, 1, 1)]),
        "rel_eta_2": pm[(0, 0, 1, 1)] + pm[(1, 0, 1, 0)],
        "rel_eta_3": pm[(2, 0, 0, 0)] - pm[(0, 0, 1, 1)] + pm[(1, 0, 1, 0)] - mp[(1, 0, 0, 1)],
        "rel_eta_4": pm[(0, 0, 1, 1)] - pm[(2, 0, 0, 0)],
        "eta1001_pm+beta": pm[(1, 0, 0, 1)] + b,
        "eta1001_mp-alpha": mp[(1, 0, 0, 1)] - a,
        "eta0011_pm+alpha": pm[(0, 0, 1, 1)] + a,
        "eta2000_pm+alpha": pm[(2, 0, 0, 0)] + a,
    }


def write_pulse_csv(pulse: PrototypePulse, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# M={pulse.half_subcarriers},kappa={pulse.overlap},"
            f"derivative_order={pulse.derivative_order},"
            f"symmetry={pulse.symmetry.value if pulse.symmetry else 'none'},"
            f"family={pulse.family}\n"
        )
        writer = csv.writer(fh)
        for v in pulse.samples:
            writer.writerow([repr(float(v))])


def read_pulse_csv(path: str | Path) -> PrototypePulse:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError("missing pulse CSV header")
        meta = dict(item.split("=", 1) for item in header[1:].strip().split(","))
        samples = np.array([float(row[0]) for row in csv.reader(fh) if row])
    sym = meta.get("symmetry", "none")
    return PrototypePulse(
        samples=samples,
        half_subcarriers=int(meta["M"]),
        overlap=int(meta["kappa"]),
        symmetry=None if sym == "none" else Symmetry(sym),
        derivative_order=int(meta.get("derivative_order", 0)),
        family="custom",
    )
