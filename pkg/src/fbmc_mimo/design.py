"""Single-tap per-subcarrier ZF and MMSE precoders/decoders.

Uplink: ``H`` is ``N x N_U`` (BS antennas x users), the decoder ``B`` does the
work and ``A = xi I``. Downlink: ``H`` is ``N_U x N``, the precoder ``A`` does
the work and ``B = xi(w) I``. Every design meets the per-subcarrier power
constraint ``tr(A A^H) = P_T``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .channel import FreqResponseSet

PINV_RTOL = 1e-10
RIDGE_COND = 1e12
RIDGE_SCALE = 1e-12


class Criterion(str, Enum):
    ZF = "ZF"
    MMSE = "MMSE"


class Variant(str, Enum):
    CLASSICAL = "classical"
    OPTIMIZED = "optimized"


class Link(str, Enum):
    UPLINK = "uplink"
    DOWNLINK = "downlink"

    @classmethod
    def parse(cls, value) -> "Link":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"ul": "uplink", "dl": "downlink"}
        return cls(aliases.get(key, key))

    @property
    def short(self) -> str:
        return "UL" if self is Link.UPLINK else "DL"


class RankDeficientError(np.linalg.LinAlgError):
    pass


class RidgeWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class DesignSpec:
    criterion: Criterion
    variant: Variant
    link: Link
    total_power: float = 1.0
    noise_power: float = 0.0
    n_users: int = 1
    n_bs_antennas: int = 1

    def __post_init__(self):
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "link", Link.parse(self.link))
        if self.total_power <= 0:
            raise ValueError("total_power must be positive")
        if self.noise_power < 0:
            raise ValueError("noise_power must be nonnegative")
        if self.criterion is Criterion.ZF and self.n_bs_antennas < self.n_users:
            raise ValueError("ZF needs at least as many BS antennas as users")

    @property
    def label(self) -> str:
        return f"{self.variant.value}_{self.criterion.value.lower()}"

    @property
    def regularizer(self) -> float:
        """N_0 N_U / P_T."""
        return self.noise_power * self.n_users / self.total_power

    def channel_shape(self) -> tuple[int, int]:
        N, NU = self.n_bs_antennas, self.n_users
        return (N, NU) if self.link is Link.UPLINK else (NU, N)


DESIGN_NAMES = ("classical_zf", "optimized_zf", "classical_mmse", "optimized_mmse")


def parse_design_name(name: str) -> tuple[Criterion, Variant]:
    aliases = {"opt": "optimized", "cls": "classical", "class": "classical"}
    variant, _, crit = name.strip().lower().partition("_")
    variant = aliases.get(variant, variant)
    try:
        return Criterion(crit.upper()), Variant(variant)
    except ValueError:
        raise ValueError(f"unknown design {name!r}; expected one of {DESIGN_NAMES}") from None


@dataclass(frozen=True)
class SubcarrierDesign:
    """Per-subcarrier A(w_m) ``(2M, N_T, S)``, B(w_m) ``(2M, S, N_R)`` and xi(w_m)."""

    a_mats: np.ndarray
    b_mats: np.ndarray
    xi: np.ndarray
    spec: DesignSpec | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def two_m(self) -> int:
        return self.a_mats.shape[0]

    def effective(self, h0: np.ndarray) -> np.ndarray:
        """B H A per subcarrier."""
        return self.b_mats @ h0 @ self.a_mats

    def transmit_power(self) -> np.ndarray:
        return np.einsum("mij,mij->m", self.a_mats, self.a_mats.conj()).real

    def to_dict(self) -> dict:
        def pairs(x):
            return np.stack([x.real, x.imag], axis=-1).tolist()

        out = {"a_mats": pairs(self.a_mats), "b_mats": pairs(self.b_mats), "xi": self.xi.tolist()}
        if self.spec is not None:
            s = self.spec
            out["spec"] = {
                "criterion": s.criterion.value,
                "variant": s.variant.value,
                "link": s.link.value,
                "total_power": s.total_power,
                "noise_power": s.noise_power,
                "n_users": s.n_users,
                "n_bs_antennas": s.n_bs_antennas,
            }
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "SubcarrierDesign":
        data = json.loads(Path(path).read_text())
        cplx = lambda v: np.asarray(v)[..., 0] + 1j * np.asarray(v)[..., 1]
        spec = DesignSpec(**data["spec"]) if "spec" in data else None
        return cls(cplx(data["a_mats"]), cplx(data["b_mats"]), np.asarray(data["xi"]), spec)


def pinv(H: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    """Pseudo-inverse of a full-rank matrix; raises if a singular value is below ``rtol * s_max``."""
    U, s, Vh = np.linalg.svd(H, full_matrices=False)
    if s[-1] <= rtol * s[0]:
        raise RankDeficientError(
            f"matrix is rank deficient (singular values {s[0]:.3e} .. {s[-1]:.3e})"
        )
    return (Vh.conj().T / s) @ U.conj().T


def _loose_pinv(X: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    # pseudo-inverse semantics for the noiseless limit: small modes dropped
    return np.linalg.pinv(X, rcond=rtol, hermitian=True)


def regularized_inverse(X: np.ndarray, context: str = "") -> np.ndarray:
    """Inverse of ``X``; near-singular inputs get a tiny ridge and a RidgeWarning."""
    cond = np.linalg.cond(X)
    if not np.isfinite(cond) or cond > RIDGE_COND:
        ridge = RIDGE_SCALE * abs(np.trace(X)) / X.shape[0]
        warnings.warn(f"ridge {ridge:.3e} added to {context or 'matrix'} (cond {cond:.3e})", RidgeWarning, stacklevel=3)
        X = X + ridge * np.eye(X.shape[0])
    return np.linalg.inv(X)


def _stack(H) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    return H[None] if H.ndim == 2 else H


def _check(spec: DesignSpec, H: np.ndarray, link: Link | None = None) -> None:
    if link is not None and spec.link is not link:
        raise ValueError(f"this design is defined for the {link.value} only")
    if H.shape[1:] != spec.channel_shape():
        raise ValueError(f"channel shape {H.shape[1:]} does not match {spec.channel_shape()} for {spec.link.value}")


def _ul_design(spec: DesignSpec, b_hat: np.ndarray) -> SubcarrierDesign:
    xi = np.sqrt(spec.total_power / spec.n_users)
    two_m = b_hat.shape[0]
    a = np.broadcast_to(xi * np.eye(spec.n_users), (two_m, spec.n_users, spec.n_users)).copy()
    return SubcarrierDesign(a, b_hat / xi, np.full(two_m, xi), spec)


def _dl_design(spec: DesignSpec, a_hat: np.ndarray, xi: np.ndarray | None = None) -> SubcarrierDesign:
    if xi is None:
        xi = np.sqrt(np.einsum("mij,mij->m", a_hat, a_hat.conj()).real / spec.total_power)
    eye = np.eye(spec.n_users)
    b = xi[:, None, None] * eye[None]
    return SubcarrierDesign(a_hat / xi[:, None, None], b.astype(complex), xi, spec)


def classical_zf(spec: DesignSpec, H) -> SubcarrierDesign:
    """Channel pseudo-inverse on every subcarrier."""
    H = _stack(H)
    _check(spec, H)
    hp = np.array([pinv(h) for h in H])
    if spec.link is Link.UPLINK:
        return _ul_design(spec, hp)
    # xi^2 = tr[(H H^H)^-1] / P_T = ||H^+||_F^2 / P_T
    return _dl_design(spec, hp)


def _zf_offset_weight(spec: DesignSpec, alpha: float) -> float | None:
    """N_0 N_U / (P_T alpha); None when the correction vanishes (alpha = 0)."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0:
        if spec.noise_power == 0:
            raise ValueError("alpha = 0 with N_0 = 0 leaves the optimized ZF correction undefined")
        return None
    return spec.regularizer / alpha


def _inner_inverse(X: np.ndarray, weight: float) -> np.ndarray:
    if weight == 0:
        return _loose_pinv(X)
    return regularized_inverse(X + weight * np.eye(X.shape[0]), "ZF inner matrix")


def opt_zf_decoder(spec: DesignSpec, H, H1, alpha: float) -> SubcarrierDesign:
    """Pseudo-inverse plus the left-null-space term that cancels the first-order distortion."""
    H, H1 = _stack(H), _stack(H1)
    _check(spec, H, Link.UPLINK)
    weight = _zf_offset_weight(spec, alpha)
    N = spec.n_bs_antennas
    out = np.empty((H.shape[0], spec.n_users, N), dtype=complex)
    for m, (h, h1) in enumerate(zip(H, H1)):
        hp = pinv(h)
        if weight is None:
            out[m] = hp
            continue
        proj = np.eye(N) - h @ hp
        h1h = h1.conj().T
        b_tilde = -hp @ h1 @ _inner_inverse(h1h @ proj @ h1, weight) @ h1h
        out[m] = hp + b_tilde @ proj
    return _ul_design(spec, out)


def opt_zf_precoder(spec: DesignSpec, H, H1, alpha: float) -> SubcarrierDesign:
    """Right pseudo-inverse plus a null-space term, normalized to the power budget."""
    H, H1 = _stack(H), _stack(H1)
    _check(spec, H, Link.DOWNLINK)
    weight = _zf_offset_weight(spec, alpha)
    N = spec.n_bs_antennas
    out = np.empty((H.shape[0], N, spec.n_users), dtype=complex)
    for m, (h, h1) in enumerate(zip(H, H1)):
        hp = pinv(h)
        if weight is None:
            out[m] = hp
            continue
        proj = np.eye(N) - hp @ h
        h1h = h1.conj().T
        a_tilde = -h1h @ _inner_inverse(h1 @ proj @ h1h, weight) @ h1 @ hp
        out[m] = hp + proj @ a_tilde
    return _dl_design(spec, out)


def _mmse_inner(h, h1, h2, alpha, reg, left: bool) -> np.ndarray:
    # left=True: H H^H + ... (uplink decoder); left=False: H^H H + ... (downlink precoder)
    if left:
        X = h @ h.conj().T + alpha * h1 @ h1.conj().T
        X = X + 0.5 * alpha * (h @ h2.conj().T + h2 @ h.conj().T)
    else:
        X = h.conj().T @ h + alpha * h1.conj().T @ h1
        X = X + 0.5 * alpha * (h.conj().T @ h2 + h2.conj().T @ h)
    return X + reg * np.eye(X.shape[0])


def classical_mmse(spec: DesignSpec, H) -> SubcarrierDesign:
    """Regularized channel inverse that ignores frequency selectivity."""
    H = _stack(H)
    _check(spec, H)
    zero = np.zeros_like(H)
    if spec.link is Link.UPLINK:
        return _mmse_decoder(spec, H, zero, zero, 0.0)
    a_hat = np.array(
        [regularized_inverse(_mmse_inner(h, z, z, 0.0, spec.regularizer, left=False), "MMSE matrix") @ h.conj().T for h, z in zip(H, zero)]
    )
    return _dl_design(spec, a_hat)


def _mmse_decoder(spec, H, H1, H2, alpha) -> SubcarrierDesign:
    out = np.empty((H.shape[0], spec.n_users, spec.n_bs_antennas), dtype=complex)
    for m, (h, h1, h2) in enumerate(zip(H, H1, H2)):
        X = _mmse_inner(h, h1, h2, alpha, spec.regularizer, left=True)
        out[m] = (h.conj().T + 0.5 * alpha * h2.conj().T) @ regularized_inverse(X, "MMSE matrix")
    return _ul_design(spec, out)


def opt_mmse_decoder(spec: DesignSpec, H, H1, H2, alpha: float) -> SubcarrierDesign:
    H, H1, H2 = _stack(H), _stack(H1), _stack(H2)
    _check(spec, H, Link.UPLINK)
    return _mmse_decoder(spec, H, H1, H2, alpha)


def mmse_multiplier(h: np.ndarray, x_inv: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Real multiplier Psi that makes Im(H A_hat) vanish for A_hat = X^-1 (j H^H Psi + G)."""
    k = h @ x_inv @ h.conj().T
    kr = k.real
    if np.linalg.cond(kr) > 1.0 / PINV_RTOL:
        raise RankDeficientError("Re(H X^-1 H^H) is singular")
    return -np.linalg.solve(kr, (h @ x_inv @ g).imag)


def opt_mmse_precoder(spec: DesignSpec, H, H1, H2, alpha: float) -> SubcarrierDesign:
    """MMSE precoder with the frequency-selectivity terms and the Im(H A) = 0 constraint."""
    H, H1, H2 = _stack(H), _stack(H1), _stack(H2)
    _check(spec, H, Link.DOWNLINK)
    out = np.empty((H.shape[0], spec.n_bs_antennas, spec.n_users), dtype=complex)
    for m, (h, h1, h2) in enumerate(zip(H, H1, H2)):
        x_inv = regularized_inverse(_mmse_inner(h, h1, h2, alpha, spec.regularizer, left=False), "MMSE matrix")
        g = h.conj().T + 0.5 * alpha * h2.conj().T
        try:
            psi = mmse_multiplier(h, x_inv, g)
        except RankDeficientError as exc:
            raise RankDeficientError(f"subcarrier {m}: {exc}; channel H={h.tolist()}") from None
        out[m] = x_inv @ (1j * h.conj().T @ psi + g)
    return _dl_design(spec, out)


def compute_design(spec: DesignSpec, fresp: FreqResponseSet, alpha: float) -> SubcarrierDesign:
    """Dispatch on criterion, variant and link."""
    H, H1, H2 = fresp.h0, fresp.h1, fresp.h2
    ul = spec.link is Link.UPLINK
    if spec.variant is Variant.CLASSICAL:
        if spec.criterion is Criterion.ZF:
            return classical_zf(spec, H)
        return classical_mmse(spec, H)
    if spec.criterion is Criterion.ZF:
        return opt_zf_decoder(spec, H, H1, alpha) if ul else opt_zf_precoder(spec, H, H1, alpha)
    return opt_mmse_decoder(spec, H, H1, H2, alpha) if ul else opt_mmse_precoder(spec, H, H1, H2, alpha)


def with_noise(spec: DesignSpec, n0: float) -> DesignSpec:
    return replace(spec, noise_power=n0)
