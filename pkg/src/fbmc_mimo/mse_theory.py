"""Closed-form asymptotic per-subcarrier MSE of single-tap FBMC-OQAM links.

Precoder/decoder derivatives across frequency are taken by default by
periodic central finite differences on the subcarrier grid (step pi/M).
:func:`off_grid_derivatives` instead differentiates the design rule itself,
re-evaluated from the analytic channel response at ``w_m +- delta``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import ChannelModel, FreqResponseSet, evaluate_response
from .design import DesignSpec, compute_design
from .pulse import EtaTable


@dataclass(frozen=True)
class MseBreakdown:
    bias_term: float
    h1_term: float
    h2_cross_term: float
    im_cross_term1: float
    im_cross_term2: float
    noise_term: float
    subcarrier: int = 0

    @property
    def distortion(self) -> float:
        return self.bias_term + self.h1_term + self.h2_cross_term + self.im_cross_term1 + self.im_cross_term2

    @property
    def total(self) -> float:
        return self.distortion + self.noise_term

    @property
    def total_db(self) -> float:
        return to_db(self.total)


def to_db(x) -> np.ndarray | float:
    return 10.0 * np.log10(x)


def _tr_re(x: np.ndarray) -> float:
    return float(np.real(np.trace(x)))


def _hs(x: np.ndarray) -> float:
    # tr[X X^H]
    return float(np.sum(np.abs(x) ** 2))


def distortion(
    A: np.ndarray,
    A1: np.ndarray,
    B: np.ndarray,
    H: np.ndarray,
    H1: np.ndarray,
    H2: np.ndarray,
    etas: EtaTable,
    p_s: float = 1.0,
    A2: np.ndarray | None = None,
    n0: float = 0.0,
    subcarrier: int = 0,
) -> MseBreakdown:
    """All five distortion summands plus the noise term at one subcarrier.

    ``A2`` (second derivative of the precoder) defaults to zero, which is
    exact for the frequency-flat uplink precoder.
    """
    if A2 is None:
        A2 = np.zeros_like(A)
    c1, c2 = etas.distortion_coefficients
    S = A.shape[1]
    if B.shape[0] != S or H.shape != (B.shape[1], A.shape[0]):
        raise ValueError(f"incompatible shapes B{B.shape} H{H.shape} A{A.shape}")
    E = B @ H @ A - np.eye(S)
    g1 = B @ H1 @ A
    g2 = B @ H2 @ A
    d_ha1 = B @ (H1 @ A1 + H @ A2)  # B (H A')'
    d_ha = B @ (H1 @ A + H @ A1)  # B (H A)'
    return MseBreakdown(
        bias_term=p_s * _hs(E),
        h1_term=c1 * _hs(g1),
        h2_cross_term=c1 * _tr_re(E @ g2.conj().T),
        im_cross_term1=c2 * float(np.trace(E.imag @ d_ha1.imag.T)),
        im_cross_term2=c2 * float(np.trace((B @ H @ A1).imag @ d_ha.imag.T)),
        noise_term=n0 * _hs(B),
        subcarrier=subcarrier,
    )


def mse_zf(
    A: np.ndarray,
    A1: np.ndarray,
    B: np.ndarray,
    B1: np.ndarray,
    H: np.ndarray,
    H1: np.ndarray,
    alpha: float,
    beta: float,
    n0: float,
    subcarrier: int = 0,
) -> MseBreakdown:
    """Simplified MSE valid when B H A = I.

    The first-order term lands in ``h1_term`` and the imaginary cross term in
    ``im_cross_term2``; the remaining distortion slots are zero.
    """
    g1 = B @ H1 @ A
    im_term = -(2 * alpha + 2 * beta) * float(np.trace((B @ H @ A1).imag @ (B1 @ H @ A).imag.T))
    return MseBreakdown(
        bias_term=0.0,
        h1_term=alpha * _hs(g1),
        h2_cross_term=0.0,
        im_cross_term1=0.0,
        im_cross_term2=im_term,
        noise_term=n0 * _hs(B),
        subcarrier=subcarrier,
    )


def grid_derivatives(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Periodic central differences along axis 0 with step 2 pi / len(x)."""
    step = 2 * np.pi / x.shape[0]
    up, down = np.roll(x, -1, axis=0), np.roll(x, 1, axis=0)
    return (up - down) / (2 * step), (up - 2 * x + down) / step**2


def off_grid_derivatives(
    spec: DesignSpec, ch: ChannelModel, omegas: np.ndarray, alpha: float, delta: float = 1e-5
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """A'(w_m), A''(w_m), B'(w_m) by central differences of the design rule at ``w_m +- delta``."""
    omegas = np.asarray(omegas, dtype=float)

    def at(w):
        resp = FreqResponseSet(*(evaluate_response(ch, w, k) for k in range(3)), omegas=w)
        return compute_design(spec, resp, alpha)

    up, mid, down = at(omegas + delta), at(omegas), at(omegas - delta)
    A1 = (up.a_mats - down.a_mats) / (2 * delta)
    A2 = (up.a_mats - 2 * mid.a_mats + down.a_mats) / delta**2
    B1 = (up.b_mats - down.b_mats) / (2 * delta)
    return A1, A2, B1


def mse_curve(
    design,
    fresp: FreqResponseSet,
    etas: EtaTable,
    n0: float,
    formula: str = "general",
    p_s: float = 1.0,
    derivatives: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> list[MseBreakdown]:
    """Theory MSE at every subcarrier of a SubcarrierDesign.

    ``formula="general"`` evaluates the full distortion expression;
    ``formula="zf"`` the channel-inverting simplification. ``derivatives``
    optionally supplies ``(A', A'', B')`` on the grid, e.g. from
    :func:`off_grid_derivatives`; otherwise grid differences are used.
    """
    A, B = design.a_mats, design.b_mats
    if A.shape[0] != fresp.two_m:
        raise ValueError("design and frequency response grids differ")
    if derivatives is None:
        A1, A2 = grid_derivatives(A)
        B1 = grid_derivatives(B)[0]
    else:
        A1, A2, B1 = derivatives
    out = []
    if formula == "general":
        for m in range(fresp.two_m):
            h0, h1, h2 = fresp.at(m)
            out.append(distortion(A[m], A1[m], B[m], h0, h1, h2, etas, p_s=p_s, A2=A2[m], n0=n0, subcarrier=m))
    elif formula == "zf":
        for m in range(fresp.two_m):
            h0, h1, _ = fresp.at(m)
            out.append(mse_zf(A[m], A1[m], B[m], B1[m], h0, h1, etas.alpha, etas.beta, n0, subcarrier=m))
    else:
        raise ValueError("formula must be 'general' or 'zf'")
    return out


def totals(curve: Sequence[MseBreakdown]) -> np.ndarray:
    return np.array([b.total for b in curve])


BREAKDOWN_COLUMNS = ("m", "omega", "bias", "h1", "h2cross", "im1", "im2", "noise", "total_db", "simulated_db")


def write_breakdown_csv(curve: Sequence[MseBreakdown], omegas: np.ndarray, path: str | Path, simulated: np.ndarray | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BREAKDOWN_COLUMNS)
        for k, b in enumerate(curve):
            sim = "" if simulated is None else f"{to_db(simulated[k]):.6f}"
            writer.writerow(
                [b.subcarrier, f"{omegas[b.subcarrier]:.10f}"]
                + [f"{getattr(b, f.name):.10e}" for f in fields(b) if f.name != "subcarrier"]
                + [f"{b.total_db:.6f}", sim]
            )
