"""Seeded Monte Carlo MSE and SER experiments paired with the closed-form theory.

Random streams: channel draw ``k`` uses ``SeedSequence(seed, spawn_key=(0, k))``
and frame ``f`` of draw ``k`` uses ``spawn_key=(1, k, f)``, so results do not
depend on the number of worker processes.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..channel import ChannelModel, FreqResponseSet, freq_response, get_profile, sample_channel, subcarrier_omegas
from ..design import DesignSpec, Link, compute_design, parse_design_name
from ..modem import (
    apply_decoders,
    as_constellation,
    complex_noise,
    convolve_channel,
    demodulate,
    random_symbols,
    synthesize,
)
from ..mse_theory import mse_curve, off_grid_derivatives, to_db, totals
from ..pulse import EtaTable, PrototypePulse, eta_table, make_phydyas_pulse, make_smooth_pr_pulse
from .config import ConfigError, SimConfig

MSE_COLUMNS = (
    "subcarrier", "omega", "design", "link", "mse_theory_db", "mse_sim_db",
    "n_trials", "seed", "snr_db", "channel_draw",
)
SER_COLUMNS = ("snr_db", "design", "link", "constellation", "ser", "ci95", "n_symbols", "seed")


@dataclass
class ExperimentResult:
    kind: str  # "MSE_curve" or "SER_curve"
    rows: list[dict]
    config_hash: str
    wall_time: float
    config: SimConfig | None = None
    columns: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    def column(self, name: str, **where) -> np.ndarray:
        sel = [r for r in self.rows if all(r[k] == v for k, v in where.items())]
        return np.array([r[name] for r in sel])


@lru_cache(maxsize=16)
def build_pulse(kind: str, M: int, kappa: int) -> PrototypePulse:
    if kind == "phydyas":
        return make_phydyas_pulse(M, kappa)
    if kind == "smooth_pr":
        return make_smooth_pr_pulse(M)
    raise ValueError(f"unknown pulse {kind!r}")


@lru_cache(maxsize=16)
def build_etas(kind: str, M: int, kappa: int) -> EtaTable:
    return eta_table(build_pulse(kind, M, kappa))


def snr_to_noise(snr_db: float, total_power: float = 1.0) -> tuple[float, bool]:
    """(N_0, noise_only). SNR = P_T / N_0; -inf means noise only with N_0 = P_T."""
    if math.isinf(snr_db) and snr_db < 0:
        return total_power, True
    return total_power * 10.0 ** (-snr_db / 10.0), False


def channel_seed(seed: int, draw: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(0, draw))


def frame_seed(seed: int, draw: int, frame: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(1, draw, frame))


def link_channel(cfg: SimConfig, draw: int) -> ChannelModel:
    """Channel matrix oriented rx x tx for the configured link."""
    link = Link.parse(cfg.link)
    n_rx, n_tx = (cfg.n_bs, cfg.n_users) if link is Link.UPLINK else (cfg.n_users, cfg.n_bs)
    return sample_channel(get_profile(cfg.profile), n_rx, n_tx, cfg.sample_rate, channel_seed(cfg.seed, draw))


def design_spec(cfg: SimConfig, name: str, n0: float) -> DesignSpec:
    crit, variant = parse_design_name(name)
    return DesignSpec(crit, variant, Link.parse(cfg.link), cfg.total_power, n0, cfg.n_users, cfg.n_bs)


def make_designs(cfg: SimConfig, fresp: FreqResponseSet, alpha: float, n0s) -> dict:
    return {(i, name): compute_design(design_spec(cfg, name, n0), fresp, alpha) for i, n0 in enumerate(n0s) for name in cfg.designs}


class _FrameEngine:
    """Runs frames through one channel, sharing the transmit signal between designs when possible."""

    def __init__(self, cfg: SimConfig, pulse: PrototypePulse, ch: ChannelModel, designs: dict):
        self.cfg, self.pulse, self.ch, self.designs = cfg, pulse, ch, designs
        self.const = as_constellation(cfg.constellation)
        self.shared_tx = Link.parse(cfg.link) is Link.UPLINK  # A = xi I for every uplink design

    def run(self, rng: np.random.Generator, noise_sd: dict, signal: bool = True):
        """Yield (key, labels, real symbols, decoded pre-real-part grid) for every design key."""
        cfg, pulse = self.cfg, self.pulse
        labels, d = random_symbols(rng, cfg.n_sym, cfg.two_m, cfg.n_users, self.const)
        n_out = (cfg.n_sym - 1) * cfg.M + pulse.length + self.ch.max_delay
        w = complex_noise(rng, (self.ch.n_rx, n_out)) * np.sqrt(1.0 / pulse.energy)
        zw = demodulate(w, pulse, cfg.n_sym)
        cache = {}
        for key, des in self.designs.items():
            tx_key = "shared" if self.shared_tx else key
            if tx_key not in cache:
                if signal:
                    s = synthesize(d, des, pulse)
                    cache[tx_key] = demodulate(convolve_channel(s.samples, self.ch), pulse, cfg.n_sym)
                else:
                    cache[tx_key] = 0.0
            x = apply_decoders(cache[tx_key] + noise_sd[key] * zw, des)
            yield key, labels, d.values, x


def _mse_draw(cfg: SimConfig, draw: int) -> dict:
    pulse = build_pulse(cfg.pulse, cfg.M, cfg.kappa)
    etas = build_etas(cfg.pulse, cfg.M, cfg.kappa)
    ch = link_channel(cfg, draw)
    fresp = freq_response(ch, cfg.two_m, 2)
    n0s = [snr_to_noise(s, cfg.total_power)[0] for s in cfg.snr_db_list]
    designs = make_designs(cfg, fresp, etas.alpha, n0s)
    theory = {}
    for key, des in designs.items():
        derivs = None
        if cfg.theory_derivatives == "design":
            derivs = off_grid_derivatives(des.spec, ch, fresp.omegas, etas.alpha)
        theory[key] = totals(mse_curve(des, fresp, etas, n0s[key[0]], derivatives=derivs))
    engine = _FrameEngine(cfg, pulse, ch, designs)
    sd = {key: np.sqrt(n0s[key[0]]) for key in designs}
    err = {key: np.zeros(cfg.two_m) for key in designs}
    g = slice(cfg.guard, cfg.n_sym - cfg.guard)
    for f in range(cfg.n_frames_per_draw):
        rng = np.random.default_rng(frame_seed(cfg.seed, draw, f))
        for key, _, d, x in engine.run(rng, sd):
            err[key] += 2.0 * np.sum((x.real[g] - d[g]) ** 2, axis=(0, 2))
    n_trials = cfg.n_frames_per_draw * (g.stop - g.start)
    return {key: (theory[key], err[key] / n_trials, n_trials) for key in designs}


def _ser_draw(cfg: SimConfig, draw: int) -> np.ndarray:
    """Symbol errors per (frame, snr index, design index)."""
    pulse = build_pulse(cfg.pulse, cfg.M, cfg.kappa)
    etas = build_etas(cfg.pulse, cfg.M, cfg.kappa)
    ch = link_channel(cfg, draw)
    fresp = freq_response(ch, cfg.two_m, 2)
    noise = [snr_to_noise(s, cfg.total_power) for s in cfg.snr_db_list]
    n0s = [n for n, _ in noise]
    designs = make_designs(cfg, fresp, etas.alpha, n0s)
    sd = {key: np.sqrt(n0s[key[0]]) for key in designs}
    const = as_constellation(cfg.constellation)
    k0, k1 = cfg.guard // 2, (cfg.n_sym - cfg.guard) // 2
    errors = np.zeros((cfg.n_frames_per_draw, len(n0s), len(cfg.designs)), dtype=np.int64)
    names = {n: j for j, n in enumerate(cfg.designs)}
    groups = [(True, {k: v for k, v in designs.items() if not noise[k[0]][1]}), (False, {k: v for k, v in designs.items() if noise[k[0]][1]})]
    for f in range(cfg.n_frames_per_draw):
        for signal, subset in groups:
            if not subset:
                continue
            rng = np.random.default_rng(frame_seed(cfg.seed, draw, f))
            engine = _FrameEngine(cfg, pulse, ch, subset)
            for (i, name), labels, _, x in engine.run(rng, sd, signal=signal):
                rec = x.real[0::2] + 1j * x.real[1::2]
                det = const.detect(rec[k0:k1])
                errors[f, i, names[name]] = int(np.count_nonzero(det != labels[k0:k1]))
    return errors


def _map_draws(fn, cfg: SimConfig) -> list:
    draws = range(cfg.n_channel_draws)
    if cfg.workers > 1 and cfg.n_channel_draws > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, [cfg] * len(draws), draws))
    return [fn(cfg, k) for k in draws]


def run_mse_experiment(cfg: SimConfig) -> ExperimentResult:
    """Per-subcarrier simulated MSE next to the theory curve for every design, SNR and draw."""
    cfg.validate()
    if any(snr_to_noise(s)[1] for s in cfg.snr_db_list):
        raise ConfigError("the MSE experiment needs finite SNR values")
    t0 = time.perf_counter()
    per_draw = _map_draws(_mse_draw, cfg)
    omegas = subcarrier_omegas(cfg.two_m)
    link = Link.parse(cfg.link).short
    rows = []
    for draw, res in enumerate(per_draw):
        for (i, name), (theory, sim, n_trials) in res.items():
            for m in range(cfg.two_m):
                rows.append({
                    "subcarrier": m,
                    "omega": float(omegas[m]),
                    "design": name,
                    "link": link,
                    "mse_theory_db": float(to_db(theory[m])),
                    "mse_sim_db": float(to_db(sim[m])),
                    "n_trials": n_trials,
                    "seed": cfg.seed,
                    "snr_db": float(cfg.snr_db_list[i]),
                    "channel_draw": draw,
                })
    order = {n: j for j, n in enumerate(cfg.designs)}
    rows.sort(key=lambda r: (r["subcarrier"], r["snr_db"], r["channel_draw"], order[r["design"]]))
    return ExperimentResult("MSE_curve", rows, cfg.config_hash(), time.perf_counter() - t0, cfg, MSE_COLUMNS)


def run_ser_experiment(cfg: SimConfig) -> ExperimentResult:
    """SER per SNR and design, averaged over users, channel draws and frames."""
    cfg.validate()
    t0 = time.perf_counter()
    errors = np.concatenate(_map_draws(_ser_draw, cfg), axis=0)
    n_per_frame = (cfg.n_sym - 2 * cfg.guard) // 2 * cfg.two_m * cfg.n_users
    frame_ser = errors / n_per_frame
    n_frames = frame_ser.shape[0]
    link = Link.parse(cfg.link).short
    const = as_constellation(cfg.constellation).value
    rows = []
    for i, snr in enumerate(cfg.snr_db_list):
        for j, name in enumerate(cfg.designs):
            col = frame_ser[:, i, j]
            ci = 1.96 * col.std(ddof=1) / np.sqrt(n_frames) if n_frames > 1 else float("nan")
            rows.append({
                "snr_db": float(snr),
                "design": name,
                "link": link,
                "constellation": const,
                "ser": float(errors[:, i, j].sum() / (n_per_frame * n_frames)),
                "ci95": float(ci),
                "n_symbols": int(n_per_frame * n_frames),
                "seed": cfg.seed,
            })
    rows.sort(key=lambda r: r["snr_db"])
    return ExperimentResult("SER_curve", rows, cfg.config_hash(), time.perf_counter() - t0, cfg, SER_COLUMNS)
