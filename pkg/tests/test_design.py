import warnings

import numpy as np
import pytest

from conftest import random_subcarrier
from fbmc_mimo.design import (
    Criterion,
    DesignSpec,
    Link,
    RankDeficientError,
    RidgeWarning,
    SubcarrierDesign,
    Variant,
    classical_mmse,
    classical_zf,
    compute_design,
    opt_mmse_decoder,
    opt_mmse_precoder,
    opt_zf_decoder,
    opt_zf_precoder,
    parse_design_name,
    regularized_inverse,
)
from fbmc_mimo.channel import VEH_B, freq_response, sample_channel
from oracles import minimize_complex, minimize_on_subspace

SEEDS = range(20)
N, NU, PT = 4, 2, 1.0
ALPHA = 2.5914472e-4  # PHYDYAS kappa=4, M=64


def ul_spec(criterion, variant, n0=1e-2, n=N):
    return DesignSpec(criterion, variant, "uplink", PT, n0, NU, n)


def dl_spec(criterion, variant, n0=1e-2, n=N):
    return DesignSpec(criterion, variant, "downlink", PT, n0, NU, n)


def instance(seed, link="uplink", n=N):
    shape = (n, NU) if link == "uplink" else (NU, n)
    return random_subcarrier(np.random.default_rng(seed), shape)


# ---- independent objective functions (no package calls) ----


def zf_decoder_objective(b_hat, H, H1, weight):
    """alpha-normalized first-order distortion plus noise of the decoder ``b_hat`` (A = xi I)."""
    return np.linalg.norm(b_hat @ H1) ** 2 + weight * np.linalg.norm(b_hat) ** 2


def mmse_decoder_objective(b_hat, H, H1, H2, alpha, reg):
    E = b_hat @ H - np.eye(H.shape[1])
    return (
        np.linalg.norm(E) ** 2
        + alpha * np.linalg.norm(b_hat @ H1) ** 2
        + alpha * np.real(np.trace(E @ (b_hat @ H2).conj().T))
        + reg * np.linalg.norm(b_hat) ** 2
    )


def mmse_precoder_objective(a_hat, H, H1, H2, alpha, reg):
    E = H @ a_hat - np.eye(H.shape[0])
    return (
        np.linalg.norm(E) ** 2
        + alpha * np.linalg.norm(H1 @ a_hat) ** 2
        + alpha * np.real(np.trace(E @ (H2 @ a_hat).conj().T))
        + reg * np.linalg.norm(a_hat) ** 2
    )


def im_constraint_rows(H, shape):
    """Rows of the real linear map x = [Re A; Im A] -> Im(H A)."""
    size = int(np.prod(shape))
    rows = []
    for k in range(2 * size):
        x = np.zeros(2 * size)
        x[k] = 1.0
        A = (x[:size] + 1j * x[size:]).reshape(shape)
        rows.append((H @ A).imag.ravel())
    return np.array(rows).T


class TestClassicalZF:
    def test_square_is_inverse(self, rng):
        H = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        d = classical_zf(ul_spec("ZF", "classical", n=2), H)
        np.testing.assert_allclose(d.b_mats[0], np.linalg.inv(H) / np.sqrt(PT / NU), atol=1e-12)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_matches_qr_least_squares(self, seed):
        H = instance(seed)[0]
        d = classical_zf(ul_spec("ZF", "classical"), H)
        # H^T B^T = I in the least-squares sense: B^T = R^-1 Q^H applied through the QR of H
        Q, R = np.linalg.qr(H)
        ref = np.linalg.solve(R, Q.conj().T)
        np.testing.assert_allclose(d.b_mats[0] * d.xi[0], ref, atol=1e-10)

    @pytest.mark.parametrize("link", ["uplink", "downlink"])
    def test_channel_inversion(self, link):
        spec = (ul_spec if link == "uplink" else dl_spec)("ZF", "classical")
        for seed in SEEDS:
            H = instance(seed, link)[0]
            d = classical_zf(spec, H)
            assert np.linalg.norm(d.effective(H[None])[0] - np.eye(NU)) <= 1e-10

    def test_downlink_normalization(self, rng):
        H = instance(3, "downlink")[0]
        d = classical_zf(dl_spec("ZF", "classical"), H)
        xi = np.sqrt(np.trace(np.linalg.inv(H @ H.conj().T)).real / PT)
        assert d.xi[0] == pytest.approx(xi, rel=1e-12)
        np.testing.assert_allclose(d.b_mats[0], xi * np.eye(NU), atol=1e-14)

    def test_rank_deficient(self):
        H = np.ones((4, 2), dtype=complex)
        with pytest.raises(RankDeficientError):
            classical_zf(ul_spec("ZF", "classical"), H)

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            classical_zf(ul_spec("ZF", "classical"), np.ones((2, 4)))

    def test_too_few_antennas(self):
        with pytest.raises(ValueError):
            DesignSpec("ZF", "classical", "uplink", 1.0, 0.0, 3, 2)


class TestOptimizedZF:
    def test_flat_channel_is_classical(self):
        H, _, _ = instance(1)
        spec = ul_spec("ZF", "optimized")
        opt = opt_zf_decoder(spec, H, np.zeros_like(H), ALPHA)
        np.testing.assert_allclose(opt.b_mats, classical_zf(spec, H).b_mats, atol=1e-14)
        Hd = instance(1, "downlink")[0]
        dspec = dl_spec("ZF", "optimized")
        optd = opt_zf_precoder(dspec, Hd, np.zeros_like(Hd), ALPHA)
        np.testing.assert_allclose(optd.a_mats, classical_zf(dspec, Hd).a_mats, atol=1e-14)

    def test_large_noise_removes_correction(self):
        H, H1, _ = instance(2)
        opt = opt_zf_decoder(ul_spec("ZF", "optimized", n0=1e6 * PT), H, H1, ALPHA)
        hp = np.linalg.pinv(H)
        b_tilde_p = opt.b_mats[0] * opt.xi[0] - hp
        assert np.linalg.norm(b_tilde_p) <= 1e-6 * np.linalg.norm(hp)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_decoder_solves_normal_equations(self, seed):
        H, H1, _ = instance(seed)
        n0 = 1e-2
        spec = ul_spec("ZF", "optimized", n0=n0)
        d = opt_zf_decoder(spec, H, H1, ALPHA)
        weight = n0 * NU / (PT * ALPHA)
        hp = np.linalg.pinv(H)
        P = np.eye(N) - H @ hp
        # for each row h of H^+: min_c ||(h + c P) H1||^2 + w ||h + c P||^2, a linear least squares in c
        rows = []
        for h in hp:
            lhs = np.hstack([P @ H1, np.sqrt(weight) * P])
            rhs = -np.hstack([h @ H1, np.sqrt(weight) * h])
            c = np.linalg.lstsq(lhs.T, rhs, rcond=None)[0]
            rows.append(h + c @ P)
        ref = zf_decoder_objective(np.array(rows), H, H1, weight)
        got = zf_decoder_objective(d.b_mats[0] * d.xi[0], H, H1, weight)
        assert got == pytest.approx(ref, rel=1e-9)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_correction_lies_in_left_null_space(self, seed):
        H, H1, _ = instance(seed)
        d = opt_zf_decoder(ul_spec("ZF", "optimized"), H, H1, ALPHA)
        correction = d.b_mats[0] * d.xi[0] - np.linalg.pinv(H)
        assert np.linalg.norm(correction @ H) <= 1e-10
        assert np.linalg.norm(d.effective(H[None])[0] - np.eye(NU)) <= 1e-10

    @pytest.mark.parametrize("seed", SEEDS)
    def test_precoder_invariants(self, seed):
        H, H1, _ = instance(seed, "downlink")
        d = opt_zf_precoder(dl_spec("ZF", "optimized"), H, H1, ALPHA)
        assert np.linalg.norm(d.effective(H[None])[0] - np.eye(NU)) <= 1e-10
        assert abs(d.transmit_power()[0] - PT) <= 1e-10 * PT
        np.testing.assert_allclose(d.b_mats[0], d.xi[0] * np.eye(NU), atol=1e-14)
        correction = d.a_mats[0] * d.xi[0] - np.linalg.pinv(H)
        assert np.linalg.norm(H @ correction) <= 1e-10

    @pytest.mark.parametrize("seed", SEEDS)
    def test_high_snr_removes_first_order_distortion(self, seed):
        H, H1, _ = instance(seed)
        n0 = 1e-10
        cls = classical_zf(ul_spec("ZF", "classical", n0=n0), H)
        opt = opt_zf_decoder(ul_spec("ZF", "optimized", n0=n0), H, H1, ALPHA)
        first = [ALPHA * np.linalg.norm(d.b_mats[0] @ H1 @ d.a_mats[0]) ** 2 for d in (cls, opt)]
        assert first[1] <= 1e-6 * first[0]

    def test_noiseless_limit_uses_pseudo_inverse(self):
        H, H1, _ = instance(4)
        d = opt_zf_decoder(ul_spec("ZF", "optimized", n0=0.0), H, H1, ALPHA)
        assert np.linalg.norm(d.b_mats[0] @ H1) <= 1e-8 * np.linalg.norm(H1)

    def test_zero_alpha(self):
        H, H1, _ = instance(5)
        with pytest.raises(ValueError):
            opt_zf_decoder(ul_spec("ZF", "optimized", n0=0.0), H, H1, 0.0)
        d = opt_zf_decoder(ul_spec("ZF", "optimized"), H, H1, 0.0)
        np.testing.assert_allclose(d.b_mats, classical_zf(ul_spec("ZF", "classical"), H).b_mats, atol=1e-14)

    def test_wrong_link(self):
        H, H1, _ = instance(5)
        with pytest.raises(ValueError):
            opt_zf_precoder(ul_spec("ZF", "optimized"), H, H1, ALPHA)


class TestMMSE:
    def test_noiseless_square_limit(self, rng):
        H = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        d = classical_mmse(ul_spec("MMSE", "classical", n0=1e-12, n=2), H)
        np.testing.assert_allclose(d.b_mats[0] * d.xi[0], np.linalg.inv(H), atol=1e-6)

    def test_large_noise_shrinks(self):
        H = instance(0)[0]
        norms = [np.linalg.norm(classical_mmse(ul_spec("MMSE", "classical", n0=n0), H).b_mats) for n0 in (1.0, 1e3, 1e6)]
        assert norms[0] > norms[1] > norms[2] and norms[2] < 1e-5

    @pytest.mark.parametrize("seed", SEEDS)
    def test_classical_decoder_vs_gradient_oracle(self, seed):
        H = instance(seed)[0]
        reg = 1e-2 * NU / PT
        d = classical_mmse(ul_spec("MMSE", "classical"), H)
        objective = lambda b: np.linalg.norm(b @ H - np.eye(NU)) ** 2 + reg * np.linalg.norm(b) ** 2
        _, best = minimize_complex(objective, (NU, N))
        assert objective(d.b_mats[0] * d.xi[0]) - best <= 1e-6

    @pytest.mark.parametrize("seed", SEEDS)
    def test_optimized_decoder_is_stationary(self, seed):
        H, H1, H2 = instance(seed)
        alpha, n0 = 20 * ALPHA, 1e-2
        reg = n0 * NU / PT
        d = opt_mmse_decoder(ul_spec("MMSE", "optimized", n0=n0), H, H1, H2, alpha)
        b = d.b_mats[0] * d.xi[0]
        f0 = mmse_decoder_objective(b, H, H1, H2, alpha, reg)
        for idx in np.ndindex(b.shape):
            for step in (1e-6, -1e-6, 1e-6j, -1e-6j):
                bp = b.copy()
                bp[idx] += step
                assert mmse_decoder_objective(bp, H, H1, H2, alpha, reg) >= f0 - 1e-10

    def test_optimized_decoder_reductions(self):
        H, H1, H2 = instance(6)
        spec = ul_spec("MMSE", "optimized")
        cls = classical_mmse(spec, H).b_mats
        np.testing.assert_allclose(opt_mmse_decoder(spec, H, H1, H2, 0.0).b_mats, cls, atol=1e-14)
        z = np.zeros_like(H)
        np.testing.assert_allclose(opt_mmse_decoder(spec, H, z, z, ALPHA).b_mats, cls, atol=1e-14)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_precoder_vs_constrained_oracle(self, seed):
        H, H1, H2 = instance(seed, "downlink")
        # the H'' cross terms are indefinite; at the pulse's own alpha the objective stays convex
        alpha, n0 = ALPHA, 1e-2
        reg = n0 * NU / PT
        hh = H.conj().T
        X = hh @ H + alpha * H1.conj().T @ H1 + 0.5 * alpha * (hh @ H2 + H2.conj().T @ H) + reg * np.eye(N)
        assert np.linalg.eigvalsh(X).min() > 0
        d = opt_mmse_precoder(dl_spec("MMSE", "optimized", n0=n0), H, H1, H2, alpha)
        a_hat = d.a_mats[0] * d.xi[0]
        assert np.linalg.norm((H @ a_hat).imag) <= 1e-10
        shape = (N, NU)
        objective = lambda a: mmse_precoder_objective(a, H, H1, H2, alpha, reg)
        _, best = minimize_on_subspace(objective, shape, im_constraint_rows(H, shape))
        assert abs(objective(a_hat) - best) <= 1e-6
        assert objective(a_hat) <= best + 1e-9

    def test_real_channel_needs_no_multiplier(self, rng):
        H = rng.standard_normal((NU, N)) + 0j
        z = np.zeros_like(H)
        spec = dl_spec("MMSE", "optimized")
        opt = opt_mmse_precoder(spec, H, z, z, ALPHA)
        cls = classical_mmse(spec, H)
        np.testing.assert_allclose(opt.a_mats, cls.a_mats, atol=1e-13)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_precoder_power(self, seed):
        H, H1, H2 = instance(seed, "downlink")
        for d in (opt_mmse_precoder(dl_spec("MMSE", "optimized"), H, H1, H2, ALPHA), classical_mmse(dl_spec("MMSE", "classical"), H)):
            assert abs(d.transmit_power()[0] - PT) <= 1e-10 * PT
            np.testing.assert_allclose(d.b_mats[0], d.xi[0] * np.eye(NU), atol=1e-14)


class TestNumerics:
    def test_ridge_fallback(self):
        X = np.diag([1.0, 1e-14])
        with pytest.warns(RidgeWarning):
            inv = regularized_inverse(X)
        assert np.all(np.isfinite(inv))

    def test_no_ridge_when_well_conditioned(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            np.testing.assert_allclose(regularized_inverse(2 * np.eye(3)), 0.5 * np.eye(3))


@pytest.fixture(scope="module")
def freqs():
    return freq_response(sample_channel(VEH_B, N, NU, 1.92e6, 21), 128)


class TestFullGrid:
    @pytest.mark.parametrize("name", ["classical_zf", "optimized_zf", "classical_mmse", "optimized_mmse"])
    @pytest.mark.parametrize("link", ["uplink", "downlink"])
    def test_power_and_structure(self, freqs, name, link):
        crit, var = parse_design_name(name)
        spec = DesignSpec(crit, var, link, 2.0, 1e-2, NU, N)
        f = freqs if link == "uplink" else freqs.hermitian()
        d = compute_design(spec, f, ALPHA)
        np.testing.assert_allclose(d.transmit_power(), 2.0, rtol=1e-10)
        eye = np.eye(NU)
        if link == "uplink":
            np.testing.assert_allclose(d.a_mats, d.xi[0] * np.broadcast_to(eye, d.a_mats.shape), atol=1e-15)
            np.testing.assert_allclose(d.xi, np.sqrt(2.0 / NU))
        else:
            np.testing.assert_allclose(d.b_mats, d.xi[:, None, None] * eye, atol=1e-15)
        if crit is Criterion.ZF:
            assert np.max(np.linalg.norm(d.effective(f.h0) - eye, axis=(1, 2))) <= 1e-10

    def test_json_roundtrip(self, freqs, tmp_path):
        d = compute_design(ul_spec("MMSE", "optimized"), freqs, ALPHA)
        d.save(tmp_path / "d.json")
        back = SubcarrierDesign.load(tmp_path / "d.json")
        np.testing.assert_array_equal(back.b_mats, d.b_mats)
        np.testing.assert_array_equal(back.a_mats, d.a_mats)
        assert back.spec == d.spec


def test_design_names():
    assert parse_design_name("opt_zf") == (Criterion.ZF, Variant.OPTIMIZED)
    assert parse_design_name("classical_mmse") == (Criterion.MMSE, Variant.CLASSICAL)
    assert Link.parse("DL") is Link.DOWNLINK
    with pytest.raises(ValueError):
        parse_design_name("optimal_mmse")
