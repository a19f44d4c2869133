"""Independent brute-force reference implementations used as test oracles.

None of these call into the package's numerical kernels; they restate the
definitions with plain loops so that agreement is a genuine cross-check.
"""

import numpy as np
from scipy import optimize


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(np.abs(ys)), 1)[0])


def decays(xs, ys, max_slope: float, floor: float = 1e-12) -> bool:
    """Residuals decay at least as fast as ``xs**max_slope``, or are numerically zero."""
    ys = np.abs(np.asarray(ys, dtype=float))
    if np.all(ys <= floor):
        return True
    return loglog_slope(xs, ys) <= max_slope


def naive_rmat(p, q, M, kappa, swap=False):
    """R (or S with ``swap``) by explicit index arithmetic on the flat samples."""
    two_m = 2 * M
    out = np.zeros((two_m, 2 * kappa - 1))
    for i in range(two_m):
        ip = (i + M) % two_m if swap else i
        for j in range(kappa):
            for k in range(kappa):
                # P[i', j] = p[j*2M + i'],  (J Q)[i, k] = q[k*2M + 2M-1-i]
                out[i, j + k] += p[j * two_m + ip] * q[k * two_m + two_m - 1 - i]
    return out


def naive_eta(p, q, r, s, M, kappa, sign="pm"):
    J = np.eye(M)[::-1]
    up = np.kron(np.eye(2), np.eye(M) + J)
    um = np.kron(np.eye(2), np.eye(M) - J)
    if sign == "mp":
        up, um = um, up
    Rpq, Spq = naive_rmat(p, q, M, kappa), naive_rmat(p, q, M, kappa, True)
    Rrs, Srs = naive_rmat(r, s, M, kappa), naive_rmat(r, s, M, kappa, True)
    return np.trace(up @ Rpq @ Rrs.T + um @ Spq @ Srs.T) / (2 * M)


def naive_synthesis(c, p, M):
    """Triple loop over (l, m, n) of the direct-form modulator; ``c[l, m, antenna]`` -> ``s[antenna, n]``."""
    n_sym, two_m, n_ant = c.shape
    L = len(p)
    n_out = (n_sym - 1) * M + L
    s = np.zeros((n_ant, n_out), dtype=complex)
    for l in range(n_sym):
        for m in range(two_m):
            for n in range(l * M, l * M + L):
                basis = (1j ** (l + m)) / M * p[n - l * M] * np.exp(1j * 2 * np.pi / two_m * m * (n - (L - 1) / 2))
                s[:, n] += c[l, m] * basis
    return s


def naive_convolution(s, taps_dense):
    """``r[rx] = sum_tx conv(h[rx, tx], s[tx])`` with numpy's 1-D convolution."""
    n_rx, n_tx, _ = taps_dense.shape
    out = []
    for i in range(n_rx):
        out.append(sum(np.convolve(taps_dense[i, t], s[t]) for t in range(n_tx)))
    return np.array(out)


def naive_freq_response(taps_dense, omega, order=0):
    out = 0
    for b in range(taps_dense.shape[2]):
        out = out + (-1j * b) ** order * taps_dense[:, :, b] * np.exp(-1j * omega * b)
    return out


def exact_distortion(design, taps_dense, p, M, n_sym=None):
    """Exact per-subcarrier noise-free MSE by enumerating every interference coefficient.

    The real output at a centre symbol is a real-linear functional of all
    transmitted reals; its coefficients are obtained with the adjoint chain
    (analysis waveform -> adjoint channel -> adjoint modulator). Returns the
    sum over streams of sum_k (Re G_k - delta_k)^2 (unit complex symbol power).
    """
    two_m = 2 * M
    L = len(p)
    kappa = L // two_m
    D = taps_dense.shape[2]
    if n_sym is None:
        n_sym = 4 * kappa + 2 * (D // M + 2) + 1
    l0 = n_sym // 2
    n_out = (n_sym - 1) * M + L
    n_rx, n_tx, _ = taps_dense.shape
    nn = np.arange(n_out + D)
    A, B = design.a_mats, design.b_mats
    out = np.zeros(two_m)
    seg_idx = np.arange(n_sym)[:, None] * M + np.arange(L)[None, :]
    l_idx = np.arange(n_sym)[:, None]
    m_idx = np.arange(two_m)[None, :]
    # j^{l+m}/M (-1)^{ml} e^{-j pi m (L-1)/(2M)} multiplies the folded sum over one window
    phase = (1j ** ((l_idx + m_idx) % 4)) * (-1.0) ** (l_idx * m_idx) * np.exp(-1j * np.pi * m_idx * (L - 1) / two_m) / M
    for m0 in range(two_m):
        analysis = np.zeros(n_out + D, dtype=complex)
        analysis[l0 * M : l0 * M + L] = p[::-1]
        analysis = analysis * (1j ** (l0 + m0)) * np.exp(1j * np.pi * m0 * (nn - (L - 1) / 2) / M)
        for s0 in range(B.shape[1]):
            # x = sum_r sum_n r_r[n] conj(B[s0, r]^* a[n]) ... written as <r, u>
            u = np.conj(B[m0, s0])[:, None] * analysis[None, :]
            # adjoint channel: v_t[n] = sum_b sum_r conj(H_b[r, t]) u_r[n + b]
            v = np.zeros((n_tx, n_out), dtype=complex)
            for b in range(D):
                v += taps_dense[:, :, b].conj().T @ u[:, b : b + n_out]
            # <s, v> with s_t = sum A[m][t, s'] d Phi  ->  G[l, m, s'] = sum_t A[m][t, s'] <Phi_lm, v_t>
            # <Phi_lm, v_t> = sum_n Phi_lm[n] conj(v_t[n]), evaluated window by window
            w = np.conj(v.T[seg_idx]) * p[None, :, None]  # (l, n', t)
            folded = w.reshape(n_sym, kappa, two_m, n_tx).sum(axis=1)
            inner = np.fft.ifft(folded, axis=1) * two_m * phase[:, :, None]
            G = np.einsum("mts,lmt->lms", A, inner)
            target = np.zeros_like(G.real)
            target[l0, m0, s0] = 1.0
            out[m0] += np.sum((G.real - target) ** 2)
    return out


def minimize_complex(objective, shape, x0=None, tol=1e-14):
    """BFGS with finite-difference gradients over the real and imaginary parts of a complex matrix."""
    size = int(np.prod(shape))

    def unpack(x):
        return (x[:size] + 1j * x[size:]).reshape(shape)

    start = np.zeros(2 * size) if x0 is None else np.concatenate([np.ravel(x0).real, np.ravel(x0).imag])
    res = optimize.minimize(lambda x: objective(unpack(x)), start, method="BFGS", options={"gtol": tol, "maxiter": 20000})
    return unpack(res.x), res.fun


def minimize_on_subspace(objective, shape, constraint_rows, tol=1e-14):
    """Minimize over the real null space of linear constraints ``C x = 0`` (x = [Re; Im]).

    The feasible set is parametrized by an orthonormal null-space basis so each
    gradient step is the projection of the full gradient onto the constraint set.
    """
    from scipy.linalg import null_space

    size = int(np.prod(shape))
    Z = null_space(constraint_rows)

    def unpack(y):
        x = Z @ y
        return (x[:size] + 1j * x[size:]).reshape(shape)

    res = optimize.minimize(lambda y: objective(unpack(y)), np.zeros(Z.shape[1]), method="BFGS", options={"gtol": tol, "maxiter": 20000})
    return unpack(res.x), res.fun
