"""Factor-path samplers.

:func:`pgas_sweep` is a conditional particle filter with ancestor sampling
(Lindsten, Jordan and Schon, 2014) for the nonlinear measurement equation.
The state is the companion vector (f_t', ..., f_{t-P+1}')', whose transition
is degenerate; densities are therefore evaluated on the D-dimensional
innovation block only. Ancestor weights for the reference particle multiply
the filter weight by the densities of the reference continuation that depend
on the candidate's history: P transition terms and, with AR(q) idiosyncratic
errors, q observation terms, truncated at a window of ``tau1`` periods.

:func:`ffbs_linear` draws the exact posterior path for the linear kernel by
forward filtering and backward sampling; it is the correctness oracle for the
particle sampler.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import basis as gpb
from ._rng import PGAS, keyed_rng
from .exceptions import SamplerError
from .measurement import MeasurementState
from .state import VarState

try:
    from . import _pgas_kernel as _kernel
except ImportError:  # pragma: no cover
    _kernel = None

LOG2PI = np.log(2.0 * np.pi)


@dataclass
class PgasDiagnostics:
    degenerate_steps: int = 0
    update_rate: float = float("nan")
    ess: list = field(default_factory=list)


def loglik_obs(y_t, f_t, ms: MeasurementState, spec, e_lags=None):
    """Gaussian log density of the measurement innovation at one period.

    ``f_t`` may be a single D-vector or an (H, D) batch; ``e_lags`` holds the
    previous q idiosyncratic components, most recent first, shape (q, N) or
    (H, q, N).
    """
    f_t = np.asarray(f_t, dtype=float)
    G = gpb.basis_values(f_t, spec) @ ms.C.T
    v = np.asarray(y_t) - G
    if ms.q > 0 and e_lags is not None:
        v = v - np.einsum("...kn,nk->...n", np.asarray(e_lags), ms.rho)
    return -0.5 * np.sum(LOG2PI + np.log(ms.r) + v * v / ms.r, axis=-1)


def transition_logpdf(f_t, x_t, A, Psi, sig2_t):
    """log N(f_t; A x_t, Psi^{-1} diag(sig2_t) Psi^{-1}') for batched inputs."""
    eps = f_t - x_t @ A.T
    etil = eps @ Psi.T
    return -0.5 * np.sum(LOG2PI + np.log(sig2_t) + etil * etil / sig2_t, axis=-1)


def _lognormalize(logw):
    """Normalized log weights; uniform if every weight is degenerate."""
    finite = np.isfinite(logw)
    if not finite.any():
        return np.full(len(logw), -np.log(len(logw))), True
    # log-sum-exp by shifting with the maximum
    mx = np.max(logw[finite])
    lse = mx + np.log(np.sum(np.exp(logw[finite] - mx)))
    return np.where(finite, logw - lse, -np.inf), False


def _pick(lw, u):
    """Inverse-CDF selection: first index whose cumulative weight exceeds ``u``."""
    idx = np.searchsorted(np.cumsum(np.exp(lw)), u, side="right")
    return np.minimum(idx, len(lw) - 1)


@dataclass
class SweepRandoms:
    """Every random number one sweep consumes, drawn up front."""

    Z: np.ndarray        # (T, H, D) innovations
    U_res: np.ndarray    # (T, H - 1) resampling uniforms
    U_as: np.ndarray     # (T,) ancestor-sampling uniforms
    u_final: float

    @classmethod
    def draw(cls, rng, T, H, D):
        return cls(rng.standard_normal((T, H, D)), rng.random((T, max(H - 1, 1))),
                   rng.random(T), float(rng.random()))


def pgas_sweep(Y, ref, vs: VarState, ms: MeasurementState, spec, H=20, tau1=5, rng=None,
               seed=0, iteration=0, resampling="multinomial", force_reference=False,
               diagnostics: PgasDiagnostics | None = None, backend="auto"):
    """Draw a new T x D factor path given the reference path ``ref``.

    Parameters
    ----------
    Y : (T, N) array
        Standardized observations.
    ref : (T, D) array
        Previous draw of the factor path; kept as the last particle.
    H : int
        Number of particles including the reference.
    tau1 : int
        Maximum number of future periods in the ancestor weights.
    resampling : {'multinomial', 'systematic'}
    force_reference : bool
        Always choose the reference as ancestor and output (testing hook).
    backend : {'auto', 'numba', 'numpy'}
        Both give the same path for the same random stream.
    """
    Y = np.asarray(Y, dtype=float)
    ref = np.asarray(ref, dtype=float)
    T, N = Y.shape
    D = vs.D
    if ref.shape != (T, D):
        raise SamplerError(f"reference path has shape {ref.shape}, expected {(T, D)}")
    if H < 1:
        raise SamplerError("need at least one particle")
    if resampling not in ("multinomial", "systematic"):
        raise SamplerError(f"unknown resampling scheme {resampling!r}")
    if H == 1:
        return ref.copy()
    rng = rng if rng is not None else keyed_rng(seed, iteration, PGAS, 0)
    diag = diagnostics if diagnostics is not None else PgasDiagnostics()
    rnd = SweepRandoms.draw(rng, T, H, D)
    sig2 = vs.structural_variances(T)
    if backend == "auto":
        backend = "numba" if _kernel is not None else "numpy"
    if backend == "numba":
        if _kernel is None:
            raise SamplerError("numba backend requested but numba is not importable")
        out, degen = _kernel.pgas_kernel(
            Y, ref, vs.A, vs.Psi, vs.Psi_inv(), sig2, np.ascontiguousarray(ms.C), ms.r,
            np.ascontiguousarray(ms.rho).reshape(ms.N, ms.q), _kernel.KERNEL_CODES[spec.kernel],
            spec.index_set.astype(np.int64), spec.column_dim.astype(np.int64),
            spec.column_freq.astype(float), spec.L, spec.M_tilde, rnd.Z, rnd.U_res, rnd.U_as,
            rnd.u_final, int(tau1), resampling == "systematic", bool(force_reference))
    else:
        out, degen = _sweep_numpy(Y, ref, vs, ms, spec, H, tau1, rnd, sig2,
                                  resampling == "systematic", force_reference)
    diag.degenerate_steps += int(degen)
    diag.update_rate = float(np.mean(np.any(out != ref, axis=1)))
    return out


def _sweep_numpy(Y, ref, vs, ms, spec, H, tau1, rnd, sig2, systematic, force_reference):
    T, N = Y.shape
    D, P, q = vs.D, vs.P, ms.q
    A, Psi = vs.A, vs.Psi
    sd = np.sqrt(sig2)
    Pinv = vs.Psi_inv()
    rho, r = ms.rho, ms.r
    log_r_const = np.sum(LOG2PI + np.log(r))
    C_T = ms.C.T

    def common(Fb):
        return gpb.basis_values(Fb, spec) @ C_T

    e_ref = Y - common(ref)              # idiosyncratic components of the reference
    W = max(P, q)

    traj = np.empty((T, H, D))
    anc = np.zeros((T, H), dtype=np.int64)
    fh = np.zeros((H, P, D))             # f_{t-1}, ..., f_{t-P} per particle
    eh = np.zeros((H, q, N))             # e_{t-1}, ..., e_{t-q} per particle
    logw = np.zeros(H)
    degenerate = 0

    for t in range(T):
        if t > 0:
            lw, degen = _lognormalize(logw)
            degenerate += int(degen)
            a = np.empty(H, dtype=np.int64)
            if systematic:
                u = (rnd.U_res[t, 0] + np.arange(H - 1)) / (H - 1)
            else:
                u = rnd.U_res[t, :H - 1]
            a[:H - 1] = _pick(lw, u)
            # ancestor of the reference particle
            if force_reference:
                a[H - 1] = H - 1
            else:
                las = lw + _ancestor_terms(t, min(tau1, W, T - t), fh, eh, ref, e_ref, A, Psi,
                                           sig2, rho, r, log_r_const, P, q)
                a[H - 1] = _pick(_lognormalize(las)[0], rnd.U_as[t])
            anc[t] = a
            f_prev, e_prev = fh[a], eh[a]
        else:
            f_prev, e_prev = fh, eh
        x = f_prev.reshape(H, D * P)
        f = x @ A.T + (sd[t] * rnd.Z[t]) @ Pinv.T
        f[H - 1] = ref[t]
        traj[t] = f
        e = Y[t] - common(f)
        if t >= q:
            v = e
            if q:
                v = e - np.einsum("hkn,nk->hn", e_prev, rho)
            logw = -0.5 * (log_r_const + np.sum(v * v / r, axis=1))
        else:
            logw = np.zeros(H)
        fh = np.concatenate([f[:, None, :], f_prev[:, :P - 1]], axis=1)
        if q:
            eh = np.concatenate([e[:, None, :], e_prev[:, :q - 1]], axis=1)

    lw, degen = _lognormalize(logw)
    degenerate += int(degen)
    k = H - 1 if force_reference else int(_pick(lw, rnd.u_final))
    out = np.empty((T, D))
    for t in range(T - 1, -1, -1):
        out[t] = traj[t, k]
        k = anc[t, k]
    return out, degenerate


def _ancestor_terms(t, W, fh, eh, ref, e_ref, A, Psi, sig2, rho, r, log_r_const, P, q):
    """Candidate-dependent log densities of the reference continuation.

    Terms that do not involve the candidate's history cancel on normalization
    and are skipped.
    """
    H, _, D = fh.shape
    out = np.zeros(H)
    for k in range(min(W, P)):
        tau = t + k
        # lags f_{tau-1}, ..., f_{tau-P}: first k from the reference, rest from the candidate
        x = np.empty((H, P, D))
        if k:
            x[:, :k] = ref[tau - k:tau][::-1]
        x[:, k:] = fh[:, :P - k]
        out += transition_logpdf(ref[tau], x.reshape(H, P * D), A, Psi, sig2[tau])
    for k in range(min(W, q)):
        tau = t + k
        if tau < q:
            continue
        lags = np.empty((H, q, e_ref.shape[1]))
        if k:
            lags[:, :k] = e_ref[tau - k:tau][::-1]
        lags[:, k:] = eh[:, :q - k]
        v = e_ref[tau] - np.einsum("hkn,nk->hn", lags, rho)
        out += -0.5 * (log_r_const + np.sum(v * v / r, axis=1))
    return out


# ---------------------------------------------------------------------------
# linear-Gaussian oracle


def _psd_draw(mean, cov, rng):
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return mean + vecs @ (np.sqrt(vals) * rng.standard_normal(len(mean)))


def kalman_filter_linear(Y, Lambda, R, vs: VarState):
    """Filtered means and covariances of the companion state.

    Returns ``(m, Pf, jitter_count)`` with m (T, DP) and Pf (T, DP, DP).
    """
    Y = np.asarray(Y, dtype=float)
    T, N = Y.shape
    D, P = vs.D, vs.P
    K = D * P
    B = vs.companion()
    Z = np.zeros((N, K))
    Z[:, :D] = Lambda
    Rm = np.diag(np.broadcast_to(np.asarray(R, dtype=float), (N,)))
    sig2 = vs.structural_variances(T)
    m = np.zeros((T, K))
    Pf = np.zeros((T, K, K))
    mp, Pp = np.zeros(K), np.zeros((K, K))
    jitter = 0
    for t in range(T):
        Qt = np.zeros((K, K))
        Qt[:D, :D] = vs.Q(sig2[t])
        if t == 0:
            mp, Pp = np.zeros(K), Qt
        else:
            mp = B @ m[t - 1]
            Pp = B @ Pf[t - 1] @ B.T + Qt
        S = Z @ Pp @ Z.T + Rm
        Kg = linalg.solve(S, Z @ Pp, assume_a="pos").T
        m[t] = mp + Kg @ (Y[t] - Z @ mp)
        Pt = Pp - Kg @ Z @ Pp
        Pt = 0.5 * (Pt + Pt.T)
        if np.min(np.linalg.eigvalsh(Pt)) < -1e-10 * max(1.0, np.abs(Pt).max()):
            Pt += 1e-10 * np.eye(K)
            jitter += 1
        Pf[t] = Pt
    return m, Pf, jitter


def ffbs_linear(Y, Lambda, R, vs: VarState, rng):
    """Exact joint draw of the factor path under the linear measurement map."""
    T = np.asarray(Y).shape[0]
    D = vs.D
    B = vs.companion()
    K = B.shape[0]
    sig2 = vs.structural_variances(T)
    m, Pf, _ = kalman_filter_linear(Y, Lambda, R, vs)
    s = np.empty((T, K))
    s[T - 1] = _psd_draw(m[T - 1], Pf[T - 1], rng)
    for t in range(T - 2, -1, -1):
        Qt = np.zeros((K, K))
        Qt[:D, :D] = vs.Q(sig2[t + 1])
        S = B @ Pf[t] @ B.T + Qt
        G = Pf[t] @ B.T @ np.linalg.pinv(S, hermitian=True)
        mean = m[t] + G @ (s[t + 1] - B @ m[t])
        cov = Pf[t] - G @ B @ Pf[t]
        s[t] = _psd_draw(mean, cov, rng)
    return s[:, :D].copy()


def rts_smoother_linear(Y, Lambda, R, vs: VarState):
    """Smoothed marginal means and covariances of f_t (T x D, T x D x D)."""
    T = np.asarray(Y).shape[0]
    D = vs.D
    B = vs.companion()
    K = B.shape[0]
    sig2 = vs.structural_variances(T)
    m, Pf, _ = kalman_filter_linear(Y, Lambda, R, vs)
    ms_, Ps = m.copy(), Pf.copy()
    for t in range(T - 2, -1, -1):
        Qt = np.zeros((K, K))
        Qt[:D, :D] = vs.Q(sig2[t + 1])
        S = B @ Pf[t] @ B.T + Qt
        G = Pf[t] @ B.T @ np.linalg.pinv(S, hermitian=True)
        ms_[t] = m[t] + G @ (ms_[t + 1] - B @ m[t])
        Ps[t] = Pf[t] + G @ (Ps[t + 1] - S) @ G.T
    return ms_[:, :D], Ps[:, :D, :D]
