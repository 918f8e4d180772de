"""Triangular sampler for the factor VAR(P) with horseshoe priors.

The reduced-form covariance is decomposed as Q_t = Psi^{-1} Sigma_t Psi^{-1}' with
Psi unit lower triangular, so the structural shocks Psi eps_t are independent.
Given the factor path the block draws, in order:

1. the free elements of each row of Psi (Gaussian), with horseshoe scales;
2. the structural variances, constant (inverse-Gamma) or stochastic;
3. each row of A (Gaussian, one row at a time), with horseshoe scales.

No intercept; the P pre-sample lags are fixed at zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import stochvol as svm
from ._rng import STATE, SV, keyed_rng
from .exceptions import SamplerError
from .measurement import draw_inv_gamma, gaussian_regression_posterior


@dataclass
class Horseshoe:
    """Makalic-Schmidt auxiliary representation of a horseshoe prior.

    beta_j ~ N(0, lam2_j tau2), lam2_j | nu_j ~ IG(1/2, 1/nu_j), nu_j ~ IG(1/2, 1),
    tau2 | xi ~ IG(1/2, 1/xi), xi ~ IG(1/2, 1). Leading axes index independent groups.
    """

    lam2: np.ndarray
    tau2: np.ndarray
    nu: np.ndarray
    xi: np.ndarray

    @classmethod
    def initial(cls, batch, n):
        batch = tuple(batch)
        return cls(np.ones(batch + (n,)), np.ones(batch), np.ones(batch + (n,)), np.ones(batch))

    def prior_var(self):
        return self.lam2 * self.tau2[..., None]

    def copy(self):
        return Horseshoe(self.lam2.copy(), self.tau2.copy(), self.nu.copy(), self.xi.copy())


def sample_horseshoe(beta, hs: Horseshoe, rng, global_shape=None):
    """Update all horseshoe scales given coefficients ``beta`` (shape (..., n)).

    ``global_shape`` defaults to (n + 1) / 2.
    """
    beta = np.asarray(beta, dtype=float)
    n = beta.shape[-1]
    if n == 0:
        return hs
    shape = (n + 1) / 2.0 if global_shape is None else global_shape
    b2 = beta ** 2
    lam2 = draw_inv_gamma(1.0, 1.0 / hs.nu + b2 / (2.0 * hs.tau2[..., None]), rng)
    tau2 = draw_inv_gamma(shape, 1.0 / hs.xi + np.sum(b2 / (2.0 * lam2), axis=-1), rng)
    nu = draw_inv_gamma(1.0, 1.0 + 1.0 / lam2, rng)
    xi = draw_inv_gamma(1.0, 1.0 + 1.0 / tau2, rng)
    return Horseshoe(lam2, np.asarray(tau2, dtype=float), nu, np.asarray(xi, dtype=float))


@dataclass
class VarState:
    A: np.ndarray                 # D x (D P)
    Psi: np.ndarray               # D x D unit lower triangular
    sigma2: np.ndarray            # D constant structural variances (unused under SV)
    hs_a: Horseshoe               # batch D, n = D P
    hs_psi: Horseshoe             # batch (), n = D (D - 1) / 2
    sv: svm.SvState | None = None

    @property
    def D(self):
        return self.A.shape[0]

    @property
    def P(self):
        return self.A.shape[1] // self.A.shape[0]

    @classmethod
    def initial(cls, D, P, T=None, sv=False):
        n_psi = D * (D - 1) // 2
        return cls(A=np.zeros((D, D * P)), Psi=np.eye(D), sigma2=np.ones(D),
                   hs_a=Horseshoe.initial((D,), D * P), hs_psi=Horseshoe.initial((), n_psi),
                   sv=svm.SvState.initial(T, D) if sv else None)

    def copy(self):
        return VarState(self.A.copy(), self.Psi.copy(), self.sigma2.copy(), self.hs_a.copy(),
                        self.hs_psi.copy(), None if self.sv is None else self.sv.copy())

    def psi_free(self):
        return self.Psi[np.tril_indices(self.D, -1)]

    def structural_variances(self, T):
        """T x D matrix of structural innovation variances."""
        if self.sv is not None:
            return np.exp(self.sv.h[:T])
        return np.broadcast_to(self.sigma2, (T, self.D)).copy()

    def Psi_inv(self):
        return linalg.solve_triangular(self.Psi, np.eye(self.D), lower=True, unit_diagonal=True)

    def Q(self, sig2=None):
        """Reduced-form covariance for one vector of structural variances."""
        sig2 = self.sigma2 if sig2 is None else sig2
        Pi = self.Psi_inv()
        Q = (Pi * sig2) @ Pi.T
        return 0.5 * (Q + Q.T)

    def companion(self):
        """Companion matrix B of the stacked state (f_t', ..., f_{t-P+1}')'."""
        return companion_matrix(self.A)


def lag_matrix(F, P):
    """Rows x_t = (f_{t-1}', ..., f_{t-P}') with zero pre-sample values."""
    F = np.asarray(F, dtype=float)
    T, D = F.shape
    X = np.zeros((T, D * P))
    for p in range(1, P + 1):
        X[p:, (p - 1) * D:p * D] = F[:T - p]
    return X


def var_residuals(F, A, P):
    return F - lag_matrix(F, P) @ A.T


def sample_psi_row(d, eps, sig2_d, prior_var, rng):
    """Free elements of row ``d`` (0-based, d >= 1) of Psi.

    eps_d = -eps_{<d} psi_d + structural shock with variances ``sig2_d`` (T,).
    """
    if d == 0:
        return np.zeros(0)
    X = eps[:, :d]
    Xw = X / sig2_d[:, None]
    post = gaussian_regression_posterior(Xw.T @ X, -Xw.T @ eps[:, d], None, prior_var)
    return post.draw(rng)


def psi_row_posterior(d, eps, sig2_d, prior_var):
    X = eps[:, :d]
    Xw = X / sig2_d[:, None]
    return gaussian_regression_posterior(Xw.T @ X, -Xw.T @ eps[:, d], None, prior_var)


def sample_sigma_const(etil_d, rng, shape0=3.0, scale0=0.3):
    """IG(T/2 + shape0, etil'etil/2 + scale0) draw for a homoskedastic structural variance."""
    etil_d = np.asarray(etil_d, dtype=float)
    return draw_inv_gamma(etil_d.size / 2.0 + shape0, 0.5 * float(etil_d @ etil_d) + scale0, rng)


def a_row_posterior(d, F, X, A, Psi, sig2, prior_var):
    """Conditional posterior of row ``d`` of A.

    With A_{-d} equal to A with row d zeroed, Psi (f_t - A_{-d} x_t) equals
    Psi[:, d] (x_t' a_d) + structural shocks, so each period contributes
    precision x_t x_t' sum_k Psi_kd^2 / sig2_kt.
    """
    A0 = A.copy()
    A0[d] = 0.0
    ydd = (F - X @ A0.T) @ Psi.T                        # T x D
    col = Psi[:, d]
    w = (col ** 2 / sig2).sum(axis=1)                    # T
    z = (ydd * col / sig2).sum(axis=1)                   # T
    return gaussian_regression_posterior((X.T * w) @ X, X.T @ z, None, prior_var)


def sample_a_row(d, F, X, A, Psi, sig2, prior_var, rng, stationary=False, max_tries=1000):
    """Draw row ``d`` of A; with ``stationary`` the draw is restricted by rejection
    to rows that keep the companion matrix stable (the old row is kept if no
    candidate is accepted)."""
    post = a_row_posterior(d, F, X, A, Psi, sig2, prior_var)
    if not stationary:
        return post.draw(rng)
    trial = A.copy()
    for _ in range(max_tries):
        trial[d] = post.draw(rng)
        if is_stable(trial):
            return trial[d]
    return A[d].copy()


def companion_matrix(A):
    D = A.shape[0]
    P = A.shape[1] // D
    B = np.zeros((D * P, D * P))
    B[:D] = A
    if P > 1:
        B[D:, :-D] = np.eye(D * (P - 1))
    return B


def is_stable(A):
    """Spectral radius of the companion matrix below one."""
    return bool(np.max(np.abs(np.linalg.eigvals(companion_matrix(A)))) < 1.0)


@dataclass
class StateOptions:
    sigma_shape0: float = 3.0
    sigma_scale0: float = 0.3
    sv_priors: svm.SvPriors | None = None
    interweaving: bool = True
    stationary: bool = False      # truncate the VAR prior to the stable region


def update_state(F, vs: VarState, seed=0, iteration=0, opts: StateOptions | None = None):
    """One pass of the state block given the factor path ``F`` (T x D)."""
    opts = opts or StateOptions()
    F = np.asarray(F, dtype=float)
    T, D = F.shape
    P = vs.P
    rng = keyed_rng(seed, iteration, STATE, 0)
    X = lag_matrix(F, P)
    eps = F - X @ vs.A.T
    sig2 = vs.structural_variances(T)
    try:
        # (i) contemporaneous terms
        if D > 1:
            pv = vs.hs_psi.prior_var()
            rows, cols = np.tril_indices(D, -1)
            start = 0
            for d in range(1, D):
                vs.Psi[d, :d] = sample_psi_row(d, eps, sig2[:, d], pv[start:start + d], rng)
                start += d
            vs.hs_psi = sample_horseshoe(vs.Psi[rows, cols], vs.hs_psi, rng)
        # (ii) structural variances
        etil = eps @ vs.Psi.T
        if vs.sv is None:
            for d in range(D):
                vs.sigma2[d] = sample_sigma_const(etil[:, d], rng, opts.sigma_shape0,
                                                  opts.sigma_scale0)
        else:
            s = vs.sv
            for d in range(D):
                rng_d = keyed_rng(seed, iteration, SV, d)
                s.h[:, d], s.h0[d], s.mu[d], s.phi[d], s.sigma2[d] = svm.sv_update(
                    etil[:, d], s.h[:, d], s.h0[d], s.mu[d], s.phi[d], s.sigma2[d], rng_d,
                    opts.sv_priors, opts.interweaving)
        sig2 = vs.structural_variances(T)
        # (iii) VAR coefficients, row by row
        pv = vs.hs_a.prior_var()
        for d in range(D):
            vs.A[d] = sample_a_row(d, F, X, vs.A, vs.Psi, sig2, pv[d], rng, opts.stationary)
        vs.hs_a = sample_horseshoe(vs.A, vs.hs_a, rng)
    except SamplerError as exc:
        raise SamplerError(str(exc), iteration, "state") from None
    return vs


def simulate_var(T, vs: VarState, rng, burn=0, sig2=None):
    """Simulate a factor path from the VAR with zero pre-sample lags."""
    D, P = vs.D, vs.P
    if sig2 is None:
        sig2 = vs.structural_variances(T + burn) if vs.sv is None else None
    Pi = vs.Psi_inv()
    F = np.zeros((T + burn + P, D))
    for t in range(T + burn):
        x = F[t:t + P][::-1].reshape(-1)
        s = sig2[t] if sig2 is not None else vs.sigma2
        F[t + P] = vs.A @ x + Pi @ (np.sqrt(s) * rng.standard_normal(D))
    return F[P + burn:]
