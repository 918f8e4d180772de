"""Auxiliary-mixture sampler for a univariate AR(1) stochastic-volatility process.

    e_t = exp(h_t / 2) u_t,   h_t = mu + phi (h_{t-1} - mu) + sigma eta_t,
    h_0 ~ N(mu, sigma^2 / (1 - phi^2)).

log e_t^2 = h_t + log u_t^2 with log chi^2_1 replaced by the 10-component
normal mixture of Omori, Chib, Shephard and Nakajima (2007). Given the mixture
indicators the model is linear and Gaussian, so h_{0:T} is drawn from its
tridiagonal precision in O(T). The parameters are updated in the centered
parameterization and then once more in the non-centered one (h = mu + sigma h~),
which is the ancillarity-sufficiency interweaving strategy of Kastner and
Fruhwirth-Schnatter (2014).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats
from scipy.special import logsumexp

from .exceptions import SamplerError

MIX_PROB = np.array([0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                     0.18842, 0.12047, 0.05591, 0.01575, 0.00115])
MIX_MEAN = np.array([1.92677, 1.34744, 0.73504, 0.02266, -0.85173,
                     -1.97278, -3.46788, -5.55246, -8.68384, -14.65000])
MIX_VAR = np.array([0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                    0.98583, 1.57469, 2.54498, 4.16591, 7.33342])
LOG_OFFSET = 1e-8


@dataclass
class SvPriors:
    mu_mean: float = 0.0
    mu_var: float = 100.0
    phi_a: float = 5.0
    phi_b: float = 1.5
    sigma_B: float = 1.0   # sigma^2 ~ Gamma(1/2, rate 1/(2 B)), i.e. sigma ~ |N(0, B)|
    fixed_sigma2: float | None = None


@dataclass
class SvState:
    """Log-variance paths (T x D), initial values and AR(1) parameters per series."""

    h: np.ndarray
    h0: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    sigma2: np.ndarray

    @classmethod
    def initial(cls, T, D, mu=0.0, phi=0.9, sigma2=0.1):
        return cls(np.zeros((T, D)), np.zeros(D), np.full(D, float(mu)),
                   np.full(D, float(phi)), np.full(D, float(sigma2)))

    def copy(self):
        return SvState(self.h.copy(), self.h0.copy(), self.mu.copy(), self.phi.copy(),
                       self.sigma2.copy())

    def column(self, d):
        return self.h[:, d], self.h0[d], self.mu[d], self.phi[d], self.sigma2[d]


def log_squared(e):
    return np.log(np.asarray(e, dtype=float) ** 2 + LOG_OFFSET)


def sample_indicators(ystar, h, rng):
    """Mixture component for each t given y*_t = log(e_t^2 + c) and h_t."""
    resid = ystar[:, None] - h[:, None] - MIX_MEAN
    logp = np.log(MIX_PROB) - 0.5 * np.log(MIX_VAR) - 0.5 * resid ** 2 / MIX_VAR
    logp -= logsumexp(logp, axis=1, keepdims=True)
    cdf = np.cumsum(np.exp(logp), axis=1)
    u = rng.random(len(ystar))[:, None]
    return np.minimum((u > cdf).sum(axis=1), len(MIX_PROB) - 1)


def sample_h(ystar, s, mu, phi, sigma2, rng):
    """Joint draw of h_{0:T} given indicators and parameters.

    Returns ``(h0, h)`` with ``h`` of length T.
    """
    T = len(ystar)
    n = T + 1
    z = ystar - MIX_MEAN[s]
    w = 1.0 / MIX_VAR[s]
    # tridiagonal prior precision of x = h_{0:T} - mu, plus observation precision
    diag = np.full(n, (1.0 + phi ** 2) / sigma2)
    diag[0] = 1.0 / sigma2        # (1 - phi^2)/sigma2 + phi^2/sigma2
    diag[-1] = 1.0 / sigma2
    diag[1:] += w
    off = np.full(n - 1, -phi / sigma2)
    b = np.zeros(n)
    b[1:] = w * (z - mu)
    ab = np.zeros((2, n))
    ab[0, 1:] = off
    ab[1] = diag
    try:
        U = linalg.cholesky_banded(ab, lower=False)
    except linalg.LinAlgError:
        raise SamplerError("log-volatility precision not positive definite") from None
    mean = linalg.cho_solve_banded((U, False), b)
    x = mean + linalg.solve_banded((0, 1), U, rng.standard_normal(n))
    x += mu
    return x[0], x[1:]


def _h0_logpdf(h0, mu, phi, sigma2):
    var = sigma2 / (1.0 - phi ** 2)
    return -0.5 * (np.log(var) + (h0 - mu) ** 2 / var)


def sample_phi(h0, h, mu, phi, sigma2, priors: SvPriors, rng):
    """Independence MH step with the AR(1) regression posterior as proposal."""
    x = np.concatenate(([h0], h[:-1])) - mu
    y = h - mu
    sxx = x @ x
    if sxx <= 0:
        return phi
    prop = x @ y / sxx + np.sqrt(sigma2 / sxx) * rng.standard_normal()
    if not -1.0 < prop < 1.0:
        return phi

    def log_rest(p):
        beta = stats.beta.logpdf((p + 1.0) / 2.0, priors.phi_a, priors.phi_b)
        return beta + _h0_logpdf(h0, mu, p, sigma2)

    if np.log(rng.random()) < log_rest(prop) - log_rest(phi):
        return prop
    return phi


def sample_mu(h0, h, phi, sigma2, priors: SvPriors, rng):
    """Exact Gaussian conditional of the level mu."""
    T = len(h)
    prec0 = (1.0 - phi ** 2) / sigma2
    prev = np.concatenate(([h0], h[:-1]))
    k = 1.0 - phi
    prec = 1.0 / priors.mu_var + prec0 + T * k ** 2 / sigma2
    num = priors.mu_mean / priors.mu_var + prec0 * h0 + k * np.sum(h - phi * prev) / sigma2
    return num / prec + rng.standard_normal() / np.sqrt(prec)


def sample_sigma2(h0, h, mu, phi, priors: SvPriors, rng):
    """Exact generalized-inverse-Gaussian conditional of sigma^2."""
    T = len(h)
    prev = np.concatenate(([h0], h[:-1]))
    S = np.sum((h - mu - phi * (prev - mu)) ** 2) + (1.0 - phi ** 2) * (h0 - mu) ** 2
    p = 0.5 - (T + 1) / 2.0
    a = 1.0 / priors.sigma_B
    b = max(S, 1e-300)
    return float(np.sqrt(b / a) * stats.geninvgauss.rvs(p, np.sqrt(a * b), random_state=rng))


def interweave(ystar, s, h0, h, mu, phi, sigma2, priors: SvPriors, rng, fix_sigma=False):
    """Non-centered redraw of (mu, sigma) given h~ = (h - mu) / sigma.

    With ``fix_sigma`` only mu is redrawn, which keeps the level mixing when
    sigma^2 is pinned near zero.
    """
    sigma = np.sqrt(sigma2)
    ht = (h - mu) / sigma
    ht0 = (h0 - mu) / sigma
    z = ystar - MIX_MEAN[s]
    w = 1.0 / MIX_VAR[s]
    if fix_sigma:
        prec = w.sum() + 1.0 / priors.mu_var
        num = w @ (z - sigma * ht) + priors.mu_mean / priors.mu_var
        mu_new = num / prec + rng.standard_normal() / np.sqrt(prec)
        return mu_new + sigma * ht0, mu_new + sigma * ht, mu_new, sigma2
    X = np.column_stack([np.ones_like(ht), ht])
    P = (X.T * w) @ X + np.diag([1.0 / priors.mu_var, 1.0 / priors.sigma_B])
    rhs = (X.T * w) @ z + np.array([priors.mu_mean / priors.mu_var, 0.0])
    Lc = linalg.cholesky(P, lower=True)
    mean = linalg.cho_solve((Lc, True), rhs)
    mu_new, sig_new = mean + linalg.solve_triangular(Lc, rng.standard_normal(2), lower=True,
                                                     trans="T")
    # sigma's sign is not identified; absorb it into h~
    h = mu_new + sig_new * ht
    h0 = mu_new + sig_new * ht0
    return h0, h, mu_new, sig_new ** 2


def sv_update(e, h, h0, mu, phi, sigma2, rng, priors: SvPriors | None = None,
              interweaving=True):
    """One full sweep for a single series of residuals ``e``.

    Returns ``(h, h0, mu, phi, sigma2)``.
    """
    priors = priors or SvPriors()
    if priors.fixed_sigma2 is not None:
        sigma2 = priors.fixed_sigma2
    ystar = log_squared(e)
    s = sample_indicators(ystar, h, rng)
    h0, h = sample_h(ystar, s, mu, phi, sigma2, rng)
    phi = sample_phi(h0, h, mu, phi, sigma2, priors, rng)
    mu = sample_mu(h0, h, phi, sigma2, priors, rng)
    fixed = priors.fixed_sigma2 is not None
    if not fixed:
        sigma2 = sample_sigma2(h0, h, mu, phi, priors, rng)
    if interweaving:
        h0, h, mu, sigma2 = interweave(ystar, s, h0, h, mu, phi, sigma2, priors, rng,
                                       fix_sigma=fixed)
    if not (np.all(np.isfinite(h)) and np.isfinite(sigma2) and sigma2 > 0):
        raise SamplerError("stochastic-volatility update produced non-finite values")
    return h, h0, mu, phi, sigma2


def simulate_forward(h_last, mu, phi, sigma2, steps, rng, size=None):
    """Simulate log variances ``steps`` periods past ``h_last``; returns (..., steps)."""
    shape = (() if size is None else (size,)) + np.shape(h_last)
    out = np.empty(shape + (steps,))
    cur = np.broadcast_to(h_last, shape).astype(float)
    for k in range(steps):
        cur = mu + phi * (cur - mu) + np.sqrt(sigma2) * rng.standard_normal(shape)
        out[..., k] = cur
    return out


def simulate_sv(T, mu, phi, sigma2, rng):
    """Draw (h0, h, e) from the SV model."""
    h0 = mu + np.sqrt(sigma2 / (1 - phi ** 2)) * rng.standard_normal()
    h = simulate_forward(h0, mu, phi, sigma2, T, rng)
    return h0, h, np.exp(h / 2.0) * rng.standard_normal(T)
