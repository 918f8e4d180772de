"""Gibbs updates for the measurement equation y_it = c_i' Phi(f_t) + e_it.

Per equation, conditional on the factor path:

1. ``r_i``: inverse-Gamma update from the (quasi-differenced) residuals.
2. ``theta_i = (xi_i, l_i)``: random-walk Metropolis on the log scale. The
   default target integrates the basis weights out analytically (Gaussian
   marginal likelihood), so step 3 must follow immediately.
3. ``c_i``: Gaussian conjugate draw.
4. ``rho_i``: AR(q) coefficients of the idiosyncratic component (q in {0, 1, 2}).

With q > 0 every likelihood is the Gaussian likelihood of y conditional on its
first q observations, obtained by quasi-differencing y and Phi.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from . import basis as gpb
from ._rng import MEASUREMENT, keyed_rng
from .exceptions import ConfigError, SamplerError

LOG2PI = np.log(2.0 * np.pi)


@dataclass
class MeasurementPriors:
    nu_r: float = 3.0
    S_r: float = 0.3
    nu_xi: float = 0.5
    S_xi: float = 0.5
    nu_ell: float = 0.5
    S_ell: float = 0.5
    rho_prior_var: float = 1.0
    # 'conjugate' uses shape nu_r + T/2; 'literal' uses nu_r + T
    r_shape_rule: str = "conjugate"
    # 'collapsed' integrates c out of the theta target; 'conditional' uses p(c | theta)
    theta_update: str = "collapsed"


@dataclass
class MhTuning:
    step_sd: np.ndarray
    accept_count: np.ndarray
    attempt_count: np.ndarray
    window_accept: np.ndarray
    window_attempt: np.ndarray

    @classmethod
    def create(cls, N, step=0.3):
        z = np.zeros(N, dtype=np.int64)
        return cls(np.full(N, float(step)), z.copy(), z.copy(), z.copy(), z.copy())

    def acceptance_rate(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.accept_count / self.attempt_count

    def adapt(self, i, every=50, target=0.30, factor=0.05):
        """Scale equation ``i``'s step after every ``every`` attempts."""
        if self.window_attempt[i] < every:
            return
        rate = self.window_accept[i] / self.window_attempt[i]
        self.step_sd[i] *= np.exp(factor if rate > target else -factor)
        self.window_accept[i] = 0
        self.window_attempt[i] = 0


@dataclass
class NormalizationPrior:
    """Tight N(mean, var I) prior replacing the spectral prior on flagged rows."""

    rows: list
    means: dict = field(default_factory=dict)
    var: float = 1e-4

    def for_row(self, i):
        if i in self.means:
            return self.means[i], self.var
        return None


@dataclass
class MeasurementState:
    C: np.ndarray
    r: np.ndarray
    xi: np.ndarray
    ell: np.ndarray
    rho: np.ndarray
    mask: np.ndarray
    tuning: MhTuning

    @property
    def N(self):
        return self.C.shape[0]

    @property
    def q(self):
        return self.rho.shape[1]

    def hyper(self, i):
        return gpb.KernelHyper(float(self.xi[i]), tuple(self.ell[i]))

    def copy(self):
        t = self.tuning
        return MeasurementState(
            self.C.copy(), self.r.copy(), self.xi.copy(), self.ell.copy(), self.rho.copy(),
            self.mask.copy(),
            MhTuning(t.step_sd.copy(), t.accept_count.copy(), t.attempt_count.copy(),
                     t.window_accept.copy(), t.window_attempt.copy()))


# ---------------------------------------------------------------------------
# distributions


def draw_inv_gamma(shape, scale, rng):
    """Inverse-Gamma(shape, scale) draw: scale / Gamma(shape, 1), elementwise."""
    size = np.broadcast(shape, scale).shape
    return scale / rng.gamma(shape, size=size or None)


def gamma_logpdf(x, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def log_theta_prior(log_xi, log_ell, priors: MeasurementPriors):
    """Log prior density of (log xi, log l) including the change-of-variable terms.

    xi ~ Gamma(nu_xi, rate S_xi) and l^{-2} ~ Gamma(nu_ell, rate S_ell).
    """
    xi = np.exp(log_xi)
    w = np.exp(-2.0 * np.asarray(log_ell))
    lp = gamma_logpdf(xi, priors.nu_xi, priors.S_xi) + log_xi
    lp += np.sum(gamma_logpdf(w, priors.nu_ell, priors.S_ell) + np.log(2.0 * w))
    return float(lp)


def draw_theta_prior(D, priors: MeasurementPriors, rng, size=None):
    shape = () if size is None else (size,)
    xi = rng.gamma(priors.nu_xi, 1.0 / priors.S_xi, size=shape)
    w = rng.gamma(priors.nu_ell, 1.0 / priors.S_ell, size=shape + (D,))
    return xi, w ** -0.5


# ---------------------------------------------------------------------------
# quasi-differencing for AR(q) idiosyncratic components


def quasi_difference(x, rho):
    """x_t - sum_k rho_k x_{t-k} for t = q..T-1 (rows); drops the first q rows."""
    x = np.asarray(x, dtype=float)
    q = len(rho)
    if q == 0:
        return x
    out = x[q:].copy()
    for k in range(1, q + 1):
        out -= rho[k - 1] * x[q - k:len(x) - k]
    return out


def ar_conditional_loglik(e, rho, r):
    """log p(e_{q+1:T} | e_{1:q}) for an AR(q) with innovation variance r."""
    v = quasi_difference(e, rho)
    return float(-0.5 * (v.size * (LOG2PI + np.log(r)) + v @ v / r))


def is_stationary(rho):
    rho = np.asarray(rho, dtype=float)
    if rho.size == 0:
        return True
    comp = np.zeros((rho.size, rho.size))
    comp[0] = rho
    comp[1:, :-1] = np.eye(rho.size - 1)
    return bool(np.max(np.abs(np.linalg.eigvals(comp))) < 1.0)


# ---------------------------------------------------------------------------
# conjugate pieces


@dataclass
class GaussianPosterior:
    mean: np.ndarray
    prec_chol: np.ndarray  # lower Cholesky factor of the posterior precision

    @property
    def cov(self):
        Linv = linalg.solve_triangular(self.prec_chol, np.eye(len(self.mean)), lower=True)
        return Linv.T @ Linv

    def draw(self, rng):
        z = rng.standard_normal(len(self.mean))
        return self.mean + linalg.solve_triangular(self.prec_chol, z, lower=True, trans="T",
                                                   check_finite=False)


def gaussian_regression_posterior(XtX, Xty, noise_var, prior_var, prior_mean=None):
    """Posterior of b in y = X b + e, e ~ N(0, noise_var I), b ~ N(prior_mean, diag(prior_var)).

    ``noise_var`` may be None when ``XtX``/``Xty`` are already precision-weighted.
    """
    prior_var = np.asarray(prior_var, dtype=float)
    if noise_var is not None:
        XtX = XtX / noise_var
        Xty = Xty / noise_var
    P = XtX + np.diag(1.0 / prior_var)
    b = Xty.copy()
    if prior_mean is not None:
        b = b + np.asarray(prior_mean) / prior_var
    try:
        Lc = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        cond = np.linalg.cond(P)
        raise SamplerError(f"posterior precision not positive definite (cond={cond:.3g})") from None
    mean = linalg.cho_solve((Lc, True), b, check_finite=False)
    return GaussianPosterior(mean=mean, prec_chol=Lc)


def c_posterior(y, Phi, r, prior_var, prior_mean=None):
    """Conditional posterior of one equation's basis weights."""
    Phi = np.asarray(Phi, dtype=float)
    return gaussian_regression_posterior(Phi.T @ Phi, Phi.T @ y, r, prior_var, prior_mean)


def sample_c(y, Phi, r, prior_var, rng, prior_mean=None):
    return c_posterior(y, Phi, r, prior_var, prior_mean).draw(rng)


def sample_r(v, rng, nu_r=3.0, S_r=0.3, shape_rule="conjugate"):
    """Draw the idiosyncratic variance given residuals ``v``."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise SamplerError("non-finite measurement residuals")
    n = v.size
    if shape_rule == "conjugate":
        shape = nu_r + n / 2.0
    elif shape_rule == "literal":
        shape = nu_r + n
    else:
        raise ConfigError(f"unknown r_shape_rule {shape_rule!r}")
    return draw_inv_gamma(shape, S_r + 0.5 * float(v @ v), rng)


def log_marginal_likelihood(PtP, Pty, yty, n, r, prior_var, prior_mean=None):
    """log N(y; Phi m0, Phi V Phi' + r I) from sufficient statistics.

    ``PtP = Phi'Phi``, ``Pty = Phi'y``, ``yty = y'y`` and ``n`` rows.
    """
    prior_var = np.asarray(prior_var, dtype=float)
    if prior_mean is not None:
        m0 = np.asarray(prior_mean, dtype=float)
        yty = yty - 2.0 * m0 @ Pty + m0 @ PtP @ m0
        Pty = Pty - PtP @ m0
    P = PtP / r + np.diag(1.0 / prior_var)
    try:
        Lc = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return -np.inf
    b = linalg.solve_triangular(Lc, Pty / r, lower=True, check_finite=False)
    logdet = n * np.log(r) + np.sum(np.log(prior_var)) + 2.0 * np.sum(np.log(np.diag(Lc)))
    quad = yty / r - b @ b
    return float(-0.5 * (n * LOG2PI + logdet + quad))


def _gaussian_logpdf_diag(x, mean, var):
    d = np.asarray(x) - np.asarray(mean)
    return float(-0.5 * np.sum(LOG2PI + np.log(var) + d * d / var))


def mh_step_theta(log_target, log_xi, log_ell, step_sd, rng, propose_ell=True):
    """One log-scale random-walk Metropolis step for (xi, l).

    ``log_target(log_xi, log_ell)`` returns the unnormalized log posterior in
    log-parameter space. Returns ``(log_xi, log_ell, accepted, current_target)``.
    """
    cur = log_target(log_xi, log_ell)
    if not np.isfinite(cur):
        raise SamplerError("current kernel-hyperparameter target is not finite")
    prop_xi = log_xi + step_sd * rng.standard_normal()
    if propose_ell:
        prop_ell = log_ell + step_sd * rng.standard_normal(len(log_ell))
    else:
        prop_ell = np.array(log_ell, dtype=float)
    new = log_target(prop_xi, prop_ell)
    u = rng.random()
    if np.isfinite(new) and np.log(u) < new - cur:
        return prop_xi, prop_ell, True, new
    return log_xi, np.array(log_ell, dtype=float), False, cur


def sample_rho(e, r, q, rng, current=None, prior_var=1.0, max_tries=10):
    """Draw AR(q) coefficients of an idiosyncratic series, rejecting explosive draws."""
    if q == 0:
        return np.zeros(0)
    e = np.asarray(e, dtype=float)
    X = np.column_stack([e[q - k:len(e) - k] for k in range(1, q + 1)])
    post = gaussian_regression_posterior(X.T @ X, X.T @ e[q:], r, np.full(q, prior_var))
    for _ in range(max_tries):
        rho = post.draw(rng)
        if is_stationary(rho):
            return rho
    return np.zeros(q) if current is None else np.asarray(current, dtype=float).copy()


def apply_normalization_prior(group_first_rows, prior_means, prior_var, groups=None):
    """Build the tight prior used to pin sign and scale on flagged rows.

    Parameters
    ----------
    group_first_rows : list of int
        One equation index per group.
    prior_means : list of arrays
        Prior mean of each flagged row's basis weights.
    prior_var : float
        Common prior variance.
    groups : list of lists, optional
        Member equations of each group; each flagged row must belong to its group.
    """
    if not prior_var > 0:
        raise ConfigError("normalization prior variance must be positive")
    rows = [int(i) for i in group_first_rows]
    if len(prior_means) != len(rows):
        raise ConfigError("need one prior mean per flagged row")
    if groups is not None:
        if len(groups) != len(rows):
            raise ConfigError("need one group per flagged row")
        for g, (i, members) in enumerate(zip(rows, groups)):
            if i not in set(int(m) for m in members):
                raise ConfigError(f"normalization row {i} is not in group {g}")
    return NormalizationPrior(rows=rows, means={i: np.asarray(m, dtype=float)
                                                for i, m in zip(rows, prior_means)},
                              var=float(prior_var))


# ---------------------------------------------------------------------------
# the full block


def equation_design(Y, Phi, rho_i, i, cols):
    """Quasi-differenced response and design for equation ``i``."""
    return quasi_difference(Y[:, i], rho_i), quasi_difference(Phi[:, cols], rho_i)


def update_equation(i, y, Phi_full, spec, ms: MeasurementState, priors: MeasurementPriors,
                    rng, adapt=False, norm=None):
    """Run the four measurement updates for equation ``i`` in place."""
    cols = spec.active_columns(ms.mask[i])
    rho = ms.rho[i]
    ys = quasi_difference(y, rho)
    Ps = quasi_difference(Phi_full[:, cols], rho)
    n = ys.size
    c = ms.C[i, cols]
    tight = norm.for_row(i) if norm is not None else None

    # r_i | c_i, rho_i
    ms.r[i] = sample_r(ys - Ps @ c, rng, priors.nu_r, priors.S_r, priors.r_shape_rule)
    r = ms.r[i]

    # theta_i | r_i, rho_i (c_i integrated out), or theta_i | c_i
    linear = spec.kernel == "linear"
    PtP, Pty, yty = Ps.T @ Ps, Ps.T @ ys, float(ys @ ys)

    def prior_var_of(lx, ll):
        full = gpb.weight_variances(spec, np.exp(lx), np.exp(ll))
        return full[cols]

    if priors.theta_update == "collapsed":
        def log_target(lx, ll):
            lp = log_theta_prior(lx, ll, priors)
            if tight is not None:
                return lp
            v = prior_var_of(lx, ll)
            if not np.all(v > 0):
                return -np.inf
            return lp + log_marginal_likelihood(PtP, Pty, yty, n, r, v)
    elif priors.theta_update == "conditional":
        def log_target(lx, ll):
            lp = log_theta_prior(lx, ll, priors)
            if tight is not None:
                return lp
            v = prior_var_of(lx, ll)
            if not np.all(v > 0):
                return -np.inf
            return lp + _gaussian_logpdf_diag(c, 0.0, v)
    else:
        raise ConfigError(f"unknown theta_update {priors.theta_update!r}")

    lx, ll = np.log(ms.xi[i]), np.log(ms.ell[i])
    lx, ll, acc, _ = mh_step_theta(log_target, lx, ll, ms.tuning.step_sd[i], rng,
                                   propose_ell=not linear)
    ms.xi[i], ms.ell[i] = np.exp(lx), np.exp(ll)
    t = ms.tuning
    t.attempt_count[i] += 1
    t.accept_count[i] += int(acc)
    if adapt:
        t.window_attempt[i] += 1
        t.window_accept[i] += int(acc)
        t.adapt(i)

    # c_i | theta_i, r_i, rho_i
    if tight is not None:
        m0, v0 = tight
        post = gaussian_regression_posterior(PtP, Pty, r, np.full(len(cols), v0), m0)
    else:
        post = gaussian_regression_posterior(PtP, Pty, r, prior_var_of(lx, ll))
    ms.C[i] = 0.0
    ms.C[i, cols] = post.draw(rng)

    # rho_i | c_i, r_i
    if ms.q > 0:
        e = y - Phi_full[:, cols] @ ms.C[i, cols]
        ms.rho[i] = sample_rho(e, r, ms.q, rng, current=ms.rho[i],
                               prior_var=priors.rho_prior_var)


def update_measurement(Y, F, spec, ms: MeasurementState, priors: MeasurementPriors,
                       seed=0, iteration=0, adapt=False, norm=None):
    """Update every equation given the factor path ``F`` (T x D).

    Equations are conditionally independent; each uses its own keyed random
    stream so the result does not depend on the visiting order.
    """
    Phi = gpb.basis_values(F, spec)
    for i in range(Y.shape[1]):
        rng = keyed_rng(seed, iteration, MEASUREMENT, i)
        try:
            update_equation(i, Y[:, i], Phi, spec, ms, priors, rng, adapt=adapt, norm=norm)
        except SamplerError as exc:
            raise SamplerError(f"equation {i}: {exc}", iteration, "measurement") from None
    return ms


def common_component(F, spec, C):
    """G(F) = Phi(F) C' for a factor path or particle batch."""
    return gpb.basis_values(F, spec) @ C.T
