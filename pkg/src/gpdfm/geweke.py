"""Joint-distribution test of the posterior sampler.

Two samples of (parameters, factors) should share the prior as their
distribution:

* marginal-conditional: independent draws of the parameters and factors
  from the prior;
* successive-conditional: a chain alternating one Gibbs iteration with a
  fresh draw of the data given the current parameters and factors.

Any error in a conditional update shifts the second sample away from the
prior. Means of transformed statistics are compared with z-tests whose
standard errors use batch means for the autocorrelated chain.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import basis as gpb
from . import measurement as meas
from ._rng import GEWEKE, keyed_rng
from .exceptions import ConfigError
from .sampler import ChainState, gibbs_iteration
from .state import Horseshoe, VarState, is_stable, simulate_var
from .store import fmt

log = logging.getLogger(__name__)


def _half_cauchy_scales(batch, n, rng):
    """Prior draw of the horseshoe auxiliaries for coefficient blocks of length n."""
    batch = tuple(batch)
    xi = meas.draw_inv_gamma(0.5, 1.0, rng) if not batch else \
        meas.draw_inv_gamma(0.5, np.ones(batch), rng)
    tau2 = meas.draw_inv_gamma(0.5, 1.0 / np.asarray(xi), rng)
    nu = meas.draw_inv_gamma(0.5, np.ones(batch + (n,)), rng)
    lam2 = meas.draw_inv_gamma(0.5, 1.0 / nu, rng)
    return Horseshoe(np.asarray(lam2, dtype=float), np.asarray(tau2, dtype=float),
                     np.asarray(nu, dtype=float), np.asarray(xi, dtype=float))


def _draw_stationary_rho(q, var, rng, max_tries=1000):
    for _ in range(max_tries):
        rho = rng.standard_normal(q) * np.sqrt(var)
        if meas.is_stationary(rho):
            return rho
    raise ConfigError("could not draw a stationary AR prior sample")


def draw_prior_state(cfg, T, N, spec, rng):
    """One draw of every unknown from the prior (constant volatility only)."""
    D, P, q = cfg.D, cfg.P, cfg.q
    priors = cfg.measurement_priors()
    mask = cfg.mask_array(N)
    xi, ell = draw_theta_prior(D, priors, rng, N)
    C = np.zeros((N, spec.M))
    for i in range(N):
        cols = spec.active_columns(mask[i])
        v = gpb.weight_variances(spec, xi[i], ell[i])[cols]
        C[i, cols] = rng.standard_normal(len(cols)) * np.sqrt(v)
    r = meas.draw_inv_gamma(priors.nu_r, np.full(N, priors.S_r), rng)
    rho = np.array([_draw_stationary_rho(q, priors.rho_prior_var, rng) for _ in range(N)]) \
        if q else np.zeros((N, 0))
    ms = meas.MeasurementState(C=C, r=np.asarray(r, dtype=float), xi=xi, ell=ell, rho=rho,
                               mask=mask, tuning=meas.MhTuning.create(N, cfg.mh_step_init))

    for _ in range(100_000):
        # joint rejection of (A, scales) keeps the scale conditionals untouched
        hs_a = _half_cauchy_scales((D,), D * P, rng)
        A = rng.standard_normal((D, D * P)) * np.sqrt(hs_a.prior_var())
        if not cfg.var_stationary or is_stable(A):
            break
    else:
        raise ConfigError("no stable VAR prior draw after 100000 attempts")
    hs_psi = _half_cauchy_scales((), D * (D - 1) // 2, rng)
    Psi = np.eye(D)
    Psi[np.tril_indices(D, -1)] = rng.standard_normal(D * (D - 1) // 2) * \
        np.sqrt(hs_psi.prior_var())
    sigma2 = meas.draw_inv_gamma(3.0, np.full(D, 0.3), rng)
    vs = VarState(A=A, Psi=Psi, sigma2=np.asarray(sigma2, dtype=float), hs_a=hs_a,
                  hs_psi=hs_psi)
    F = simulate_var(T, vs, rng)
    return ChainState(F=F, ms=ms, vs=vs, spec=spec)


def draw_theta_prior(D, priors, rng, N):
    xi, ell = meas.draw_theta_prior(D, priors, rng, size=N)
    return np.asarray(xi, dtype=float), np.asarray(ell, dtype=float)


def simulate_data(cs: ChainState, rng):
    """y = g(F) + AR(q) noise given every unknown in ``cs``."""
    G = cs.common_component()
    T, N = G.shape
    ms = cs.ms
    q = ms.q
    V = rng.standard_normal((T, N)) * np.sqrt(ms.r)
    if q == 0:
        return G + V
    # stationary start for the AR(q) noise via a burn-in
    burn = 200
    E = np.zeros((T + burn, N))
    Vb = np.vstack([rng.standard_normal((burn, N)) * np.sqrt(ms.r), V])
    for t in range(T + burn):
        E[t] = Vb[t]
        for k in range(1, q + 1):
            if t - k >= 0:
                E[t] += ms.rho[:, k - 1] * E[t - k]
    return G + E[burn:]


def statistics(cs: ChainState):
    """Transformed functionals tracked by the test, with names."""
    ms, vs = cs.ms, cs.vs
    names, vals = [], []
    N, D = ms.N, vs.D
    for i in range(N):
        names.append(f"log_r[{i}]")
        vals.append(np.log(ms.r[i]))
    for i in range(N):
        names.append(f"log_xi[{i}]")
        vals.append(np.log(ms.xi[i]))
    if cs.spec.kernel != "linear":
        for i in range(N):
            for d in range(D):
                names.append(f"log_ell[{i},{d}]")
                vals.append(np.log(ms.ell[i, d]))
    for i in range(N):
        names.append(f"arctan_c[{i},0]")
        vals.append(np.arctan(ms.C[i, 0]))
    for idx in np.ndindex(*vs.A.shape):
        names.append("arctan_a[" + ",".join(map(str, idx)) + "]")
        vals.append(np.arctan(vs.A[idx]))
    for d in range(D):
        names.append(f"log_sigma2[{d}]")
        vals.append(np.log(vs.sigma2[d]))
    for d in range(D):
        names.append(f"mean_f[{d}]")
        vals.append(cs.F[:, d].mean())
        names.append(f"log_mean_f2[{d}]")
        vals.append(np.log(np.mean(cs.F[:, d] ** 2)))
    return names, np.array(vals, dtype=float)


def batch_means_se(x, n_batches=50):
    x = np.asarray(x, dtype=float)
    n = x.shape[0] // n_batches * n_batches
    b = x[-n:].reshape(n_batches, -1, *x.shape[1:]).mean(axis=1)
    return b.std(axis=0, ddof=1) / np.sqrt(n_batches)


@dataclass
class GewekeReport:
    names: list
    mc_mean: np.ndarray
    sc_mean: np.ndarray
    z: np.ndarray
    p: np.ndarray
    level: float = 0.01
    threshold: float = 0.90
    reps: int = 0
    config: str = ""
    notes: list = field(default_factory=list)

    @property
    def passes(self):
        return self.p > self.level

    @property
    def pass_fraction(self):
        return float(np.mean(self.passes))

    @property
    def passed(self):
        return self.pass_fraction >= self.threshold

    def to_text(self):
        lines = [f"reps = {self.reps}", f"level = {self.level}",
                 f"pass_fraction = {fmt(self.pass_fraction)}",
                 f"passed = {'true' if self.passed else 'false'}",
                 "statistic,mc_mean,sc_mean,z,p_value,pass"]
        for k, n in enumerate(self.names):
            lines.append(",".join([n, fmt(self.mc_mean[k]), fmt(self.sc_mean[k]), fmt(self.z[k]),
                                   fmt(self.p[k]), str(int(self.passes[k]))]))
        lines.extend(f"# {n}" for n in self.notes)
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_text())
        return path


BLOCKS = ("factors", "measurement", "state")


def geweke_test(cfg, reps=None, T=25, N=3, L=None, seed=None, mc_reps=None, burn=None,
                n_batches=50, sampler_cfg=None, blocks=BLOCKS):
    """Run both simulators and compare the tracked statistics.

    ``sampler_cfg`` lets the posterior sampler run under different settings
    from the prior simulator (for mutation checks); by default both use ``cfg``.
    ``blocks`` restricts the sampler to a subset of its blocks; the unknowns
    of the other blocks are then held at their initial values in both
    simulators, and a factor path not updated by the sampler is redrawn from
    the VAR together with the data.
    """
    if cfg.sv:
        raise ConfigError("the joint-distribution test supports constant volatility only")
    blocks = tuple(blocks)
    if not blocks or any(b not in BLOCKS for b in blocks):
        raise ConfigError(f"blocks must be a non-empty subset of {BLOCKS}")
    reps = cfg.geweke_reps if reps is None else int(reps)
    mc_reps = reps if mc_reps is None else int(mc_reps)
    burn = max(reps // 20, 100) if burn is None else int(burn)
    seed = cfg.seed if seed is None else seed
    L = L if L is not None else (cfg.L if cfg.L is not None else 3.0)
    spec = cfg.basis_spec(L)
    scfg = (sampler_cfg or cfg).replace(seed=seed, normalization_rows=())
    redraw_f = "factors" not in blocks and "state" in blocks

    start = draw_prior_state(cfg, T, N, spec, keyed_rng(seed, 0, GEWEKE, 2))
    mc = []
    for m in range(mc_reps):
        rng = keyed_rng(seed, m, GEWEKE, 0)
        cs = draw_prior_state(cfg, T, N, spec, rng)
        if "measurement" not in blocks:
            cs.ms = start.ms.copy()
        if "state" not in blocks:
            cs.vs = start.vs.copy()
            cs.F = simulate_var(T, cs.vs, rng) if "factors" in blocks else start.F.copy()
        names, v = statistics(cs)
        mc.append(v)
    mc = np.array(mc)

    cs = start.copy()
    Y = simulate_data(cs, keyed_rng(seed, 0, GEWEKE, 1))
    sc = []
    for s in range(1, burn + reps + 1):
        gibbs_iteration(Y, cs, scfg, adapt=False, blocks=blocks)
        rng = keyed_rng(seed, s, GEWEKE, 1)
        if redraw_f:
            cs.F = simulate_var(T, cs.vs, rng)
        Y = simulate_data(cs, rng)
        if s > burn:
            sc.append(statistics(cs)[1])
    sc = np.array(sc)

    # statistics held fixed by a block restriction are not tracked
    live = (np.ptp(mc, axis=0) > 0) | (np.ptp(sc, axis=0) > 0)
    names = [n for n, k in zip(names, live) if k]
    mc, sc = mc[:, live], sc[:, live]
    se = np.sqrt(mc.var(axis=0, ddof=1) / len(mc) + batch_means_se(sc, n_batches) ** 2)
    diff = sc.mean(axis=0) - mc.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff == 0, 0.0, np.inf))
    p = 2.0 * stats.norm.sf(np.abs(z))
    notes = [f"blocks = {','.join(blocks)}"]
    if not cfg.var_stationary:
        notes.append("VAR prior not truncated to the stable region; explosive prior draws "
                     "can stall the chain")
    return GewekeReport(names, mc.mean(axis=0), sc.mean(axis=0), z, p, reps=reps,
                        config=scfg.to_text(), notes=notes)
