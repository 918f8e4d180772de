"""Three-block Gibbs sampler for the GP dynamic factor model.

Each iteration draws

1. the factor path given everything else (particle Gibbs with ancestor sampling),
2. the measurement-equation unknowns given the factors,
3. the state-equation unknowns given the factors.

All randomness comes from streams keyed by (seed, iteration, block, index),
so a chain resumed from a saved state continues exactly as an unbroken one.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import basis as gpb
from . import measurement as meas
from . import pgas
from . import stochvol as svm
from ._rng import INIT, PGAS, keyed_rng
from .config import ModelConfig
from .data import Panel, pca_init
from .exceptions import ConfigError, SamplerError
from .state import Horseshoe, StateOptions, VarState, update_state
from .store import DrawStore

log = logging.getLogger(__name__)

STATE_FILE = "chain_state.npz"


@dataclass
class ChainState:
    """One complete MCMC state."""

    F: np.ndarray
    ms: meas.MeasurementState
    vs: VarState
    spec: gpb.BasisSpec
    iteration: int = 0
    norm: meas.NormalizationPrior | None = None

    def copy(self):
        return ChainState(self.F.copy(), self.ms.copy(), self.vs.copy(), self.spec,
                          self.iteration, self.norm)

    @property
    def T(self):
        return self.F.shape[0]

    def common_component(self, F=None):
        F = self.F if F is None else F
        return gpb.basis_values(F, self.spec) @ self.ms.C.T

    def record(self):
        """Arrays persisted for each retained draw."""
        ms, vs = self.ms, self.vs
        rec = {"iteration": np.int64(self.iteration), "F": self.F, "C": ms.C, "r": ms.r,
               "xi": ms.xi, "ell": ms.ell, "rho": ms.rho, "A": vs.A, "Psi": vs.Psi,
               "sigma2": vs.sigma2}
        if vs.sv is not None:
            rec.update(h=vs.sv.h, h0=vs.sv.h0, sv_mu=vs.sv.mu, sv_phi=vs.sv.phi,
                       sv_sigma2=vs.sv.sigma2)
        return rec


@dataclass
class ChainDiagnostics:
    pgas: pgas.PgasDiagnostics = field(default_factory=pgas.PgasDiagnostics)
    update_rates: list = field(default_factory=list)
    lines: list = field(default_factory=list)
    wall_time: float = 0.0


def state_from_record(rec, spec, mask=None):
    """Rebuild a ChainState from a stored draw (horseshoe scales are not stored)."""
    N = rec["C"].shape[0]
    D = rec["A"].shape[0]
    mask = np.ones((N, D), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    ms = meas.MeasurementState(C=rec["C"].copy(), r=rec["r"].copy(), xi=rec["xi"].copy(),
                               ell=rec["ell"].copy(), rho=rec["rho"].copy(), mask=mask,
                               tuning=meas.MhTuning.create(N))
    sv = None
    if "h" in rec:
        sv = svm.SvState(rec["h"].copy(), rec["h0"].copy(), rec["sv_mu"].copy(),
                         rec["sv_phi"].copy(), rec["sv_sigma2"].copy())
    K = rec["A"].shape[1]
    vs = VarState(A=rec["A"].copy(), Psi=rec["Psi"].copy(), sigma2=rec["sigma2"].copy(),
                  hs_a=Horseshoe.initial((D,), K), hs_psi=Horseshoe.initial((), D * (D - 1) // 2),
                  sv=sv)
    return ChainState(rec["F"].copy(), ms, vs, spec, int(rec["iteration"]))


def states_from_store(store: DrawStore, spec, max_draws=None):
    n = len(store)
    idx = np.arange(n)
    if max_draws is not None and n > max_draws:
        idx = np.unique(np.linspace(0, n - 1, max_draws).round().astype(int))
    mask = store.meta.get("mask")
    return [state_from_record(store.record(k), spec, mask) for k in idx]


def spec_from_meta(meta):
    b = meta["basis"]
    return gpb.BasisSpec(b["kernel"], b["D"], b["M_tilde"], b["L"], cap=b.get("cap", 70000))


# ---------------------------------------------------------------------------
# initialization


def _prior_mean_theta(cfg: ModelConfig):
    xi = cfg.nu_xi / cfg.S_xi
    ell = (cfg.nu_ell / cfg.S_ell) ** -0.5
    return xi, ell


def initialize_chain(Y, cfg: ModelConfig, F0=None, L=None):
    """Starting state: PC factors, prior-mean hyperparameters, one c draw per equation."""
    Y = np.asarray(Y, dtype=float)
    T, N = Y.shape
    if F0 is None or L is None:
        pc = pca_init(Y, cfg.D, cfg.L_scale)
        F0 = pc.F0 if F0 is None else F0
        L = (cfg.L if cfg.L is not None else pc.L) if L is None else L
    spec = cfg.basis_spec(L)
    mask = cfg.mask_array(N)
    for i in range(N):
        spec.active_columns(mask[i])   # rejects unsupported masks early
    xi0, ell0 = _prior_mean_theta(cfg)
    ms = meas.MeasurementState(
        C=np.zeros((N, spec.M)), r=np.full(N, 0.15), xi=np.full(N, xi0),
        ell=np.full((N, cfg.D), ell0), rho=np.zeros((N, cfg.q)), mask=mask,
        tuning=meas.MhTuning.create(N, cfg.mh_step_init))
    Phi = gpb.basis_values(F0, spec)
    # posterior means given the PC factors, used for the normalization prior
    means = {}
    for i in range(N):
        cols = spec.active_columns(mask[i])
        v0 = gpb.weight_variances(spec, ms.xi[i], ms.ell[i])[cols]
        post = meas.c_posterior(Y[:, i], Phi[:, cols], ms.r[i], v0)
        means[i] = post.mean
        ms.C[i, cols] = post.draw(keyed_rng(cfg.seed, 0, INIT, i))
    norm = None
    if cfg.normalization_rows:
        rows = list(cfg.normalization_rows)
        for i in rows:
            if not 0 <= i < N:
                raise ConfigError(f"normalization row {i} outside 0..{N - 1}")
        norm = meas.apply_normalization_prior(rows, [means[i] for i in rows],
                                              cfg.normalization_var, cfg.groups)
        for i in rows:
            ms.C[i, spec.active_columns(mask[i])] = means[i]
    vs = VarState.initial(cfg.D, cfg.P, T=T, sv=cfg.sv)
    return ChainState(F=np.array(F0, dtype=float), ms=ms, vs=vs, spec=spec, iteration=0,
                      norm=norm)


# ---------------------------------------------------------------------------
# iteration


def state_options(cfg: ModelConfig):
    return StateOptions(stationary=cfg.var_stationary)


def gibbs_iteration(Y, cs: ChainState, cfg: ModelConfig, adapt=False, diag=None,
                    state_opts=None, blocks=("factors", "measurement", "state")):
    """Advance ``cs`` by one iteration in place."""
    s = cs.iteration + 1
    seed = cfg.seed
    diag = diag if diag is not None else ChainDiagnostics()
    if "factors" in blocks:
        try:
            cs.F = pgas.pgas_sweep(Y, cs.F, cs.vs, cs.ms, cs.spec, H=cfg.H, tau1=cfg.tau1,
                                   rng=keyed_rng(seed, s, PGAS, 0), resampling=cfg.resampling,
                                   diagnostics=diag.pgas)
        except SamplerError as exc:
            raise SamplerError(str(exc), s, "pgas") from None
        if not np.all(np.isfinite(cs.F)):
            raise SamplerError("non-finite factor path", s, "pgas")
        diag.update_rates.append(diag.pgas.update_rate)
    if "measurement" in blocks:
        meas.update_measurement(Y, cs.F, cs.spec, cs.ms, cfg.measurement_priors(), seed, s,
                                adapt=adapt, norm=cs.norm)
    if "state" in blocks:
        update_state(cs.F, cs.vs, seed, s, state_opts or state_options(cfg))
    cs.iteration = s
    return cs


def _diag_line(cs, diag):
    rate = np.nanmean(diag.update_rates[-100:]) if diag.update_rates else float("nan")
    acc = cs.ms.tuning.acceptance_rate()
    return (f"iter={cs.iteration} pgas_update_rate={rate:.3f} "
            f"degenerate_steps={diag.pgas.degenerate_steps} "
            f"mh_accept_min={np.nanmin(acc):.3f} mh_accept_max={np.nanmax(acc):.3f}")


def run_chain(panel, cfg: ModelConfig, out=None, state: ChainState | None = None,
              iterations=None, progress=None):
    """Run (or continue) a chain and return the retained draws.

    Parameters
    ----------
    panel : Panel or (T, N) array
    cfg : ModelConfig
    out : path, optional
        Directory for the DrawStore, diagnostics log and final chain state.
    state : ChainState, optional
        Continue from this state instead of initializing.
    iterations : int, optional
        Stop after this total iteration count (defaults to ``cfg.iterations``).
    """
    Y = panel.Y if isinstance(panel, Panel) else np.asarray(panel, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise ConfigError("panel contains non-finite values")
    total = cfg.iterations if iterations is None else int(iterations)
    t0 = time.perf_counter()
    cs = initialize_chain(Y, cfg) if state is None else state
    store = DrawStore(meta=_store_meta(cfg, cs, Y))
    if isinstance(panel, Panel):
        store.meta["series_ids"] = list(panel.series_ids)
    diag = ChainDiagnostics()
    opts = state_options(cfg)
    lines = []
    while cs.iteration < total:
        gibbs_iteration(Y, cs, cfg, adapt=cs.iteration < cfg.burn_in, diag=diag,
                        state_opts=opts)
        s = cs.iteration
        if s > cfg.burn_in and (s - cfg.burn_in) % cfg.thin == 0:
            store.append(cs.record())
        if cfg.diagnostics_every and s % cfg.diagnostics_every == 0:
            lines.append(_diag_line(cs, diag))
            log.info(lines[-1])
            if progress is not None:
                progress(cs)
    diag.lines = lines
    diag.wall_time = time.perf_counter() - t0
    store.meta["mh_acceptance"] = [float(a) for a in cs.ms.tuning.acceptance_rate()]
    store.meta["pgas_update_rate"] = (float(np.nanmean(diag.update_rates))
                                      if diag.update_rates else None)
    store.meta["degenerate_steps"] = diag.pgas.degenerate_steps
    store.diagnostics = diag
    store.final_state = cs
    if out is not None:
        out = Path(out)
        store.save(out)
        (out / "diagnostics.log").write_text("\n".join(lines) + ("\n" if lines else ""))
        save_state(cs, out / STATE_FILE)
    return store


def _store_meta(cfg, cs, Y):
    return {"basis": {"kernel": cs.spec.kernel, "D": cs.spec.D, "M_tilde": cs.spec.M_tilde,
                      "L": cs.spec.L, "cap": cfg.cap},
            "T": int(Y.shape[0]), "N": int(Y.shape[1]), "config": cfg.to_text(),
            "mask": cs.ms.mask.astype(int).tolist()}


# ---------------------------------------------------------------------------
# persistence of the full state (for restarts)


def save_state(cs: ChainState, path):
    ms, vs = cs.ms, cs.vs
    t = ms.tuning
    arrays = dict(
        F=cs.F, C=ms.C, r=ms.r, xi=ms.xi, ell=ms.ell, rho=ms.rho, mask=ms.mask,
        step_sd=t.step_sd, accept_count=t.accept_count, attempt_count=t.attempt_count,
        window_accept=t.window_accept, window_attempt=t.window_attempt,
        A=vs.A, Psi=vs.Psi, sigma2=vs.sigma2,
        hs_a_lam2=vs.hs_a.lam2, hs_a_tau2=vs.hs_a.tau2, hs_a_nu=vs.hs_a.nu, hs_a_xi=vs.hs_a.xi,
        hs_psi_lam2=vs.hs_psi.lam2, hs_psi_tau2=vs.hs_psi.tau2, hs_psi_nu=vs.hs_psi.nu,
        hs_psi_xi=vs.hs_psi.xi, iteration=np.int64(cs.iteration),
        basis=np.array([cs.spec.D, cs.spec.M_tilde], dtype=np.int64),
        basis_L=np.float64(cs.spec.L), kernel=np.array(cs.spec.kernel))
    if vs.sv is not None:
        arrays.update(sv_h=vs.sv.h, sv_h0=vs.sv.h0, sv_mu=vs.sv.mu, sv_phi=vs.sv.phi,
                      sv_sigma2=vs.sv.sigma2)
    if cs.norm is not None:
        arrays.update(norm_rows=np.array(cs.norm.rows, dtype=np.int64),
                      norm_means=np.stack([cs.norm.means[i] for i in cs.norm.rows]),
                      norm_var=np.float64(cs.norm.var))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_state(path, cap=70_000):
    z = np.load(path, allow_pickle=False)
    spec = gpb.BasisSpec(str(z["kernel"]), int(z["basis"][0]), int(z["basis"][1]),
                         float(z["basis_L"]), cap=cap)
    tuning = meas.MhTuning(z["step_sd"], z["accept_count"], z["attempt_count"],
                           z["window_accept"], z["window_attempt"])
    ms = meas.MeasurementState(z["C"], z["r"], z["xi"], z["ell"], z["rho"], z["mask"], tuning)
    sv = None
    if "sv_h" in z:
        sv = svm.SvState(z["sv_h"], z["sv_h0"], z["sv_mu"], z["sv_phi"], z["sv_sigma2"])
    vs = VarState(z["A"], z["Psi"], z["sigma2"],
                  Horseshoe(z["hs_a_lam2"], z["hs_a_tau2"], z["hs_a_nu"], z["hs_a_xi"]),
                  Horseshoe(z["hs_psi_lam2"], z["hs_psi_tau2"], z["hs_psi_nu"], z["hs_psi_xi"]),
                  sv)
    norm = None
    if "norm_rows" in z:
        rows = [int(i) for i in z["norm_rows"]]
        norm = meas.NormalizationPrior(rows=rows, means=dict(zip(rows, z["norm_means"])),
                                       var=float(z["norm_var"]))
    return ChainState(z["F"], ms, vs, spec, int(z["iteration"]), norm)


def resume_chain(panel, cfg: ModelConfig, directory, iterations, out=None):
    """Continue the chain saved under ``directory`` up to ``iterations`` total."""
    cs = load_state(Path(directory) / STATE_FILE, cap=cfg.cap)
    return run_chain(panel, cfg, out=out, state=cs, iterations=iterations)
