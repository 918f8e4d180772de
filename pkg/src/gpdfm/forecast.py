"""Predictive simulation and expanding-window forecast evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import basis as gpb
from . import stochvol as svm
from ._rng import FORECAST, keyed_rng
from .data import standardize
from .exceptions import GPDFMError
from .scoring import ScoreTable, crps, energy_score

log = logging.getLogger(__name__)


@dataclass
class ForecastDensity:
    """Predictive draws in data units.

    ``draws[k]`` is the (S, N) sample for ``horizons[k]``; every horizon keeps
    the same S draws. Draws whose factor path left the clip bound are dropped
    and counted in ``n_excluded``.
    """

    horizons: tuple
    draws: np.ndarray                  # (n_h, S, N)
    series_ids: list = field(default_factory=list)
    n_excluded: int = 0
    factor_paths: np.ndarray | None = None   # (S, h_max + 1, D)

    def at(self, h):
        return self.draws[list(self.horizons).index(h)]

    @property
    def n_draws(self):
        return self.draws.shape[1]


def idiosyncratic_residuals(Y, cs):
    """e_t = y_t - g(f_t) in standardized units."""
    return Y - cs.common_component()


def simulate_path(cs, Y, h_max, rng, clip=None, noise=True):
    """One predictive path from the end of the sample.

    Returns ``(y, f)`` with rows 0..h_max, row 0 being the nowcast at the
    last observed period (fitted common component plus fresh noise), or
    ``None`` if any |f| exceeds ``clip``.
    """
    vs, ms, spec = cs.vs, cs.ms, cs.spec
    D, P = vs.D, vs.P
    T = cs.T
    N, q = ms.N, ms.q
    Pinv = vs.Psi_inv()
    hist = [cs.F[T - 1 - p] if T - 1 - p >= 0 else np.zeros(D) for p in range(P)]
    f_path = np.empty((h_max + 1, D))
    f_path[0] = cs.F[T - 1]
    if vs.sv is not None and h_max > 0:
        logvar = svm.simulate_forward(vs.sv.h[-1], vs.sv.mu, vs.sv.phi, vs.sv.sigma2,
                                      h_max, rng)           # (D, h_max)
        sig2 = np.exp(logvar.T)
    else:
        sig2 = np.broadcast_to(vs.sigma2, (max(h_max, 1), D))
    for k in range(1, h_max + 1):
        x = np.concatenate(hist)
        f = vs.A @ x + Pinv @ (np.sqrt(sig2[k - 1]) * rng.standard_normal(D))
        f_path[k] = f
        hist = [f] + hist[:-1]
    if clip is not None and np.any(np.abs(f_path) > clip):
        return None
    G = gpb.basis_values(f_path, spec) @ ms.C.T
    if not noise:
        return G, f_path
    V = rng.standard_normal((h_max + 1, N)) * np.sqrt(ms.r)
    E = V.copy()
    if q:
        resid = idiosyncratic_residuals(Y, cs)[::-1]        # e_T, e_{T-1}, ...
        past = [resid[j] if j < T else np.zeros(N) for j in range(q + 1)]
        # nowcast: conditional on e_{T-1}, ..., e_{T-q}
        E[0] += sum(ms.rho[:, j] * past[j + 1] for j in range(q))
        lags = past[:q]
        for k in range(1, h_max + 1):
            E[k] += sum(ms.rho[:, j] * lags[j] for j in range(q))
            lags = [E[k]] + lags[:-1]
    return G + E, f_path


def forecast(states, Y, horizons, seed=0, means=None, sds=None, clip_factor=10.0,
             keep_paths=False, series_ids=None, origin=0):
    """Draw-for-draw predictive sample from a list of posterior ChainStates.

    Parameters
    ----------
    states : list of ChainState
    Y : (T, N) standardized data used for the fit
    horizons : iterable of int (0 gives the nowcast)
    means, sds : standardization statistics; draws are returned in data units
    clip_factor : paths with |f| > clip_factor * L are excluded
    """
    horizons = tuple(int(h) for h in horizons)
    h_max = max(horizons) if horizons else 0
    Y = np.asarray(Y, dtype=float)
    N = Y.shape[1]
    means = np.zeros(N) if means is None else np.asarray(means, dtype=float)
    sds = np.ones(N) if sds is None else np.asarray(sds, dtype=float)
    kept_y, kept_f, excluded = [], [], 0
    for k, cs in enumerate(states):
        rng = keyed_rng(seed, origin, FORECAST, k)
        clip = clip_factor * cs.spec.L
        out = simulate_path(cs, Y, h_max, rng, clip=clip)
        if out is None:
            excluded += 1
            continue
        kept_y.append(out[0][list(horizons)])
        kept_f.append(out[1])
    if excluded:
        log.warning("%d of %d predictive paths left the clip bound and were excluded",
                    excluded, len(states))
    if not kept_y:
        raise GPDFMError("every predictive path was excluded by the clip bound")
    draws = np.stack(kept_y, axis=1) * sds + means       # (n_h, S, N)
    paths = np.stack(kept_f) if keep_paths else None
    return ForecastDensity(horizons, draws, list(series_ids or []), excluded, paths)


# ---------------------------------------------------------------------------
# expanding window


def _default_fit(Y, cfg):
    from .sampler import run_chain, states_from_store
    store = run_chain(Y, cfg)
    return states_from_store(store, store.final_state.spec)


def _target_index(targets, series_ids, N):
    if not targets:
        return list(range(N))
    out = []
    for t in targets:
        if isinstance(t, (int, np.integer)) or str(t).isdigit():
            out.append(int(t))
        elif t in series_ids:
            out.append(series_ids.index(t))
        else:
            raise GPDFMError(f"unknown target series {t!r}")
    return out


def expanding_window_run(X, configs, start, end, horizons=(1, 4, 8), targets=(),
                         benchmark=None, series_ids=None, fit=None, harvey=True,
                         keep_draws=False):
    """Re-estimate every config at each origin and score its forecasts.

    Parameters
    ----------
    X : (T, N) transformed data in data units (not standardized)
    configs : list of ModelConfig with distinct names
    start, end : first and last origin; an origin ``o`` fits on ``X[:o]``
        and scores the forecast of ``X[o - 1 + h]``
    benchmark : name of the benchmark config (default: the first config)
    fit : callable ``(Y, cfg) -> list of ChainState``; defaults to a full chain

    Returns
    -------
    ScoreTable with ES on the joint target vector (``variable="joint"``,
    omitted for a single target) and CRPS per target. The table also carries ``losses``, ``skipped`` and,
    with ``keep_draws``, the predictive target draws per origin.
    """
    X = np.asarray(X, dtype=float)
    T, N = X.shape
    series_ids = list(series_ids) if series_ids is not None else [f"y{i}" for i in range(N)]
    tix = _target_index(targets, series_ids, N)
    horizons = tuple(int(h) for h in horizons)
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise GPDFMError("config names must be distinct")
    benchmark = names[0] if benchmark in (None, "self") else benchmark
    if benchmark not in names:
        raise GPDFMError(f"benchmark {benchmark!r} is not among the configs")
    fit = fit or _default_fit
    if not (1 <= start <= end <= T - 1):
        raise GPDFMError(f"origins must satisfy 1 <= start <= end <= {T - 1}")

    losses = {n: {} for n in names}
    skipped, kept = [], {n: {} for n in names}
    for origin in range(start, end + 1):
        live = [h for h in horizons if origin - 1 + h < T]
        if not live:
            continue
        panel = standardize(X[:origin], series_ids)
        for cfg in configs:
            try:
                states = fit(panel.Y, cfg)
                fd = forecast(states, panel.Y, live, seed=cfg.seed, means=panel.means,
                              sds=panel.sds, clip_factor=cfg.clip_factor, origin=origin)
            except (GPDFMError, np.linalg.LinAlgError) as exc:
                log.warning("origin %d skipped for %s: %s", origin, cfg.name, exc)
                skipped.append((cfg.name, origin, str(exc)))
                continue
            for h in live:
                sample = fd.at(h)[:, tix]
                real = X[origin - 1 + h, tix]
                if len(tix) > 1:
                    # with one target the energy score equals its CRPS row
                    losses[cfg.name].setdefault((h, "joint"), {})[origin] = \
                        energy_score(sample, real)
                for j, i in enumerate(tix):
                    losses[cfg.name].setdefault((h, series_ids[i]), {})[origin] = \
                        crps(sample[:, j], real[j])
                if keep_draws:
                    kept[cfg.name].setdefault(h, {})[origin] = sample
    table = ScoreTable.build(losses, benchmark, harvey=harvey)
    table.losses = losses
    table.skipped = skipped
    table.draws = kept if keep_draws else None
    return table
