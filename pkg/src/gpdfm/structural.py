"""Generalized impulse responses and variance decompositions.

Shocks are orthogonalized recursively: the impulse to shock ``j`` of size
``delta`` (in structural standard deviations) adds ``chol(Q)[:, j] * delta``
to the factors at impact, with ``chol(Q) = Psi^{-1} diag(sigma)``. Baseline
and shocked paths share every innovation draw, so in a linear model the
response carries no Monte Carlo noise. Measurement noise is left out; the
responses are of conditional means.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import basis as gpb
from . import stochvol as svm
from ._rng import GIRF, keyed_rng
from .store import fmt

log = logging.getLogger(__name__)


@dataclass
class GirfSpec:
    """Shock sizes, horizon, initial conditions and simulations per condition."""

    shock_sizes: tuple = (-2.0, -1.0, 1.0, 2.0)
    horizon: int = 12
    initial_conditions: tuple | None = None   # time indices; None -> every `every`-th
    every: int = 4
    n_sim: int = 200
    clip_factor: float = 10.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.n_sim < 1:
            raise ValueError("n_sim must be at least 1")

    def conditions(self, T, P):
        if self.initial_conditions is not None:
            ics = np.asarray(self.initial_conditions, dtype=int)
            if np.any(ics < P - 1) or np.any(ics >= T):
                raise ValueError(f"initial conditions must lie in [{P - 1}, {T - 1}]")
            return ics
        return np.arange(P - 1, T, self.every)

    @classmethod
    def from_config(cls, cfg):
        return cls(tuple(cfg.girf_sizes), cfg.girf_horizon, None, cfg.girf_every,
                   cfg.girf_nsim, cfg.clip_factor)


@dataclass
class GirfResult:
    """Responses indexed (size, shock, initial condition, horizon, variable)."""

    sizes: tuple
    conditions: np.ndarray
    factor: np.ndarray
    observable: np.ndarray
    n_clipped: int = 0


def _measure_fn(cs, measure):
    if measure is not None:
        return measure
    spec, C = cs.spec, cs.ms.C
    return lambda F: gpb.basis_values(F, spec) @ C.T


def girf_all(cs, spec: GirfSpec, seed=0, draw_index=0, measure=None, shocks=None):
    """GIRFs of one posterior draw for every shock and size.

    ``measure`` optionally replaces the fitted map f -> g(f) (an (..., D)
    to (..., N) callable), which lets a known data-generating map be used.
    """
    vs = cs.vs
    D, P, H, S = vs.D, vs.P, spec.horizon, spec.n_sim
    shocks = tuple(range(D)) if shocks is None else tuple(shocks)
    sizes = np.asarray(spec.shock_sizes, dtype=float)
    g = _measure_fn(cs, measure)
    ics = spec.conditions(cs.T, P)
    Pinv = vs.Psi_inv()
    clip = spec.clip_factor * cs.spec.L
    n_clipped = 0

    N = np.shape(g(np.zeros((1, D))))[-1]
    fac = np.zeros((len(sizes), len(shocks), len(ics), H + 1, D))
    obs = np.zeros((len(sizes), len(shocks), len(ics), H + 1, N))
    for c, t0 in enumerate(ics):
        rng = keyed_rng(seed, draw_index, GIRF, c)
        z = rng.standard_normal((H + 1, S, D))
        if vs.sv is not None:
            logvar = svm.simulate_forward(vs.sv.h[t0], vs.sv.mu, vs.sv.phi, vs.sv.sigma2,
                                          H + 1, rng, size=S)     # (S, D, H + 1)
            sd = np.exp(0.5 * np.moveaxis(logvar, -1, 0))         # (H + 1, S, D)
        else:
            sd = np.broadcast_to(np.sqrt(vs.sigma2), (H + 1, S, D))
        hist0 = np.stack([cs.F[t0 - p] for p in range(P)])        # (P, D)
        base = _propagate(vs.A, Pinv, hist0, z, sd)
        gb = g(base)
        ok = np.all(np.abs(base) <= clip, axis=(0, 2))
        paths = {}
        for a, delta in enumerate(sizes):
            for b, j in enumerate(shocks):
                zs = z.copy()
                zs[0, :, j] += delta
                shocked = _propagate(vs.A, Pinv, hist0, zs, sd)
                paths[a, b] = shocked
                ok &= np.all(np.abs(shocked) <= clip, axis=(0, 2))
        n_clipped += int(S - ok.sum())
        if not ok.any():
            fac[:, :, c] = np.nan
            obs[:, :, c] = np.nan
            continue
        for (a, b), shocked in paths.items():
            fac[a, b, c] = (shocked[:, ok] - base[:, ok]).mean(axis=1)
            obs[a, b, c] = (g(shocked[:, ok]) - gb[:, ok]).mean(axis=1)
    if n_clipped:
        log.warning("%d simulated futures left the clip bound and were dropped", n_clipped)
    return GirfResult(tuple(sizes), ics, fac, obs, n_clipped)


def _propagate(A, Pinv, hist0, z, sd):
    """Factor paths (H + 1, S, D) from a common history and innovations."""
    H1, S, D = z.shape
    P = hist0.shape[0]
    hist = np.broadcast_to(hist0.reshape(1, P * D), (S, P * D)).copy()
    out = np.empty((H1, S, D))
    for k in range(H1):
        f = hist @ A.T + (sd[k] * z[k]) @ Pinv.T
        out[k] = f
        hist = np.concatenate([f, hist[:, :-D]], axis=1) if P > 1 else f
    return out


def girf(cs, shock_index, size, spec: GirfSpec, seed=0, draw_index=0, measure=None):
    """Responses of factors and observables to one shock: ``(factor, observable)``
    arrays of shape (initial conditions, horizon + 1, variables)."""
    one = GirfSpec((float(size),), spec.horizon, spec.initial_conditions, spec.every,
                   spec.n_sim, spec.clip_factor)
    res = girf_all(cs, one, seed, draw_index, measure, shocks=(shock_index,))
    return res.factor[0, 0], res.observable[0, 0]


def gfevd(responses):
    """Variance-decomposition shares from GIRFs.

    Parameters
    ----------
    responses : array (shocks, horizons, variables)

    Returns
    -------
    array (variables, shocks, horizons): cumulative squared response of each
    shock over the total across shocks. All-zero denominators give NaN.
    """
    R = np.asarray(responses, dtype=float)
    cum = np.cumsum(R ** 2, axis=1)                    # (J, H, V)
    total = cum.sum(axis=0)                            # (H, V)
    with np.errstate(invalid="ignore", divide="ignore"):
        shares = np.where(total > 0, cum / np.where(total > 0, total, 1.0), np.nan)
    return np.moveaxis(shares, 2, 0)                   # (V, J, H)


def gfevd_by_condition(res: GirfResult, which="observable"):
    """Shares (sizes, conditions, variables, shocks, horizons)."""
    R = getattr(res, which)
    n_size, _, n_ic = R.shape[:3]
    out = []
    for a in range(n_size):
        out.append([gfevd(R[a, :, c]) for c in range(n_ic)])
    return np.array(out)


@dataclass
class SweepResult:
    """GFEVD shares per retained draw, averaged over initial conditions."""

    sizes: tuple
    shares: np.ndarray            # (draws, sizes, variables, shocks, horizons)
    factor_shares: np.ndarray
    girf_obs: np.ndarray          # (draws, sizes, shocks, horizons, variables), IC-averaged
    girf_factor: np.ndarray
    variable_names: list = field(default_factory=list)
    n_clipped: int = 0

    def band(self, q, which="shares"):
        return np.nanquantile(getattr(self, which), q, axis=0)

    @property
    def median(self):
        return self.band(0.5)

    @property
    def lower(self):
        return self.band(0.16)

    @property
    def upper(self):
        return self.band(0.84)

    def to_csv(self, path):
        """Long-format table of posterior median and 68% band of GIRFs and shares."""
        names = self.variable_names or [f"y{i}" for i in range(self.shares.shape[2])]
        D = self.factor_shares.shape[2]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["quantity", "statistic", "variable", "shock", "horizon", "size", "value"])
            for qname, arr, labels, axes in (
                    ("gfevd", self.shares, names, "vjh"),
                    ("gfevd_factor", self.factor_shares, [f"f{d}" for d in range(D)], "vjh"),
                    ("girf", self.girf_obs, names, "jhv"),
                    ("girf_factor", self.girf_factor, [f"f{d}" for d in range(D)], "jhv")):
                for stat, q in (("median", 0.5), ("p16", 0.16), ("p84", 0.84)):
                    summ = np.nanquantile(arr, q, axis=0)
                    for a, size in enumerate(self.sizes):
                        block = summ[a]
                        for idx in np.ndindex(*block.shape):
                            pos = dict(zip(axes, idx))
                            w.writerow([qname, stat, labels[pos["v"]], pos["j"], pos["h"],
                                        fmt(size), fmt(block[idx])])


def size_sign_sweep(states, spec: GirfSpec, seed=0, measure=None, variable_names=None):
    """GFEVD by shock size and sign for each posterior draw.

    Shares are computed per initial condition and then averaged over
    conditions; bands across draws come from :meth:`SweepResult.band`.
    """
    shares, fshares, gobs, gfac = [], [], [], []
    clipped = 0
    for k, cs in enumerate(states):
        res = girf_all(cs, spec, seed, k, measure)
        clipped += res.n_clipped
        with np.errstate(invalid="ignore"):
            shares.append(np.nanmean(gfevd_by_condition(res, "observable"), axis=1))
            fshares.append(np.nanmean(gfevd_by_condition(res, "factor"), axis=1))
            gobs.append(np.nanmean(res.observable, axis=2))
            gfac.append(np.nanmean(res.factor, axis=2))
    return SweepResult(tuple(spec.shock_sizes), np.array(shares), np.array(fshares),
                       np.array(gobs), np.array(gfac), list(variable_names or []), clipped)


def linear_orthogonal_fevd(A, Psi, sigma2, Lambda, horizon):
    """Textbook orthogonalized FEVD of y = Lambda f for a VAR(P).

    Returns (variables, shocks, horizon + 1) shares, for checking the GIRF
    route on linear models.
    """
    A = np.asarray(A, dtype=float)
    D = A.shape[0]
    P = A.shape[1] // D
    B = np.zeros((D * P, D * P))
    B[:D] = A
    if P > 1:
        B[D:, :-D] = np.eye(D * (P - 1))
    Pinv = np.linalg.inv(np.asarray(Psi, dtype=float))
    impact = Pinv * np.sqrt(np.asarray(sigma2, dtype=float))
    resp = []
    Bl = np.eye(D * P)
    for _ in range(horizon + 1):
        resp.append(np.asarray(Lambda) @ Bl[:D, :D] @ impact)     # (V, J)
        Bl = B @ Bl
    R = np.array(resp)                                           # (H, V, J)
    return gfevd(np.moveaxis(R, 2, 0))
