"""Synthetic panels with a recorded ground truth."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import basis as gpb
from . import stochvol as svm
from ._rng import SIMULATE, keyed_rng
from .exceptions import ConfigError
from .state import VarState

FAMILIES = ("gp", "linear", "quadratic", "threshold")


@dataclass
class TruthSettings:
    """Data-generating choices not covered by ModelConfig."""

    A: np.ndarray | None = None          # D x DP; default 0.5 I on the first lag
    Psi: np.ndarray | None = None        # default identity
    sigma2: np.ndarray | None = None     # default ones
    r: float | np.ndarray = 0.25
    rho: np.ndarray | None = None        # N x q
    sv_mu: float = 0.0
    sv_phi: float = 0.95
    sv_sigma2: float = 0.05
    xi: float = 1.0                      # GP family
    ell: float = 1.0
    L: float = 5.0
    linear_scale: float = 1.0
    quad_scale: float = 0.5
    burn: int = 100


@dataclass
class Truth:
    family: str
    F: np.ndarray
    G: np.ndarray
    E: np.ndarray
    vs: VarState
    r: np.ndarray
    rho: np.ndarray
    params: dict = field(default_factory=dict)

    def common(self, F):
        """True common component g(F) for an arbitrary factor array (..., D)."""
        return common_component(self.family, self.params, F)


def common_component(family, params, F):
    F = np.asarray(F, dtype=float)
    if family == "gp":
        spec = params["spec"]
        return gpb.basis_values(F, spec) @ params["C"].T
    if family == "linear":
        return F @ params["Lambda"].T
    if family == "quadratic":
        return F @ params["a"].T + (F ** 2) @ params["b"].T
    if family == "threshold":
        pos = np.maximum(F, 0.0)
        return F @ params["a"].T + pos @ params["b"].T
    raise ConfigError(f"unknown function family {family!r}; expected one of {FAMILIES}")


def draw_family_params(family, N, D, truth: TruthSettings, rng, M_tilde=8):
    if family == "gp":
        spec = gpb.BasisSpec("additive", D, M_tilde, truth.L)
        v = gpb.weight_variances(spec, truth.xi, np.full(D, truth.ell))
        return {"spec": spec, "C": rng.standard_normal((N, spec.M)) * np.sqrt(v)}
    if family == "linear":
        return {"Lambda": truth.linear_scale * rng.standard_normal((N, D))}
    if family in ("quadratic", "threshold"):
        return {"a": truth.linear_scale * rng.standard_normal((N, D)),
                "b": truth.quad_scale * rng.standard_normal((N, D))}
    raise ConfigError(f"unknown function family {family!r}; expected one of {FAMILIES}")


def simulate_gpdfm(cfg, truth: TruthSettings | None = None, T=None, N=None, family=None,
                   seed=None):
    """Simulate a panel from the factor model; returns ``(Y, Truth)``.

    Factors follow the VAR(P) of ``cfg`` (with SV if ``cfg.sv``); observables
    are g_i(f_t) plus AR(q) idiosyncratic noise with innovation variance r_i.
    """
    truth = truth or TruthSettings()
    T = cfg.sim_T if T is None else int(T)
    N = cfg.sim_N if N is None else int(N)
    family = cfg.sim_family if family is None else family
    seed = cfg.seed if seed is None else seed
    D, P, q = cfg.D, cfg.P, cfg.q
    rng = keyed_rng(seed, 0, SIMULATE, 0)

    vs = VarState.initial(D, P)
    if truth.A is not None:
        vs.A = np.array(truth.A, dtype=float).reshape(D, D * P)
    else:
        vs.A[:, :D] = 0.5 * np.eye(D)
    if truth.Psi is not None:
        vs.Psi = np.array(truth.Psi, dtype=float)
    if truth.sigma2 is not None:
        vs.sigma2 = np.broadcast_to(np.asarray(truth.sigma2, dtype=float), (D,)).copy()

    n = T + truth.burn
    if cfg.sv:
        h = np.empty((n, D))
        h0 = np.empty(D)
        for d in range(D):
            h0[d], h[:, d], _ = svm.simulate_sv(n, truth.sv_mu, truth.sv_phi, truth.sv_sigma2,
                                                rng)
        sig2 = np.exp(h)
    else:
        sig2 = np.broadcast_to(vs.sigma2, (n, D))
    Pinv = vs.Psi_inv()
    F = np.zeros((n + P, D))
    for t in range(n):
        x = F[t:t + P][::-1].reshape(-1)
        F[t + P] = vs.A @ x + Pinv @ (np.sqrt(sig2[t]) * rng.standard_normal(D))
    F = F[P + truth.burn:]
    if cfg.sv:
        vs.sv = svm.SvState(h[truth.burn:].copy(), h[truth.burn - 1].copy() if truth.burn else h0,
                            np.full(D, truth.sv_mu), np.full(D, truth.sv_phi),
                            np.full(D, truth.sv_sigma2))

    params = draw_family_params(family, N, D, truth, rng, max(cfg.M_tilde, 1))
    G = common_component(family, params, F)
    r = np.broadcast_to(np.asarray(truth.r, dtype=float), (N,)).copy()
    rho = np.zeros((N, q)) if truth.rho is None else np.array(truth.rho, dtype=float).reshape(N, q)
    E = np.zeros((T + q, N))
    V = rng.standard_normal((T + q, N)) * np.sqrt(r)
    for t in range(T + q):
        E[t] = V[t]
        for k in range(1, q + 1):
            if t - k >= 0:
                E[t] += rho[:, k - 1] * E[t - k]
    E = E[q:]
    Y = G + E
    return Y, Truth(family=family, F=F, G=G, E=E, vs=vs, r=r, rho=rho, params=params)
