import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gpdfm import basis as gpb
from gpdfm import measurement as meas
from gpdfm.sampler import ChainState
from gpdfm.state import VarState

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_state(D=1, P=1, N=3, T=40, kernel="linear", M_tilde=6, L=5.0, A=None, Psi=None,
               sigma2=None, C=None, r=None, rho=None, F=None, seed=0):
    """A complete ChainState with chosen parameters (random where not given)."""
    rng = np.random.default_rng(seed)
    spec = gpb.BasisSpec(kernel, D, M_tilde, L)
    vs = VarState.initial(D, P)
    if A is not None:
        vs.A = np.array(A, dtype=float).reshape(D, D * P)
    if Psi is not None:
        vs.Psi = np.array(Psi, dtype=float)
    if sigma2 is not None:
        vs.sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (D,)).copy()
    if C is None:
        C = rng.standard_normal((N, spec.M))
    C = np.array(C, dtype=float).reshape(N, spec.M)
    q = 0 if rho is None else np.atleast_2d(rho).shape[1]
    ms = meas.MeasurementState(
        C=C, r=np.broadcast_to(np.asarray(1.0 if r is None else r, dtype=float), (N,)).copy(),
        xi=np.ones(N), ell=np.ones((N, D)),
        rho=np.zeros((N, 0)) if rho is None else np.array(rho, dtype=float).reshape(N, q),
        mask=np.ones((N, D), dtype=bool), tuning=meas.MhTuning.create(N))
    F = rng.standard_normal((T, D)) if F is None else np.asarray(F, dtype=float)
    return ChainState(F=F, ms=ms, vs=vs, spec=spec)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
