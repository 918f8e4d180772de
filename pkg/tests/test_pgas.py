import numpy as np
import pytest
from scipy import stats

from gpdfm import basis as gpb
from gpdfm import pgas
from gpdfm.exceptions import SamplerError
from gpdfm.state import VarState

from conftest import make_state


def dense_posterior(Y, Lam, R, vs):
    """Posterior of the stacked factor path by brute-force joint Gaussian algebra."""
    T, N = Y.shape
    D, P = vs.D, vs.P
    n = T * D
    Abig = np.zeros((n, n))
    for t in range(T):
        for p in range(1, P + 1):
            if t - p >= 0:
                Abig[t * D:(t + 1) * D, (t - p) * D:(t - p + 1) * D] = vs.A[:, (p - 1) * D:p * D]
    M = np.linalg.inv(np.eye(n) - Abig)
    Qbig = np.kron(np.eye(T), vs.Q())
    S = M @ Qbig @ M.T
    Z = np.kron(np.eye(T), Lam)
    Syy = Z @ S @ Z.T + np.kron(np.eye(T), np.diag(R))
    K = S @ Z.T @ np.linalg.inv(Syy)
    return K @ Y.ravel(), S - K @ Z @ S


def linear_setup(D=2, P=2, T=8, N=4, seed=0):
    rng = np.random.default_rng(seed)
    vs = VarState.initial(D, P)
    vs.A = np.array([[0.5, 0.1, 0.2, 0.0], [0.0, 0.3, 0.1, -0.1]])[:D, :D * P]
    vs.Psi = np.array([[1.0, 0.0], [0.3, 1.0]])[:D, :D]
    vs.sigma2 = np.array([1.0, 0.6])[:D]
    Lam = rng.standard_normal((N, D))
    R = rng.uniform(0.3, 1.0, N)
    Y = rng.standard_normal((T, N))
    return Y, Lam, R, vs


def test_rts_matches_dense_joint_gaussian():
    Y, Lam, R, vs = linear_setup()
    mean, cov = dense_posterior(Y, Lam, R, vs)
    m, Pm = pgas.rts_smoother_linear(Y, Lam, R, vs)
    np.testing.assert_allclose(m.ravel(), mean, atol=1e-10)
    for t in range(Y.shape[0]):
        np.testing.assert_allclose(Pm[t], cov[2 * t:2 * t + 2, 2 * t:2 * t + 2], atol=1e-10)


def test_ffbs_moments_match_dense_posterior(rng):
    Y, Lam, R, vs = linear_setup(T=5)
    mean, cov = dense_posterior(Y, Lam, R, vs)
    draws = np.array([pgas.ffbs_linear(Y, Lam, R, vs, rng).ravel() for _ in range(20000)])
    se = np.sqrt(np.diag(cov) / 20000)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4.5 * se)
    np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.03)


def test_transition_and_observation_densities(rng):
    vs = VarState.initial(2, 1)
    vs.A = np.array([[0.5, 0.1], [0.2, 0.3]])
    vs.Psi = np.array([[1.0, 0.0], [-0.4, 1.0]])
    f, x = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    got = pgas.transition_logpdf(f, x, vs.A, vs.Psi, np.array([1.0, 0.5]))
    ref = [stats.multivariate_normal(vs.A @ x[k], vs.Q(np.array([1.0, 0.5]))).logpdf(f[k])
           for k in range(5)]
    np.testing.assert_allclose(got, ref, rtol=1e-12)

    cs = make_state(D=2, N=3, kernel="additive", rho=rng.uniform(-0.5, 0.5, (3, 1)))
    y = rng.standard_normal(3)
    F = rng.standard_normal((4, 2))
    lags = rng.standard_normal((4, 1, 3))
    batch = pgas.loglik_obs(y, F, cs.ms, cs.spec, lags)
    for k in range(4):
        one = pgas.loglik_obs(y, F[k], cs.ms, cs.spec, lags[k])
        assert batch[k] == pytest.approx(one, rel=1e-13)


@pytest.mark.parametrize("kernel,q,P", [("linear", 0, 1), ("additive", 1, 2),
                                        ("multiplicative", 0, 1)])
def test_numba_and_numpy_backends_agree(kernel, q, P):
    rng = np.random.default_rng(3)
    D, N, T = 2, 4, 30
    rho = rng.uniform(-0.4, 0.4, (N, q)) if q else None
    cs = make_state(D=D, P=P, N=N, T=T, kernel=kernel, M_tilde=4, L=4.0, rho=rho, seed=3)
    cs.vs.A = 0.2 * np.eye(D, D * P)
    Y = rng.standard_normal((T, N))
    outs = [pgas.pgas_sweep(Y, cs.F, cs.vs, cs.ms, cs.spec, H=15, tau1=4, seed=5, backend=b)
            for b in ("numba", "numpy")]
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-10, atol=1e-12)
    assert not np.array_equal(outs[0], cs.F)


def test_reference_hooks_and_errors(rng):
    cs = make_state(D=1, N=2, T=10)
    Y = rng.standard_normal((10, 2))
    np.testing.assert_array_equal(pgas.pgas_sweep(Y, cs.F, cs.vs, cs.ms, cs.spec, H=1), cs.F)
    out = pgas.pgas_sweep(Y, cs.F, cs.vs, cs.ms, cs.spec, H=10, force_reference=True)
    np.testing.assert_array_equal(out, cs.F)
    with pytest.raises(SamplerError, match="shape"):
        pgas.pgas_sweep(Y, cs.F[:5], cs.vs, cs.ms, cs.spec)
    with pytest.raises(SamplerError, match="resampling"):
        pgas.pgas_sweep(Y, cs.F, cs.vs, cs.ms, cs.spec, resampling="stratified")


def test_short_pgas_chain_matches_smoother():
    rng = np.random.default_rng(8)
    T, N = 15, 3
    cs = make_state(D=1, N=N, T=T, C=[[1.0], [0.8], [-0.6]], r=0.5, A=[[0.7]], seed=8)
    Y = cs.F @ cs.ms.C.T + np.sqrt(0.5) * rng.standard_normal((T, N))
    m, Pm = pgas.rts_smoother_linear(Y, cs.ms.C, cs.ms.r, cs.vs)
    F = np.zeros((T, 1))
    draws = []
    for it in range(3000):
        F = pgas.pgas_sweep(Y, F, cs.vs, cs.ms, cs.spec, H=20, seed=2, iteration=it)
        if it >= 200:
            draws.append(F[:, 0])
    draws = np.array(draws)
    np.testing.assert_allclose(draws.mean(axis=0), m[:, 0], atol=0.08)
    np.testing.assert_allclose(draws.var(axis=0), Pm[:, 0, 0], rtol=0.2)


def test_sweep_is_reproducible_from_seed(rng):
    cs = make_state(D=2, N=3, T=12, kernel="additive", M_tilde=4)
    Y = rng.standard_normal((12, 3))
    a = pgas.pgas_sweep(Y, cs.F, cs.vs, cs.ms, cs.spec, seed=4, iteration=7)
    b = pgas.pgas_sweep(Y, cs.F, cs.vs, cs.ms, cs.spec, seed=4, iteration=7)
    np.testing.assert_array_equal(a, b)
