import csv

import numpy as np
import pytest

from gpdfm import structural as sx

from conftest import make_state


def ar1_state(a=0.5, sigma2=1.0, T=20):
    return make_state(D=1, N=2, T=T, C=[[1.0], [-2.0]], A=[[a]], sigma2=sigma2, L=50.0)


def test_ar1_factor_response_is_geometric():
    spec = sx.GirfSpec(shock_sizes=(1.0,), horizon=6, every=5, n_sim=10)
    fac, obs = sx.girf(ar1_state(sigma2=4.0), 0, 1.0, spec)
    ref = 2.0 * 0.5 ** np.arange(7)
    for c in range(fac.shape[0]):
        np.testing.assert_allclose(fac[c, :, 0], ref, rtol=1e-12)
        np.testing.assert_allclose(obs[c], np.outer(ref, [1.0, -2.0]), rtol=1e-12)


def test_zero_shock_gives_zero_response_and_undefined_shares():
    spec = sx.GirfSpec(shock_sizes=(0.0,), horizon=3, every=7, n_sim=5)
    res = sx.girf_all(ar1_state(), spec)
    assert np.all(res.observable == 0)
    assert np.all(np.isnan(sx.gfevd(res.observable[0, :, 0])))


def linear_state():
    A = [[0.5, 0.1, 0.1, 0.0], [0.2, 0.3, 0.0, 0.1]]
    Psi = [[1.0, 0.0], [0.4, 1.0]]
    C = np.array([[1.0, 0.0], [0.5, 1.0], [-0.3, 0.8]])
    return make_state(D=2, P=2, N=3, T=30, C=C, A=A, Psi=Psi, sigma2=[1.0, 0.5], L=50.0)


def test_linear_responses_are_odd_and_proportional():
    spec = sx.GirfSpec(shock_sizes=(-2.0, -1.0, 1.0, 2.0), horizon=8, every=6, n_sim=20)
    res = sx.girf_all(linear_state(), spec)
    o = res.observable
    np.testing.assert_allclose(o[1], -o[2], atol=1e-12)
    np.testing.assert_allclose(o[3], 2 * o[2], atol=1e-12)
    np.testing.assert_allclose(o[0], -o[3], atol=1e-12)


def test_gfevd_matches_orthogonal_fevd_and_sums_to_one():
    cs = linear_state()
    spec = sx.GirfSpec(shock_sizes=(-1.0, 2.0), horizon=10, every=9, n_sim=5)
    res = sx.girf_all(cs, spec)
    shares = sx.gfevd_by_condition(res)
    ref = sx.linear_orthogonal_fevd(cs.vs.A, cs.vs.Psi, cs.vs.sigma2, cs.ms.C, 10)
    for a in range(2):
        for c in range(shares.shape[1]):
            np.testing.assert_allclose(shares[a, c], ref, atol=1e-12)
    np.testing.assert_allclose(shares.sum(axis=3), 1.0, atol=1e-12)


def test_quadratic_map_gives_size_and_sign_dependence():
    cs = make_state(D=1, N=1, T=20, C=[[1.0]], A=[[0.6]], L=50.0,
                    F=np.full((20, 1), 1.5))
    spec = sx.GirfSpec(shock_sizes=(-1.0, 1.0, 2.0), horizon=4, every=10, n_sim=4000)
    res = sx.girf_all(cs, spec, measure=lambda F: F ** 2)
    o = res.observable[:, 0, 0, :, 0]
    # at impact the response is 2 d mean(f) + d^2 over the simulated f
    assert o[1, 0] + o[0, 0] == pytest.approx(2.0, rel=1e-10)
    assert o[1, 0] - o[0, 0] == pytest.approx(4 * 0.6 * 1.5, abs=4 * 4 / np.sqrt(4000))
    assert not np.allclose(o[2], 2 * o[1])


def test_gfevd_shape_and_nan_handling():
    R = np.zeros((2, 3, 1))
    R[0, 1, 0] = 1.0
    sh = sx.gfevd(R)
    assert sh.shape == (1, 2, 3)
    assert np.isnan(sh[0, 0, 0])
    np.testing.assert_array_equal(sh[0, :, 2], [1.0, 0.0])


def test_size_sign_sweep_and_csv(tmp_path):
    states = [linear_state(), linear_state()]
    spec = sx.GirfSpec(shock_sizes=(-1.0, 1.0), horizon=3, every=10, n_sim=5)
    sw = sx.size_sign_sweep(states, spec, variable_names=["a", "b", "c"])
    assert sw.shares.shape == (2, 2, 3, 2, 4)
    np.testing.assert_allclose(np.nansum(sw.median, axis=2), 1.0, atol=1e-12)
    assert np.all(sw.lower <= sw.upper)
    sw.to_csv(tmp_path / "g.csv")
    with open(tmp_path / "g.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    # gfevd, gfevd_factor, girf and girf_factor each: 3 statistics x sizes x cells
    assert len(rows) == 3 * 2 * (3 * 2 * 4 + 2 * 2 * 4 + 2 * 4 * 3 + 2 * 4 * 2)
    assert {r["quantity"] for r in rows} == {"gfevd", "gfevd_factor", "girf", "girf_factor"}


def test_spec_validation_and_conditions():
    with pytest.raises(ValueError):
        sx.GirfSpec(horizon=0)
    with pytest.raises(ValueError):
        sx.GirfSpec(n_sim=0)
    np.testing.assert_array_equal(sx.GirfSpec(every=4).conditions(12, 2), [1, 5, 9])
    with pytest.raises(ValueError, match="initial conditions"):
        sx.GirfSpec(initial_conditions=(0,)).conditions(12, 2)


def test_clipped_futures_are_counted():
    cs = make_state(D=1, N=1, T=10, C=[[1.0]], A=[[1.5]], L=1.0, F=np.full((10, 1), 2.0))
    spec = sx.GirfSpec(shock_sizes=(1.0,), horizon=10, every=20, n_sim=5, clip_factor=3.0)
    res = sx.girf_all(cs, spec)
    assert res.n_clipped == 5 and np.all(np.isnan(res.observable))
