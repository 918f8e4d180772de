import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from gpdfm import basis as gpb
from gpdfm.exceptions import ConfigError


def test_eigenvalue_and_eigenfunction_values():
    assert gpb.eigenvalue(1, 2.0) == pytest.approx((np.pi / 4) ** 2, rel=1e-15)
    # sin(pi/2) / sqrt(L) at the centre of the domain for m = 1
    assert gpb.eigenfunction_1d(0.0, 1, 4.0) == pytest.approx(0.5, rel=1e-15)
    # Dirichlet boundary
    assert abs(gpb.eigenfunction_1d(-3.0, 5, 3.0)) < 1e-15
    assert abs(gpb.eigenfunction_1d(3.0, 2, 3.0)) < 1e-14


def test_eigenfunctions_orthonormal_on_domain():
    L = 2.5
    G = np.empty((4, 4))
    for a in range(1, 5):
        for b in range(1, 5):
            G[a - 1, b - 1] = integrate.quad(
                lambda f: gpb.eigenfunction_1d(f, a, L) * gpb.eigenfunction_1d(f, b, L),
                -L, L)[0]
    np.testing.assert_allclose(G, np.eye(4), atol=1e-10)


def test_multiplicative_index_set_row_major():
    spec = gpb.BasisSpec("multiplicative", 2, 3, 1.0)
    assert spec.M == 9
    np.testing.assert_array_equal(spec.index_set[:4], [[1, 1], [1, 2], [1, 3], [2, 1]])


def test_additive_index_set_blocks():
    spec = gpb.BasisSpec("additive", 3, 2, 1.0)
    assert spec.M == 6
    np.testing.assert_array_equal(spec.column_dim, [0, 0, 1, 1, 2, 2])
    np.testing.assert_array_equal(spec.index_set[3], [0, 2, 0])


def test_cap_rejects_large_product_basis():
    with pytest.raises(ConfigError, match="cap"):
        gpb.BasisSpec("multiplicative", 4, 20, 1.0, cap=1000)


def test_unknown_kernel_named_in_error():
    with pytest.raises(ConfigError, match="periodic"):
        gpb.BasisSpec("periodic", 1, 4, 1.0)


def test_linear_kernel_is_identity_map(rng):
    spec = gpb.BasisSpec("linear", 3, 1, 1.0)
    F = rng.standard_normal((5, 3))
    np.testing.assert_array_equal(gpb.basis_values(F, spec), F)
    np.testing.assert_array_equal(gpb.weight_variances(spec, 2.5, np.ones(3)), [2.5] * 3)


def test_phi_multiplicative_matches_products(rng):
    spec = gpb.BasisSpec("multiplicative", 2, 4, 3.0)
    F = rng.uniform(-2, 2, size=(7, 2))
    Phi = gpb.basis_values(F, spec)
    for m, (j1, j2) in enumerate(spec.index_set):
        ref = gpb.eigenfunction_1d(F[:, 0], j1, 3.0) * gpb.eigenfunction_1d(F[:, 1], j2, 3.0)
        np.testing.assert_allclose(Phi[:, m], ref, rtol=1e-13, atol=1e-15)


def test_vectorized_weight_variances_match_scalar_version(rng):
    for kernel in ("additive", "multiplicative"):
        spec = gpb.BasisSpec(kernel, 2, 5, 2.0)
        xi = rng.gamma(2.0, size=4)
        ell = rng.gamma(2.0, size=(4, 2))
        V = gpb.weight_variances(spec, xi, ell)
        for i in range(4):
            ref = gpb.prior_weight_variances(spec, gpb.KernelHyper(xi[i], tuple(ell[i])))
            np.testing.assert_allclose(V[i], ref, rtol=1e-12)


def test_weight_variances_stay_positive_for_huge_lengthscale():
    spec = gpb.BasisSpec("additive", 1, 8, 1.0)
    v = gpb.weight_variances(spec, 1.0, np.array([1e4]))
    assert np.all(v > 0) and np.all(np.isfinite(np.log(v)))


def test_approx_gram_error_decreases_with_basis_size():
    F = np.linspace(-1, 1, 50)[:, None]
    hyper = gpb.KernelHyper(1.0, (1.0,))
    errs = []
    for M in (4, 8, 16, 32):
        spec = gpb.BasisSpec("additive", 1, M, 5.0)
        errs.append(np.max(np.abs(gpb.approx_gram(F, spec, hyper) - gpb.exact_gram(F, spec, hyper))))
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-3


def test_additive_gram_is_sum_of_scaled_se_kernels(rng):
    # the additive weights imply D * xi * sum_j exp(-(f_j - f_j')^2 / (2 l_j^2))
    F = rng.uniform(-0.5, 0.5, size=(6, 2))
    spec = gpb.BasisSpec("additive", 2, 40, 4.0)
    hyper = gpb.KernelHyper(0.7, (0.8, 1.3))
    K = gpb.approx_gram(F, spec, hyper)
    ref = np.zeros((6, 6))
    for j, l in enumerate(hyper.lengthscales):
        d = F[:, j][:, None] - F[:, j][None, :]
        ref += np.exp(-d ** 2 / (2 * l ** 2))
    np.testing.assert_allclose(K, 2 * 0.7 * ref, atol=1e-6)


def test_multiplicative_gram_converges_to_product_kernel(rng):
    F = rng.uniform(-0.5, 0.5, size=(5, 2))
    spec = gpb.BasisSpec("multiplicative", 2, 30, 4.0)
    hyper = gpb.KernelHyper(1.2, (0.9, 1.1))
    d2 = sum(((F[:, j][:, None] - F[:, j][None, :]) / l) ** 2
             for j, l in enumerate(hyper.lengthscales))
    np.testing.assert_allclose(gpb.approx_gram(F, spec, hyper), 1.2 * np.exp(-0.5 * d2),
                               atol=1e-6)


@given(st.floats(-3, 3), st.integers(1, 12), st.floats(0.5, 6))
def test_eigenfunction_bounded(f, m, L):
    assert abs(gpb.eigenfunction_1d(f, m, L)) <= 1 / np.sqrt(L) + 1e-12


@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0))
def test_weight_variances_decrease_in_frequency(xi, ell):
    spec = gpb.BasisSpec("additive", 1, 10, 3.0)
    v = gpb.weight_variances(spec, xi, np.array([ell]))
    assert np.all(np.diff(v) <= 0)


def test_active_columns_respect_mask():
    spec = gpb.BasisSpec("additive", 2, 3, 1.0)
    np.testing.assert_array_equal(spec.active_columns([1, 0]), [0, 1, 2])
    np.testing.assert_array_equal(spec.active_columns([0, 1]), [3, 4, 5])
    with pytest.raises(ConfigError):
        gpb.BasisSpec("multiplicative", 2, 3, 1.0).active_columns([1, 0])
