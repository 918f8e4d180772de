import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpdfm import data
from gpdfm.exceptions import ConfigError, DomainError


def test_tcode_values_by_hand():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    np.testing.assert_array_equal(data.apply_tcode(x, 1), x)
    np.testing.assert_array_equal(data.apply_tcode(x, 2), [1, 2, 4])
    np.testing.assert_array_equal(data.apply_tcode(x, 3), [1, 2])
    np.testing.assert_allclose(data.apply_tcode(x, 5), [np.log(2)] * 3, rtol=1e-15)
    np.testing.assert_allclose(data.apply_tcode(x, 6), [0, 0], atol=1e-15)
    # growth rates are all 1, so their first difference is 0
    np.testing.assert_allclose(data.apply_tcode(x, 7), [0, 0], atol=1e-15)


def test_log_codes_reject_nonpositive():
    with pytest.raises(DomainError, match="positive"):
        data.apply_tcode(np.array([1.0, 0.0, 2.0]), 5, "GDP")


def test_unknown_code():
    with pytest.raises(ConfigError, match="unknown transform code"):
        data.apply_tcode(np.ones(3), 9)


@pytest.mark.parametrize("code", data.TCODES)
def test_invert_tcode_round_trip(code, rng):
    x = np.exp(np.cumsum(0.01 + 0.02 * rng.standard_normal(30))) * 100
    z = data.apply_tcode(x, code)
    k = data.DIFF_ORDER[code]
    back = data.invert_tcode(z, code, x[:k] if k else [])
    np.testing.assert_allclose(back, x[k:], rtol=1e-10)


@given(arrays(float, st.tuples(st.integers(5, 30), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3)))
def test_standardize_inverts_exactly(X):
    X = X + np.arange(X.shape[0])[:, None] * np.linspace(1, 2, X.shape[1])
    p = data.standardize(X)
    np.testing.assert_allclose(p.raw(), X, rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(p.Y.mean(axis=0), 0, atol=1e-10)
    np.testing.assert_allclose(p.Y.std(axis=0, ddof=1), 1, rtol=1e-10)


def test_standardize_zero_variance_names_series():
    X = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
    with pytest.raises(DomainError, match="flat"):
        data.standardize(X, ["ok", "flat"])


def test_pca_init_scaling_sign_and_domain(rng):
    f = rng.standard_normal(200)
    Y = np.outer(f, [1.0, 0.8, 0.6, -0.5]) + 0.1 * rng.standard_normal((200, 4))
    pc = data.pca_init(data.standardize(Y).Y, 1, L_scale=1.2)
    assert pc.F0.std(ddof=1) == pytest.approx(1.0)
    assert np.corrcoef(pc.F0[:, 0], f)[0, 1] > 0.99
    assert pc.L == pytest.approx(1.2 * np.abs(pc.F0).max())


def test_pca_init_rejects_too_many_factors(rng):
    with pytest.raises(ConfigError, match="exceeds"):
        data.pca_init(rng.standard_normal((10, 3)), 4)


def test_csv_round_trip_with_code_row(tmp_path, rng):
    X = np.exp(rng.standard_normal((12, 3)))
    path = tmp_path / "p.csv"
    data.write_panel_csv(path, X, ["a", "b", "c"], tcodes=[1, 2, 5])
    raw = data.read_panel_csv(path)
    assert raw.tcodes == [1, 2, 5]
    np.testing.assert_array_equal(raw.values, X)
    Z, dates = data.transform_panel(raw)
    assert Z.shape == (11, 3) and dates[0] == raw.dates[1]
    np.testing.assert_allclose(Z[:, 2], np.diff(np.log(X[:, 2])))


def test_separate_tcode_file(tmp_path, rng):
    X = rng.standard_normal((6, 2))
    data.write_panel_csv(tmp_path / "p.csv", X, ["a", "b"])
    (tmp_path / "codes.csv").write_text("a,b\n1,2\n")
    raw = data.read_panel_csv(tmp_path / "p.csv", tmp_path / "codes.csv")
    assert raw.tcodes == [1, 2]
    with pytest.raises(ConfigError, match="no transform-code row"):
        data.read_panel_csv(tmp_path / "p.csv")


def test_ragged_start_is_trimmed_to_balanced_sample():
    vals = np.array([[np.nan, 1.0], [2.0, 2.0], [3.0, 4.0], [5.0, 8.0]])
    raw = data.RawPanel(["a", "b"], ["1", "2", "3", "4"], vals, [2, 1])
    X, dates = data.transform_panel(raw)
    assert dates == ["3", "4"]
    np.testing.assert_array_equal(X, [[1.0, 4.0], [2.0, 8.0]])


def test_interior_gap_rejected():
    vals = np.array([[1.0], [np.nan], [3.0]])
    with pytest.raises(DomainError, match="interior"):
        data.transform_panel(data.RawPanel(["a"], ["1", "2", "3"], vals, [1]))
