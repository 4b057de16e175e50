import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kernelgc.data import (
    DataError,
    TimeSeriesSystem,
    check_sample_size,
    embed,
    embed_contemporaneous,
    embed_full,
    load_csv,
    standardize,
)


def _system(*cols):
    return TimeSeriesSystem.from_array(np.column_stack(cols))


class TestSystem:
    def test_defaults_and_immutability(self):
        s = TimeSeriesSystem.from_array(np.arange(6.0).reshape(3, 2))
        assert s.names == ("x1", "x2") and s.length == 3 and s.n_series == 2
        with pytest.raises(ValueError):
            s.values[0, 0] = 1.0

    def test_index_by_name(self):
        s = TimeSeriesSystem(("a", "b"), np.zeros((3, 2)))
        assert s.index("b") == 1 and s.index(0) == 0
        with pytest.raises(DataError):
            s.index("c")

    @pytest.mark.parametrize("names,values,msg", [
        (("a",), np.zeros((3, 2)), "names given"),
        (("a", "a"), np.zeros((3, 2)), "unique"),
        (("a",), np.zeros((1, 1)), "at least 2"),
        (("a",), np.array([[1.0], [np.nan]]), "non-finite"),
    ])
    def test_invalid(self, names, values, msg):
        with pytest.raises(DataError, match=msg):
            TimeSeriesSystem(names, values)


class TestCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        s = TimeSeriesSystem(("u", "v", "w"), rng.standard_normal((300, 3)))
        s.to_csv(tmp_path / "s.csv")
        back = load_csv(tmp_path / "s.csv")
        assert back.names == s.names and back.length == 300
        np.testing.assert_array_equal(back.values, s.values)

    def test_headerless_names(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("1,2\n3,4\n5,6\n")
        s = load_csv(p, has_header=False)
        assert s.names == ("x1", "x2") and s.length == 3

    @pytest.mark.parametrize("text,msg", [
        ("", "no data rows"),
        ("a,b\n", "no data rows"),
        ("a,b\n1,2\n3\n", "ragged row at line 3"),
        ("a,b\n1,2\n3,NaN\n", "line 3, column 2"),
        ("a,b\n1,x\n", "cannot parse 'x' at line 2, column 2"),
        ("a,b\n1,inf\n2,3\n", "non-finite"),
    ])
    def test_errors(self, tmp_path, text, msg):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(DataError, match=msg):
            load_csv(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_csv(tmp_path / "nope.csv")


class TestStandardize:
    def test_simple(self):
        z = standardize(_system([1.0, 2.0, 3.0])).values[:, 0]
        np.testing.assert_allclose(z, [-1.0, 0.0, 1.0], atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        s = standardize(TimeSeriesSystem.from_array(rng.standard_normal((50, 3))))
        np.testing.assert_allclose(standardize(s).values, s.values, atol=1e-12)

    def test_constant_series(self):
        with pytest.raises(DataError, match="zero variance series x2"):
            standardize(_system([1.0, 2.0, 3.0], [5.0, 5.0, 5.0]))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(3, 40), st.integers(1, 4)),
                  elements=st.floats(-1e3, 1e3)))
    def test_moments(self, values):
        if np.any(values.std(axis=0) < 1e-3):
            return
        z = standardize(TimeSeriesSystem.from_array(values)).values
        assert np.all(np.abs(z.mean(axis=0)) < 1e-12)
        assert np.all(np.abs(z.std(axis=0, ddof=1) - 1) < 1e-12)


class TestEmbed:
    def test_worked_example(self):
        s = _system([1.0, 2.0, 3.0, 4.0], [10.0, 20.0, 30.0, 40.0])
        d = embed(s, target=1, driver=0, m=1)
        np.testing.assert_array_equal(d.Z, [[1, 10], [2, 20], [3, 30]])
        np.testing.assert_array_equal(d.y, [20, 30, 40])
        np.testing.assert_array_equal(d.X, [[10], [20], [30]])
        np.testing.assert_array_equal(d.X_driver, [[1], [2], [3]])
        assert d.column_map == ((0, 1), (1, 1))

    def test_block_order_and_oldest_lag_first(self):
        s = _system(np.arange(6.0), 10 + np.arange(6.0), 100 + np.arange(6.0))
        d = embed(s, target=0, driver=2, m=2)
        assert d.column_map == ((2, 2), (2, 1), (0, 2), (0, 1), (1, 2), (1, 1))
        np.testing.assert_array_equal(d.Z[0], [100, 101, 0, 1, 10, 11])
        np.testing.assert_array_equal(d.y, [2, 3, 4, 5])

    def test_kgc_preprocessing(self):
        rng = np.random.default_rng(3)
        s = TimeSeriesSystem.from_array(rng.standard_normal((40, 3)) + 5)
        d = embed(s, 0, 1, 2, preprocessing="kgc")
        assert np.max(np.abs(d.Z.mean(axis=0))) < 1e-12
        assert np.max(np.abs(d.X.mean(axis=0))) < 1e-12
        assert abs(d.y @ d.y - 1) < 1e-12 and abs(d.y.mean()) < 1e-12

    def test_errors(self):
        s = _system([1.0, 2.0, 3.0, 4.0], [1.0, 3.0, 2.0, 4.0])
        with pytest.raises(DataError):
            embed(s, 0, 1, 4)
        with pytest.raises(DataError, match="differ"):
            embed(s, 0, 0, 1)
        with pytest.raises(DataError):
            embed(s, 0, 1, 0)
        with pytest.raises(DataError, match="unknown preprocessing"):
            embed(s, 0, 1, 1, preprocessing="zscore")

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_round_trip_and_driver_removal(self, data):
        n_t = data.draw(st.integers(2, 4))
        T = data.draw(st.integers(4, 25))
        m = data.draw(st.integers(1, T - 1))
        values = np.random.default_rng(data.draw(st.integers(0, 2**31))).standard_normal((T, n_t))
        a, b = data.draw(st.permutations(range(n_t)))[:2]
        d = embed(TimeSeriesSystem.from_array(values), b, a, m)
        n = T - m
        for j, (series, lag) in enumerate(d.column_map):
            np.testing.assert_array_equal(d.Z[:, j], values[m - lag: m - lag + n, series])
        np.testing.assert_array_equal(d.y, values[m:, b])
        keep = [j for j, (series, _) in enumerate(d.column_map) if series != a]
        np.testing.assert_array_equal(d.X, d.Z[:, keep])
        assert d.Z.shape == (n, n_t * m) and d.X.shape == (n, (n_t - 1) * m)


class TestOtherEmbeddings:
    def test_full_is_system_order(self):
        s = _system(np.arange(5.0), np.arange(5.0) * 2)
        d = embed_full(s, 1, 2)
        assert d.column_map == ((0, 2), (0, 1), (1, 2), (1, 1)) and d.X is None

    def test_contemporaneous_counts(self):
        rng = np.random.default_rng(4)
        s3 = TimeSeriesSystem.from_array(rng.standard_normal((20, 3)))
        d = embed_contemporaneous(s3, 1, 1)
        assert d.Z.shape[1] == 5
        assert (1, 0) not in d.column_map
        assert {(0, 0), (2, 0)} <= set(d.column_map)
        np.testing.assert_array_equal(d.Z[:, d.column_map.index((2, 0))], s3.values[1:, 2])
        s2 = TimeSeriesSystem.from_array(rng.standard_normal((20, 2)))
        assert embed_contemporaneous(s2, 0, 2).Z.shape[1] == 5

    def test_sample_size_guard(self, caplog):
        check_sample_size(10, 3, 2, "kgc")
        with pytest.raises(DataError):
            check_sample_size(6, 3, 2, "kgc", strict=True)
        check_sample_size(6, 3, 2, "kpcr")
        assert "n_t*m=6" in caplog.text
