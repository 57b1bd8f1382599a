import math
import warnings

import numpy as np
import pytest

from tdalign.series import (
    SeriesError, SeriesMatrix, SplitSpec, chronological_split, fit_scaler, gen_ar1,
    gen_random_walk, gen_sine_mix, inject_gaussian_noise, load_csv, make_windows, save_csv,
    split_borders,
)


def lag1(x):
    x = x - x.mean()
    return float(np.sum(x[1:] * x[:-1]) / np.sum(x * x))


# -- csv ----------------------------------------------------------------------

def test_load_csv_minimal(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("a\n1.0\n2.0\n")
    s = load_csv(p)
    assert (s.T, s.N) == (2, 1)
    np.testing.assert_array_equal(s.values, [[1.0], [2.0]])
    assert s.names == ("a",)


def test_load_csv_drops_date_and_keeps_order(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("date,HUFL,OT\n2016-07-01 00:00:00,5.8,30.5\n2016-07-01 01:00:00,5.6,27.8\n")
    s = load_csv(p)
    assert s.names == ("HUFL", "OT")
    np.testing.assert_array_equal(s.values, [[5.8, 30.5], [5.6, 27.8]])


def test_load_csv_names_bad_cell(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("a,b\n1,2\n3,x\n")
    with pytest.raises(SeriesError, match=r"'x'.*line 3.*'b'"):
        load_csv(p)


@pytest.mark.parametrize("text", ["", "a\n", "a\n1\n"])
def test_load_csv_too_short(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    with pytest.raises(SeriesError):
        load_csv(p)


def test_load_csv_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv")


def test_csv_roundtrip_is_exact(tmp_path, rng):
    s = SeriesMatrix(rng.normal(size=(50, 3)), ("a", "b", "c"))
    save_csv(s, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.values, s.values)


def test_series_rejects_nonfinite():
    with pytest.raises(SeriesError):
        SeriesMatrix(np.array([[1.0], [np.nan]]))


def test_series_is_read_only():
    s = SeriesMatrix(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        s.values[0, 0] = 1.0


# -- split --------------------------------------------------------------------

def test_split_example():
    s = SeriesMatrix(np.arange(100.0)[:, None])
    sp = chronological_split(s, SplitSpec((0.6, 0.2, 0.2)), lookback=10)
    np.testing.assert_array_equal(sp.train.values[:, 0], np.arange(0, 60))
    np.testing.assert_array_equal(sp.val.values[:, 0], np.arange(50, 80))
    np.testing.assert_array_equal(sp.test.values[:, 0], np.arange(70, 100))
    assert sp.borders == (60, 80, 100)


def test_split_train_only():
    s = SeriesMatrix(np.arange(10.0))
    sp = chronological_split(s, SplitSpec((1.0, 0.0, 0.0)), lookback=1)
    assert sp.train.T == 10 and sp.val is None and sp.test is None


def test_split_etth1_train_region():
    t1, t2 = split_borders(17420, SplitSpec((0.6, 0.2, 0.2)))
    assert t1 == math.floor(0.6 * 17420) == 10452
    assert t2 - t1 == 3484 and 17420 - t2 == 3484


@pytest.mark.parametrize("T", [37, 100, 101, 999, 17420])
def test_split_targets_partition_rows(T):
    s = SeriesMatrix(np.arange(float(T)))
    L = 5
    sp = chronological_split(s, SplitSpec((0.7, 0.1, 0.2)), lookback=L)
    targets = np.concatenate([sp.train.values[:, 0], sp.val.values[L:, 0], sp.test.values[L:, 0]])
    np.testing.assert_array_equal(targets, np.arange(T))


def test_split_errors():
    s = SeriesMatrix(np.arange(10.0))
    with pytest.raises(SeriesError):
        SplitSpec((0.5, 0.2, 0.2))
    with pytest.raises(SeriesError):
        SplitSpec((0.0, 0.5, 0.5))
    with pytest.raises(SeriesError):
        chronological_split(s, SplitSpec((0.6, 0.2, 0.2)), lookback=7)
    with pytest.raises(SeriesError):
        chronological_split(SeriesMatrix(np.arange(4.0)), SplitSpec((0.6, 0.2, 0.2)), lookback=1)


# -- scaling ------------------------------------------------------------------

def test_scaler_population_std():
    s = SeriesMatrix(np.array([[0.0], [2.0]]))
    sc = fit_scaler(s)
    assert sc.mean[0] == 1.0 and sc.std[0] == 1.0
    np.testing.assert_array_equal(sc.transform(s).values[:, 0], [-1.0, 1.0])


def test_scaler_constant_column():
    s = SeriesMatrix(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]))
    out = fit_scaler(s).transform(s).values
    np.testing.assert_array_equal(out[:, 0], [0.0, 0.0, 0.0])
    assert np.all(np.isfinite(out))


def test_scaler_roundtrip(rng):
    s = SeriesMatrix(rng.normal(3.0, 7.0, size=(500, 4)))
    sc = fit_scaler(s)
    back = sc.inverse_transform(sc.transform(s))
    assert np.max(np.abs(back.values - s.values)) < 1e-10


def test_scaler_uses_train_only(rng):
    full = SeriesMatrix(np.concatenate([rng.normal(0, 1, (60, 1)), rng.normal(50, 1, (40, 1))]))
    sp = chronological_split(full, SplitSpec((0.6, 0.2, 0.2)), lookback=5)
    sc = fit_scaler(sp.train)
    assert abs(sc.mean[0]) < 1.0


# -- windows ------------------------------------------------------------------

def test_windows_count_and_rows():
    s = SeriesMatrix(np.arange(5.0))
    ws = make_windows(s, 2, 2, stride=1)
    assert len(ws) == 2
    b = ws.batch()
    np.testing.assert_array_equal(b.inputs[:, :, 0], [[0, 1], [1, 2]])
    np.testing.assert_array_equal(b.targets[:, :, 0], [[2, 3], [3, 4]])
    assert len(make_windows(s, 2, 2, stride=2)) == 1


def enumerate_windows(T, L, H, stride):
    out = []
    start = 0
    while start + L + H <= T:
        out.append(start)
        start += stride
    return out


@pytest.mark.parametrize("T,L,H,stride", [(10, 3, 2, 1), (50, 7, 5, 3), (23, 4, 19, 1), (100, 10, 10, 7)])
def test_windows_match_enumeration(T, L, H, stride, rng):
    s = SeriesMatrix(rng.normal(size=(T, 2)))
    ws = make_windows(s, L, H, stride)
    starts = enumerate_windows(T, L, H, stride)
    assert len(ws) == len(starts) == (T - L - H) // stride + 1
    b = ws.batch()
    for i, st in enumerate(starts):
        np.testing.assert_array_equal(b.inputs[i], s.values[st:st + L])
        np.testing.assert_array_equal(b.targets[i], s.values[st + L:st + L + H])
    np.testing.assert_array_equal(b.anchor, b.inputs[:, -1])


def test_windows_etth1_test_region():
    T = 17420
    L, H = 336, 96
    sp = chronological_split(SeriesMatrix(np.arange(float(T))), SplitSpec((0.6, 0.2, 0.2)), L)
    ws = make_windows(sp.test, L, H)
    assert len(ws) == len(enumerate_windows(sp.test.T, L, H, 1)) == 3389
    # no target crosses the end of the series
    assert ws.batch([len(ws) - 1]).targets[0, -1, 0] == T - 1


def test_windows_too_short():
    s = SeriesMatrix(np.arange(3.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert len(make_windows(s, 2, 2)) == 0
    assert caught
    with pytest.raises(SeriesError):
        make_windows(s, 2, 2, strict=True)


# -- noise and generators -----------------------------------------------------

def test_noise_zero_is_copy(rng):
    s = SeriesMatrix(rng.normal(size=(20, 2)))
    np.testing.assert_array_equal(inject_gaussian_noise(s, 0.0, seed=1).values, s.values)


def test_noise_variance_and_determinism():
    s = SeriesMatrix(np.zeros((100_000, 10)))
    a = inject_gaussian_noise(s, 1.0, seed=3)
    b = inject_gaussian_noise(s, 1.0, seed=3)
    np.testing.assert_array_equal(a.values, b.values)
    assert 0.99 <= np.var(a.values - s.values) <= 1.01
    with pytest.raises(SeriesError):
        inject_gaussian_noise(s, -0.1, seed=0)


def test_ar1_white_noise_autocorrelation():
    x = gen_ar1(0.0, 1.0, 100_000, 1, seed=0).values[:, 0]
    assert -0.02 <= lag1(x) <= 0.02


def test_ar1_autocorrelation():
    x = gen_ar1(0.9, 1.0, 100_000, 1, seed=0).values[:, 0]
    assert 0.88 <= lag1(x) <= 0.92


def test_ar1_recursion_and_errors():
    s = gen_ar1(0.5, 2.0, 50, 3, seed=9)
    eta = np.random.default_rng(9).normal(0.0, 2.0, size=(50, 3))
    np.testing.assert_array_equal(s.values[0], 0.0)
    np.testing.assert_allclose(s.values[1:], 0.5 * s.values[:-1] + eta[1:], rtol=0, atol=1e-12)
    with pytest.raises(SeriesError):
        gen_ar1(1.0, 1.0, 10)


def test_random_walk():
    np.testing.assert_array_equal(gen_random_walk(0.0, 30, 2, seed=1).values, 0.0)
    a = gen_random_walk(1.0, 30, 2, seed=1)
    np.testing.assert_array_equal(a.values, gen_random_walk(1.0, 30, 2, seed=1).values)


def test_sine_mix_noise_free_is_sinusoid():
    s = gen_sine_mix([10.0], [2.0], 0.0, 200, 1, seed=5).values[:, 0]
    assert np.max(np.abs(s)) <= 2.0 + 1e-12
    np.testing.assert_allclose(s[10:], s[:-10], atol=1e-12)


def test_csv_date_column_must_increase(tmp_path):
    good = tmp_path / "good.csv"
    good.write_text("date,a\n2016-07-01 00:00:00,1\n2016-07-01 01:00:00,2\n")
    assert load_csv(good).values.shape == (2, 1)
    bad = tmp_path / "bad.csv"
    bad.write_text("date,a\n2016-07-01 01:00:00,1\n2016-07-01 00:00:00,2\n")
    with pytest.raises(SeriesError, match="line 3"):
        load_csv(bad)


def test_csv_unparsable_dates_only_warn(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("date,a\nmonday,1\ntuesday,2\n")
    with pytest.warns(UserWarning, match="not ISO"):
        assert load_csv(path).T == 2
