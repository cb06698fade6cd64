import numpy as np
import pytest

from polyport.data import (
    DataError,
    PriceSeries,
    cell_seed,
    convergence_study,
    optimizer_distance,
    prices_to_returns,
    read_price_csv,
    read_returns_csv,
    sample_normal,
    write_returns_csv,
    write_scatter_csv,
)
from polyport.portfolio import NormalModel, RiskPreference

from cases import FIXTURES, MV_MODEL, MV_PREF


def write(tmp_path, text, name="p.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


# --- prices and returns ----------------------------------------------------

def test_returns_examples():
    r = prices_to_returns(PriceSeries(("a", "b"), [[10.0, 20.0], [11.0, 20.0]]))
    np.testing.assert_allclose(r.values, [[0.1, 0.0]])
    r = prices_to_returns(PriceSeries(("a", "b"), [[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]))
    np.testing.assert_array_equal(r.values, np.zeros((2, 2)))


def test_price_series_validation():
    with pytest.raises(DataError):
        PriceSeries(("a", "b"), [[1.0, 2.0]])
    with pytest.raises(DataError):
        PriceSeries(("a", "b"), [[1.0, 2.0], [0.0, 2.0]])
    with pytest.raises(DataError):
        PriceSeries(("a",), [[1.0, 2.0], [1.0, 2.0]])


def test_price_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    prices = np.exp(np.cumsum(rng.normal(0, 0.02, size=(30, 3)), axis=0))
    series = PriceSeries(("x", "y", "z"), prices)
    r = prices_to_returns(series)
    rebuilt = prices[0] * np.cumprod(np.vstack([np.ones(3), 1 + r.values]), axis=0)
    np.testing.assert_allclose(rebuilt, prices, rtol=1e-12)


def test_fixture_reads(tmp_path):
    series = read_price_csv(FIXTURES / "prices_501.csv")
    assert series.prices.shape == (501, 4)
    assert series.assets == ("LHS", "SAIC", "HISG", "CYTS")


def test_returns_file_round_trip(tmp_path):
    series = read_price_csv(FIXTURES / "prices_501.csv")
    out = tmp_path / "r.csv"
    samples = write_returns_csv(out, series)
    assets, back = read_returns_csv(out)
    assert assets == series.assets
    np.testing.assert_array_equal(back.values, samples.values)
    assert out.read_text().splitlines()[1].startswith(series.dates[1])


def test_scatter_file(tmp_path):
    series = read_price_csv(FIXTURES / "prices_501.csv")
    samples = prices_to_returns(series)
    out = tmp_path / "s.csv"
    write_scatter_csv(out, series.assets, samples)
    lines = out.read_text().splitlines()
    assert lines[0] == "asset,week,return"
    assert len(lines) == 1 + 4 * 500
    name, week, value = lines[1].split(",")
    assert (name, week) == ("LHS", "1") and float(value) == samples.values[0, 0]


@pytest.mark.parametrize("text, line", [
    ("date,a,b\n2020-01-06,1,2\n2020-01-13,1,x\n", ":3:"),
    ("date,a,b\n2020-01-06,1,2\n2020-01-13,1\n", ":3:"),
    ("date,a,b\n2020-01-06,1,2\nnot-a-date,1,2\n", ":3:"),
    ("date,a,b\n2020-01-06,1,-2\n2020-01-13,1,2\n", ":2:"),
    ("when,a,b\n2020-01-06,1,2\n2020-01-13,1,2\n", ":1:"),
])
def test_csv_errors_name_the_line(tmp_path, text, line):
    with pytest.raises(DataError, match=line):
        read_price_csv(write(tmp_path, text))


def test_csv_header_only_and_missing(tmp_path):
    with pytest.raises(DataError):
        read_price_csv(write(tmp_path, "date,a,b\n"))
    with pytest.raises(DataError):
        read_price_csv(tmp_path / "missing.csv")
    with pytest.raises(DataError):
        read_price_csv(write(tmp_path, ""))


# --- sampling --------------------------------------------------------------

def test_degenerate_covariance_repeats_the_mean():
    model = NormalModel([0.1, 0.2, 0.3], np.zeros((3, 3)))
    s = sample_normal(model, 5, seed=0)
    np.testing.assert_array_equal(s.values, np.tile([0.1, 0.2, 0.3], (5, 1)))


def test_sampling_is_seed_determined():
    a = sample_normal(MV_MODEL, 50, seed=3)
    b = sample_normal(MV_MODEL, 50, seed=3)
    c = sample_normal(MV_MODEL, 50, seed=4)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_sampling_moments_at_large_N():
    s = sample_normal(MV_MODEL, 100_000, seed=5).values
    np.testing.assert_allclose(s.mean(axis=0), MV_MODEL.mean, rtol=0.03)
    cov = np.cov(s, rowvar=False)
    big = np.abs(MV_MODEL.covariance) > 0.3
    np.testing.assert_allclose(cov[big], MV_MODEL.covariance[big], rtol=0.03)


def test_sampling_rejects_bad_N():
    with pytest.raises(ValueError):
        sample_normal(MV_MODEL, 0, seed=0)


# --- study helpers ---------------------------------------------------------

def test_optimizer_distance_examples():
    assert optimizer_distance([0.5, 0.5], [[0.5, 0.5]]) == 0.0
    assert optimizer_distance([1.0, 0.0], [[0.0, 1.0], [0.8, 0.2]]) == pytest.approx(np.sqrt(0.08))
    with pytest.raises(ValueError):
        optimizer_distance([1.0, 0.0], [])
    with pytest.raises(ValueError):
        optimizer_distance([1.0, 0.0], [[1.0, 0.0, 0.0]])


def test_cell_seed_is_stable_and_distinct():
    assert cell_seed(2024, 100, 0) == cell_seed(2024, 100, 0)
    seeds = {cell_seed(2024, N, r) for N in (100, 1000) for r in range(20)}
    assert len(seeds) == 40
    assert 0 <= cell_seed(0, 1, 0) < 2 ** 64


def test_study_with_no_dispersion_hits_the_reference():
    model = NormalModel([0.9, 0.6, 0.4], np.zeros((3, 3)))
    rep = convergence_study(model, RiskPreference([0.75, 0.25]), None, [10], 3, base_seed=1)
    np.testing.assert_allclose(rep.reference, [1.0, 0.0, 0.0], atol=1e-6)
    for cell in rep.cells:
        assert cell.distance <= 1e-6


def test_study_medians_shrink_with_N():
    rep = convergence_study(MV_MODEL, MV_PREF, None, [100, 10_000], 5, base_seed=7)
    assert rep.median_distance(10_000) < rep.median_distance(100)
    assert len(rep.for_N(100)) == 5


def test_study_is_reproducible():
    a = convergence_study(MV_MODEL, MV_PREF, None, [50], 3, base_seed=11)
    b = convergence_study(MV_MODEL, MV_PREF, None, [50], 3, base_seed=11)
    assert a.cells == b.cells


def test_study_validation():
    with pytest.raises(ValueError):
        convergence_study(MV_MODEL, MV_PREF, None, [], 3, base_seed=0)
    with pytest.raises(ValueError):
        convergence_study(MV_MODEL, MV_PREF, None, [100, 10], 3, base_seed=0)
    with pytest.raises(ValueError):
        convergence_study(MV_MODEL, MV_PREF, None, [10], 0, base_seed=0)
    with pytest.raises(ValueError):
        convergence_study(MV_MODEL, MV_PREF, [0.5, 0.5], [10], 1, base_seed=0)
