import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unravel.analysis import (
    DataTable,
    InsufficientData,
    _collapse_cost,
    _prepare,
    bootstrap,
    curve_crossings,
    fss_collapse,
    index_label,
    parse_index,
    quarter_blocks,
    read_table_csv,
    renyi_entropy,
    synthetic_table,
    tripartite_i3,
)

REGIONS = ("A", "B", "C", "AB", "AC", "BC", "ABC")


@pytest.mark.parametrize("n", [0.5, 1.0, 2.0, math.inf])
def test_renyi_trivial_spectra(n):
    assert renyi_entropy([1.0], n) == 0
    assert renyi_entropy([0.5, 0.5], n) == pytest.approx(np.log(2), abs=1e-14)


def test_renyi_examples():
    assert renyi_entropy([0.9, 0.1], math.inf) == pytest.approx(-np.log(0.9), abs=1e-14)
    assert renyi_entropy([0.9, 0.1], 2) == pytest.approx(-np.log(0.82), abs=1e-14)
    assert renyi_entropy([0.9, 0.1], 1) == pytest.approx(-(0.9 * np.log(0.9) + 0.1 * np.log(0.1)), abs=1e-14)
    with pytest.raises(ValueError):
        renyi_entropy([0.0, 0.0])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=16).filter(lambda v: sum(v) > 1e-6))
@settings(max_examples=200, deadline=None)
def test_renyi_monotone_in_index(weights):
    s = [renyi_entropy(weights, n) for n in (0.5, 1.0, 2.0, math.inf)]
    assert all(a >= b - 1e-12 for a, b in zip(s, s[1:]))
    assert s[0] <= np.log(np.count_nonzero(weights)) + 1e-12


def test_index_parsing():
    assert parse_index("inf") == math.inf
    assert parse_index("1/2") == 0.5
    assert parse_index("vn") == 1.0
    assert [index_label(n) for n in (0.5, 1, 2, math.inf)] == ["1/2", "1", "2", "inf"]


def test_quarter_blocks():
    assert quarter_blocks(8) == ((0, 1), (2, 3), (4, 5), (6, 7))
    with pytest.raises(ValueError):
        quarter_blocks(10)


def test_i3_product_state_and_complement():
    assert tripartite_i3(dict.fromkeys(REGIONS, 0.0)) == 0
    ghz = dict.fromkeys(("A", "B", "C", "AB", "AC", "BC", "D"), np.log(2))
    assert tripartite_i3(ghz) == pytest.approx(np.log(2))


@given(st.lists(st.floats(0, 5), min_size=7, max_size=7))
@settings(max_examples=100, deadline=None)
def test_i3_reflection_symmetry(vals):
    s = dict(zip(REGIONS, vals))
    swapped = dict(s, A=s["C"], C=s["A"], AB=s["BC"], BC=s["AB"])
    assert tripartite_i3(swapped) == tripartite_i3(s)


def test_bootstrap():
    assert bootstrap(np.full(50, 3.0)) == (3.0, 0.0)
    x = np.random.default_rng(0).normal(1.0, 2.0, size=400)
    mean, se = bootstrap(x, seed=5)
    assert mean == pytest.approx(x.mean())
    assert abs(se / (2.0 / np.sqrt(400)) - 1) < 0.2
    assert bootstrap(x, seed=5) == (mean, se)
    with pytest.raises(InsufficientData):
        bootstrap([1.0])


def test_data_table_validation():
    with pytest.raises(ValueError):
        DataTable([8], [0.1], [1], [0.0], [0.1], [1])
    with pytest.raises(ValueError):
        DataTable([8], [0.1], [1], [0.0], [-0.1], [10])
    t = DataTable.from_samples({(8, 0.1, "1"): [1.0, 2.0, 3.0], (8, 0.1, "inf"): [0.0, 1.0]})
    assert t.indices() == [1.0, math.inf]
    assert t.select("inf").mean[0] == 0.5
    assert t.select(1).std_error[0] == pytest.approx(1 / np.sqrt(3))


def test_read_table_csv(tmp_path):
    good = tmp_path / "good.csv"
    good.write_text("L,p,index,mean,std_error,n\n8,0.1,1/2,-0.3,0.01,100\n12,0.1,inf,-0.5,0.02,100\n")
    t = read_table_csv(good)
    assert list(t.L) == [8, 12] and list(t.index) == [0.5, math.inf]
    bad = tmp_path / "bad.csv"
    bad.write_text("L,p,index,mean,std_error,n\n8,0.1,1,-0.3,0.01,100\n8,oops,1,0,0.1,100\n")
    with pytest.raises(ValueError, match="line 3"):
        read_table_csv(bad)
    missing = tmp_path / "missing.csv"
    missing.write_text("L,p,mean\n8,0.1,0\n")
    with pytest.raises(ValueError, match="missing columns"):
        read_table_csv(missing)


def test_collapse_recovers_synthetic():
    res = fss_collapse(synthetic_table(np.random.default_rng(3)), n_boot=60, seed=1)
    assert res.p_c_ci[0] <= 0.15 <= res.p_c_ci[1]
    assert res.nu_ci[0] <= 1.3 <= res.nu_ci[1]
    assert abs(res.p_c - 0.15) < 0.01
    assert set(res.to_dict()) == {"p_c", "nu", "quality", "p_c_err", "nu_err", "n_boot"}


def test_collapse_row_order_invariant():
    t = synthetic_table(np.random.default_rng(4))
    perm = np.random.default_rng(0).permutation(len(t))
    shuffled = DataTable(t.L[perm], t.rate[perm], t.index[perm], t.mean[perm], t.std_error[perm], t.n[perm])
    a = fss_collapse(t, n_boot=10, seed=2)
    b = fss_collapse(shuffled, n_boot=10, seed=2)
    assert a.to_dict() == b.to_dict()


def test_collapse_residual_minimal_at_truth():
    t = synthetic_table(np.random.default_rng(0), noise=0.0)
    t.std_error[:] = 0.02
    L, rate, y, dy, groups = _prepare(t)
    at_truth = _collapse_cost(0.15, 1.3, L, rate, y, dy, groups)
    pp, nn = np.meshgrid(np.linspace(rate.min(), rate.max(), 200), np.linspace(0.3, 4.0, 200), indexing="ij")
    cost = _collapse_cost(pp, nn, L, rate, y, dy, groups)
    far = np.hypot(pp - 0.15, nn - 1.3) >= 0.02
    assert at_truth < cost[far].min()


def test_collapse_bootstraps_trajectories():
    rng = np.random.default_rng(8)
    samples = {}
    for L in (8, 12, 16):
        for p in np.linspace(0.09, 0.21, 6):
            samples[(L, p, 1.0)] = np.tanh((p - 0.15) * L ** (1 / 1.3)) + 0.2 * rng.standard_normal(40)
    res = fss_collapse(DataTable.from_samples(samples), n_boot=30, seed=0)
    assert res.n_boot == 30
    assert res.p_c_ci[0] < res.p_c < res.p_c_ci[1]


def test_collapse_insufficient_data():
    t = synthetic_table(np.random.default_rng(0), sizes=(8, 12))
    with pytest.raises(InsufficientData):
        fss_collapse(t)
    t = synthetic_table(np.random.default_rng(0), rates=[0.1, 0.15, 0.2])
    with pytest.raises(InsufficientData):
        fss_collapse(t)


def test_curve_crossings():
    t = synthetic_table(np.random.default_rng(0), noise=0.0, sizes=(8, 16))
    (a, b, x), = curve_crossings(t)
    assert (a, b) == (8, 16)
    assert abs(x - 0.15) < 1e-12
