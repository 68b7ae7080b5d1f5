import csv
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_wick, complex_gaussian_moment_mc
from dnls_gauge.wick import (
    ComplexityError,
    MAX_N,
    gaussian_moment,
    label,
    pair_moment,
    rate_table,
    second_moment_diff,
    write_rate_csv,
)


def test_pair_moment_examples():
    assert pair_moment(0, 1.0) == 1.0
    assert pair_moment(1, 0.7) == 0.5
    assert pair_moment(-2, 1.0) == 0.2
    np.testing.assert_array_equal(pair_moment(np.array([0, 3]), 1.0), [1.0, 0.1])


def test_gaussian_moment_examples():
    lam = lambda n: pair_moment(n, 1.0)  # noqa: E731
    assert gaussian_moment([1], [1], lam) == 0.5
    assert gaussian_moment([1, 1], [1, 1], lam) == 2 * 0.25
    assert gaussian_moment([1, 2], [2, 1], lam) == 0.5 * 0.2
    assert gaussian_moment([1, 2], [1, 3], lam) == 0
    assert gaussian_moment([1], [1, 1], lam) == 0


@pytest.mark.parametrize("a,b", [((1, 1), (1, 1)), ((0, 2), (2, 0)), ((1, 1, 2), (2, 1, 1)), ((0, 0, 0), (0, 0, 0))])
def test_gaussian_moment_monte_carlo(a, b):
    lam = lambda n: pair_moment(n, 1.0)  # noqa: E731
    est, se = complex_gaussian_moment_mc(a, b, lam, n=400_000, seed=7)
    assert abs(est - gaussian_moment(a, b, lam)) <= 5 * se


def test_label():
    assert label((1, 0, 3, 2)) == "(2,1,4,3)"


@pytest.mark.parametrize("N", [0, 3, 7])
def test_equal_cutoffs_give_zero(N):
    w = second_moment_diff(N, N, 1.0)
    assert w.value == 0 and all(v == 0 for v in w.per_permutation.values())


@pytest.mark.parametrize("N,M,s", [(2, 1, 1.0), (3, 1, 0.7), (4, 2, 1.5), (3, 0, 1.2)])
def test_matches_brute_force(N, M, s):
    total, per = brute_wick(N, M, s)
    w = second_moment_diff(N, M, s)
    assert abs(w.value - total) <= 1e-12 * abs(total)
    for (block, sig), v in per.items():
        assert abs(w.per_permutation[(block, label(sig))] - v) <= 1e-12 * max(1.0, abs(total))


def test_structural_zeros():
    w = second_moment_diff(8, 4, 1.0)
    for (block, lab), v in w.per_permutation.items():
        sig = tuple(int(ch) - 1 for ch in lab.strip("()").split(","))
        # a contraction that identifies n1 with m1 of the same tuple sits on n1 = m1, where the weight is undefined
        if sig[0] == 0 or sig[2] == 2:
            assert v == 0, (block, lab)
    assert w.per_permutation[("zzbar", "(2,1,4,3)")] == 0.0
    assert len(w.per_permutation) == 48


def test_zero_pattern_matches_brute_force():
    _, per = brute_wick(4, 2, 1.0)
    w = second_moment_diff(4, 2, 1.0)
    for (block, sig), v in per.items():
        assert (abs(v) < 1e-12) == (abs(w.per_permutation[(block, label(sig))]) < 1e-12)


def test_regression_value():
    # cross-checked against the brute-force enumeration and Monte Carlo
    assert math.isclose(second_moment_diff(8, 4, 1.0).value, 31.11341538256021, rel_tol=1e-12)


@given(st.integers(1, 5), st.integers(0, 4), st.sampled_from([0.6, 1.0, 2.0]))
def test_nonnegative(N, M, s):
    M = min(M, N)
    assert second_moment_diff(N, M, s).value >= -1e-12


@pytest.mark.parametrize("c", [0.5, 2.0, 3.0])
def test_quartic_homogeneity(c):
    base = second_moment_diff(4, 1, 1.0)
    scaled = second_moment_diff(4, 1, 1.0, covariance=lambda n: c * pair_moment(n, 1.0))
    assert math.isclose(scaled.value, c**4 * base.value, rel_tol=1e-12)
    assert scaled.covariance_used == "override"


def test_guards():
    with pytest.raises(ComplexityError):
        second_moment_diff(MAX_N + 1, 1, 1.0)
    with pytest.raises(ValueError):
        second_moment_diff(3, 4, 1.0)


def test_rate_table_and_csv(tmp_path):
    rows = rate_table(1.0, [1, 2, 4], 6)
    assert [m for m, _ in rows] == [1, 2, 4]
    assert all(a[1] > b[1] for a, b in itertools.pairwise(rows))
    p = tmp_path / "rate.csv"
    write_rate_csv(p, rows, 1.0, 6)
    lines = p.read_text().splitlines()
    assert lines[0] == "# s=1.0,N_ref=6"
    parsed = list(csv.DictReader(lines[1:]))
    assert [int(r["M"]) for r in parsed] == [1, 2, 4]
    assert [float(r["l2_distance"]) for r in parsed] == [d for _, d in rows]
    with pytest.raises(ValueError):
        rate_table(1.0, [7], 6)
