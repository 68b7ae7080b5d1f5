import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_u, spectral_functions
from oracles import gauge_potential_quadrature
from dnls_gauge.spectral import (
    AliasingError,
    SpectralFunction,
    analyze,
    evaluate,
    gauge_potential,
    l2_norm_sq,
    lp_block,
    num_shells,
    project,
    shell_mask,
    sobolev_norm_sq,
    sobolev_seminorm_sq,
)

S = SpectralFunction.from_modes


def test_construction_validates_length_and_finiteness():
    with pytest.raises(ValueError):
        SpectralFunction(2, np.zeros(4))
    with pytest.raises(ValueError):
        SpectralFunction(1, [0, np.nan, 0])
    with pytest.raises(ValueError):
        SpectralFunction(-1, [])
    u = S({1: 2.0})
    assert u[1] == 2 and u[5] == 0
    with pytest.raises(ValueError):
        u.coeffs[0] = 1  # read-only


def test_json_round_trip(tmp_path):
    u = S({-2: 1 + 2j, 0: 3, 1: -1j})
    assert SpectralFunction.loads(u.dumps()) == u
    p = tmp_path / "u.json"
    u.save(p)
    assert SpectralFunction.load(p) == u
    with pytest.raises(ValueError):
        SpectralFunction.from_dict({"cutoff": 1, "coeffs": [1, 2, 3]})
    with pytest.raises(ValueError):
        SpectralFunction.from_dict({"coeffs": []})


def test_project_examples():
    u = S({0: 1, 2: 3})
    assert np.array_equal(project(u, 1).coeffs, [0, 1, 0])
    assert project(u, u.cutoff) == u
    assert project(u, 4).cutoff == 4 and project(u, 4)[2] == 3


@given(spectral_functions(), st.integers(0, 8))
def test_project_contracts_l2(u, M):
    assert l2_norm_sq(project(u, M)) <= l2_norm_sq(u) + 1e-12


def test_lp_block_examples():
    u = S({0: 1, 1: 2, 5: 3})
    b = lp_block(u, 0)
    assert b[0] == 1 and b[1] == 2 and b[5] == 0
    kept = np.flatnonzero(shell_mask(10, 3)) - 10
    assert sorted(kept) == [-8, -7, -6, -5, 5, 6, 7, 8]


@given(spectral_functions(max_cutoff=20))
def test_lp_blocks_partition(u):
    total = sum(lp_block(u, j).coeffs for j in range(num_shells(u.cutoff)))
    assert np.array_equal(total, u.coeffs)


def test_sobolev_examples():
    assert sobolev_seminorm_sq(S({1: 1}), 1.0) == 1
    assert sobolev_seminorm_sq(S({0: 7}), 1.0) == 0
    v = sobolev_seminorm_sq(S({2: 1, -3: 2}), 0.75)
    assert math.isclose(v, 2**1.5 + 4 * 3**1.5, rel_tol=1e-14)
    assert sobolev_norm_sq(S({1: 1}), 1.0) == 2
    with pytest.raises(ValueError):
        sobolev_seminorm_sq(S({1: 1}), 0.0)


def test_gauge_potential_examples():
    assert not np.any(gauge_potential(S({0: 2.5})).coeffs)
    assert not np.any(gauge_potential(S({3: 1 - 1j})).coeffs)
    pot = gauge_potential(S({0: 1, 1: 1}))
    assert pot.cutoff == 2
    assert np.allclose(pot.coeffs, [0, 1j, 0, -1j, 0], atol=1e-15)
    x = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    assert np.allclose(evaluate(pot, 16), 2 * np.sin(x), atol=1e-14)


@given(spectral_functions(max_cutoff=8))
def test_gauge_potential_is_real_with_zero_mean(u):
    c = gauge_potential(u).coeffs
    M = (len(c) - 1) // 2
    assert c[M] == 0
    assert np.allclose(c[::-1], np.conj(c), atol=1e-12)


@given(spectral_functions(max_cutoff=8))
def test_gauge_potential_derivative_is_density(u):
    N = u.cutoff
    pot = gauge_potential(u)
    m = np.arange(-2 * N, 2 * N + 1)
    dens = np.correlate(u.coeffs, u.coeffs, "full")
    deriv = 1j * m * pot.coeffs
    assert np.allclose(deriv[m != 0], dens[m != 0], atol=1e-12)


def test_gauge_potential_matches_quadrature(rng):
    for N in (2, 5, 8):
        u = random_u(rng, N)
        pot = gauge_potential(u)
        for x in (0.3, 2.0, 4.7):
            ref = gauge_potential_quadrature(u.coeffs, x)
            val = sum(pot[m] * np.exp(1j * m * x) for m in range(-pot.cutoff, pot.cutoff + 1))
            assert abs(val.imag) < 1e-12
            assert abs(val.real - ref) < 1e-8


def test_evaluate_examples():
    assert np.allclose(evaluate(S({0: 1}), 5), 1)
    assert np.allclose(evaluate(S({1: 1}), 4), [1, 1j, -1, -1j], atol=1e-15)
    with pytest.raises(AliasingError):
        evaluate(S({2: 1}), 4)


@given(spectral_functions(max_cutoff=10), st.integers(0, 5))
def test_evaluate_analyze_round_trip(u, extra):
    G = 2 * u.cutoff + 1 + extra
    assert np.allclose(analyze(evaluate(u, G), u.cutoff), u.coeffs, atol=1e-12)


@given(spectral_functions(max_cutoff=10))
def test_parseval(u):
    G = 4 * u.cutoff + 1
    ms = float(np.mean(np.abs(evaluate(u, G)) ** 2))
    assert math.isclose(ms, l2_norm_sq(u), rel_tol=1e-12, abs_tol=1e-12)


def test_zero_function_is_legal():
    z = SpectralFunction.zeros(3)
    assert l2_norm_sq(z) == 0
    assert not np.any(gauge_potential(z).coeffs)
    assert (z - z) == z
