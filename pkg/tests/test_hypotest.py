import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import cosm, sinm

from epmeas.assumptions import estimate_C_constants
from epmeas.entropic import pressure_curve
from epmeas.fluctuation import UncertifiedCurve
from epmeas.hypotest import (
    chernoff_cT, chernoff_exponent, errors, hoeffding_alpha_grid, hoeffding_psi, np_test, stein_exponent, stein_sT,
)
from epmeas.instrument import Instrument, Process, trivial
from epmeas.operators import CPMap

from factory import hermitian, random_process

EP_BERN = 0.4 * math.log(7 / 3)


def symmetric_process():
    H = hermitian(np.random.default_rng(0), 2)
    return Process(Instrument({"a": CPMap([cosm(H)]), "b": CPMap([sinm(H)])}), np.eye(2) / 2)


def test_np_bernoulli_T1(bern):
    t = np_test(bern, 1)
    assert list(t.members) == [True, False]
    assert t.type_I == pytest.approx(0.3) and t.type_II == pytest.approx(0.3)


def test_np_symmetric_process():
    p = symmetric_process()
    t = np_test(p, 3)
    assert t.members.all()
    assert chernoff_cT(p, 3) == pytest.approx(0.5, abs=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_np_saturates_chernoff(seed):
    p = random_process(seed)
    for T in range(1, 5):
        t = np_test(p, T)
        assert t.bayes_error == pytest.approx(chernoff_cT(p, T), abs=1e-12)
        assert t.type_I + t.type_II <= 1 + 1e-12


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_np_optimal_against_random_tests(seed):
    p = random_process(seed)
    rng = np.random.default_rng(seed)
    for T in range(1, 5):
        t = p.table(T)
        c = chernoff_cT(t, T)
        for _ in range(200):
            mask = rng.random(t.index.size) < 0.5
            a, b = errors(t, mask)
            assert 0.5 * (a + b) >= c - 1e-12


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_chernoff_symmetric_in_measures(seed):
    p = random_process(seed)
    t = p.table(4)
    swapped = type(t)(t.T, t.alphabet, t.index, t.log_p_hat, t.log_p)
    assert chernoff_cT(swapped, 4) == pytest.approx(chernoff_cT(t, 4), abs=1e-15)


def test_chernoff_bernoulli_T1(bern):
    assert chernoff_cT(bern, 1) == pytest.approx(0.3, abs=1e-15)


def test_chernoff_one_outcome():
    p = trivial(1)
    Ts = range(1, 31)
    curve = pressure_curve(p, T_range=Ts, constants=estimate_C_constants(p))
    rep = chernoff_exponent(p, Ts, curve, certified_C=True)
    assert all(v == pytest.approx(0.5) for v in rep.values)
    assert rep.target == 0.0 and rep.converges


def test_chernoff_bound_holds(bern):
    rep = chernoff_exponent(bern, range(1, 12))
    assert all(r <= b + 1e-12 for r, b in zip(rep.rates, rep.bound))


def test_stein_bernoulli_T1(bern):
    v, test = stein_sT(bern, 1, 0.35)
    assert v == pytest.approx(0.3, abs=1e-15)
    assert list(test.members) == [True, False]


def test_stein_one_outcome():
    for eps in (0.1, 0.5, 0.9):
        assert stein_sT(trivial(1), 3, eps)[0] == pytest.approx(1.0)


def test_stein_rejects_bad_eps(bern):
    with pytest.raises(ValueError):
        stein_sT(bern, 1, 1.0)


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_stein_monotone_in_eps(seed):
    p = random_process(seed)
    vals = [stein_sT(p, 4, e)[0] for e in np.linspace(0.05, 0.95, 10)]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


@given(st.integers(0, 10_000), st.floats(0.05, 0.95))
@settings(max_examples=15, deadline=None)
def test_stein_greedy_within_one_atom(seed, eps):
    p = random_process(seed, ell=2)
    for T in range(1, 4):
        t = p.table(T)
        greedy, test = stein_sT(t, T, eps)
        assert test.type_I <= eps + 1e-12
        n = t.index.size
        best = np.inf
        for bits in itertools.product([False, True], repeat=n):
            m = np.array(bits)
            a, b = errors(t, m)
            if a <= eps + 1e-12:
                best = min(best, b)
        assert best <= greedy + 1e-12
        assert greedy - best <= np.max(t.p_hat) + 1e-12


def test_stein_exponent_report(bern):
    rep = stein_exponent(bern, range(1, 15), 0.2, (EP_BERN, EP_BERN))
    assert rep.target == pytest.approx(-EP_BERN)
    assert abs(rep.rates[-1] + EP_BERN) <= 0.08


# Hoeffding

@pytest.fixture(scope="module")
def bern_curve(bern):
    return pressure_curve(bern, T_range=range(1, 9), constants=estimate_C_constants(bern, 0))


def test_hoeffding_grid():
    g = hoeffding_alpha_grid(np.linspace(0, 1, 5), depth=20)
    assert g.max() == 1 - 2.0 ** -20 and 1.0 not in g


def test_hoeffding_bernoulli_psi0(bern, bern_curve):
    h = hoeffding_psi(bern_curve, np.linspace(0, 1, 21), process=bern)
    assert h.psi[0] == pytest.approx(-EP_BERN, abs=1e-4)
    assert h.monotone and h.concave
    assert np.all(h.psi <= 1e-12)


def test_hoeffding_large_s(bern, bern_curve):
    h = hoeffding_psi(bern_curve, [0.0, 10.0, 100.0], process=bern)
    assert h.psi[-1] <= 0 and h.psi[-1] == pytest.approx(0.0, abs=1e-12)


def test_hoeffding_one_outcome():
    p = trivial(1)
    curve = pressure_curve(p, T_range=[1, 2], constants=estimate_C_constants(p))
    h = hoeffding_psi(curve, [0.0, 0.5, 1.0], process=p)
    assert np.allclose(h.psi, 0.0)


def test_hoeffding_requires_certified(bern):
    with pytest.raises(UncertifiedCurve):
        hoeffding_psi(pressure_curve(bern, T_range=[1]), [0.0])
