import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import cosm, sinm

from epmeas.entropic import sigma_values
from epmeas.instrument import Instrument, InstrumentError, Process, bernoulli, trivial
from epmeas.operators import CPMap, NotPositive
from epmeas.pathspace import CapExceeded, reverse_words
from epmeas.reversal import canonical_or, verify_or

from factory import hermitian, random_process


def scalar(p, label):
    return p.instrument[label].effect[0, 0].real


def test_bernoulli_reversal_is_bernoulli_swapped():
    r = canonical_or(bernoulli(0.7)).process
    assert scalar(r, "a") == pytest.approx(0.3)
    assert scalar(r, "b") == pytest.approx(0.7)


def test_fair_coin_is_self_reversed():
    b = bernoulli(0.5)
    r = canonical_or(b).process
    for a in b.alphabet:
        assert scalar(r, a) == pytest.approx(scalar(b, a))


def test_self_dual_identity_involution():
    H = hermitian(np.random.default_rng(0), 2)
    instr = Instrument({"a": CPMap([cosm(H)]), "b": CPMap([sinm(H)])})
    p = Process(instr, np.eye(2) / 2)
    for T in range(1, 9):
        t = p.table(T)
        assert np.max(np.abs(t.p - t.p_hat)) <= 1e-12


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_canonical_or_passes(seed):
    p = random_process(seed)
    q = canonical_or(p).process
    assert q.validate()
    assert np.linalg.norm(q.instrument.total.schrodinger(q.rho) - q.rho) <= 1e-9
    rep = verify_or(p, q, T_max=5)
    assert rep and rep.involution_ok


def test_canonical_or_regression_T8(cyc):
    rep = verify_or(cyc, cyc.reversal, T_max=8)
    assert rep.passed and rep.max_defect <= 1e-10


def test_one_outcome_passes():
    p = trivial(1)
    assert verify_or(p, p.reversal, T_max=8)


def test_corrupted_reversal_is_detected():
    p = random_process(5, dim=2, ell=2)
    q = p.reversal
    maps = {a: q.instrument[a] for a in q.alphabet}
    a0 = q.alphabet[0]
    maps[a0] = CPMap(maps[a0].kraus * 1.01)
    bad = Process(Instrument(maps), q.rho, q.theta, relaxed=True)
    rep = verify_or(p, bad, T_max=4)
    assert not rep
    assert rep.worst_word is not None and a0 in rep.worst_word


def test_verify_requires_same_involution():
    b = bernoulli(0.7)
    q = Process(b.reversal.instrument, b.rho)  # identity involution
    with pytest.raises(InstrumentError):
        verify_or(b, q)


def test_verify_cap():
    with pytest.raises(CapExceeded):
        verify_or(bernoulli(0.7), bernoulli(0.7).reversal, T_max=5, cap=16)


def test_non_faithful_state_rejected():
    instr = Instrument({"a": CPMap([np.diag([1.0, 0.0]), np.array([[0, 1.0], [0, 0]])])})
    p = Process(instr, np.diag([1.0, 0.0]), relaxed=True)
    with pytest.raises(NotPositive):
        canonical_or(p)


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_reversal_invariants(seed):
    p = random_process(seed)
    for T in range(1, 5):
        t = p.table(T)
        rev = reverse_words(t.index, T, p.size, p.theta.permutation)
        assert np.array_equal(reverse_words(rev, T, p.size, p.theta.permutation), t.index)
        # sigma is odd under the word reversal
        s = sigma_values(t)
        pos = np.searchsorted(t.index, rev)
        both = np.isfinite(t.log_p) & np.isfinite(t.log_p_hat)
        assert np.all(np.abs(s[both] + s[pos][both]) <= 1e-10 * (1 + np.abs(s[both])))
        # equal cardinality of supports
        assert np.count_nonzero(np.isfinite(t.log_p)) == np.count_nonzero(np.isfinite(t.log_p_hat))


def test_cycle_reversal_support_cardinality(cyc):
    for T in range(1, 7):
        t = cyc.table(T)
        assert np.count_nonzero(np.isfinite(t.log_p)) == np.count_nonzero(np.isfinite(t.log_p_hat))
