import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epmeas.assumptions import (
    certificate_bundle, check_A, check_B, check_C, check_D, cylinder_correlations, ergodicity_report,
    estimate_C_constants, estimate_D0,
)
from epmeas.instrument import Process, bernoulli, cycle, deform_noise, direct_sum, trivial
from epmeas.operators import depolarizing, spectral_report
from epmeas.pathspace import log_prob

from factory import random_process


def test_A_invariant_state_certifies():
    for seed in range(5):
        assert check_A(random_process(seed)).certified


def test_A_constants(bern, cyc):
    assert check_A(bern).constants["lambda0"] == 1.0
    assert check_A(cyc).constants["lambda0"] == pytest.approx(1 / 3)


def test_A_refuted_for_relaxed_state(cyc):
    p = Process(cyc.instrument, np.diag([0.5, 0.3, 0.2]), relaxed=True)
    assert check_A(p).refuted


def test_B_bernoulli_algebraic(bern):
    c = check_B(bern)
    assert c.certified and c.method == "algebraic"


def test_B_cycle_horizon(cyc):
    c = check_B(cyc, T_max=6)
    assert c.status == "inconclusive" and c.constants["horizon"] == 6


def test_B_one_way_refuted():
    c = check_B(cycle(3, 1.0), T_max=4)
    assert c.refuted and c.witness["T"] == 1
    # witness replays through the path measures
    p = cycle(3, 1.0)
    w = c.witness["word"]
    lp, lq = log_prob(p, w), log_prob(p, w, "reversed")
    assert (lp == -np.inf) != (lq == -np.inf)


def test_B_monotone_in_horizon(cyc):
    statuses = [check_B(cyc, T_max=T).status for T in range(1, 6)]
    assert "refuted" not in statuses


def test_B_cap_downgrades(cyc):
    c = check_B(cyc, T_max=6, cap=100)
    assert c.status == "inconclusive" and c.notes


def test_C_bernoulli(bern):
    assert check_C(bern).certified


def test_C_irreducible_letter():
    p = random_process(7, dim=2, ell=2, max_kraus=1)
    c = check_C(p)
    assert c.certified
    assert spectral_report(p.instrument.total).eigenvalue_one_simple


def test_C_block_sum_inconclusive():
    s = direct_sum(bernoulli(0.7), bernoulli(0.4), 0.5, overlap=["a", "b"])
    c = check_C(s)
    assert c.status == "inconclusive" and c.witness is not None


def test_C_noise_deformation_certifies(cyc):
    noisy = deform_noise(cyc, 0.1, depolarizing(3, 1.0))
    assert check_C(noisy).certified


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_C_certified_implies_simple_eigenvalue(seed):
    p = random_process(seed)
    if check_C(p).certified:
        assert spectral_report(p.instrument.total).eigenvalue_one_simple


def test_C_constants_product_measure():
    for q in (0.7, 0.2, 0.5):
        c = estimate_C_constants(bernoulli(q), tau_max=2)
        assert c.tau == 0 and c.per_tau[0] == pytest.approx(1.0, abs=1e-12)


def test_C_constants_one_outcome():
    c = estimate_C_constants(trivial(1))
    assert c.C_tau == pytest.approx(1.0)


def test_C_constants_cycle(cyc):
    c = estimate_C_constants(cyc, tau_max=2, word_len_max=3)
    assert c.per_tau[0] == 0.0
    assert c.per_tau[2] > 0
    assert c.status == "horizon-certified" and c.tau >= 1


def test_D_bernoulli(bern):
    c = check_D(bern)
    assert c.certified and c.constants["D0"] == pytest.approx(1.0, abs=1e-12)


def test_D_cycle_refuted(cyc):
    c = check_D(cyc)
    assert c.refuted
    w, v = c.witness["w"], c.witness["v"]
    assert log_prob(cyc, w) > -np.inf and log_prob(cyc, v) > -np.inf
    assert log_prob(cyc, w + v) == -np.inf


def test_D_blend_certified(cyc):
    noisy = deform_noise(cyc, 0.2, depolarizing(3, 1.0), variant="blend")
    c = check_D(noisy)
    assert c.certified and c.constants["D0"] > 0


def test_D0_estimate_cycle(cyc):
    D0, (w, v) = estimate_D0(cyc, 2)
    assert D0 == 0.0


def test_ergodicity_one_outcome():
    r = ergodicity_report(trivial(1))
    assert r.ergodic and r.mixing


def test_ergodicity_block_sum():
    s = direct_sum(bernoulli(0.7), bernoulli(0.4), 0.5, overlap=["a", "b"])
    assert not ergodicity_report(s).ergodic


def test_bernoulli_correlations_vanish(bern):
    assert max(cylinder_correlations(bern, 5)) <= 1e-15


def test_cycle_correlation_decay(cyc):
    r = ergodicity_report(cyc, n_max=8)
    assert r.mixing
    corr = np.array(r.correlations)
    bound = r.decay_constant * np.exp(-r.gap * np.arange(1, 9))
    assert np.all(corr <= bound * (1 + 1e-9))


def test_certificate_bundle_json(cyc):
    b = certificate_bundle(cyc, T_max=4)
    text = json.dumps(b)
    assert set(b) == {"A", "B", "C", "C_constants", "D", "ergodicity"}
    assert b["D"]["status"] == "refuted"
    assert "NaN" not in text
