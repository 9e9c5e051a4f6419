"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) and then
asserts the criterion at its stated tolerance.
"""
import math
import time

import numpy as np
import pytest

from epmeas.assumptions import check_D, estimate_C_constants
from epmeas.entropic import ep_bounds, ep_monte_carlo, mean_sigma, pressure_curve, renyi_pressure, sigma_values
from epmeas.fluctuation import check_fluctuation_relation, check_jarzynski, rate_function, sigma_law
from epmeas.hypotest import chernoff_cT, errors, hoeffding_psi, log_chernoff_cT, np_test, stein_sT
from epmeas.instrument import bernoulli, coarse_grain, cycle, product
from epmeas.operators import is_irreducible_family, pauli
from epmeas.pathspace import reverse_words
from epmeas.reversal import verify_or
from epmeas.runner import run

from factory import BERNOULLI_SCENARIO, artifact_bytes, random_process, random_suite, record

# literal oracle values; literals shown to six decimals are compared at
# max(stated tolerance, half a unit in the last displayed place)
HALF_ULP = 5e-7
CYCLE_EP = 0.83178
ALPHA_41 = np.linspace(0.0, 1.0, 41)


def _tol(stated):
    return max(stated, HALF_ULP)


def _finish(k, failures, detail):
    record(k, not failures, detail if not failures else "; ".join(failures))
    assert not failures, failures


@pytest.fixture(scope="module")
def bern_curve():
    p = bernoulli(0.7)
    return pressure_curve(p, ALPHA_41, range(1, 9), estimate_C_constants(p, 0))


@pytest.fixture(scope="module")
def cycle_curve():
    p = cycle(3, 0.8)
    return pressure_curve(p, ALPHA_41, range(1, 8), estimate_C_constants(p, 2, 3))


def test_criterion_1_normalization_and_consistency():
    t0 = time.perf_counter()
    fails = []
    worst = {"norm": 0.0, "marginal": 0.0, "or": 0.0, "antisym": 0.0}
    for p in random_suite(25):
        prev = None
        for T in range(1, 7):
            t = p.table(T)
            for which in ("p", "p_hat"):
                worst["norm"] = max(worst["norm"], abs(math.exp(t.normalization(which)) - 1))
                if prev is not None:
                    ref = np.exp(prev.dense(which))
                    for drop in ("last", "first"):
                        k, v = t.marginal(drop, which)
                        dense = np.zeros(ref.size)
                        dense[k] = np.exp(v)
                        worst["marginal"] = max(worst["marginal"], float(np.max(np.abs(dense - ref))))
            # sigma(theta w) = -sigma(w), with matching infinite atoms
            s = sigma_values(t)
            rev = reverse_words(t.index, T, p.size, p.theta.permutation)
            s_rev = s[np.searchsorted(t.index, rev)]
            if not np.array_equal(np.isinf(s), np.isinf(s_rev)) or np.any(s[np.isinf(s)] != -s_rev[np.isinf(s)]):
                fails.append(f"{p.name} T={T}: infinite sigma atoms not antisymmetric")
            fin = np.isfinite(s)
            if fin.any():
                worst["antisym"] = max(worst["antisym"], float(np.max(np.abs(s[fin] + s_rev[fin]))))
            prev = t
        worst["or"] = max(worst["or"], verify_or(p, p.reversal, T_max=6).max_defect)
    elapsed = time.perf_counter() - t0
    for name in ("norm", "marginal", "or", "antisym"):
        if worst[name] > 1e-10:
            fails.append(f"{name} defect {worst[name]:.2e}")
    if elapsed > 120:
        fails.append(f"runtime {elapsed:.1f}s")
    _finish(1, fails, "norm {norm:.1e} marginal {marginal:.1e} OR {or:.1e} antisym {antisym:.1e}".format(**worst)
            + f" in {elapsed:.1f}s")


def test_criterion_2_subadditivity():
    fails, worst = [], -np.inf
    for p in random_suite(25):
        lam = p.lambda0
        for T in range(1, 5):
            for T2 in range(1, 5):
                big = p.table(T + T2)
                for which in ("p", "p_hat"):
                    joint = np.exp(big.dense(which)).reshape(p.size ** T, p.size ** T2)
                    bound = np.exp(p.table(T).dense(which))[:, None] * np.exp(p.table(T2).dense(which))[None, :] / lam
                    excess = float(np.max(joint - bound))
                    worst = max(worst, excess)
                    if excess > 1e-12:
                        fails.append(f"{p.name} T={T} T'={T2} {which}: excess {excess:.2e}")
    _finish(2, fails, f"max excess {worst:.2e}")


def test_criterion_3_bernoulli_oracle(bern_curve):
    p = bernoulli(0.7)
    fails, notes = [], []
    lb1 = ep_bounds(p, 1).lower_bounds[0]
    if abs(lb1 - 0.338919) > _tol(1e-9):
        fails.append(f"ep lower bound T=1 {lb1:.9f}")
    worst = 0.0
    for T in range(1, 9):
        v = renyi_pressure(p, 0.5, T) / T
        worst = max(worst, abs(v - (-0.087191)))
    if worst > _tol(1e-9):
        fails.append(f"e_T(0.5)/T off -0.087191 by {worst:.2e}")
    notes.append(f"e_T(0.5)/T dev {worst:.1e}")
    rate = rate_function(bern_curve, np.array([0.0]))
    i0, width = float(rate.I[0]), float(rate.I_hi[0] - rate.I_lo[0])
    if width > 1e-6:
        fails.append(f"I(0) bracket width {width:.2e}")
    if abs(i0 - 0.087191) > _tol(1e-6):
        fails.append(f"I(0)={i0:.7f} vs 0.087191")
    c1 = chernoff_cT(p, 1)
    if c1 != 0.3 and abs(c1 - 0.3) > 1e-15:
        fails.append(f"c_1={c1!r}")
    s1, _ = stein_sT(p, 1, 0.35)
    if abs(s1 - 0.3) > 1e-15:
        fails.append(f"s_1(0.35)={s1!r}")
    psi0 = float(hoeffding_psi(bern_curve, [0.0], process=p).psi[0])
    if abs(psi0 - (-0.338919)) > 1e-4:
        fails.append(f"psi(0)={psi0:.6f}")
    notes.append(f"lb1={lb1:.7f} I(0)={i0:.7f} psi(0)={psi0:.7f}")
    _finish(3, fails, " ".join(notes))


def test_criterion_4_cycle_oracle():
    t0 = time.perf_counter()
    p = cycle(3, 0.8)
    fails = []
    mc = ep_monte_carlo(p, 200, 10_000, rng_seed=2024)
    if not (CYCLE_EP - 0.03 <= mc.ci_low and mc.ci_high <= CYCLE_EP + 0.03):
        fails.append(f"MC CI [{mc.ci_low:.4f}, {mc.ci_high:.4f}]")
    rates = [mean_sigma(p, T, cap=6 ** 9).rate for T in range(1, 10)]
    if any(b < a - 1e-9 for a, b in zip(rates, rates[1:])):
        fails.append("E[sigma_T]/T not monotone")
    if max(rates) > CYCLE_EP + 1e-9:
        fails.append(f"E[sigma_T]/T max {max(rates):.9f}")
    d = check_D(p)
    if not (d.refuted and d.witness and d.witness.get("w") is not None):
        fails.append(f"D status {d.status}")
    c = estimate_C_constants(p, tau_max=2, word_len_max=3)
    if not (c.status in ("certified", "horizon-certified") and c.per_tau.get(2, 0) > 0):
        fails.append(f"C constants {c.status} per_tau={c.per_tau}")
    elapsed = time.perf_counter() - t0
    if elapsed > 180:
        fails.append(f"runtime {elapsed:.1f}s")
    _finish(4, fails, f"MC {mc.mean:.4f} [{mc.ci_low:.4f},{mc.ci_high:.4f}] rate(9)={rates[-1]:.6f} "
                      f"D refuted, C_2={c.per_tau.get(2, 0):.3g} ({c.status}) in {elapsed:.1f}s")


def test_criterion_5_fluctuation_and_jarzynski():
    fr_w, jz_w = 0.0, 0.0
    for p in random_suite(25):
        for T in range(1, 9):
            fr_w = max(fr_w, check_fluctuation_relation(sigma_law(p, T)).max_defect)
            jz_w = max(jz_w, check_jarzynski(p, T).identity_defect)
    fails = [f"{n} defect {v:.2e}" for n, v in (("FR", fr_w), ("Jarzynski", jz_w)) if v > 1e-10]
    _finish(5, fails, f"FR {fr_w:.1e} Jarzynski {jz_w:.1e}")


def test_criterion_6_symmetries(bern_curve, cycle_curve):
    fails = []
    worst = 0.0
    procs = [bernoulli(0.7), cycle(3, 0.8)] + random_suite(5)
    for p in procs:
        for T in range(1, 7):
            e = np.array([renyi_pressure(p, a, T) for a in ALPHA_41])
            fin = np.isfinite(e) & np.isfinite(e[::-1])
            if not np.array_equal(np.isfinite(e), np.isfinite(e[::-1])):
                fails.append(f"{p.name} T={T}: finiteness not symmetric")
            worst = max(worst, float(np.max(np.abs(e[fin] - e[::-1][fin]), initial=0.0)))
    if worst > 1e-10:
        fails.append(f"e_T symmetry {worst:.2e}")
    defects = {}
    for name, curve in (("bernoulli", bern_curve), ("cycle", cycle_curve)):
        ep = curve.ep_lower
        defects[name] = rate_function(curve, np.linspace(-ep, ep, 81)).symmetry_defect()
        if defects[name] > 1e-6:
            fails.append(f"I symmetry {name} {defects[name]:.2e}")
    _finish(6, fails, f"e_T {worst:.1e} I-bernoulli {defects['bernoulli']:.1e} I-cycle {defects['cycle']:.1e}")


def test_criterion_7_hypothesis_convergence():
    p = bernoulli(0.7)
    e_half = math.log(2 * math.sqrt(0.21))
    ep = 0.4 * math.log(7 / 3)
    T = 14
    ch = log_chernoff_cT(p, T) / T
    sv, _ = stein_sT(p, T, 0.2)
    st = math.log(sv) / T
    fails = []
    if abs(ch - e_half) > 0.03:
        fails.append(f"Chernoff (1/T)log c_T={ch:.4f} vs e(1/2)={e_half:.4f} gap {abs(ch - e_half):.3f}")
    if abs(st + ep) > 0.08:
        fails.append(f"Stein {st:.4f} vs -ep={-ep:.4f}")
    _finish(7, fails, f"Chernoff {ch:.4f} (target {e_half:.4f}) Stein {st:.4f} (target {-ep:.4f})")


def test_criterion_8_structural_checkers():
    fails = []
    if not is_irreducible_family([pauli("x"), pauli("z")]):
        fails.append("Pauli family not irreducible")
    if is_irreducible_family([np.eye(2)]):
        fails.append("identity family irreducible")
    rng = np.random.default_rng(8)
    block = []
    for _ in range(3):
        M = np.zeros((4, 4), dtype=complex)
        M[:2, :2] = rng.normal(size=(2, 2))
        M[2:, 2:] = rng.normal(size=(2, 2))
        block.append(M)
    if is_irreducible_family(block):
        fails.append("block-diagonal family irreducible")
    # Neyman-Pearson optimality against random tests
    beaten = 0
    for p in [bernoulli(0.7), cycle(3, 0.8)] + random_suite(5):
        for T in range(1, 7):
            t = p.table(T)
            best = np_test(t, T)
            for _ in range(200):
                a, b = errors(t, rng.random(t.index.size) < 0.5)
                if 0.5 * (a + b) < best.bayes_error - 1e-12 or (a <= best.type_I + 1e-12
                                                              and b < best.type_II - 1e-12):
                    beaten += 1
    if beaten:
        fails.append(f"NP beaten {beaten} times")
    # coarse-graining merges theta orbits; products add
    cg_viol, prod_dev = 0, 0.0
    for seed in range(10):
        p = random_process(seed, ell=3)
        orbit = {p.alphabet[0], p.theta(p.alphabet[0])}
        M = np.array([[1.0, 0.0] if a in orbit else [0.0, 1.0] for a in p.alphabet])
        c = coarse_grain(p, M, ["x", "y"])
        q = random_process(100 + seed, ell=2)
        pq = product(p, q) if p.size * q.size <= 6 else product(q, q)
        pa, pb = (p, q) if p.size * q.size <= 6 else (q, q)
        for T in range(1, 7):
            if mean_sigma(c, T).mean_sigma > mean_sigma(p, T).mean_sigma + 1e-9:
                cg_viol += 1
            if pq.size ** T <= 6 ** 6:
                tot = mean_sigma(pa, T).mean_sigma + mean_sigma(pb, T).mean_sigma
                prod_dev = max(prod_dev, abs(mean_sigma(pq, T).mean_sigma - tot))
    if cg_viol:
        fails.append(f"coarse-graining increased E[sigma_T] {cg_viol} times")
    if prod_dev > 1e-9:
        fails.append(f"product additivity {prod_dev:.2e}")
    _finish(8, fails, f"irreducibility ok, NP unbeaten, product dev {prod_dev:.1e}")


def test_criterion_9_determinism(tmp_path):
    a = run(dict(BERNOULLI_SCENARIO), str(tmp_path / "a"))
    b = run(dict(BERNOULLI_SCENARIO), str(tmp_path / "b"))
    fa, fb = artifact_bytes(tmp_path / "a"), artifact_bytes(tmp_path / "b")
    fails = []
    if not all(v == "ok" for v in a["status"].values()):
        fails.append(f"tasks failed {a['errors']}")
    if set(fa) != set(fb):
        fails.append("different artifact sets")
    diff = sorted(f for f in fa if fa.get(f) != fb.get(f))
    if diff:
        fails.append(f"differing artifacts {diff}")
    if a["checksums"] != b["checksums"]:
        fails.append("manifest checksums differ")
    _finish(9, fails, f"{len(fa)} artifacts byte-identical")
