"""Certificates for the structural assumptions and ergodicity diagnostics.

Each check returns an :class:`AssumptionCertificate` with a status in
``certified``, ``refuted``, ``inconclusive`` (or ``horizon-certified`` for
constants that rest on a finite enumeration).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .instrument import Process
from .operators import (
    INVARIANCE_TOL,
    STRICT_POS_TOL,
    is_irreducible_family,
    is_positivity_improving,
    spectral_report,
)
from .pathspace import DEFAULT_CAP, CapExceeded, forward_log_probs, index_to_word

CERTIFIED = "certified"
REFUTED = "refuted"
INCONCLUSIVE = "inconclusive"
HORIZON = "horizon-certified"


@dataclass
class AssumptionCertificate:
    which: str
    status: str
    method: str
    constants: Dict[str, object] = field(default_factory=dict)
    witness: Optional[object] = None
    notes: List[str] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    @property
    def refuted(self) -> bool:
        return self.status == REFUTED

    def to_dict(self) -> dict:
        return {
            "which": self.which,
            "status": self.status,
            "method": self.method,
            "constants": _jsonable(self.constants),
            "witness": _jsonable(self.witness),
            "notes": list(self.notes),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return [[float(z.real), float(z.imag)] for z in x.ravel()]
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def check_A(p: Process, tol: float = INVARIANCE_TOL) -> AssumptionCertificate:
    """Invariance ``Phi^*[rho] = rho`` and faithfulness of ``rho``."""
    notes = []
    ok = True
    if p.invariance_defect > tol:
        ok = False
        notes.append(f"invariance defect {p.invariance_defect:.3e}")
    if p.lambda0 <= STRICT_POS_TOL:
        ok = False
        notes.append(f"state is not faithful (min eigenvalue {p.lambda0:.3e})")
    return AssumptionCertificate("A", CERTIFIED if ok else REFUTED, "algebraic",
                                 {"lambda0": p.lambda0, "invariance_defect": p.invariance_defect}, None, notes)


def _all_strict(p: Process, tol: float) -> Tuple[bool, Dict[str, float]]:
    eps = {a: float(np.linalg.eigvalsh(p.instrument[a].effect)[0]) for a in p.alphabet}
    return all(v > tol for v in eps.values()), eps


def check_B(p: Process, T_max: int = 6, cap: int = DEFAULT_CAP,
            strict_tol: float = STRICT_POS_TOL) -> AssumptionCertificate:
    """Equality of the supports of ``P_T`` and ``P_hat_T``.

    Certified algebraically when every letter of the process and of its
    reversal is strictly positive. Otherwise supports are compared up to
    ``T_max``: a mismatch refutes (it persists for all larger ``T``), agreement
    leaves the status inconclusive with the horizon recorded.
    """
    strict, eps = _all_strict(p, strict_tol)
    strict_rev, _ = _all_strict(p.reversal, strict_tol)
    if strict and strict_rev:
        return AssumptionCertificate("B", CERTIFIED, "algebraic", {"epsilon": eps})
    horizon = 0
    for T in range(1, T_max + 1):
        try:
            i1, _ = forward_log_probs(p, T, cap)
            i2, _ = forward_log_probs(p.reversal, T, cap)
        except CapExceeded as exc:
            return AssumptionCertificate("B", INCONCLUSIVE, "enumerative", {"epsilon": eps, "horizon": horizon},
                                         None, [str(exc)])
        diff = np.setxor1d(i1, i2)
        if diff.size:
            w = int(diff[0])
            in_p = bool(np.isin(w, i1))
            return AssumptionCertificate(
                "B", REFUTED, "enumerative", {"epsilon": eps, "horizon": T},
                {"T": T, "word": list(index_to_word(w, T, p.alphabet)),
                 "positive_under": "P" if in_p else "P_hat"})
        horizon = T
    return AssumptionCertificate("B", INCONCLUSIVE, "enumerative", {"epsilon": eps, "horizon": horizon},
                                 None, [f"supports agree up to T={horizon}"])


def gluing_family(p: Process) -> List[np.ndarray]:
    """Kraus family of ``sum_a Phi_a ⊗ Phi_hat_a``.

    For the canonical reversal this is ``V_{a,j} ⊗ V^*_{theta(a),k}``, which is
    similar to the reversal's own Kraus operators through ``1 ⊗ rho^{1/2}``.
    """
    canonical = not p.has_reversal
    ops = []
    for a in p.alphabet:
        V = p.instrument[a].kraus
        if canonical:
            W = np.conj(np.swapaxes(p.instrument[p.theta(a)].kraus, -1, -2))
        else:
            W = p.reversal.instrument[a].kraus
        for v in V:
            for w in W:
                ops.append(np.kron(v, w))
    return ops


def check_C(p: Process, tol: float = 1e-9) -> AssumptionCertificate:
    """Algebraic sufficient test for the gluing assumption.

    Certified when the gluing family acts irreducibly on the doubled space and
    the total map is irreducible with a simple eigenvalue 1. A reducible
    family gives ``inconclusive`` since the test is only sufficient.
    """
    rep = is_irreducible_family(gluing_family(p), tol)
    phi_irr = is_irreducible_family(list(p.instrument.total.kraus), tol)
    spec = spectral_report(p.instrument.total)
    consts = {"algebra_dim": rep.algebra_dim, "full_dim": rep.full_dim,
              "phi_irreducible": bool(phi_irr), "eigenvalue_one_simple": spec.eigenvalue_one_simple}
    if rep.irreducible:
        if not (phi_irr and spec.eigenvalue_one_simple):
            return AssumptionCertificate("C", INCONCLUSIVE, "algebraic", consts, None,
                                         ["gluing family irreducible but total map check failed"])
        return AssumptionCertificate("C", CERTIFIED, "algebraic", consts)
    return AssumptionCertificate("C", INCONCLUSIVE, "algebraic", consts, rep.invariant_subspace,
                                 ["gluing family is reducible; the sufficient criterion does not apply"])


def _support_words(p: Process, L: int, cap: int):
    """Words of length <= L positive under both measures, with their Schrödinger states."""
    from .pathspace import _padded_kraus

    out = []  # (word indices tuple, S, S_hat, logp, logq)
    K, Kh = _padded_kraus(p), _padded_kraus(p.reversal)
    level = [((), p.rho.astype(complex), p.reversal.rho.astype(complex))]
    out.extend(level)
    for _ in range(L):
        nxt = []
        for w, S, Sh in level:
            for a in range(p.size):
                S2 = np.einsum("kij,jl,kml->im", K[a], S, K[a].conj())
                Sh2 = np.einsum("kij,jl,kml->im", Kh[a], Sh, Kh[a].conj())
                if np.trace(S2).real > 1e-300 and np.trace(Sh2).real > 1e-300:
                    nxt.append((w + (a,), S2, Sh2))
        level = nxt
        out.extend(level)
        if len(out) > cap:
            raise CapExceeded(len(out), cap)
    return out


def _heis_words(p: Process, L: int, proc=None):
    """``Phi_nu[1]`` for every word ``nu`` of length <= L (both measures)."""
    proc = p if proc is None else proc
    maps = proc.instrument.maps()
    level = [((), np.eye(p.dim, dtype=complex))]
    out = list(level)
    for _ in range(L):
        nxt = []
        for w, H in level:
            for a, m in enumerate(maps):
                # Phi_{a nu}[1] = Phi_a[Phi_nu[1]]
                nxt.append(((a,) + w, m.heisenberg(H)))
        level = nxt
        out.extend(level)
    return dict(out)


@dataclass
class CConstants:
    tau: Optional[int]
    C_tau: Optional[float]
    per_tau: Dict[int, float]
    word_len_max: int
    status: str
    algebraic: bool = False
    witness: Dict[int, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tau": self.tau, "C_tau": self.C_tau, "per_tau": {int(k): v for k, v in self.per_tau.items()},
                "word_len_max": self.word_len_max, "status": self.status, "algebraic": self.algebraic,
                "witness": _jsonable(self.witness)}


def estimate_C_constants(p: Process, tau_max: int = 2, word_len_max: int = 3, cap: int = 200000,
                         algebraic: Optional[bool] = None) -> CConstants:
    """Finite-horizon estimate of the gluing constants ``C_tau``.

    For each ``tau`` the minimum over pairs ``(w, v)`` of words of length at most
    ``word_len_max`` (the empty word included) of
    ``max_{|x| <= tau} P(w x v) P_hat(w x v) / (P(w) P(v) P_hat(w) P_hat(v))``
    is returned. Such a minimum over finitely many pairs bounds the true
    constant from above, so positive values are labelled ``horizon-certified``.
    The selected ``tau`` maximizes the resulting superadditivity constant.
    """
    from .entropic import superadditivity_constant

    left = _support_words(p, word_len_max, cap)
    H = _heis_words(p, word_len_max + tau_max)
    Hh = _heis_words(p, word_len_max + tau_max, p.reversal)
    rights = [w for w, _, _ in left]
    S = np.array([s for _, s, _ in left])
    Sh = np.array([s for _, _, s in left])
    pw = np.einsum("nii->n", S).real
    qw = np.einsum("nii->n", Sh).real
    # P(v) for right words: stationarity gives tr(rho Phi_v[1])
    pv = np.array([np.trace(p.rho @ H[v]).real for v in rights])
    qv = np.array([np.trace(p.reversal.rho @ Hh[v]).real for v in rights])
    denom = np.outer(pw * qw, pv * qv)
    per_tau, witness = {}, {}
    best = np.zeros_like(denom)
    pads_by_len = {0: [()]}
    for t in range(1, tau_max + 1):
        pads_by_len[t] = list(itertools.product(range(p.size), repeat=t))
    for tau in range(tau_max + 1):
        for x in pads_by_len[tau]:
            G = np.array([H[x + v] for v in rights])
            Gh = np.array([Hh[x + v] for v in rights])
            num = np.einsum("nij,mji->nm", S, G).real * np.einsum("nij,mji->nm", Sh, Gh).real
            best = np.maximum(best, num / denom)
        k = np.unravel_index(int(np.argmin(best)), best.shape)
        per_tau[tau] = float(best[k])
        witness[tau] = {"w": [p.alphabet[a] for a in left[k[0]][0]], "v": [p.alphabet[a] for a in rights[k[1]]]}
    if algebraic is None:
        algebraic = check_C(p).certified
    chosen, cbest = None, -np.inf
    for tau, C in per_tau.items():
        if C > 1e-300:
            c = superadditivity_constant(p.lambda0, tau, C)
            if c > cbest + 1e-15:
                chosen, cbest = tau, c
    status = HORIZON if chosen is not None else INCONCLUSIVE
    return CConstants(chosen, per_tau.get(chosen) if chosen is not None else None, per_tau, word_len_max,
                      status, bool(algebraic), witness)


def estimate_D0(p: Process, word_len_max: int = 3, cap: int = 200000):
    """``min P(w v) / (P(w) P(v))`` over positive words of length <= ``word_len_max``.

    Returns the minimum and the minimizing pair as label lists.
    """
    from .pathspace import _padded_kraus

    K = _padded_kraus(p)
    level = [((), p.rho.astype(complex))]
    left = list(level)
    for _ in range(word_len_max):
        nxt = []
        for w, S in level:
            for a in range(p.size):
                S2 = np.einsum("kij,jl,kml->im", K[a], S, K[a].conj())
                if np.trace(S2).real > 1e-300:
                    nxt.append((w + (a,), S2))
        level = nxt
        left.extend(level)
        if len(left) > cap:
            raise CapExceeded(len(left), cap)
    H = _heis_words(p, word_len_max)
    words = [w for w, _ in left]
    S = np.array([s for _, s in left])
    G = np.array([H[v] for v in words])
    pw = np.einsum("nii->n", S).real
    pv = np.array([np.trace(p.rho @ H[v]).real for v in words])
    joint = np.einsum("nij,mji->nm", S, G).real
    ratio = joint / np.outer(pw, pv)
    ratio[np.abs(joint) <= 1e-300] = 0.0
    k = np.unravel_index(int(np.argmin(ratio)), ratio.shape)
    return float(ratio[k]), ([p.alphabet[a] for a in words[k[0]]], [p.alphabet[a] for a in words[k[1]]])


def check_D(p: Process, word_len_max: int = 3, trials: int = 64, rng_seed: int = 0,
            cap: int = 200000) -> AssumptionCertificate:
    """Quasi-Bernoulli lower bound.

    Refuted by an explicit pair ``(w, v)`` with ``P(w v) = 0`` and both factors
    positive. Certified (randomized method) when every letter is positivity
    improving. ``D0`` is the finite-horizon estimate.
    """
    try:
        D0, pair = estimate_D0(p, word_len_max, cap)
    except CapExceeded as exc:
        D0, pair = None, None
        note = [str(exc)]
    else:
        note = []
    if D0 is not None and D0 <= 0:
        return AssumptionCertificate("D", REFUTED, "enumerative", {"D0": 0.0, "word_len_max": word_len_max},
                                     {"w": pair[0], "v": pair[1]}, note)
    failures = {}
    for a in p.alphabet:
        chk = is_positivity_improving(p.instrument[a], trials, rng_seed)
        if not chk:
            failures[a] = chk.witness
    consts = {"D0": D0, "word_len_max": word_len_max, "trials": trials}
    if not failures:
        return AssumptionCertificate("D", CERTIFIED, "randomized", consts, None, note)
    return AssumptionCertificate("D", INCONCLUSIVE, "randomized", consts,
                                 {"not_positivity_improving": sorted(failures)},
                                 note + ["some letters are not positivity improving"])


@dataclass
class ErgodicityReport:
    ergodic: bool
    mixing: bool
    gap: float
    has_subleading: bool
    correlations: Optional[List[float]] = None
    decay_constant: Optional[float] = None

    def to_dict(self) -> dict:
        return {"ergodic": self.ergodic, "mixing": self.mixing,
                "gap": self.gap if np.isfinite(self.gap) else "inf",
                "has_subleading": self.has_subleading, "correlations": self.correlations,
                "decay_constant": self.decay_constant}


def cylinder_correlations(p: Process, n_max: int = 6) -> List[float]:
    """``max_{a,b} |P(w_1 = a, w_{n+1} = b) - P(a) P(b)|`` for ``n = 1..n_max``."""
    total = p.instrument.total
    eff = p.instrument.effects()
    pa = np.array([np.trace(p.rho @ e).real for e in eff])
    out = []
    # Phi^{n-1}[Phi_b[1]] for all b
    Hb = [e.copy() for e in eff]
    for n in range(1, n_max + 1):
        worst = 0.0
        for i, a in enumerate(p.alphabet):
            Sa = p.instrument[a].schrodinger(p.rho)
            for j in range(len(eff)):
                joint = np.trace(Sa @ Hb[j]).real
                worst = max(worst, abs(joint - pa[i] * pa[j]))
        out.append(worst)
        Hb = [total.heisenberg(h) for h in Hb]
    return out


def ergodicity_report(p: Process, n_max: int = 0) -> ErgodicityReport:
    """Spectral ergodicity and mixing flags, optionally with correlation decay.

    When ``n_max > 0`` the correlations of first-letter cylinders at lag ``n``
    are returned with the smallest ``C`` such that they stay below
    ``C exp(-gap n)``.
    """
    rep = spectral_report(p.instrument.total)
    ergodic = rep.eigenvalue_one_simple
    mixing = ergodic and rep.peripheral_count == 1
    corr = const = None
    if n_max > 0:
        corr = cylinder_correlations(p, n_max)
        if np.isfinite(rep.gap):
            const = float(max(c * math.exp(rep.gap * n) for n, c in enumerate(corr, start=1)))
        else:
            const = float(max(corr)) if corr else 0.0
    return ErgodicityReport(ergodic, mixing, rep.gap, rep.has_subleading, corr, const)


def certificate_bundle(p: Process, T_max: int = 6, tau_max: int = 2, word_len_max: int = 3,
                       trials: int = 64, rng_seed: int = 0, cap: int = DEFAULT_CAP) -> dict:
    """All certificates and constants as a JSON-ready dictionary."""
    A = check_A(p)
    B = check_B(p, T_max, cap)
    C = check_C(p)
    consts = estimate_C_constants(p, tau_max, word_len_max, algebraic=C.certified)
    D = check_D(p, word_len_max, trials, rng_seed)
    erg = ergodicity_report(p, n_max=6)
    return {
        "A": A.to_dict(),
        "B": B.to_dict(),
        "C": C.to_dict(),
        "C_constants": consts.to_dict(),
        "D": D.to_dict(),
        "ergodicity": erg.to_dict(),
    }
