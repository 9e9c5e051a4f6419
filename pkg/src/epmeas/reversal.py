"""Outcome reversal: the canonical construction and a numerical verifier."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .instrument import Instrument, InstrumentError, Process
from .operators import STRICT_POS_TOL, CPMap, dagger, psd_power


@dataclass
class ReversedProcess:
    """A process tagged as the outcome reversal of ``parent``."""

    process: Process
    parent: Process
    canonical: bool

    @property
    def theta(self):
        return self.process.theta


def canonical_or(p: Process, floor: float = STRICT_POS_TOL) -> ReversedProcess:
    """Canonical outcome reversal.

    ``Phi_hat_a[X] = rho^{-1/2} Phi^*_{theta(a)}[rho^{1/2} X rho^{1/2}] rho^{-1/2}``
    with the same state. In the library convention its Kraus operators are
    ``rho^{1/2} V^*_{theta(a),k} rho^{-1/2}``.

    Raises
    ------
    NotPositive
        If ``rho`` is not strictly positive.
    """
    if p.lambda0 <= floor:
        from .operators import NotPositive

        raise NotPositive(f"state is not faithful (min eigenvalue {p.lambda0:.3e})")
    r_half = psd_power(p.rho, 0.5)
    r_mhalf = psd_power(p.rho, -0.5, floor)
    maps = {}
    for a in p.alphabet:
        V = p.instrument[p.theta(a)].kraus
        maps[a] = CPMap(r_half @ dagger(V) @ r_mhalf)
    instr = Instrument(maps)
    rev = Process(instr, p.rho, p.theta, relaxed=p.relaxed, name=f"rev({p.name})")
    if not p.relaxed:
        report = instr.validate()
        if not report.valid:
            raise InstrumentError("canonical reversal failed validation: " + "; ".join(report.failures))
    return ReversedProcess(rev, p, True)


@dataclass(frozen=True)
class ORReport:
    passed: bool
    max_defect: float
    worst_T: int
    worst_word: Optional[Tuple[str, ...]]
    T_max: int
    involution_ok: bool

    def __bool__(self):
        return self.passed

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_defect": self.max_defect,
            "worst_T": self.worst_T,
            "worst_word": list(self.worst_word) if self.worst_word is not None else None,
            "T_max": self.T_max,
            "involution_ok": self.involution_ok,
        }


def verify_or(p: Process, q: Process, T_max: int = 8, tol: float = 1e-10,
              cap: Optional[int] = None) -> ORReport:
    """Check ``P_hat_T(w) = P_T(Theta_T w)`` for ``T <= T_max``.

    ``q`` plays the role of the reversal and must share alphabet and involution
    with ``p``. The defect is the absolute probability difference.

    Raises
    ------
    CapExceeded
        When some ``l**T`` exceeds ``cap``.
    """
    from .pathspace import DEFAULT_CAP, forward_log_probs, reverse_words

    if q.alphabet != p.alphabet or q.theta != p.theta:
        raise InstrumentError("reversal candidate must share the alphabet and the involution")
    cap = DEFAULT_CAP if cap is None else cap
    worst, worst_T, worst_word = 0.0, 0, None
    inv_ok = True
    ell = p.size
    for T in range(1, T_max + 1):
        idx_p, lp = forward_log_probs(p, T, cap)
        idx_q, lq = forward_log_probs(q, T, cap)
        rev_idx = reverse_words(idx_p, T, ell, p.theta.permutation)
        back = reverse_words(rev_idx, T, ell, p.theta.permutation)
        inv_ok &= bool(np.array_equal(back, idx_p))
        # dense comparison on the union of supports
        keys = np.union1d(rev_idx, idx_q)
        a = np.zeros(keys.size)
        order = np.argsort(rev_idx)
        a[np.searchsorted(keys, rev_idx[order])] = np.exp(lp[order])
        b = np.zeros(keys.size)
        b[np.searchsorted(keys, idx_q)] = np.exp(lq)
        diff = np.abs(a - b)
        if diff.size and diff.max() > worst:
            k = int(np.argmax(diff))
            worst, worst_T = float(diff[k]), T
            from .pathspace import index_to_word

            worst_word = index_to_word(int(keys[k]), T, p.alphabet)
    return ORReport(worst <= tol and inv_ok, worst, worst_T, worst_word, T_max, inv_ok)
