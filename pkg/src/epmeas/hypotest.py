"""Hypothesis tests between a process and its outcome reversal.

Tests are deterministic subsets of words. For a test set ``A`` the type-I
error is ``P_T(A^c)`` and the type-II error is ``P_hat_T(A)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .entropic import PressureCurve, _table, renyi_relative_entropy, sigma_values
from .instrument import Process
from .pathspace import PathTable


@dataclass
class TestSet:
    """A deterministic test on words of length ``T``.

    ``members`` is a boolean mask aligned with the table support (words outside
    the support belong to neither error). ``threshold`` records the rule
    ``sigma_T >= threshold`` when the test is of that form.
    """

    __test__ = False  # not a pytest class

    T: int
    members: np.ndarray
    type_I: float
    type_II: float
    threshold: Optional[float] = None
    exceptions: List[int] = field(default_factory=list)

    @property
    def bayes_error(self) -> float:
        return 0.5 * self.type_I + 0.5 * self.type_II


def errors(table: PathTable, members: np.ndarray):
    """Type-I and type-II errors of a test given as a mask on the support."""
    members = np.asarray(members, dtype=bool)
    p, q = table.p, table.p_hat
    return float(np.sum(p[~members])), float(np.sum(q[members]))


def np_test(p, T: int, cap: Optional[int] = None, tol: float = 1e-10) -> TestSet:
    """Neyman-Pearson set ``{sigma_T >= 0}``.

    Values of ``sigma_T`` within ``1e-12 T`` of zero are rounding residues of
    exact ties and count as zero. Checks that ``(type_I + type_II) / 2``
    equals the Chernoff quantity.
    """
    t = _table(p, T, cap)
    s = sigma_values(t)
    mem = s >= -1e-12 * max(T, 1)
    a, b = errors(t, mem)
    c = chernoff_cT(t, T)
    if abs(0.5 * (a + b) - c) > tol:
        raise ArithmeticError(f"Neyman-Pearson errors {0.5 * (a + b)} differ from c_T {c}")
    return TestSet(T, mem, a, b, threshold=0.0)


def chernoff_cT(p, T: int, cap: Optional[int] = None) -> float:
    """``c_T = (1/2) sum min(P_T, P_hat_T)``."""
    t = _table(p, T, cap)
    m = np.minimum(t.log_p, t.log_p_hat)
    m = m[np.isfinite(m)]
    return float(0.5 * np.sum(np.exp(m)))


def log_chernoff_cT(p, T: int, cap: Optional[int] = None) -> float:
    from scipy.special import logsumexp

    t = _table(p, T, cap)
    m = np.minimum(t.log_p, t.log_p_hat)
    m = m[np.isfinite(m)]
    return float(logsumexp(m) - math.log(2)) if m.size else -np.inf


@dataclass
class ExponentReport:
    T_values: List[int]
    values: List[float]
    rates: List[float]
    bound: List[float]
    target: Optional[float]
    target_bracket: Optional[tuple]
    converges: Optional[bool]
    extra: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "T": list(self.T_values),
            "value": list(self.values),
            "rate": list(self.rates),
            "bound": list(self.bound),
            "target": self.target,
            "target_bracket": list(self.target_bracket) if self.target_bracket else None,
            "converges": self.converges,
        }
        d.update(self.extra)
        return d

    def to_csv(self, name: str = "rate") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "value", name, "bound"])
        for T, v, r, b in zip(self.T_values, self.values, self.rates, self.bound):
            w.writerow([T, repr(float(v)), repr(float(r)), repr(float(b))])
        return buf.getvalue()


def chernoff_exponent(p: Process, T_range: Sequence[int], curve: Optional[PressureCurve] = None,
                      certified_C: bool = False, tol: float = 0.03, cap: Optional[int] = None) -> ExponentReport:
    """``(1/T) log c_T`` with the bound ``(e_T(1/2) - log 2)/T``.

    When ``certified_C`` is True the last rate is compared with the bracket
    midpoint of ``e(1/2)`` at tolerance ``tol``.
    """
    Ts = [int(T) for T in T_range]
    vals, rates, bound = [], [], []
    for T in Ts:
        t = p.table(T, cap)
        lc = log_chernoff_cT(t, T)
        vals.append(float(np.exp(lc)))
        rates.append(lc / T)
        bound.append((renyi_relative_entropy(t.log_p, t.log_p_hat, 0.5) - math.log(2)) / T)
    target = bracket = conv = None
    if curve is not None and np.any(np.isclose(curve.alpha_grid, 0.5)):
        lo, mid, hi = curve.value_at(0.5)
        target, bracket = mid, (lo, hi)
        if certified_C:
            conv = abs(rates[-1] - mid) <= tol
    return ExponentReport(Ts, vals, rates, bound, target, bracket, conv)


def stein_sT(p, T: int, eps: float, cap: Optional[int] = None):
    """Smallest type-II error among deterministic tests with type-I error at most ``eps``.

    Words are taken in decreasing order of ``sigma_T`` (ties by lexicographic
    index) until their ``P`` mass reaches ``1 - eps``.

    Returns
    -------
    value : float
    test : TestSet
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    t = _table(p, T, cap)
    s = sigma_values(t)
    order = np.lexsort((t.index, -s))
    pm = t.p[order]
    # P mass still missing after taking the first k words, from suffix sums
    suffix = np.concatenate([np.cumsum(pm[::-1])[::-1], [0.0]])
    need = 1.0 - eps
    total = suffix[0]
    k = int(np.argmax(total - suffix >= need - 1e-15 * max(1.0, total))) if suffix.size > 1 else 0
    if total - suffix[k] < need - 1e-15:
        k = pm.size
    # words of zero P mass would only add type-II error
    members = np.zeros(t.index.size, dtype=bool)
    members[order[:k]] = True
    members &= t.p > 0
    a, b = errors(t, members)
    thr = float(s[order[k - 1]]) if k > 0 else np.inf
    return b, TestSet(T, members, a, b, threshold=thr)


def stein_exponent(p: Process, T_range: Sequence[int], eps: float, ep_bracket: Optional[tuple] = None,
                   cap: Optional[int] = None) -> ExponentReport:
    """``(1/T) log s_T(eps)`` compared with ``-ep``."""
    import warnings

    from .operators import spectral_report

    if p.dim > 1 and not spectral_report(p.instrument.total).eigenvalue_one_simple:
        warnings.warn("eigenvalue 1 is not simple: the Stein exponent may not exist", RuntimeWarning, stacklevel=2)
    Ts = [int(T) for T in T_range]
    vals, rates = [], []
    for T in Ts:
        v, _ = stein_sT(p.table(T, cap), T, eps)
        vals.append(v)
        rates.append(math.log(v) / T if v > 0 else -np.inf)
    target = None
    if ep_bracket is not None:
        target = -float(ep_bracket[0] if len(ep_bracket) == 1 else 0.5 * (ep_bracket[0] + ep_bracket[1]))
    return ExponentReport(Ts, vals, rates, [np.nan] * len(Ts), target,
                          tuple(-x for x in ep_bracket[::-1]) if ep_bracket else None, None, {"epsilon": eps})


def hoeffding_alpha_grid(curve_alpha: np.ndarray, depth: int = 20) -> np.ndarray:
    """Grid points of ``[0, 1)`` plus ``1 - 2^-k`` for ``k = 1..depth``."""
    a = np.asarray(curve_alpha, dtype=float)
    a = a[(a >= 0) & (a < 1)]
    ref = 1.0 - 2.0 ** -np.arange(1, depth + 1)
    return np.unique(np.concatenate([a, ref]))


@dataclass
class HoeffdingCurve:
    s_grid: np.ndarray
    psi: np.ndarray
    psi_lo: np.ndarray
    psi_hi: np.ndarray
    monotone: bool
    concave: bool
    psi0_vs_ep: Optional[float] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "psi", "psi_lo", "psi_hi"])
        for row in zip(self.s_grid, self.psi, self.psi_lo, self.psi_hi):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def _pressure_on(alpha: np.ndarray, T_values, e_T: np.ndarray, shift: float) -> np.ndarray:
    # (e_T(alpha) + shift_T) / T at the largest T
    return (e_T + shift) / T_values[-1]


def hoeffding_psi(curve: PressureCurve, s_grid, process: Optional[Process] = None, depth: int = 20,
                  allow_uncertified: bool = False, cap: Optional[int] = None) -> HoeffdingCurve:
    """``psi(s) = -sup_{alpha in [0,1)} (-s alpha - e(alpha)) / (1 - alpha)``.

    ``e`` is the bracket midpoint. Points ``1 - 2^-k`` are added near the open
    endpoint; their pressures are evaluated from ``process`` tables when
    given, and otherwise interpolated linearly from the curve.
    """
    from .fluctuation import UncertifiedCurve

    if not curve.has_lower and not allow_uncertified:
        raise UncertifiedCurve("pressure curve has no certified lower bounds")
    s_grid = np.asarray(s_grid, dtype=float)
    alpha = hoeffding_alpha_grid(curve.alpha_grid, depth)
    inside = curve.bracketed
    base_a = curve.alpha_grid[inside]
    if process is not None:
        lam = curve.lambda0
        up = np.full(alpha.size, np.inf)
        lo = np.full(alpha.size, -np.inf)
        for T in curve.T_values:
            t = process.table(T, cap)
            eT = np.array([renyi_relative_entropy(t.log_p, t.log_p_hat, float(a)) for a in alpha])
            up = np.minimum(up, (eT - math.log(lam)) / T)
            if curve.c is not None:
                lo = np.maximum(lo, (eT + curve.c) / T)
        if curve.c is None:
            lo = up.copy()
    else:
        up = np.interp(alpha, base_a, curve.best_upper[inside])
        lo = np.interp(alpha, base_a, curve.best_lower[inside] if curve.has_lower else curve.best_upper[inside])
    mid = 0.5 * (up + lo)

    def transform(e):
        vals = (-s_grid[:, None] * alpha[None, :] - e[None, :]) / (1 - alpha[None, :])
        return -np.max(vals, axis=1)

    psi = transform(mid)
    # larger e gives larger psi
    p_lo, p_hi = transform(lo), transform(up)
    d = np.diff(psi)
    mono = bool(np.all(d >= -1e-9))
    conc = bool(np.all(np.diff(psi, 2) <= 1e-9)) if psi.size > 2 else True
    psi0 = None
    if curve.ep_lower is not None and s_grid.size and s_grid[0] == 0:
        psi0 = float(psi[0] + curve.ep_lower)
    return HoeffdingCurve(s_grid, psi, p_lo, p_hi, mono, conc, psi0)
