"""Law of ``sigma_T / T``, finite-time fluctuation relation, Jarzynski identity and rate function."""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .entropic import PressureCurve, _table, sigma_values
from .instrument import Process


class UncertifiedCurve(ValueError):
    """The pressure curve has no certified lower bounds."""


@dataclass
class SigmaLaw:
    """Atoms of the law of ``sigma_T / T`` under ``P_T`` and ``P_hat_T``.

    Masses are stored as logs. ``plus_inf_mass`` is the ``P`` mass of words with
    ``P_hat = 0``; ``minus_inf_mass`` the ``P_hat`` mass of words with ``P = 0``.
    """

    T: int
    s: np.ndarray
    log_mass_p: np.ndarray
    log_mass_p_hat: np.ndarray
    plus_inf_mass: float = 0.0
    minus_inf_mass: float = 0.0

    @property
    def mass_p(self) -> np.ndarray:
        return np.exp(self.log_mass_p)

    @property
    def mass_p_hat(self) -> np.ndarray:
        return np.exp(self.log_mass_p_hat)

    @property
    def has_infinite_atoms(self) -> bool:
        return self.plus_inf_mass > 0 or self.minus_inf_mass > 0

    def total_mass(self) -> float:
        return float(np.sum(self.mass_p)) + self.plus_inf_mass

    def atoms(self) -> List[Tuple[float, float, float]]:
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.s, self.mass_p, self.mass_p_hat)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "mass_p", "mass_p_hat", "log_mass_p", "log_mass_p_hat"])
        for s, a, b in zip(self.s, self.log_mass_p, self.log_mass_p_hat):
            w.writerow([repr(float(s)), repr(float(np.exp(a))), repr(float(np.exp(b))), repr(float(a)), repr(float(b))])
        if self.plus_inf_mass:
            w.writerow(["inf", repr(self.plus_inf_mass), "0.0", repr(math.log(self.plus_inf_mass)), "-inf"])
        if self.minus_inf_mass:
            w.writerow(["-inf", "0.0", repr(self.minus_inf_mass), "-inf", repr(math.log(self.minus_inf_mass))])
        return buf.getvalue()


def _cluster(values: np.ndarray, tol: float) -> np.ndarray:
    """Cluster labels for sorted values; a new cluster starts at gaps > tol."""
    if values.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([[0], np.cumsum(np.diff(values) > tol)])


def sigma_law(p, T: int, cluster_tol: Optional[float] = None, cap: Optional[int] = None) -> SigmaLaw:
    """Exact law of ``sigma_T / T``.

    Values of ``sigma_T`` within ``cluster_tol`` (default ``1e-11 T``, well above
    rounding noise and below typical gaps between distinct values) are merged,
    and atoms at ``s`` and ``-s`` are snapped to exactly opposite positions.
    """
    t = _table(p, T, cap)
    tol = 1e-11 * max(T, 1) if cluster_tol is None else cluster_tol
    sig = sigma_values(t)
    fin = np.isfinite(sig)
    plus = float(np.sum(np.exp(t.log_p[sig == np.inf])))
    minus = float(np.sum(np.exp(t.log_p_hat[sig == -np.inf])))
    sv, lp, lq = sig[fin], t.log_p[fin], t.log_p_hat[fin]
    order = np.argsort(sv, kind="stable")
    sv, lp, lq = sv[order], lp[order], lq[order]
    lab = _cluster(sv, tol)
    n = int(lab[-1]) + 1 if lab.size else 0
    centers = np.zeros(n)
    mp = np.full(n, -np.inf)
    mq = np.full(n, -np.inf)
    for k in range(n):
        sel = lab == k
        centers[k] = float(np.mean(sv[sel]))
        mp[k] = logsumexp(lp[sel])
        mq[k] = logsumexp(lq[sel])
    # pair s with -s
    for k in range(n):
        j = int(np.argmin(np.abs(centers + centers[k])))
        if abs(centers[j] + centers[k]) <= tol:
            m = 0.5 * (centers[k] - centers[j])
            centers[k], centers[j] = m, -m
    if n and np.min(np.abs(centers)) <= tol:
        centers[np.abs(centers) <= tol] = 0.0
    return SigmaLaw(T, centers / T if T else centers, mp, mq, plus, minus)


@dataclass(frozen=True)
class FRReport:
    max_defect: float
    worst_s: Optional[float]
    n_atoms: int
    unpaired: int

    def __bool__(self):
        return self.max_defect <= 1e-10


def check_fluctuation_relation(law: SigmaLaw) -> FRReport:
    """Max over atoms of ``|Q(-s) / (exp(-T s) Q(s)) - 1|``, evaluated in logs.

    An atom whose mirror image is missing contributes a defect of 1.
    """
    T = law.T
    worst, worst_s, unpaired = 0.0, None, 0
    s = law.s
    for k in range(s.size):
        j = int(np.argmin(np.abs(s + s[k]))) if s.size else -1
        if j < 0 or abs(s[j] + s[k]) > 1e-12 * max(1.0, abs(s[k])):
            d = 1.0
            unpaired += 1
        else:
            d = abs(math.expm1(law.log_mass_p[j] - (-T * s[k] + law.log_mass_p[k])))
        if d > worst:
            worst, worst_s = d, float(s[k])
    return FRReport(worst, worst_s, int(s.size), unpaired)


@dataclass(frozen=True)
class JarzynskiReport:
    identity_defect: float
    inequality_value: float
    support_mismatch: bool
    missing_mass: float

    def to_dict(self) -> dict:
        return dict(identity_defect=self.identity_defect, inequality_value=self.inequality_value,
                    support_mismatch=self.support_mismatch, missing_mass=self.missing_mass)


def check_jarzynski(p, T: int, cap: Optional[int] = None) -> JarzynskiReport:
    """``|E[exp(-sigma_T)] - 1|`` and ``E[sigma_T]/T``.

    With ``exp(-inf) = 0`` the expectation equals the ``P_hat`` mass of the
    support of ``P``; when supports differ the defect equals the missing mass
    and ``support_mismatch`` is set.
    """
    t = _table(p, T, cap)
    on = np.isfinite(t.log_p) & np.isfinite(t.log_p_hat)
    val = float(np.exp(logsumexp(t.log_p_hat[on]))) if on.any() else 0.0
    missing = float(np.sum(np.exp(t.log_p_hat[~np.isfinite(t.log_p)])))
    mismatch = bool(np.any(np.isfinite(t.log_p) != np.isfinite(t.log_p_hat)))
    from .entropic import relative_entropy

    ineq = relative_entropy(t.log_p, t.log_p_hat) / T if T else 0.0
    return JarzynskiReport(abs(val - 1.0), ineq, mismatch, missing)


@dataclass
class RateFunction:
    """Discrete Legendre transform of bracketed pressures.

    ``I = -min_alpha (alpha s + e_mid(alpha))``; ``I_lo`` and ``I_hi`` come from the
    upper and lower pressure envelopes, so the exact transform of the grid
    restricted limit pressure lies in ``[I_lo, I_hi]``.
    """

    s_grid: np.ndarray
    I: np.ndarray
    I_lo: np.ndarray
    I_hi: np.ndarray
    alpha_range: Tuple[float, float]
    validity: Tuple[float, float]
    scope: str  # "local" or "global"
    certified: bool
    zero_at_ep: Optional[float] = None
    argmin_alpha: Optional[np.ndarray] = field(default=None, repr=False)
    alpha: Optional[np.ndarray] = field(default=None, repr=False)
    e_mid: Optional[np.ndarray] = field(default=None, repr=False)

    def evaluate(self, s) -> np.ndarray:
        """Transform of the midpoint pressures at arbitrary ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return _legendre(self.alpha, self.e_mid, s)[0]

    @property
    def err_lo(self) -> np.ndarray:
        return self.I - self.I_lo

    @property
    def err_hi(self) -> np.ndarray:
        return self.I_hi - self.I

    def __call__(self, s: float) -> float:
        i = int(np.argmin(np.abs(self.s_grid - s)))
        if abs(self.s_grid[i] - s) > 1e-12 * max(1.0, abs(s)):
            raise KeyError(f"s={s} is not on the grid")
        return float(self.I[i])

    def symmetry_defect(self, within_validity: bool = True) -> float:
        """``max |I(-s) - I(s) - s|`` over grid points whose mirror is on the grid."""
        worst = 0.0
        lo, hi = self.validity
        for k, s in enumerate(self.s_grid):
            if within_validity and not (lo - 1e-12 <= s <= hi + 1e-12 and lo - 1e-12 <= -s <= hi + 1e-12):
                continue
            j = int(np.argmin(np.abs(self.s_grid + s)))
            if abs(self.s_grid[j] + s) > 1e-12 * max(1.0, abs(s)):
                continue
            worst = max(worst, abs(self.I[j] - self.I[k] - s))
        return worst

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "I", "I_err_lo", "I_err_hi"])
        for s, I, a, b in zip(self.s_grid, self.I, self.err_lo, self.err_hi):
            w.writerow([repr(float(s)), repr(float(I)), repr(float(a)), repr(float(b))])
        return buf.getvalue()


def _legendre(alpha: np.ndarray, e: np.ndarray, s_grid: np.ndarray):
    vals = alpha[None, :] * s_grid[:, None] + e[None, :]
    k = np.argmin(vals, axis=1)
    return -vals[np.arange(s_grid.size), k], alpha[k]


def rate_function(curve: PressureCurve, s_grid=None, allow_uncertified: bool = False,
                  global_scope: bool = False) -> RateFunction:
    """Rate function from a pressure curve.

    Only grid points with brackets (``alpha`` in ``[0, 1]``) are used, which yields
    the local rate function on ``[-ep, ep]``. With ``global_scope=True`` (to be
    used when the quasi-Bernoulli condition is certified) points outside
    ``[0, 1]`` enter through their largest-``T`` value ``e_T / T``.

    Raises
    ------
    UncertifiedCurve
        If lower bounds are missing and ``allow_uncertified`` is False.
    """
    if curve.alpha_grid.size == 0:
        raise UncertifiedCurve("empty pressure curve")
    if not curve.has_lower and not allow_uncertified:
        raise UncertifiedCurve("pressure curve has no certified lower bounds")
    ep = curve.ep_lower if curve.ep_lower is not None else 0.0
    ep = max(ep, 0.0)
    if s_grid is None:
        s_grid = np.linspace(-ep, ep, 41) if ep > 0 else np.zeros(1)
    s_grid = np.asarray(s_grid, dtype=float)
    inside = curve.bracketed.copy()
    upper = curve.best_upper
    lower = curve.best_lower if curve.has_lower else upper
    mid = 0.5 * (upper + lower)
    alpha = curve.alpha_grid
    if global_scope:
        last = curve.e_T[:, -1] / curve.T_values[-1]
        mid = np.where(inside, mid, last)
        upper = np.where(inside, upper, last)
        lower = np.where(inside, lower, last)
        use = np.isfinite(mid)
    else:
        use = inside
    if not use.any():
        raise UncertifiedCurve("no usable grid points")
    a = alpha[use]
    I, amin = _legendre(a, mid[use], s_grid)
    I_lo, _ = _legendre(a, upper[use], s_grid)
    I_hi, _ = _legendre(a, lower[use], s_grid)
    zero = None
    if ep > 0 or curve.ep_lower is not None:
        zero = float(_legendre(a, mid[use], np.array([ep]))[0][0])
    return RateFunction(s_grid, I, I_lo, I_hi, (float(a.min()), float(a.max())), (-ep, ep),
                        "global" if global_scope else "local", curve.has_lower, zero, amin, a, mid[use])


@dataclass
class LDPComparison:
    interval: Tuple[float, float]
    T_values: List[int]
    open_rates: List[float]
    closed_rates: List[float]
    theory_open: Optional[float]
    theory_closed: Optional[float]
    residual: Optional[float]
    trend: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "open_rate", "closed_rate", "theory_open", "theory_closed"])
        for T, a, b in zip(self.T_values, self.open_rates, self.closed_rates):
            w.writerow([T, repr(float(a)), repr(float(b)), repr(self.theory_open), repr(self.theory_closed)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "interval": list(self.interval),
            "T": list(self.T_values),
            "open_rate": list(self.open_rates),
            "closed_rate": list(self.closed_rates),
            "theory_open": self.theory_open,
            "theory_closed": self.theory_closed,
            "residual": self.residual,
            "trend": self.trend,
        }


def _log_mass(t, lo, hi, closed):
    sig = sigma_values(t) / t.T
    if closed:
        sel = (sig >= lo) & (sig <= hi)
    else:
        sel = (sig > lo) & (sig < hi)
    sel &= np.isfinite(t.log_p)
    return float(logsumexp(t.log_p[sel])) if sel.any() else -np.inf


def ldp_empirical(p: Process, interval: Tuple[float, float], T_range: Sequence[int],
                  rate: Optional[RateFunction] = None, cap: Optional[int] = None) -> LDPComparison:
    """``(1/T) log P_T(sigma_T/T in O)`` against ``-inf_{s in O} I(s)``.

    Both the open interval and its closure are tabulated. Since ``I`` is
    convex and continuous the theory value is the same for both; it is
    evaluated at the endpoints and at grid points inside the interval.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if lo >= hi:
        raise ValueError("interval must have lo < hi")
    Ts = [int(T) for T in T_range]
    op, cl = [], []
    for T in Ts:
        t = p.table(T, cap)
        op.append(_log_mass(t, lo, hi, False) / T)
        cl.append(_log_mass(t, lo, hi, True) / T)
    th_o = th_c = res = None
    if rate is not None:
        v0, v1 = rate.validity
        if lo < v0 - 1e-12 or hi > v1 + 1e-12:
            warnings.warn("interval extends beyond the validity interval of the rate function", RuntimeWarning,
                          stacklevel=2)
        s = np.concatenate([[lo, hi], rate.s_grid[(rate.s_grid > lo) & (rate.s_grid < hi)]])
        th_o = th_c = float(-np.min(rate.evaluate(s)))
        res = op[-1] - th_o
    fin = np.asarray(op)[np.isfinite(op)]
    diffs = np.diff(fin)
    if diffs.size == 0:
        trend = "single"
    elif np.all(diffs <= 1e-15):
        trend = "decreasing"
    elif np.all(diffs >= -1e-15):
        trend = "increasing"
    else:
        trend = "mixed"
    return LDPComparison((lo, hi), Ts, op, cl, th_o, th_c, res, trend)
