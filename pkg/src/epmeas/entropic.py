"""Entropy production, Rényi pressures and classical entropy utilities.

The entropy production of a word is ``sigma_T = log P_T - log P_hat_T``.
Conventions for zero probabilities: ``0 log 0 = 0``; a word with ``P > 0`` and
``P_hat = 0`` has ``sigma = +inf``, one with ``P = 0`` and ``P_hat > 0`` has
``sigma = -inf``.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .instrument import Process
from .pathspace import PathTable, log_prob, sample_batch


def _table(p, T: int, cap: Optional[int] = None) -> PathTable:
    if isinstance(p, PathTable):
        if p.T != T:
            raise ValueError(f"table has length {p.T}, asked for {T}")
        return p
    return p.table(T, cap)


def sigma(p: Process, word: Sequence[str]) -> float:
    """Entropy production of a single word."""
    a = log_prob(p, word)
    b = log_prob(p, word, "reversed")
    if a == -np.inf and b == -np.inf:
        return -np.inf
    return a - b


def sigma_values(table: PathTable) -> np.ndarray:
    """``sigma_T`` on the table support (``+-inf`` allowed)."""
    with np.errstate(invalid="ignore"):
        s = table.log_p - table.log_p_hat
    return np.where(np.isnan(s), -np.inf, s)


def relative_entropy(log_p: np.ndarray, log_q: np.ndarray) -> float:
    """``S(P|Q) = sum P log(P/Q)`` from log-probabilities; ``+inf`` if ``P`` is not dominated by ``Q``."""
    log_p = np.asarray(log_p, dtype=float)
    log_q = np.asarray(log_q, dtype=float)
    on = np.isfinite(log_p)
    if np.any(on & ~np.isfinite(log_q)):
        return np.inf
    return float(np.sum(np.exp(log_p[on]) * (log_p[on] - log_q[on])))


def renyi_relative_entropy(log_p: np.ndarray, log_q: np.ndarray, alpha: float) -> float:
    """``S_alpha(P|Q) = log sum P^(1-alpha) Q^alpha``.

    Exactly 0 at ``alpha`` in {0, 1} for inputs normalized to within 1e-12. Outside ``[0, 1]``
    differing supports give ``+inf``.
    """
    log_p = np.asarray(log_p, dtype=float)
    log_q = np.asarray(log_q, dtype=float)
    fp, fq = np.isfinite(log_p), np.isfinite(log_q)
    if alpha in (0, 1):
        v, f = (log_p, fp) if alpha == 0 else (log_q, fq)
        total = float(logsumexp(v[f])) if f.any() else -np.inf
        # normalized measures give 0 up to rounding; report it exactly
        return 0.0 if abs(total) <= 1e-12 else total
    if (alpha < 0 or alpha > 1) and np.any(fp != fq):
        return np.inf
    both = fp & fq
    if not both.any():
        return -np.inf
    return float(logsumexp((1 - alpha) * log_p[both] + alpha * log_q[both]))


def shannon_entropy(table_or_logp) -> float:
    """``S(P) = -sum P log P``."""
    lp = table_or_logp.log_p if isinstance(table_or_logp, PathTable) else np.asarray(table_or_logp, float)
    lp = lp[np.isfinite(lp)]
    return float(-np.sum(np.exp(lp) * lp))


@dataclass(frozen=True)
class SigmaStats:
    """Exact mean entropy production at one time."""

    T: int
    mean_sigma: float
    lower_bound_ep: float
    lambda0: float
    support_mismatch: bool = False

    @property
    def rate(self) -> float:
        return self.mean_sigma / self.T if self.T else 0.0


def mean_sigma(p, T: int, cap: Optional[int] = None) -> SigmaStats:
    """``E[sigma_T] = S(P_T | P_hat_T)`` from the exact table.

    ``p`` may be a process or a precomputed table.
    """
    t = _table(p, T, cap)
    lam = p.lambda0 if isinstance(p, Process) else t.lambda0
    m = relative_entropy(t.log_p, t.log_p_hat)
    mismatch = bool(np.any(np.isfinite(t.log_p) & ~np.isfinite(t.log_p_hat)))
    lb = (m + math.log(lam)) / T if T > 0 else 0.0
    return SigmaStats(T, m, lb, lam, mismatch)


@dataclass
class EPBounds:
    """Certified information on the mean entropy production rate."""

    T_values: List[int]
    mean_sigma: List[float]
    rates: List[float]
    lower_bounds: List[float]
    lower_bound: float
    ceiling: Optional[float]
    epsilon: float
    lambda0: float
    infinite_at: Optional[int] = None
    diagnostics: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "T": list(self.T_values),
            "mean_sigma": list(self.mean_sigma),
            "rate": list(self.rates),
            "lower_bound_T": list(self.lower_bounds),
            "ep_lower_bound": self.lower_bound,
            "ep_ceiling": self.ceiling,
            "epsilon": self.epsilon,
            "lambda0": self.lambda0,
            "infinite_at": self.infinite_at,
            "diagnostics": list(self.diagnostics),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "mean_sigma", "rate", "lower_bound", "running_lower_bound"])
        best = -np.inf
        for T, m, r, lb in zip(self.T_values, self.mean_sigma, self.rates, self.lower_bounds):
            best = max(best, lb)
            w.writerow([T, repr(float(m)), repr(float(r)), repr(float(lb)), repr(float(best))])
        return buf.getvalue()


def strict_positivity_epsilon(p: Process) -> float:
    """``min_a min sp(Phi_a[1])``."""
    return float(min(np.linalg.eigvalsh(e)[0] for e in p.instrument.effects()))


def ep_bounds(p: Process, T_max: int, cap: Optional[int] = None, strict_tol: float = 1e-12) -> EPBounds:
    """Lower bound ``sup_T (E[sigma_T] + log lambda0)/T`` and the ceiling ``-log eps``.

    The ceiling is returned only when every letter is strictly positive.
    An infinite ``E[sigma_T]`` stops the scan with a diagnostic.
    """
    Ts, ms, rates, lbs = [], [], [], []
    diag = []
    inf_at = None
    for T in range(1, T_max + 1):
        st = mean_sigma(p, T, cap)
        Ts.append(T)
        ms.append(st.mean_sigma)
        rates.append(st.rate)
        lbs.append(st.lower_bound_ep)
        if not np.isfinite(st.mean_sigma):
            inf_at = T
            diag.append(f"support condition violated at T={T}: E[sigma_T] is infinite")
            break
    eps = strict_positivity_epsilon(p)
    ceiling = -math.log(eps) if eps > strict_tol else None
    lb = float(max(lbs)) if lbs else 0.0
    return EPBounds(Ts, ms, rates, lbs, lb, ceiling, eps, p.lambda0, inf_at, diag)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    ci_low: float
    ci_high: float
    n: int
    T: int
    level: float
    n_infinite: int = 0

    def to_dict(self) -> dict:
        return dict(mean=self.mean, std_error=self.std_error, ci_low=self.ci_low, ci_high=self.ci_high,
                    n=self.n, T=self.T, level=self.level, n_infinite=self.n_infinite)


def ep_monte_carlo(p: Process, T: int, n: int, rng_seed=None, level: float = 0.95) -> MCEstimate:
    """Sample mean of ``sigma_T / T`` with a normal confidence interval.

    ``sigma_T/T`` converges almost surely, and in mean when the rate is
    finite; for non-ergodic processes the limit may be random, and a warning
    is issued.
    """
    from .operators import spectral_report

    if p.dim > 1 and not spectral_report(p.instrument.total).eigenvalue_one_simple:
        warnings.warn("eigenvalue 1 is not simple: the process may not be ergodic", RuntimeWarning, stacklevel=2)
    batch = sample_batch(p, T, n, rng_seed)
    s = batch.sigma / T
    n_inf = int(np.count_nonzero(~np.isfinite(s)))
    if n_inf:
        m = float(np.inf) if np.any(s == np.inf) else float(-np.inf)
        return MCEstimate(m, np.inf, -np.inf, np.inf, n, T, level, n_inf)
    m = float(np.mean(s))
    se = float(np.std(s, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    z = float(norm.ppf(0.5 + level / 2))
    return MCEstimate(m, se, m - z * se, m + z * se, n, T, level)


def renyi_pressure(p, alpha: float, T: int, cap: Optional[int] = None) -> float:
    """``e_T(alpha) = log sum P_T^(1-alpha) P_hat_T^alpha``."""
    if T == 0:
        return 0.0
    t = _table(p, T, cap)
    return renyi_relative_entropy(t.log_p, t.log_p_hat, alpha)


def superadditivity_constant(lambda0: float, tau: int, C_tau: float) -> float:
    """Constant ``c`` in ``e_{T+T'} >= e_T + e_T' + c`` on ``[0, 1]``.

    ``log(C_tau lambda0)`` when ``tau = 0`` and
    ``log(C_tau lambda0^2 / (tau + 1))`` otherwise.
    """
    if C_tau <= 0 or lambda0 <= 0:
        return -np.inf
    if tau == 0:
        return math.log(C_tau * lambda0)
    return math.log(C_tau * lambda0 ** 2 / (tau + 1))


def default_alpha_grid(n: int = 41, extended: bool = False) -> np.ndarray:
    if extended:
        return np.linspace(-1.0, 2.0, 3 * (n - 1) + 1)
    return np.linspace(0.0, 1.0, n)


@dataclass
class PressureCurve:
    """Finite-time pressures with two-sided bounds on ``e(alpha)``.

    ``upper[i, j] = (e_T + log(1/lambda0)) / T`` and
    ``lower[i, j] = (e_T + c) / T`` for ``alpha_grid[i]`` and ``T_values[j]``.
    Bounds are only meaningful for ``alpha`` in ``[0, 1]``; elsewhere they are NaN
    and ``bracketed`` is False.
    """

    alpha_grid: np.ndarray
    T_values: List[int]
    e_T: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    c: Optional[float]
    lambda0: float
    lower_status: str  # "certified", "horizon-certified" or "omitted"
    bracketed: np.ndarray
    constants: Optional[dict] = None
    ep_lower: Optional[float] = None

    @property
    def has_lower(self) -> bool:
        return self.lower_status != "omitted"

    @property
    def best_upper(self) -> np.ndarray:
        return np.min(self.upper, axis=1)

    @property
    def best_lower(self) -> np.ndarray:
        return np.max(self.lower, axis=1)

    @property
    def midpoint(self) -> np.ndarray:
        if not self.has_lower:
            return self.best_upper
        return 0.5 * (self.best_upper + self.best_lower)

    @property
    def width(self) -> np.ndarray:
        return self.best_upper - self.best_lower

    def value_at(self, alpha: float) -> tuple:
        """(lower, midpoint, upper) at a grid point."""
        i = int(np.argmin(np.abs(self.alpha_grid - alpha)))
        if abs(self.alpha_grid[i] - alpha) > 1e-12:
            raise KeyError(f"alpha={alpha} is not on the grid")
        return float(self.best_lower[i]), float(self.midpoint[i]), float(self.best_upper[i])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "T", "e_T", "upper", "lower"])
        for i, a in enumerate(self.alpha_grid):
            for j, T in enumerate(self.T_values):
                w.writerow([repr(float(a)), T, repr(float(self.e_T[i, j])),
                            repr(float(self.upper[i, j])), repr(float(self.lower[i, j]))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "alpha": [float(a) for a in self.alpha_grid],
            "T": list(self.T_values),
            "best_upper": [float(x) for x in self.best_upper],
            "best_lower": [float(x) for x in self.best_lower],
            "midpoint": [float(x) for x in self.midpoint],
            "c": self.c,
            "lambda0": self.lambda0,
            "lower_status": self.lower_status,
            "constants": self.constants,
            "ep_lower": self.ep_lower,
        }


def pressure_curve(p: Process, alpha_grid=None, T_range: Sequence[int] = range(1, 9),
                   constants=None, cap: Optional[int] = None) -> PressureCurve:
    """Pressures ``e_T(alpha)`` on a grid together with Fekete brackets.

    Parameters
    ----------
    constants : CConstants or dict, optional
        Gluing constants ``(tau, C_tau)`` from :func:`epmeas.assumptions.estimate_C_constants`.
        Without them lower bounds are omitted (NaN) and ``lower_status`` is
        ``"omitted"``.
    """
    alpha_grid = default_alpha_grid() if alpha_grid is None else np.asarray(alpha_grid, dtype=float)
    T_values = [int(T) for T in T_range]
    if not T_values or alpha_grid.size == 0:
        raise ValueError("alpha grid and T range must be nonempty")
    lam = p.lambda0
    c, status, cdict = None, "omitted", None
    if constants is not None:
        cdict = constants.to_dict() if hasattr(constants, "to_dict") else dict(constants)
        ok = cdict.get("status", "certified") in ("certified", "horizon-certified")
        if ok and cdict.get("C_tau") is not None and cdict["C_tau"] > 0:
            c = superadditivity_constant(lam, int(cdict["tau"]), float(cdict["C_tau"]))
            status = "certified" if cdict.get("status", "certified") == "certified" else "horizon-certified"
    e = np.empty((alpha_grid.size, len(T_values)))
    for j, T in enumerate(T_values):
        t = p.table(T, cap)
        for i, a in enumerate(alpha_grid):
            e[i, j] = renyi_relative_entropy(t.log_p, t.log_p_hat, float(a))
    Ts = np.array(T_values, dtype=float)
    inside = (alpha_grid >= 0) & (alpha_grid <= 1)
    upper = (e - math.log(lam)) / Ts
    lower = (e + c) / Ts if c is not None else np.full_like(e, np.nan)
    upper[~inside] = np.nan
    lower[~inside] = np.nan
    ep_lb = ep_bounds(p, max(T_values), cap).lower_bound
    return PressureCurve(alpha_grid, T_values, e, upper, lower, c, lam, status, inside, cdict, ep_lb)


@dataclass
class TiltedMeasure:
    """``Q_T = exp(-e_T(alpha)) P_T^(1-alpha) P_hat_T^alpha`` on the table support."""

    alpha: float
    T: int
    index: np.ndarray
    log_q: np.ndarray
    e_T: float

    def normalization(self) -> float:
        f = self.log_q[np.isfinite(self.log_q)]
        return float(logsumexp(f)) if f.size else -np.inf


def tilted_measure(p, alpha: float, T: int, cap: Optional[int] = None) -> TiltedMeasure:
    t = _table(p, T, cap)
    e = renyi_relative_entropy(t.log_p, t.log_p_hat, alpha)
    if alpha == 0:
        lq = t.log_p.copy()
    elif alpha == 1:
        lq = t.log_p_hat.copy()
    else:
        with np.errstate(invalid="ignore"):
            lq = (1 - alpha) * t.log_p + alpha * t.log_p_hat - e
        lq = np.where(np.isnan(lq), -np.inf, lq)
    return TiltedMeasure(alpha, T, t.index, lq, e)


def ks_entropy_estimate(p: Process, T_range: Sequence[int], cap: Optional[int] = None) -> Dict[int, float]:
    """``S(P_T) / T`` for each ``T``; each value bounds the entropy rate from above."""
    return {int(T): shannon_entropy(p.table(int(T), cap)) / T for T in T_range}


def gibbs_functional(f: np.ndarray, log_ref: np.ndarray, log_q: np.ndarray) -> float:
    """``sum f Q - S(Q | ref)``."""
    f = np.asarray(f, float)
    on = np.isfinite(log_q)
    return float(np.sum(np.exp(log_q[on]) * f[on])) - relative_entropy(log_q, log_ref)


def gibbs_maximizer(f: np.ndarray, log_ref: np.ndarray):
    """Maximizer and value of the Gibbs functional: ``Q ∝ e^f ref`` and ``log sum e^f ref``."""
    f = np.asarray(f, float)
    with np.errstate(invalid="ignore"):
        w = f + np.asarray(log_ref, float)
    w = np.where(np.isnan(w), -np.inf, w)
    value = float(logsumexp(w[np.isfinite(w)]))
    return w - value, value
