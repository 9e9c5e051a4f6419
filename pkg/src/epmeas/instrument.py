"""Instruments, processes and the algebra of instruments.

An :class:`Instrument` is a finite family of CP maps indexed by outcome labels
whose sum is unital. A :class:`Process` adds an initial state ``rho`` and an
involution ``theta`` on the alphabet, used to define the outcome reversal.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .operators import (
    INVARIANCE_TOL,
    STRICT_POS_TOL,
    UNITALITY_TOL,
    CPMap,
    DimensionError,
    as_operator,
    compose,
    dagger,
    invariant_state,
    is_irreducible_family,
    is_positive,
    min_eigenvalue,
    superoperator_matrix,
    tensor,
)


class InstrumentError(ValueError):
    """Invalid instrument data or an unsupported construction."""


class NotShiftInvariant(UserWarning):
    """The process state is not invariant, so the path measure is not stationary."""


def _check_label(label) -> str:
    if not isinstance(label, str) or not label or any(c.isspace() for c in label):
        raise InstrumentError(f"labels must be non-empty strings without whitespace, got {label!r}")
    return label


class Instrument:
    """Alphabet-indexed family of CP maps.

    Parameters
    ----------
    maps : mapping label -> CPMap or Kraus array
        Order of the mapping fixes the alphabet order used everywhere
        (lexicographic word order, table layout).
    """

    def __init__(self, maps: Mapping[str, object]):
        if not maps:
            raise InstrumentError("an instrument needs at least one outcome")
        items = []
        for label, m in maps.items():
            _check_label(label)
            items.append((label, m if isinstance(m, CPMap) else CPMap(m)))
        dims = {m.dim for _, m in items}
        if len(dims) != 1:
            raise DimensionError(f"letters act on different dimensions {sorted(dims)}")
        self._alphabet = tuple(l for l, _ in items)
        if len(set(self._alphabet)) != len(self._alphabet):
            raise InstrumentError("duplicate labels")
        self._maps = dict(items)
        self._index = {l: i for i, l in enumerate(self._alphabet)}

    @classmethod
    def from_kraus(cls, kraus: Mapping[str, Sequence], convention: str = "heisenberg"):
        """Build from Kraus lists.

        ``convention="heisenberg"`` means ``Phi_a[X] = sum V^* X V`` (the
        library convention). ``convention="adjoint"`` means
        ``Phi_a[X] = sum V X V^*``; its operators are conjugated on ingestion.
        """
        if convention not in ("heisenberg", "adjoint"):
            raise ValueError(f"unknown Kraus convention {convention!r}")
        out = {}
        for label, ops in kraus.items():
            K = np.asarray(ops, dtype=complex)
            if K.ndim == 2:
                K = K[None]
            out[label] = CPMap(dagger(K) if convention == "adjoint" else K)
        return cls(out)

    @property
    def alphabet(self) -> Tuple[str, ...]:
        return self._alphabet

    @property
    def size(self) -> int:
        return len(self._alphabet)

    @property
    def dim(self) -> int:
        return next(iter(self._maps.values())).dim

    def __getitem__(self, label) -> CPMap:
        return self._maps[label]

    def __iter__(self):
        return iter(self._alphabet)

    def __len__(self):
        return len(self._alphabet)

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def maps(self) -> List[CPMap]:
        return [self._maps[l] for l in self._alphabet]

    @property
    def total(self) -> CPMap:
        """The unital map ``Phi = sum_a Phi_a``."""
        return CPMap(np.concatenate([m.kraus for m in self.maps()]))

    def kraus_stack(self) -> Tuple[np.ndarray, np.ndarray]:
        """All Kraus operators stacked, with the letter index of each."""
        ks = [m.kraus for m in self.maps()]
        owner = np.concatenate([np.full(k.shape[0], i) for i, k in enumerate(ks)])
        return np.concatenate(ks), owner

    def effects(self) -> np.ndarray:
        """``Phi_a[1]`` for every letter, shape (l, d, d)."""
        return np.array([m.effect for m in self.maps()])

    def validate(self, tol: float = UNITALITY_TOL) -> "ValidationReport":
        return validate(self, tol)

    def relabel(self, mapping: Mapping[str, str]) -> "Instrument":
        return Instrument({mapping.get(l, l): self._maps[l] for l in self._alphabet})

    def __repr__(self):
        return f"Instrument(dim={self.dim}, alphabet={list(self._alphabet)})"


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    unitality_defect: float
    epsilon: Dict[str, float]
    strictly_positive: Dict[str, bool]
    failures: List[str] = field(default_factory=list)

    def __bool__(self):
        return self.valid

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "unitality_defect": self.unitality_defect,
            "epsilon": dict(self.epsilon),
            "strictly_positive": dict(self.strictly_positive),
            "failures": list(self.failures),
        }


def validate(instr: Instrument, tol: float = UNITALITY_TOL,
             strict_tol: float = STRICT_POS_TOL) -> ValidationReport:
    """Check unitality and well-formedness; report ``eps_a = min sp(Phi_a[1])``.

    Never raises on mathematically invalid input; problems are listed in
    ``failures``.
    """
    failures = []
    eps, strict = {}, {}
    for label in instr.alphabet:
        m = instr[label]
        if not np.all(np.isfinite(m.kraus)):
            failures.append(f"letter {label}: non-finite Kraus entries")
            eps[label], strict[label] = float("nan"), False
            continue
        e = min_eigenvalue(m.effect)
        eps[label] = e
        strict[label] = e > strict_tol
    total = sum(instr[l].effect for l in instr.alphabet)
    defect = float(np.linalg.norm(total - np.eye(instr.dim), 2)) if np.all(np.isfinite(total)) else float("inf")
    if not defect <= tol:
        failures.append(f"unitality defect {defect:.3e} exceeds {tol:.1e}")
    return ValidationReport(not failures, defect, eps, strict, failures)


class Involution:
    """Self-inverse permutation of an alphabet."""

    def __init__(self, alphabet: Sequence[str], mapping: Optional[Mapping[str, str]] = None):
        self.alphabet = tuple(alphabet)
        mapping = dict(mapping or {})
        full = {a: mapping.get(a, a) for a in self.alphabet}
        # pairs may be given in one direction only
        for a, b in list(mapping.items()):
            if b in full and full[b] == b and a != b:
                full[b] = a
        for a, b in full.items():
            if b not in full:
                raise InstrumentError(f"involution maps {a!r} outside the alphabet")
            if full[b] != a:
                raise InstrumentError(f"map is not an involution: {a!r} -> {b!r} -> {full[b]!r}")
        self._map = full
        idx = {a: i for i, a in enumerate(self.alphabet)}
        self.permutation = np.array([idx[full[a]] for a in self.alphabet], dtype=np.int64)

    @classmethod
    def identity(cls, alphabet):
        return cls(alphabet)

    @classmethod
    def from_pairs(cls, alphabet, pairs: Iterable[Sequence[str]]):
        mapping = {}
        for a, b in pairs:
            mapping[a] = b
            mapping[b] = a
        return cls(alphabet, mapping)

    def __call__(self, a: str) -> str:
        return self._map[a]

    def pairs(self) -> List[Tuple[str, str]]:
        seen, out = set(), []
        for a in self.alphabet:
            b = self._map[a]
            if a not in seen:
                out.append((a, b))
                seen.update((a, b))
        return out

    def as_dict(self) -> Dict[str, str]:
        return dict(self._map)

    def __eq__(self, other):
        return isinstance(other, Involution) and self.alphabet == other.alphabet and self._map == other._map

    def __repr__(self):
        return f"Involution({self.pairs()})"


class Process:
    """Instrument together with a state and an involution.

    Parameters
    ----------
    instrument : Instrument
    rho : array_like, optional
        Initial state. If omitted, the invariant state of the total map is used.
    theta : Involution or mapping, optional
        Defaults to the identity involution.
    relaxed : bool
        Allow a state that is not invariant. Stationarity-dependent calls
        then warn.
    reversal : Process, optional
        An outcome-reversal process. When absent the canonical one is built on
        first use.
    """

    def __init__(self, instrument: Instrument, rho=None, theta=None, relaxed: bool = False,
                 reversal: Optional["Process"] = None, name: Optional[str] = None,
                 tol: float = INVARIANCE_TOL):
        self.instrument = instrument
        if rho is None:
            rho, _ = invariant_state(instrument.total)
        rho = as_operator(rho, instrument.dim)
        if not is_positive(rho, 1e-10) or abs(np.trace(rho) - 1) > 1e-10:
            raise InstrumentError("rho must be a density matrix")
        self.rho = rho
        if theta is None:
            theta = Involution.identity(instrument.alphabet)
        elif not isinstance(theta, Involution):
            theta = Involution(instrument.alphabet, theta)
        if theta.alphabet != instrument.alphabet:
            raise InstrumentError("involution alphabet differs from the instrument alphabet")
        self.theta = theta
        self.relaxed = relaxed
        self.name = name or "process"
        self._tol = tol
        self.invariance_defect = float(np.linalg.norm(instrument.total.schrodinger(rho) - rho))
        self.lambda0 = float(np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))[0]) if instrument.dim > 1 else float(rho[0, 0].real)
        if not relaxed:
            if self.invariance_defect > tol:
                raise InstrumentError(
                    f"rho is not invariant (defect {self.invariance_defect:.3e}); pass relaxed=True to allow it")
            if self.lambda0 <= 0:
                raise InstrumentError("rho must be faithful (strictly positive)")
        if reversal is not None:
            if reversal.alphabet != self.alphabet:
                raise InstrumentError("reversal must share the alphabet")
        self._reversal = reversal
        self._tables: dict = {}

    @property
    def alphabet(self) -> Tuple[str, ...]:
        return self.instrument.alphabet

    @property
    def dim(self) -> int:
        return self.instrument.dim

    @property
    def size(self) -> int:
        return self.instrument.size

    @property
    def stationary(self) -> bool:
        return self.invariance_defect <= self._tol

    def warn_if_not_stationary(self):
        if not self.stationary:
            warnings.warn("process state is not invariant; the path measure is not shift-invariant",
                          NotShiftInvariant, stacklevel=3)

    @property
    def has_reversal(self) -> bool:
        return self._reversal is not None

    @property
    def reversal(self) -> "Process":
        """Attached outcome reversal, or the canonical one."""
        if self._reversal is None:
            from .reversal import canonical_or

            self._reversal = canonical_or(self).process
        return self._reversal

    def with_reversal(self, reversal: "Process") -> "Process":
        return Process(self.instrument, self.rho, self.theta, self.relaxed, reversal, self.name, self._tol)

    def validate(self) -> ValidationReport:
        return validate(self.instrument)

    def table(self, T: int, cap: Optional[int] = None):
        """Cached :class:`~epmeas.pathspace.PathTable` of length ``T``."""
        from .pathspace import DEFAULT_CAP, enumerate_table

        if T not in self._tables:
            self._tables[T] = enumerate_table(self, T, cap=DEFAULT_CAP if cap is None else cap)
        return self._tables[T]

    def clear_cache(self):
        self._tables.clear()

    def __repr__(self):
        return f"Process({self.name!r}, dim={self.dim}, alphabet={list(self.alphabet)})"


# ---------------------------------------------------------------- constructors


def bernoulli(p: float) -> Process:
    """Two letters on a one-dimensional space: ``Phi_a = p``, ``Phi_b = 1 - p``, ``theta`` swaps them."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    instr = Instrument({"a": CPMap([[np.sqrt(p)]]), "b": CPMap([[np.sqrt(1 - p)]])})
    return Process(instr, np.eye(1), Involution.from_pairs(instr.alphabet, [("a", "b")]), name=f"bernoulli({p})")


def trivial(dim: int = 1) -> Process:
    """One-outcome identity instrument."""
    instr = Instrument({"o": CPMap.identity(dim)})
    return Process(instr, np.eye(dim) / dim, name="trivial")


def von_neumann(U, projections: Sequence, labels: Optional[Sequence[str]] = None) -> Instrument:
    """Unitary evolution followed by a projective measurement.

    The Schrödinger action of letter ``a`` is ``rho -> P_a U rho U^* P_a``.
    """
    U = as_operator(U)
    d = U.shape[0]
    if np.linalg.norm(U.conj().T @ U - np.eye(d)) > 1e-10:
        raise InstrumentError("U must be unitary")
    P = [as_operator(p, d) for p in projections]
    if not P:
        raise InstrumentError("need at least one projection")
    for i, p in enumerate(P):
        if np.linalg.norm(p @ p - p) > 1e-10 or np.linalg.norm(p - dagger(p)) > 1e-10:
            raise InstrumentError(f"projection {i} is not an orthogonal projection")
        for j in range(i):
            if np.linalg.norm(p @ P[j]) > 1e-10:
                raise InstrumentError(f"projections {j} and {i} are not orthogonal")
    if np.linalg.norm(sum(P) - np.eye(d)) > 1e-10:
        raise InstrumentError("projections do not sum to the identity")
    labels = list(labels) if labels is not None else [str(i) for i in range(len(P))]
    return Instrument({l: CPMap(p @ U) for l, p in zip(labels, P)})


def ancilla(U, rho_p, projections: Sequence, dim: Optional[int] = None,
            labels: Optional[Sequence[str]] = None, tol: float = 1e-12) -> Instrument:
    """Indirect measurement through a probe.

    The Schrödinger action of letter ``a`` is the partial trace over the probe
    of ``(1 ⊗ P_a) U (rho ⊗ rho_p) U^*``; the system factor comes first.
    """
    rho_p = as_operator(rho_p)
    dp = rho_p.shape[0]
    U = as_operator(U)
    if U.shape[0] % dp:
        raise DimensionError("U dimension is not a multiple of the probe dimension")
    d = U.shape[0] // dp if dim is None else dim
    if d * dp != U.shape[0]:
        raise DimensionError("U does not act on system ⊗ probe")
    if np.linalg.norm(U.conj().T @ U - np.eye(d * dp)) > 1e-10:
        raise InstrumentError("U must be unitary")
    if not is_positive(rho_p, 1e-10) or abs(np.trace(rho_p) - 1) > 1e-10:
        raise InstrumentError("probe state must be a density matrix")
    P = [as_operator(p, dp) for p in projections]
    if np.linalg.norm(sum(P) - np.eye(dp)) > 1e-10:
        raise InstrumentError("probe projections do not sum to the identity")
    for i, p in enumerate(P):
        if np.linalg.norm(p @ p - p) > 1e-10 or np.linalg.norm(p - dagger(p)) > 1e-10:
            raise InstrumentError(f"projection {i} is not an orthogonal projection")
    q, psi = np.linalg.eigh(0.5 * (rho_p + dagger(rho_p)))
    keep = q > tol
    q, psi = q[keep], psi[:, keep]
    U4 = U.reshape(d, dp, d, dp)
    labels = list(labels) if labels is not None else [str(i) for i in range(len(P))]
    out = {}
    for label, p in zip(labels, P):
        w, e = np.linalg.eigh(p)
        e = e[:, w > 0.5]
        # V_{mn} = sqrt(q_m) (1 ⊗ <e_n|) U (1 ⊗ |psi_m>)
        K = np.einsum("xpyr,pn,rm->mnxy", U4, e.conj(), psi) * np.sqrt(q)[:, None, None, None]
        K = K.reshape(-1, d, d)
        out[label] = CPMap(K if K.shape[0] else np.zeros((1, d, d)))
    return Instrument(out)


def markov_label(i: int, j: int) -> str:
    return f"{i}>{j}"


def classical_markov(P, tol: float = 1e-12) -> Process:
    """Classical Markov chain embedded as a diagonal instrument.

    Letters are transitions ``i>j``; the Kraus operator of ``i>j`` is
    ``sqrt(P_ij) |j><i|``, the state is the stationary law and the involution
    reverses transitions. A transition whose reverse is allowed but which is
    itself forbidden is kept as a letter with a zero map, so that the
    involution is always defined.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InstrumentError("P must be square")
    n = P.shape[0]
    if np.any(P < -tol) or np.max(np.abs(P.sum(axis=1) - 1)) > 1e-10:
        raise InstrumentError("P must be row-stochastic")
    P = np.clip(P, 0.0, None)
    reach = (P > 0).astype(int) + np.eye(n, dtype=int)
    R = np.linalg.matrix_power(reach, max(n - 1, 1)) > 0
    if not R.all():
        raise InstrumentError("P is reducible")
    w, v = np.linalg.eig(P.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1))])
    pi = pi / pi.sum()
    maps = {}
    for i in range(n):
        for j in range(n):
            if P[i, j] > 0 or P[j, i] > 0:
                V = np.zeros((n, n))
                V[j, i] = np.sqrt(P[i, j])
                maps[markov_label(i, j)] = CPMap(V)
    instr = Instrument(maps)
    theta = Involution(instr.alphabet, {markov_label(i, j): markov_label(j, i)
                                        for i in range(n) for j in range(n)
                                        if markov_label(i, j) in maps})
    return Process(instr, np.diag(pi), theta, name="markov")


def cycle(n: int = 3, q: float = 0.8) -> Process:
    """Random walk on a ring of ``n`` sites: forward with probability ``q``, backward ``1 - q``."""
    if n < 3:
        raise ValueError("a ring needs at least three sites")
    P = np.zeros((n, n))
    for i in range(n):
        P[i, (i + 1) % n] += q
        P[i, (i - 1) % n] += 1 - q
    proc = classical_markov(P)
    proc.name = f"cycle({n},{q})"
    return proc


# ------------------------------------------------------------------- algebra


def _combine_label(a: str, b: str) -> str:
    return f"{a}|{b}"


def product(p1: Process, p2: Process) -> Process:
    """Independent product ``(J1 ⊗ J2, rho1 ⊗ rho2)``; letters are ``a|b``."""
    maps, theta = {}, {}
    for a in p1.alphabet:
        for b in p2.alphabet:
            maps[_combine_label(a, b)] = tensor(p1.instrument[a], p2.instrument[b])
            theta[_combine_label(a, b)] = _combine_label(p1.theta(a), p2.theta(b))
    instr = Instrument(maps)
    rev = None
    if p1.has_reversal or p2.has_reversal:
        rev = product(p1.reversal, p2.reversal)
    return Process(instr, np.kron(p1.rho, p2.rho), Involution(instr.alphabet, theta),
                   relaxed=p1.relaxed or p2.relaxed, reversal=rev,
                   name=f"{p1.name}*{p2.name}")


def _pad(K: np.ndarray, d1: int, d2: int, first: bool) -> np.ndarray:
    out = np.zeros((K.shape[0], d1 + d2, d1 + d2), dtype=complex)
    if first:
        out[:, :d1, :d1] = K
    else:
        out[:, d1:, d1:] = K
    return out


def direct_sum(p1: Process, p2: Process, mu: float, overlap: Iterable[str] = ()) -> Process:
    """Convex sum on the direct-sum space with state ``mu rho1 ⊕ (1 - mu) rho2``.

    Labels shared by the two alphabets are identified, and they must be
    declared in ``overlap``. The involutions have to agree there.
    """
    if not 0 < mu < 1:
        raise ValueError("mu must lie in (0, 1)")
    overlap = set(overlap)
    shared = set(p1.alphabet) & set(p2.alphabet)
    if shared != overlap:
        raise InstrumentError(f"shared labels {sorted(shared)} differ from declared overlap {sorted(overlap)}")
    for a in overlap:
        if p1.theta(a) != p2.theta(a):
            raise InstrumentError(f"involutions disagree on shared label {a!r}")
    d1, d2 = p1.dim, p2.dim
    maps, theta = {}, {}
    alphabet = list(p1.alphabet) + [a for a in p2.alphabet if a not in overlap]
    for a in alphabet:
        parts = []
        if a in p1.alphabet:
            parts.append(_pad(p1.instrument[a].kraus, d1, d2, True))
            theta[a] = p1.theta(a)
        if a in p2.alphabet:
            parts.append(_pad(p2.instrument[a].kraus, d1, d2, False))
            theta[a] = p2.theta(a)
        maps[a] = CPMap(np.concatenate(parts))
    rho = np.zeros((d1 + d2, d1 + d2), dtype=complex)
    rho[:d1, :d1] = mu * p1.rho
    rho[d1:, d1:] = (1 - mu) * p2.rho
    instr = Instrument(maps)
    return Process(instr, rho, Involution(instr.alphabet, theta), relaxed=p1.relaxed or p2.relaxed,
                   name=f"{p1.name}+{p2.name}")


def coarse_grain(p: Process, M, new_alphabet: Sequence[str],
                 new_theta: Optional[Mapping[str, str]] = None, tol: float = 1e-12) -> Process:
    """Merge outcomes through a stochastic matrix.

    ``Phi'_b = sum_a M[a, b] Phi_a``. The involution on the new alphabet is
    taken from ``new_theta`` or inferred from the columns of ``M``; the
    compatibility ``M[theta(a), theta'(b)] = M[a, b]`` is required.
    """
    M = np.asarray(M, dtype=float)
    new_alphabet = list(new_alphabet)
    if M.shape != (p.size, len(new_alphabet)):
        raise InstrumentError(f"M must have shape {(p.size, len(new_alphabet))}")
    if np.any(M < -tol) or np.max(np.abs(M.sum(axis=1) - 1)) > 1e-10:
        raise InstrumentError("M must be row-stochastic")
    perm = p.theta.permutation
    if new_theta is None:
        mapping = {}
        for j, b in enumerate(new_alphabet):
            target = M[perm, j]
            hits = [k for k in range(len(new_alphabet)) if np.max(np.abs(M[:, k] - target)) <= tol]
            if not hits:
                raise InstrumentError(f"no new letter is compatible with the reversal of {b!r}")
            mapping[b] = new_alphabet[j] if j in hits else new_alphabet[hits[0]]
        theta2 = Involution(new_alphabet, mapping)
    else:
        theta2 = Involution(new_alphabet, new_theta)
    perm2 = theta2.permutation
    if np.max(np.abs(M[np.ix_(perm, perm2)] - M)) > tol:
        raise InstrumentError("M is not compatible with the involutions")
    maps = {}
    for j, b in enumerate(new_alphabet):
        maps[b] = CPMap.combine(p.instrument.maps(), M[:, j])
    instr = Instrument(maps)
    return Process(instr, p.rho, theta2, relaxed=p.relaxed, name=f"coarse({p.name})")


def commutation_defect(p1: Process, p2: Process) -> float:
    """``max_a ||[S(Phi_{1,a}), S(Phi_2)]||`` in superoperator form."""
    S2 = superoperator_matrix(p2.instrument.total)
    worst = 0.0
    for m in p1.instrument.maps():
        S1 = superoperator_matrix(m)
        worst = max(worst, float(np.linalg.norm(S1 @ S2 - S2 @ S1, 2)))
    return worst


def composition(p1: Process, p2: Process, tol: float = 1e-9) -> Process:
    """Composition ``{Phi_{1,a} ∘ Phi_{2,b}}`` on the product alphabet."""
    if p1.dim != p2.dim:
        raise DimensionError("composition needs equal dimensions")
    if np.linalg.norm(p1.rho - p2.rho) > 1e-10:
        raise InstrumentError("composition needs equal states")
    defect = commutation_defect(p1, p2)
    if defect > tol:
        raise InstrumentError(f"commutation fails (defect {defect:.3e})")
    maps, theta = {}, {}
    for a in p1.alphabet:
        for b in p2.alphabet:
            maps[_combine_label(a, b)] = compose(p1.instrument[a], p2.instrument[b])
            theta[_combine_label(a, b)] = _combine_label(p1.theta(a), p2.theta(b))
    instr = Instrument(maps)
    return Process(instr, p1.rho, Involution(instr.alphabet, theta), relaxed=p1.relaxed,
                   name=f"{p1.name}o{p2.name}")


NOISE_LABEL = "lost"


def deform_noise(p: Process, eps: float, noise, variant: str = "letter",
                 label: str = NOISE_LABEL, tol: float = INVARIANCE_TOL) -> Process:
    """Mix a process with noise.

    ``variant="letter"``: letters ``(1 - eps) Phi_a`` plus a fresh, self-reversed
    letter ``eps * Xi`` standing for a measurement that was not read.

    ``variant="blend"``: ``(1 - eps) Phi_a + (eps / l) Psi_a`` letter by letter;
    ``noise`` is then a mapping label -> CPMap (or one map used for all).

    Every noise map must be unital and leave ``rho`` invariant.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if variant == "letter":
        noise_maps = {label: noise if isinstance(noise, CPMap) else CPMap(noise)}
    elif variant == "blend":
        if isinstance(noise, Mapping):
            noise_maps = {a: m if isinstance(m, CPMap) else CPMap(m) for a, m in noise.items()}
        else:
            m = noise if isinstance(noise, CPMap) else CPMap(noise)
            noise_maps = {a: m for a in p.alphabet}
        if set(noise_maps) != set(p.alphabet):
            raise InstrumentError("blend noise needs one map per letter")
    else:
        raise ValueError(f"unknown variant {variant!r}")
    for a, m in noise_maps.items():
        if m.dim != p.dim:
            raise DimensionError("noise acts on a different dimension")
        if not m.is_unital():
            raise InstrumentError(f"noise map for {a!r} is not unital")
        if np.linalg.norm(m.schrodinger(p.rho) - p.rho) > tol:
            raise InstrumentError(f"noise map for {a!r} does not leave rho invariant")
    if variant == "letter":
        if label in p.alphabet:
            raise InstrumentError(f"label {label!r} already used")
        maps = {a: p.instrument[a].scaled(1 - eps) for a in p.alphabet}
        maps[label] = noise_maps[label].scaled(eps)
        theta = p.theta.as_dict()
        theta[label] = label
    else:
        ell = p.size
        maps = {a: CPMap.combine([p.instrument[a], noise_maps[a]], [1 - eps, eps / ell]) for a in p.alphabet}
        theta = p.theta.as_dict()
    instr = Instrument(maps)
    return Process(instr, p.rho, Involution(instr.alphabet, theta), relaxed=p.relaxed,
                   name=f"noisy({p.name},{eps})")


def relabel(p: Process, mapping: Mapping[str, str]) -> Process:
    instr = p.instrument.relabel(mapping)
    theta = {mapping.get(a, a): mapping.get(b, b) for a, b in p.theta.as_dict().items()}
    return Process(instr, p.rho, Involution(instr.alphabet, theta), relaxed=p.relaxed, name=p.name)


def from_instrument(instr: Instrument, theta=None, rho=None, relaxed: bool = False, name=None) -> Process:
    """Process with the invariant state when ``rho`` is not given."""
    return Process(instr, rho, theta, relaxed=relaxed, name=name)


def is_irreducible_map(cp: CPMap, tol: float = 1e-9) -> bool:
    """Irreducibility of a CP map via its Kraus family (no common invariant subspace)."""
    return bool(is_irreducible_family(list(cp.kraus), tol))
