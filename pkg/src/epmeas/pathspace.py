"""Path measures: single-word evaluation, exhaustive tables and sampling.

Words of length ``T`` are indexed by their base-``l`` digit value, most
significant digit first, with digits following the alphabet order. Tables are
sparse: only words in the union of the two supports are stored, every other
word has probability zero under both measures.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .instrument import Process

DEFAULT_CAP = 2 ** 21
ZERO_TRACE = 1e-300
# conditional probabilities below this are reported as possibly spurious zeros
TINY_TRACE = 1e-13


class CapExceeded(RuntimeError):
    """``l**T`` words exceed the enumeration cap."""

    def __init__(self, required: int, cap: int):
        super().__init__(f"enumeration needs {required} words but the cap is {cap}")
        self.required = required
        self.cap = cap


def check_cap(ell: int, T: int, cap: int) -> None:
    required = ell ** T
    if required > cap:
        raise CapExceeded(required, cap)


def word_to_index(word: Sequence[str], alphabet: Sequence[str]) -> int:
    pos = {a: i for i, a in enumerate(alphabet)}
    idx = 0
    for a in word:
        if a not in pos:
            raise KeyError(f"unknown label {a!r}")
        idx = idx * len(alphabet) + pos[a]
    return idx


def index_to_word(idx: int, T: int, alphabet: Sequence[str]) -> Tuple[str, ...]:
    ell = len(alphabet)
    out = []
    for _ in range(T):
        idx, r = divmod(idx, ell)
        out.append(alphabet[r])
    return tuple(reversed(out))


def digits(idx: np.ndarray, T: int, ell: int) -> np.ndarray:
    """Digit matrix of shape (N, T), most significant first."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.empty((idx.size, T), dtype=np.int64)
    rest = idx.copy()
    for t in range(T - 1, -1, -1):
        out[:, t] = rest % ell
        rest //= ell
    return out


def from_digits(dig: np.ndarray, ell: int) -> np.ndarray:
    idx = np.zeros(dig.shape[0], dtype=np.int64)
    for t in range(dig.shape[1]):
        idx = idx * ell + dig[:, t]
    return idx


def reverse_words(idx: np.ndarray, T: int, ell: int, perm: np.ndarray) -> np.ndarray:
    """Index of ``Theta_T w = (theta(w_T), ..., theta(w_1))``."""
    if T == 0:
        return np.asarray(idx, dtype=np.int64).copy()
    dig = digits(idx, T, ell)
    return from_digits(perm[dig[:, ::-1]], ell)


def _padded_kraus(p: Process) -> np.ndarray:
    """Kraus operators as an array (l, K, d, d), zero-padded to a common K."""
    maps = p.instrument.maps()
    K = max(m.n_kraus for m in maps)
    out = np.zeros((len(maps), K, p.dim, p.dim), dtype=complex)
    for i, m in enumerate(maps):
        out[i, : m.n_kraus] = m.kraus
    return out


def _extend(states: np.ndarray, kraus: np.ndarray) -> np.ndarray:
    """Apply every letter's Schrödinger map: (N, d, d) -> (N, l, d, d)."""
    return np.einsum("akij,njl,akml->naim", kraus, states, kraus.conj(), optimize=True)


def _subtree(states, logw, idx, kraus, effects, ell, steps):
    tiny = 0
    for step in range(steps):
        last = step == steps - 1
        if last:
            tr = np.einsum("aij,nji->na", effects, states).real
        else:
            new = _extend(states, kraus)
            tr = np.einsum("naii->na", new).real
        tiny += int(np.count_nonzero((tr > ZERO_TRACE) & (tr < TINY_TRACE)))
        keep = tr > ZERO_TRACE
        rows, cols = np.nonzero(keep)
        with np.errstate(divide="ignore"):
            logw = logw[rows] + np.log(tr[rows, cols])
        idx = idx[rows] * ell + cols
        if not last:
            states = new[rows, cols] / tr[rows, cols][:, None, None]
    return idx, logw, tiny


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("EPMEAS_WORKERS", "1")))
    except ValueError:
        return 1


def forward_log_probs(p: Process, T: int, cap: int = DEFAULT_CAP, return_tiny: bool = False):
    """Support and log-probabilities of ``P_T`` for the process ``p``.

    Returns sorted word indices and the log-probabilities of those words.
    Prefixes with zero probability are pruned, so the cost scales with the
    support size.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    ell = p.size
    check_cap(ell, T, cap)
    if T == 0:
        out = (np.zeros(1, dtype=np.int64), np.zeros(1))
        return out + (0,) if return_tiny else out
    kraus = _padded_kraus(p)
    effects = p.instrument.effects()
    rho = p.rho[None]
    workers = _workers()
    if workers > 1 and T > 1 and ell > 1:
        # split over first-letter subtrees; merge in letter order
        first = _extend(rho, kraus)[0]
        tr = np.einsum("aii->a", first).real
        jobs = []
        for a in range(ell):
            if tr[a] > ZERO_TRACE:
                jobs.append((first[a][None] / tr[a], np.array([np.log(tr[a])]), np.array([a], dtype=np.int64)))
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda j: _subtree(j[0], j[1], j[2], kraus, effects, ell, T - 1), jobs))
        if parts:
            idx = np.concatenate([q[0] for q in parts])
            logw = np.concatenate([q[1] for q in parts])
        else:
            idx, logw = np.zeros(0, dtype=np.int64), np.zeros(0)
        tiny = sum(q[2] for q in parts)
    else:
        idx, logw, tiny = _subtree(rho, np.zeros(1), np.zeros(1, dtype=np.int64), kraus, effects, ell, T)
    return (idx, logw, tiny) if return_tiny else (idx, logw)


def _group_logsumexp(keys: np.ndarray, vals: np.ndarray):
    """``logsumexp`` of ``vals`` grouped by ``keys``."""
    if keys.size == 0:
        return keys, vals
    order = np.argsort(keys, kind="stable")
    k, v = keys[order], vals[order]
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    m = np.maximum.reduceat(v, starts)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        s = np.add.reduceat(np.exp(v - np.repeat(safe, np.diff(np.r_[starts, v.size]))), starts)
        out = safe + np.log(s)
    out[~np.isfinite(m)] = -np.inf
    return k[starts], out


@dataclass
class PathTable:
    """Exact ``log P_T`` and ``log P_hat_T`` on the union of the supports.

    ``index`` holds sorted word indices; ``log_p`` and ``log_p_hat`` are aligned
    with it and may contain ``-inf``. Words not listed have zero probability
    under both measures.
    """

    T: int
    alphabet: Tuple[str, ...]
    index: np.ndarray
    log_p: np.ndarray
    log_p_hat: np.ndarray
    tiny_count: int = 0
    lambda0: float = 1.0
    perm: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ell(self) -> int:
        return len(self.alphabet)

    @property
    def n_words(self) -> int:
        return self.ell ** self.T

    def __len__(self):
        return self.index.size

    @property
    def p(self) -> np.ndarray:
        return np.exp(self.log_p)

    @property
    def p_hat(self) -> np.ndarray:
        return np.exp(self.log_p_hat)

    def dense(self, which: str = "p") -> np.ndarray:
        """Log-probabilities over all ``l**T`` words in lexicographic order."""
        out = np.full(self.n_words, -np.inf)
        out[self.index] = self.log_p if which == "p" else self.log_p_hat
        return out

    @property
    def dense_log_p(self) -> np.ndarray:
        return self.dense("p")

    @property
    def dense_log_p_hat(self) -> np.ndarray:
        return self.dense("p_hat")

    def words(self) -> List[Tuple[str, ...]]:
        return [index_to_word(int(i), self.T, self.alphabet) for i in self.index]

    def lookup(self, word: Sequence[str]) -> Tuple[float, float]:
        i = word_to_index(word, self.alphabet)
        k = np.searchsorted(self.index, i)
        if k < self.index.size and self.index[k] == i:
            return float(self.log_p[k]), float(self.log_p_hat[k])
        return -np.inf, -np.inf

    def normalization(self, which: str = "p") -> float:
        v = self.log_p if which == "p" else self.log_p_hat
        return float(_logsumexp(v))

    def marginal(self, drop: str = "last", which: str = "p"):
        """Sum out the last (or first) letter; returns (index, log-probs) of length T-1."""
        if self.T == 0:
            raise ValueError("cannot marginalize the empty word")
        v = self.log_p if which == "p" else self.log_p_hat
        if drop == "last":
            keys = self.index // self.ell
        elif drop == "first":
            keys = self.index % (self.ell ** (self.T - 1))
        else:
            raise ValueError("drop must be 'first' or 'last'")
        k, out = _group_logsumexp(keys, v)
        fin = np.isfinite(out)
        return k[fin], out[fin]

    def reversed_index(self) -> np.ndarray:
        perm = self.perm if self.perm is not None else np.arange(self.ell)
        return reverse_words(self.index, self.T, self.ell, perm)

    def to_csv(self, path_or_buf=None, all_words: bool = False) -> str:
        """CSV with columns ``word,labels,log_p,log_p_hat``.

        ``word`` is the lexicographic index, ``labels`` the space-separated
        outcome labels. Only the support is written unless ``all_words``.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["word", "labels", "log_p", "log_p_hat"])
        if all_words:
            lp, lq = self.dense("p"), self.dense("p_hat")
            rows = range(self.n_words)
            for i in rows:
                w.writerow([i, " ".join(index_to_word(i, self.T, self.alphabet)), repr(float(lp[i])), repr(float(lq[i]))])
        else:
            for i, a, b in zip(self.index, self.log_p, self.log_p_hat):
                w.writerow([int(i), " ".join(index_to_word(int(i), self.T, self.alphabet)), repr(float(a)), repr(float(b))])
        text = buf.getvalue()
        if path_or_buf is not None:
            if hasattr(path_or_buf, "write"):
                path_or_buf.write(text)
            else:
                with open(path_or_buf, "w", newline="") as fh:
                    fh.write(text)
        return text


def _logsumexp(v: np.ndarray) -> float:
    if v.size == 0:
        return -np.inf
    m = np.max(v)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))


def enumerate_table(p: Process, T: int, cap: int = DEFAULT_CAP, reversal: Optional[Process] = None) -> PathTable:
    """Exhaustive table of ``P_T`` and ``P_hat_T``.

    ``P_hat`` is evaluated through ``reversal`` (default: the process's
    attached or canonical reversal).

    Raises
    ------
    CapExceeded
        If ``l**T > cap``.
    """
    p.warn_if_not_stationary()
    rev = p.reversal if reversal is None else reversal
    check_cap(p.size, T, cap)
    cache = _cache_path(p, rev, T)
    if cache is not None and os.path.exists(cache):
        with np.load(cache) as z:
            return PathTable(T, p.alphabet, z["index"], z["log_p"], z["log_p_hat"], int(z["tiny"]),
                             p.lambda0, p.theta.permutation)
    i1, l1, t1 = forward_log_probs(p, T, cap, return_tiny=True)
    i2, l2, t2 = forward_log_probs(rev, T, cap, return_tiny=True)
    keys = np.union1d(i1, i2)
    lp = np.full(keys.size, -np.inf)
    lq = np.full(keys.size, -np.inf)
    lp[np.searchsorted(keys, i1)] = l1
    lq[np.searchsorted(keys, i2)] = l2
    if cache is not None:
        tmp = cache + ".tmp.npz"
        np.savez(tmp, index=keys, log_p=lp, log_p_hat=lq, tiny=t1 + t2)
        os.replace(tmp, cache)
    return PathTable(T, p.alphabet, keys, lp, lq, t1 + t2, p.lambda0, p.theta.permutation)


def fingerprint(p: Process, rev: Optional[Process] = None) -> str:
    """Hash of the data that determines the path measures."""
    h = hashlib.sha256()
    for q in (p, rev):
        if q is None:
            continue
        h.update(repr(q.alphabet).encode())
        for a in q.alphabet:
            h.update(np.ascontiguousarray(q.instrument[a].kraus).tobytes())
        h.update(np.ascontiguousarray(q.rho).tobytes())
    h.update(p.theta.permutation.tobytes())
    return h.hexdigest()


def _cache_path(p: Process, rev: Process, T: int) -> Optional[str]:
    root = os.environ.get("EPMEAS_CACHE_DIR")
    if not root:
        return None
    os.makedirs(root, exist_ok=True)
    return os.path.join(root, f"table_{fingerprint(p, rev)[:32]}_T{T}.npz")


def _propagate(p: Process, word_idx: Sequence[int]) -> float:
    kraus = _padded_kraus(p)
    s = p.rho
    total = 0.0
    for a in word_idx:
        K = kraus[a]
        s = np.einsum("kij,jl,kml->im", K, s, K.conj())
        tr = float(np.trace(s).real)
        if tr <= ZERO_TRACE:
            return -np.inf
        total += np.log(tr)
        s = s / tr
    return total


def log_prob(p: Process, word: Sequence[str], which: str = "forward") -> float:
    """``log P_T(word)`` by forward Schrödinger propagation with renormalization.

    ``which="reversed"`` evaluates ``P_hat`` through the reversal process.
    Returns ``-inf`` on a structural zero.
    """
    if which not in ("forward", "reversed"):
        raise ValueError("which must be 'forward' or 'reversed'")
    q = p if which == "forward" else p.reversal
    idx = [q.instrument.index(a) for a in word]
    return _propagate(q, idx)


@dataclass
class Trajectory:
    word: Tuple[str, ...]
    log_p: float
    log_p_hat: float
    conditioned_states: Optional[List[np.ndarray]] = None

    @property
    def sigma(self) -> float:
        return _sigma_scalar(self.log_p, self.log_p_hat)

    def to_json(self) -> str:
        return json.dumps({"word": list(self.word), "log_p": self.log_p, "log_p_hat": self.log_p_hat})


def _sigma_scalar(a: float, b: float) -> float:
    if a == -np.inf and b == -np.inf:
        return -np.inf
    return a - b


@dataclass
class SampleBatch:
    """``n`` sampled words of length ``T`` as letter indices."""

    alphabet: Tuple[str, ...]
    letters: np.ndarray  # (n, T)
    log_p: np.ndarray
    log_p_hat: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            s = self.log_p - self.log_p_hat
        return np.where(np.isnan(s), -np.inf, s)

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(tuple(self.alphabet[a] for a in self.letters[i]), float(self.log_p[i]), float(self.log_p_hat[i]))

    def to_jsonl(self, path_or_buf=None) -> str:
        text = "".join(self.trajectory(i).to_json() + "\n" for i in range(self.letters.shape[0]))
        if path_or_buf is not None:
            if hasattr(path_or_buf, "write"):
                path_or_buf.write(text)
            else:
                with open(path_or_buf, "w") as fh:
                    fh.write(text)
        return text


def sample_batch(p: Process, T: int, n: int, rng_seed=None, track_reversed: bool = True,
                 keep_states: bool = False):
    """Sample ``n`` independent trajectories of length ``T``.

    Each step draws the next letter from ``tr(Phi_a^*[rho_cur])`` and updates
    the conditioned state. ``log P_hat`` of the same word is accumulated by
    running the reversal process alongside.
    """
    rng = np.random.default_rng(rng_seed)
    ell, d = p.size, p.dim
    K = _padded_kraus(p)
    E = p.instrument.effects()
    states = np.broadcast_to(p.rho, (n, d, d)).copy()
    letters = np.empty((n, T), dtype=np.int64)
    logp = np.zeros(n)
    history = [] if keep_states else None
    if track_reversed:
        q = p.reversal
        Kq = _padded_kraus(q)
        qstates = np.broadcast_to(q.rho, (n, d, d)).copy()
        logq = np.zeros(n)
        alive = np.ones(n, dtype=bool)
    for t in range(T):
        probs = np.einsum("aij,nji->na", E, states).real
        probs = np.clip(probs, 0.0, None)
        cum = np.cumsum(probs, axis=1)
        u = rng.random(n) * cum[:, -1]
        a = np.minimum((cum <= u[:, None]).sum(axis=1), ell - 1)
        # guard against landing on a zero-probability letter at a boundary
        bad = probs[np.arange(n), a] <= 0
        if bad.any():
            a[bad] = np.argmax(probs[bad] > 0, axis=1)
        letters[:, t] = a
        Ka = K[a]
        new = np.einsum("nkij,njl,nkml->nim", Ka, states, Ka.conj())
        tr = np.einsum("nii->n", new).real
        logp += np.log(tr)
        states = new / tr[:, None, None]
        if keep_states:
            history.append(states.copy())
        if track_reversed:
            Kb = Kq[a]
            newq = np.einsum("nkij,njl,nkml->nim", Kb, qstates, Kb.conj())
            trq = np.einsum("nii->n", newq).real
            dead = trq <= ZERO_TRACE
            alive &= ~dead
            with np.errstate(divide="ignore"):
                logq = np.where(alive, logq + np.log(np.where(dead, 1.0, trq)), -np.inf)
            qstates = np.where(alive[:, None, None], newq / np.where(dead, 1.0, trq)[:, None, None], q.rho)
    batch = SampleBatch(p.alphabet, letters, logp, logq if track_reversed else np.full(n, np.nan))
    if keep_states:
        return batch, history
    return batch


def sample_trajectory(p: Process, T: int, rng_seed=None, keep_states: bool = False) -> Trajectory:
    """One sampled trajectory, reproducible given ``rng_seed``."""
    if keep_states:
        batch, hist = sample_batch(p, T, 1, rng_seed, keep_states=True)
        tr = batch.trajectory(0)
        tr.conditioned_states = [h[0] for h in hist]
        return tr
    return sample_batch(p, T, 1, rng_seed).trajectory(0)


def iter_trajectories(p: Process, T: int, n: int, rng_seed=None, chunk: int = 4096) -> Iterable[Trajectory]:
    """Stream trajectories in chunks; deterministic for a given seed."""
    ss = np.random.SeedSequence(rng_seed)
    done = 0
    for child in ss.spawn((n + chunk - 1) // chunk or 1):
        m = min(chunk, n - done)
        if m <= 0:
            break
        batch = sample_batch(p, T, m, np.random.default_rng(child))
        for i in range(m):
            yield batch.trajectory(i)
        done += m
