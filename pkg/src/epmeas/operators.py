"""Operator algebra and completely positive maps.

All maps are stored as Kraus families and act in the Heisenberg picture as

    Phi[X] = sum_k V_k^* X V_k,

with Schrödinger dual Phi^*[rho] = sum_k V_k rho V_k^*. Unitality means
sum_k V_k^* V_k = 1.

Superoperator matrices use column stacking: ``vec(X) = X.flatten(order="F")``
so that ``vec(A X B) = kron(B.T, A) @ vec(X)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

# default tolerances, overridable per call
UNITALITY_TOL = 1e-10
INVARIANCE_TOL = 1e-9
EIG_CLUSTER_TOL = 1e-8
STRICT_POS_TOL = 1e-12


class DimensionError(ValueError):
    """Operands live on different Hilbert spaces."""


class EigenSolverError(RuntimeError):
    """The dense eigen-solver failed to converge."""


class NonUniqueInvariantState(RuntimeError):
    """Eigenvalue 1 of the map is degenerate.

    ``fixed_dim`` is the dimension of the fixed-point space.
    """

    def __init__(self, fixed_dim: int):
        super().__init__(f"eigenvalue 1 is not simple (fixed-point space of dimension {fixed_dim})")
        self.fixed_dim = fixed_dim


class NotPositive(RuntimeError):
    """A candidate density matrix has a negative eigenvalue beyond tolerance."""


def as_operator(X, dim: Optional[int] = None) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {X.shape}")
    if dim is not None and X.shape[0] != dim:
        raise DimensionError(f"expected dimension {dim}, got {X.shape[0]}")
    return X


def dagger(X: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(X, -1, -2))


def is_hermitian(X, tol: float = 1e-12) -> bool:
    X = as_operator(X)
    return bool(np.max(np.abs(X - dagger(X)), initial=0.0) <= tol)


def min_eigenvalue(X) -> float:
    X = as_operator(X)
    return float(np.linalg.eigvalsh(0.5 * (X + dagger(X)))[0])


def is_positive(X, tol: float = 1e-12) -> bool:
    return is_hermitian(X, tol) and min_eigenvalue(X) >= -tol


def psd_power(rho, power: float, floor: float = STRICT_POS_TOL) -> np.ndarray:
    """Power of a positive definite matrix by spectral decomposition.

    Diagonal input is handled entrywise so that structural zeros elsewhere
    stay exact.
    """
    rho = as_operator(rho)
    off = rho - np.diag(np.diag(rho))
    if not np.any(off):
        w = np.diag(rho).real
        if power < 0 and np.min(w) <= floor:
            raise NotPositive(f"matrix is not strictly positive (min eigenvalue {np.min(w):.3e})")
        return np.diag(w.astype(complex) ** power)
    w, U = np.linalg.eigh(0.5 * (rho + dagger(rho)))
    if power < 0 and w[0] <= floor:
        raise NotPositive(f"matrix is not strictly positive (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    return (U * w ** power) @ dagger(U)


@dataclass(frozen=True, eq=False)
class CPMap:
    """Completely positive map given by a Kraus family (Heisenberg picture).

    Parameters
    ----------
    kraus : array_like, shape (K, d, d)
        Kraus operators ``V_k``. A single matrix is accepted for K = 1.
    """

    kraus: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.kraus, dtype=complex)
        if K.ndim == 2:
            K = K[None]
        if K.ndim != 3 or K.shape[1] != K.shape[2] or K.shape[0] == 0:
            raise DimensionError(f"kraus family must have shape (K, d, d), got {K.shape}")
        K = K.copy()
        K.setflags(write=False)
        object.__setattr__(self, "kraus", K)

    @property
    def dim(self) -> int:
        return self.kraus.shape[1]

    @property
    def n_kraus(self) -> int:
        return self.kraus.shape[0]

    def heisenberg(self, X) -> np.ndarray:
        X = as_operator(X, self.dim)
        return np.einsum("kji,jl,klm->im", self.kraus.conj(), X, self.kraus)

    def schrodinger(self, rho) -> np.ndarray:
        rho = as_operator(rho, self.dim)
        return np.einsum("kij,jl,kml->im", self.kraus, rho, self.kraus.conj())

    def __call__(self, X) -> np.ndarray:
        return self.heisenberg(X)

    @property
    def effect(self) -> np.ndarray:
        """``Phi[1] = sum_k V_k^* V_k``."""
        return np.einsum("kji,kjl->il", self.kraus.conj(), self.kraus)

    def unitality_defect(self) -> float:
        return float(np.linalg.norm(self.effect - np.eye(self.dim), 2))

    def is_unital(self, tol: float = UNITALITY_TOL) -> bool:
        return self.unitality_defect() <= tol

    def scaled(self, c: float) -> "CPMap":
        """The map ``c * Phi`` for c >= 0."""
        if c < 0:
            raise ValueError("CP maps can only be scaled by non-negative numbers")
        return CPMap(np.sqrt(c) * self.kraus)

    @staticmethod
    def identity(dim: int) -> "CPMap":
        return CPMap(np.eye(dim)[None])

    @staticmethod
    def combine(maps: Sequence["CPMap"], weights: Optional[Sequence[float]] = None) -> "CPMap":
        """Kraus family of ``sum_i w_i Phi_i``."""
        maps = list(maps)
        if not maps:
            raise ValueError("need at least one map")
        dims = {m.dim for m in maps}
        if len(dims) != 1:
            raise DimensionError(f"maps act on different dimensions {sorted(dims)}")
        if weights is None:
            weights = [1.0] * len(maps)
        parts = [np.sqrt(w) * m.kraus for m, w in zip(maps, weights) if w > 0]
        if not parts:
            return CPMap(np.zeros((1, maps[0].dim, maps[0].dim)))
        return CPMap(np.concatenate(parts))


def apply(cp: CPMap, X, picture: str = "heisenberg") -> np.ndarray:
    """Apply ``cp`` to an operator in the requested picture."""
    if picture == "heisenberg":
        return cp.heisenberg(X)
    if picture == "schrodinger":
        return cp.schrodinger(X)
    raise ValueError(f"unknown picture {picture!r}")


def superoperator_matrix(cp: CPMap, picture: str = "heisenberg") -> np.ndarray:
    """Matrix ``M`` with ``vec(Phi[X]) = M @ vec(X)`` (column stacking)."""
    V = cp.kraus
    if picture == "heisenberg":
        # V^* X V -> kron(V^T, V^*), V^* the adjoint
        return np.einsum("kca,kdb->abcd", V, V.conj()).reshape(cp.dim ** 2, cp.dim ** 2)
    if picture == "schrodinger":
        # V X V^* -> kron(conj(V), V)
        return np.einsum("kac,kbd->abcd", V.conj(), V).reshape(cp.dim ** 2, cp.dim ** 2)
    raise ValueError(f"unknown picture {picture!r}")


def vec(X) -> np.ndarray:
    return np.asarray(X).flatten(order="F")


def unvec(v, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


def tensor(a: CPMap, b: CPMap) -> CPMap:
    """``a ⊗ b`` with Kraus family ``{V_i ⊗ W_j}``."""
    K = np.einsum("iab,jcd->ijacbd", a.kraus, b.kraus)
    n = a.dim * b.dim
    return CPMap(K.reshape(a.n_kraus * b.n_kraus, n, n))


def compose(a: CPMap, b: CPMap) -> CPMap:
    """Heisenberg composition ``a ∘ b``: ``X -> a[b[X]]``.

    Its Kraus operators are the products ``W_j V_i``.
    """
    if a.dim != b.dim:
        raise DimensionError(f"cannot compose maps of dimensions {a.dim} and {b.dim}")
    K = np.einsum("jab,ibc->jiac", b.kraus, a.kraus)
    return CPMap(K.reshape(-1, a.dim, a.dim))


@dataclass(frozen=True)
class SpectralReport:
    spectral_radius: float
    eigenvalue_one_simple: bool
    peripheral_count: int
    gap: float
    multiplicity_one: int
    geometric_multiplicity_one: int
    has_subleading: bool
    second_modulus: float
    unital: bool
    eigenvalues: np.ndarray = field(repr=False)


def spectral_report(cp: CPMap, tol: float = EIG_CLUSTER_TOL) -> SpectralReport:
    """Spectral data of the superoperator of ``cp``.

    The gap is ``-log`` of the largest modulus left after removing the single
    eigenvalue closest to 1. For d = 1 there is no subleading eigenvalue and the
    gap is reported as ``inf`` with ``has_subleading=False``.
    """
    M = superoperator_matrix(cp)
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(str(exc)) from exc
    mod = np.abs(ev)
    radius = float(mod.max())
    near_one = np.abs(ev - 1.0) <= tol
    mult = int(near_one.sum())
    rank = np.linalg.matrix_rank(M - np.eye(M.shape[0]), tol=tol * max(1.0, np.linalg.norm(M, 2)))
    geo = int(M.shape[0] - rank)
    peripheral = int((mod >= 1.0 - tol).sum())
    if ev.size > 1:
        i1 = int(np.argmin(np.abs(ev - 1.0)))
        rest = np.delete(mod, i1)
        second = float(rest.max())
        gap = float(-np.log(second)) if second > 0 else np.inf
        has_sub = True
    else:
        second, gap, has_sub = 0.0, np.inf, False
    return SpectralReport(
        spectral_radius=radius,
        eigenvalue_one_simple=(mult == 1 and geo == 1),
        peripheral_count=peripheral,
        gap=max(gap, 0.0),
        multiplicity_one=mult,
        geometric_multiplicity_one=geo,
        has_subleading=has_sub,
        second_modulus=second,
        unital=cp.is_unital(),
        eigenvalues=ev,
    )


def invariant_state(cp: CPMap, tol: float = INVARIANCE_TOL, eig_tol: float = EIG_CLUSTER_TOL):
    """Invariant density matrix of the Schrödinger dual.

    Returns
    -------
    rho : ndarray
        Density matrix with ``Phi^*[rho] = rho``.
    lam_min : float
        Smallest eigenvalue of the candidate before positive-part projection.

    Raises
    ------
    NonUniqueInvariantState
        If eigenvalue 1 is degenerate.
    NotPositive
        If the fixed vector is not (close to) a positive matrix.
    """
    d = cp.dim
    if d == 1:
        return np.ones((1, 1), dtype=complex), 1.0
    report = spectral_report(cp, eig_tol)
    if not report.eigenvalue_one_simple:
        raise NonUniqueInvariantState(max(report.geometric_multiplicity_one, report.multiplicity_one))
    M = superoperator_matrix(cp, "schrodinger")
    ev, vecs = np.linalg.eig(M)
    v = vecs[:, int(np.argmin(np.abs(ev - 1.0)))]
    rho = unvec(v, d)
    tr = np.trace(rho)
    if abs(tr) < 1e-14:
        raise NotPositive("fixed vector is traceless")
    rho = rho / tr
    rho = 0.5 * (rho + dagger(rho))
    w, U = np.linalg.eigh(rho)
    lam_min = float(w[0])
    if lam_min < -np.sqrt(eig_tol):
        raise NotPositive(f"fixed point has eigenvalue {lam_min:.3e}")
    w = np.clip(w, 0.0, None)
    rho = (U * w) @ dagger(U)
    rho /= np.trace(rho).real
    # one refinement step: power iteration is a contraction on the fixed point
    rho = cp.schrodinger(rho)
    rho = 0.5 * (rho + dagger(rho))
    rho /= np.trace(rho).real
    resid = np.linalg.norm(cp.schrodinger(rho) - rho)
    if resid > tol:
        raise NotPositive(f"invariance residual {resid:.3e} exceeds {tol:.1e}")
    return rho, lam_min


def _orthonormal_add(basis: list, v: np.ndarray, tol: float) -> Optional[np.ndarray]:
    # two rounds of Gram-Schmidt for numerical stability
    for _ in range(2):
        for q in basis:
            v = v - np.vdot(q, v) * q
    n = np.linalg.norm(v)
    if n <= tol:
        return None
    return v / n


@dataclass(frozen=True)
class AlgebraReport:
    irreducible: bool
    algebra_dim: int
    full_dim: int
    invariant_subspace: Optional[np.ndarray] = field(default=None, repr=False)

    def __bool__(self):
        return self.irreducible


def generated_algebra_dim(ops: Sequence[np.ndarray], tol: float = 1e-9) -> int:
    return _algebra(ops, tol)[0]


def _algebra(ops, tol):
    ops = [as_operator(o) for o in ops]
    D = ops[0].shape[0]
    if any(o.shape[0] != D for o in ops):
        raise DimensionError("generators act on different dimensions")
    gens = []
    for o in ops:
        n = np.linalg.norm(o)
        if n > 0:
            gens.append(o / n)
    basis = [np.eye(D, dtype=complex).ravel() / np.sqrt(D)]
    frontier = [np.eye(D, dtype=complex)]
    while frontier and len(basis) < D * D:
        b = frontier.pop()
        for g in gens:
            v = _orthonormal_add(basis, (g @ b).ravel(), tol)
            if v is not None:
                basis.append(v)
                frontier.append(v.reshape(D, D))
                if len(basis) == D * D:
                    break
    return len(basis), basis


def is_irreducible_family(ops: Sequence, tol: float = 1e-9, seed: int = 0) -> AlgebraReport:
    """Burnside test: does the unital algebra generated by ``ops`` equal M_D(C)?

    The span of {1} is closed under left multiplication by the generators until
    its dimension stabilises. When the family is reducible, a proper invariant
    subspace is searched among cyclic subspaces ``A v``; it is returned as an
    orthonormal column basis when one is found.
    """
    ops = list(ops)
    if not ops:
        raise ValueError("need at least one operator")
    dim, basis = _algebra(ops, tol)
    D = as_operator(ops[0]).shape[0]
    full = D * D
    if dim == full:
        return AlgebraReport(True, dim, full)
    A = np.array(basis).reshape(-1, D, D)
    rng = np.random.default_rng(seed)
    candidates = list(np.eye(D, dtype=complex))
    candidates += [rng.normal(size=D) + 1j * rng.normal(size=D) for _ in range(4)]
    witness = None
    for v in candidates:
        span = np.einsum("kij,j->ik", A, v)
        r = np.linalg.matrix_rank(span, tol=tol)
        if 0 < r < D:
            u, _, _ = np.linalg.svd(span)
            witness = u[:, :r]
            break
    return AlgebraReport(False, dim, full, witness)


@dataclass(frozen=True)
class PositivityCheck:
    improving: bool
    witness: Optional[np.ndarray] = None
    trials: int = 0

    def __bool__(self):
        return self.improving


def is_positivity_improving(cp: CPMap, trials: int = 64, rng_seed: int = 0,
                            tol: float = 1e-10) -> PositivityCheck:
    """Randomised test that ``Phi[|phi><phi|] > 0`` for every unit vector.

    ``Phi[|phi><phi|] = sum_k |V_k^* phi><V_k^* phi|`` is invertible iff the
    vectors ``V_k^* phi`` span the space. A ``False`` answer is exact and comes
    with the witness ``phi``; ``True`` only means no failure was seen, the
    failure set being a proper algebraic variety.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    d = cp.dim
    rng = np.random.default_rng(rng_seed)
    Vh = dagger(cp.kraus)
    scale = max(1.0, float(np.max(np.abs(cp.kraus))))
    for _ in range(trials):
        phi = rng.normal(size=d) + 1j * rng.normal(size=d)
        phi /= np.linalg.norm(phi)
        cols = np.einsum("kij,j->ik", Vh, phi)
        if np.linalg.matrix_rank(cols, tol=tol * scale) < d:
            return PositivityCheck(False, phi, trials)
    return PositivityCheck(True, None, trials)


@dataclass(frozen=True)
class StrictPositivity:
    strictly_positive: bool
    epsilon: float

    def __bool__(self):
        return self.strictly_positive


def is_strictly_positive(cp: CPMap, tol: float = STRICT_POS_TOL) -> StrictPositivity:
    """``Phi[1] > 0``; ``epsilon`` is ``min sp(Phi[1])``."""
    eps = min_eigenvalue(cp.effect)
    return StrictPositivity(eps > tol, eps)


def depolarizing(dim: int, eta: float) -> CPMap:
    """``X -> (1 - eta) X + eta tr(X) 1/d`` as a Kraus family."""
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    units = np.zeros((dim * dim, dim, dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            units[i * dim + j, i, j] = 1.0
    parts = [np.sqrt(eta / dim) * units]
    if eta < 1:
        parts.insert(0, np.sqrt(1 - eta) * np.eye(dim)[None])
    return CPMap(np.concatenate(parts))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_isometry_kraus(dim: int, n_kraus: int, rng: np.random.Generator) -> np.ndarray:
    """``n_kraus`` operators with ``sum V^* V = 1`` (a random isometry cut in blocks)."""
    Z = rng.normal(size=(n_kraus * dim, dim)) + 1j * rng.normal(size=(n_kraus * dim, dim))
    Q, _ = np.linalg.qr(Z)
    return Q.reshape(n_kraus, dim, dim)


def pauli(name: str) -> np.ndarray:
    return {
        "i": np.eye(2, dtype=complex),
        "x": np.array([[0, 1], [1, 0]], dtype=complex),
        "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "z": np.array([[1, 0], [0, -1]], dtype=complex),
    }[name]


def operators_to_json(X) -> list:
    """Row-major nested list of ``[re, im]`` pairs."""
    X = as_operator(X)
    return [[[float(z.real), float(z.imag)] for z in row] for row in X]


def operators_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError("operator must be a nested list of [re, im] pairs")
    return as_operator(arr[..., 0] + 1j * arr[..., 1])


def kraus_equivalent(a: CPMap, b: CPMap, tol: float = 1e-10) -> bool:
    """Same map, compared through superoperator matrices."""
    return a.dim == b.dim and np.allclose(superoperator_matrix(a), superoperator_matrix(b), atol=tol, rtol=0)


def as_maps(items: Iterable) -> list:
    return [m if isinstance(m, CPMap) else CPMap(m) for m in items]
