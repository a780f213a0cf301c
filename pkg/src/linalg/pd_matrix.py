"""
Positive-definite matrix algebra
- PDMatrix with a Cholesky factor computed on construction
- IndexSet (1-based sub-strings of {1..d}) and principal submatrices
- Schur complements / conditional Gaussian laws
- Sherman-Morrison rank-one inverse updates
- Toeplitz and cyclic Toeplitz constructors, seeded random covariances
"""

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from src.core.exceptions import DimensionError, NotPositiveDefiniteError, SingularUpdateError

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
SYMMETRY_RTOL = 1e-12
SINGULAR_UPDATE_TOL = 1e-12
RANDOM_PD_RIDGE = 1e-3


class PDMatrix:
    """Symmetric strictly positive-definite matrix, immutable after construction"""

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DimensionError(f"expected a non-empty square matrix, got shape {a.shape}")
        scale = float(np.max(np.abs(a)))
        if not np.all(np.isfinite(a)):
            raise NotPositiveDefiniteError("matrix has non-finite entries")
        if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
            raise NotPositiveDefiniteError("matrix is not symmetric")
        # exact symmetry so that every downstream product is symmetric too
        a = 0.5 * (a + a.T)
        try:
            chol = linalg.cholesky(a, lower=True)
        except linalg.LinAlgError:
            raise NotPositiveDefiniteError("not positive definite")
        if np.any(np.diag(chol) <= 0.0):
            raise NotPositiveDefiniteError("not positive definite")
        a.setflags(write=False)
        chol.setflags(write=False)
        self._entries = a
        self._chol = chol

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    def dense(self) -> np.ndarray:
        return self._entries

    def factor(self) -> np.ndarray:
        """Matrix L with C = L Lᵀ (the Cholesky factor)"""
        return self._chol

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = linalg.cho_solve((self._chol, True), np.eye(self.dim))
        inv = 0.5 * (inv + inv.T)
        inv.setflags(write=False)
        return inv

    def log_det(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self._chol))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        return linalg.cho_solve((self._chol, True), b)

    def quad_form(self, x: np.ndarray) -> np.ndarray:
        """Row-wise xᵀ C⁻¹ x for an (n, d) array"""
        z = linalg.solve_triangular(self._chol, np.atleast_2d(x).T, lower=True)
        return np.sum(z * z, axis=0)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Row-wise log of the N(0, C) density"""
        return -0.5 * (self.dim * LOG_2PI + self.log_det() + self.quad_form(x))

    def scaled(self, c: float) -> "PDMatrix":
        return PDMatrix(c * self._entries)

    def __add__(self, other: "PDMatrix") -> "PDMatrix":
        other_dense = other.dense() if hasattr(other, 'dense') else np.asarray(other, dtype=float)
        if other_dense.shape != self._entries.shape:
            raise DimensionError(f"cannot add {other_dense.shape} to {self._entries.shape}")
        return PDMatrix(self._entries + other_dense)

    def __eq__(self, other) -> bool:
        return isinstance(other, PDMatrix) and np.array_equal(self._entries, other._entries)

    def __hash__(self) -> int:
        return hash(self._entries.tobytes())

    def __repr__(self) -> str:
        return f"PDMatrix(dim={self.dim})"

    def to_json(self) -> dict:
        return {"dim": self.dim, "rows": self._entries.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "PDMatrix":
        rows = np.array(data["rows"], dtype=float)
        dim = int(data.get("dim", rows.shape[0]))
        if rows.shape != (dim, dim):
            raise DimensionError(f"matrix declared dim {dim} but rows have shape {rows.shape}")
        return cls(rows)


@dataclass(frozen=True)
class IndexSet:
    """
    Strictly increasing subset of {1, ..., dim}
    - members are 1-based; positions gives the 0-based numpy index array
    """
    dim: int
    members: Tuple[int, ...]

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        object.__setattr__(self, 'members', members)
        if self.dim < 1:
            raise DimensionError(f"ambient dimension must be positive, got {self.dim}")
        if any(b <= a for a, b in zip(members, members[1:])):
            raise DimensionError(f"index set members must be strictly increasing: {members}")
        if members and (members[0] < 1 or members[-1] > self.dim):
            raise DimensionError(f"index set members must lie in 1..{self.dim}: {members}")

    @classmethod
    def full(cls, dim: int) -> "IndexSet":
        return cls(dim, tuple(range(1, dim + 1)))

    @classmethod
    def span(cls, dim: int, start: int, stop: int) -> "IndexSet":
        """{start, ..., stop} (1-based, inclusive; empty when start > stop)"""
        return cls(dim, tuple(range(start, stop + 1)))

    @classmethod
    def from_mask(cls, dim: int, mask: int) -> "IndexSet":
        return cls(dim, tuple(i + 1 for i in range(dim) if mask >> i & 1))

    @property
    def positions(self) -> np.ndarray:
        return np.array([m - 1 for m in self.members], dtype=int)

    @property
    def mask(self) -> int:
        return sum(1 << (m - 1) for m in self.members)

    @property
    def is_full(self) -> bool:
        return len(self.members) == self.dim

    def complement(self) -> "IndexSet":
        inside = set(self.members)
        return IndexSet(self.dim, tuple(i for i in range(1, self.dim + 1) if i not in inside))

    def union(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(self.dim, tuple(sorted(set(self.members) | set(other.members))))

    def without(self, *items: int) -> "IndexSet":
        return IndexSet(self.dim, tuple(m for m in self.members if m not in items))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __contains__(self, item) -> bool:
        return item in self.members

    def label(self) -> str:
        return "{" + ",".join(str(m) for m in self.members) + "}"


def subsets_of_size(dim: int, k: int) -> Iterator[IndexSet]:
    """All k-element subsets of {1..dim} in lexicographic order"""
    for combo in itertools.combinations(range(1, dim + 1), k):
        yield IndexSet(dim, combo)


def log_det(C: PDMatrix) -> float:
    """ln det C = 2 Σ ln L_ii"""
    return C.log_det()


def submatrix(C: PDMatrix, S: IndexSet) -> PDMatrix:
    """Principal submatrix C(S)"""
    if S.dim != C.dim:
        raise DimensionError(f"index set lives in dimension {S.dim}, matrix has {C.dim}")
    if len(S) == 0:
        raise DimensionError("empty index set")
    if S.is_full:
        return C
    pos = S.positions
    return PDMatrix(C.entries[np.ix_(pos, pos)])


def embed(block: np.ndarray, S: IndexSet) -> np.ndarray:
    """Place a |S|×|S| block into a dim×dim zero matrix at rows/columns S"""
    out = np.zeros((S.dim, S.dim))
    pos = S.positions
    out[np.ix_(pos, pos)] = block
    return out


def conditional_law(C: PDMatrix, given: IndexSet) -> Tuple[np.ndarray, PDMatrix]:
    """
    Law of X(Sᶜ) given X(S) = x for X ~ N(0, C)
    Args:
        C: covariance
        given: the conditioning set S (nonempty, proper)
    Returns:
        (M, K): conditional mean M·x and conditional covariance K (Schur complement)
    """
    if given.dim != C.dim:
        raise DimensionError(f"index set lives in dimension {given.dim}, matrix has {C.dim}")
    if len(given) == 0 or given.is_full:
        raise DimensionError("conditioning set must be a nonempty proper subset")
    g = given.positions
    r = given.complement().positions
    C_g = submatrix(C, given)
    C_rg = C.entries[np.ix_(r, g)]
    M = C_g.solve(C_rg.T).T
    K = C.entries[np.ix_(r, r)] - M @ C_rg.T
    return M, PDMatrix(0.5 * (K + K.T))


def conditional_params(C: PDMatrix, p: int) -> Tuple[np.ndarray, PDMatrix]:
    """
    Block-form regression of X_1^p on X_{p+1}^d
    Returns:
        D = C_cross (C_{p+1}^d)⁻¹ and K = C_1^p − C_cross (C_{p+1}^d)⁻¹ C_crossᵀ
    """
    if not 1 <= p < C.dim:
        raise DimensionError(f"block split p must satisfy 1 <= p < {C.dim}, got {p}")
    return conditional_law(C, IndexSet.span(C.dim, p + 1, C.dim))


def complete_covariance(C: PDMatrix, S: IndexSet, sigma_S: np.ndarray) -> np.ndarray:
    """
    Covariance of the full vector when X(S) ~ N(0, sigma_S) and X(Sᶜ) is drawn
    from the conditional law of N(0, C) given X(S)
    """
    sigma_S = np.asarray(sigma_S, dtype=float)
    if S.is_full:
        return sigma_S.copy()
    M, K = conditional_law(C, S)
    s = S.positions
    r = S.complement().positions
    out = np.empty((C.dim, C.dim))
    out[np.ix_(s, s)] = sigma_S
    cross = M @ sigma_S
    out[np.ix_(r, s)] = cross
    out[np.ix_(s, r)] = cross.T
    out[np.ix_(r, r)] = cross @ M.T + K.entries
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class RankOneUpdate:
    """E = sign · v vᵀ"""
    vector: np.ndarray
    sign: int = 1

    def __post_init__(self):
        v = np.array(self.vector, dtype=float).reshape(-1)
        if v.size == 0 or not np.any(v):
            raise DimensionError("rank-one update must be nonzero")
        if self.sign not in (1, -1):
            raise DimensionError(f"rank-one sign must be +1 or -1, got {self.sign}")
        v.setflags(write=False)
        object.__setattr__(self, 'vector', v)

    @property
    def dim(self) -> int:
        return self.vector.size

    def dense(self) -> np.ndarray:
        return self.sign * np.outer(self.vector, self.vector)

    def factor(self) -> np.ndarray:
        if self.sign < 0:
            raise NotPositiveDefiniteError("a negative rank-one update is not a covariance")
        return self.vector.reshape(-1, 1)

    def to_json(self) -> dict:
        return {"vector": self.vector.tolist(), "sign": self.sign}

    @classmethod
    def from_matrix(cls, E, rtol: float = 1e-9) -> "RankOneUpdate":
        """Recover (v, sign) from a dense symmetric rank-one matrix"""
        E = np.asarray(E, dtype=float)
        if E.ndim != 2 or E.shape[0] != E.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {E.shape}")
        j = int(np.argmax(np.abs(np.diag(E))))
        pivot = E[j, j]
        if pivot == 0.0:
            raise DimensionError("rank-one update must be nonzero")
        sign = 1 if pivot > 0 else -1
        v = E[:, j] / np.sqrt(abs(pivot))
        if np.max(np.abs(sign * np.outer(v, v) - E)) > rtol * np.max(np.abs(E)):
            raise DimensionError("matrix is not symmetric rank one")
        return cls(v, sign)


def _as_rank_one(E: Union[RankOneUpdate, np.ndarray]) -> RankOneUpdate:
    return E if isinstance(E, RankOneUpdate) else RankOneUpdate.from_matrix(E)


def update_trace(G: PDMatrix, E: Union[RankOneUpdate, np.ndarray]) -> float:
    """g = tr(E G⁻¹) = sign · vᵀ G⁻¹ v"""
    E = _as_rank_one(E)
    if E.dim != G.dim:
        raise DimensionError(f"update has dimension {E.dim}, matrix has {G.dim}")
    return float(E.sign * E.vector @ G.solve(E.vector))


def sherman_morrison_inverse(G: PDMatrix, E: Union[RankOneUpdate, np.ndarray]) -> np.ndarray:
    """
    (G + E)⁻¹ = G⁻¹ − G⁻¹ E G⁻¹ / (1 + g) with g = tr(E G⁻¹)
    """
    E = _as_rank_one(E)
    g = update_trace(G, E)
    if abs(1.0 + g) < SINGULAR_UPDATE_TOL:
        raise SingularUpdateError("singular update (g = -1)")
    w = G.solve(E.vector)
    inv = G.inverse - E.sign * np.outer(w, w) / (1.0 + g)
    return 0.5 * (inv + inv.T)


def cyclic_distance(i: int, j: int, dim: int) -> int:
    step = abs(i - j)
    return min(step, dim - step)


def toeplitz(first_row: Sequence[float], cyclic: bool = False, dim: Optional[int] = None) -> PDMatrix:
    """
    Symmetric (cyclic) Toeplitz matrix; entries beyond first_row are zero
    Args:
        first_row: r_0, r_1, ... with entry (i, j) = r[|i−j|] (or r[dist_d(i, j)] when cyclic)
        cyclic: use the cyclic distance min(|i−j|, d−|i−j|)
        dim: matrix size (defaults to len(first_row))
    """
    row = [float(x) for x in first_row]
    d = int(dim) if dim is not None else len(row)
    if d < 1 or not row:
        raise DimensionError("toeplitz needs a positive dimension and a nonempty first row")
    padded = np.zeros(d)
    padded[:min(d, len(row))] = row[:d]
    if not cyclic:
        return PDMatrix(linalg.toeplitz(padded))
    idx = np.arange(d)
    step = np.abs(idx[:, None] - idx[None, :])
    return PDMatrix(padded[np.minimum(step, d - step)])


def is_toeplitz(C: PDMatrix, cyclic: bool = False, atol: float = 1e-12) -> bool:
    d = C.dim
    a = C.entries
    scale = atol * max(1.0, float(np.max(np.abs(a))))
    for i in range(d):
        for j in range(d):
            k = cyclic_distance(i, j, d) if cyclic else abs(i - j)
            if abs(a[i, j] - a[0, k]) > scale:
                return False
    return True


def random_pd(d: int, seed: int) -> PDMatrix:
    """(1/d)·M Mᵀ + 1e-3·I with M of seeded standard normals"""
    if d < 1:
        raise DimensionError(f"dimension must be positive, got {d}")
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d))
    return PDMatrix(M @ M.T / d + RANDOM_PD_RIDGE * np.eye(d))


def random_cyclic_toeplitz(d: int, seed: int) -> PDMatrix:
    """Seeded cyclic Toeplitz covariance (diagonally dominant first row)"""
    rng = np.random.default_rng(seed)
    half = d // 2
    tail = rng.uniform(-1.0, 1.0, size=half) / max(1, d)
    row = [1.0] + list(tail)
    return toeplitz(row, cyclic=True, dim=d)


def covariance_dense(cov) -> np.ndarray:
    """Dense array of a PDMatrix, RankOneUpdate or array-like covariance"""
    return cov.dense() if hasattr(cov, 'dense') else np.asarray(cov, dtype=float)


def covariance_factor(cov) -> np.ndarray:
    """Matrix L with cov = L Lᵀ"""
    return cov.factor() if hasattr(cov, 'factor') else PDMatrix(cov).chol


def covariance_dim(cov) -> int:
    return int(cov.dim) if hasattr(cov, 'dim') else int(np.asarray(cov).shape[0])
