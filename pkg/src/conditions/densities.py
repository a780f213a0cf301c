"""
Gaussian densities entering the sufficient conditions
- dependence-broken covariances (conditional independence given a set)
- completion of a sub-string law to the full space through N(0, C)
- ContrastInstance: ∫ φ(x) q(x) [f_a(x) − f_b(x)] dx with Gaussian mixtures f_a, f_b
- per-condition instance builders
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.core.exceptions import DimensionError
from src.entropy.moments import QuadraticTerm
from src.linalg.pd_matrix import (
    LOG_2PI, IndexSet, PDMatrix, complete_covariance, conditional_params, covariance_dense,
    subsets_of_size,
)
from src.montecarlo.engine import Direction, Mixture

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContrastInstance:
    label: str
    mix_a: Mixture
    mix_b: Mixture
    term: QuadraticTerm
    direction: Direction
    key: Tuple[int, ...] = ()

    @property
    def dim(self) -> int:
        return self.mix_a[0][1].dim

    @property
    def is_trivial(self) -> bool:
        """Both sides are the same single Gaussian"""
        if len(self.mix_a) != 1 or len(self.mix_b) != 1:
            return False
        return self.mix_a[0][0] == self.mix_b[0][0] and self.mix_a[0][1] == self.mix_b[0][1]


def unit_term(dim: int) -> QuadraticTerm:
    return QuadraticTerm(1.0, np.zeros((dim, dim)))


def broken_covariance(sigma: np.ndarray, left: Sequence[int], right: Sequence[int],
                      given: Sequence[int]) -> np.ndarray:
    """
    Covariance with X(left) and X(right) made conditionally independent given X(given)
    (0-based positions; empty given makes them independent)
    """
    out = np.array(sigma, dtype=float, copy=True)
    left, right, given = list(left), list(right), list(given)
    if not left or not right:
        return out
    if given:
        g_block = PDMatrix(out[np.ix_(given, given)])
        cross = out[np.ix_(left, given)] @ g_block.solve(out[np.ix_(given, right)])
    else:
        cross = np.zeros((len(left), len(right)))
    out[np.ix_(left, right)] = cross
    out[np.ix_(right, left)] = cross.T
    return out


def _local(S: IndexSet, members) -> List[int]:
    """0-based positions of members inside the sub-string S"""
    order = {m: k for k, m in enumerate(S.members)}
    return [order[m] for m in members]


def _completed(C: PDMatrix, S: IndexSet, sigma_S: np.ndarray) -> PDMatrix:
    return PDMatrix(complete_covariance(C, S, sigma_S))


def _sub(C: PDMatrix, S: IndexSet) -> np.ndarray:
    pos = S.positions
    return C.entries[np.ix_(pos, pos)]


def mixture(lam: float, C1: PDMatrix, C2: PDMatrix) -> Mixture:
    return [(float(lam), C1), (1.0 - float(lam), C2)]


def mixture_covariance(mix: Mixture) -> PDMatrix:
    return PDMatrix(sum(w * c.entries for w, c in mix))


# -- chain-rule conditions --------------------------------------------------

def marginal_break_instances(C: PDMatrix) -> List[ContrastInstance]:
    """For every nonempty S and i ∈ S: break X_i from X(S⁺) given X(S⁻)"""
    d = C.dim
    out = []
    a = [(1.0, C)]
    for k in range(1, d + 1):
        for S in subsets_of_size(d, k):
            sigma = _sub(C, S)
            for i in S:
                minus = [j for j in S if j < i]
                plus = [j for j in S if j > i]
                broken = broken_covariance(sigma, _local(S, [i]), _local(S, plus), _local(S, minus))
                out.append(ContrastInstance(f"S={S.label()}, i={i}", a,
                                            [(1.0, _completed(C, S, broken))],
                                            unit_term(d), Direction.GE, (S.mask, i)))
    return out


def product_instance(C: PDMatrix) -> ContrastInstance:
    """Joint law against the product of its one-dimensional marginals"""
    return ContrastInstance("product", [(1.0, C)], [(1.0, PDMatrix(np.diag(np.diag(C.entries))))],
                            unit_term(C.dim), Direction.GE)


def pair_break_instances(C: PDMatrix) -> List[ContrastInstance]:
    """For #S >= 2 and i < j in S: break X_i from X_j given X(S ∖ {i, j})"""
    d = C.dim
    out = []
    a = [(1.0, C)]
    for k in range(2, d + 1):
        for S in subsets_of_size(d, k):
            sigma = _sub(C, S)
            for idx, i in enumerate(S.members):
                for j in S.members[idx + 1:]:
                    rest = [m for m in S if m not in (i, j)]
                    broken = broken_covariance(sigma, _local(S, [i]), _local(S, [j]), _local(S, rest))
                    out.append(ContrastInstance(f"S={S.label()}, i={i}, j={j}", a,
                                                [(1.0, _completed(C, S, broken))],
                                                unit_term(d), Direction.GE, (S.mask, i, j)))
    return out


def strong_hadamard_instances(C: PDMatrix, p: int) -> List[ContrastInstance]:
    """For i = 1..p on S = {1..i} ∪ {p+1..d}: break X_i from X_1^{i−1} given X_{p+1}^d"""
    d = C.dim
    if not 1 <= p < d:
        raise DimensionError(f"block split p must satisfy 1 <= p < {d}, got {p}")
    tail = IndexSet.span(d, p + 1, d)
    out = []
    for i in range(1, p + 1):
        S = IndexSet.span(d, 1, i).union(tail)
        sigma = _sub(C, S)
        head = list(range(1, i))
        broken = broken_covariance(sigma, _local(S, [i]), _local(S, head), _local(S, tail.members))
        out.append(ContrastInstance(f"i={i}, S={S.label()}", [(1.0, C)],
                                    [(1.0, _completed(C, S, broken))],
                                    unit_term(d), Direction.GE, (i,)))
    return out


# -- Ky Fan / maximum-entropy conditions --------------------------------------

def ky_fan_instances(C1: PDMatrix, C2: PDMatrix, lam: float) -> List[ContrastInstance]:
    mix = mixture(lam, C1, C2)
    C = mixture_covariance(mix)
    d = C.dim
    const = d * LOG_2PI + C.log_det()
    return [
        ContrastInstance("alpha", mix, [(1.0, C)], unit_term(d), Direction.GE),
        ContrastInstance("log-det and trace", mix, [(1.0, C)],
                         QuadraticTerm(const, C.inverse), Direction.LE),
    ]


def max_entropy_instances(C1: PDMatrix, C2: PDMatrix, lam: float) -> List[ContrastInstance]:
    """f is the λ-mixture; its Gaussian comparison is N(0, C) with C the mixture covariance"""
    mix = mixture(lam, C1, C2)
    C = mixture_covariance(mix)
    d = C.dim
    const = d * LOG_2PI + C.log_det()
    return [
        ContrastInstance("alpha", mix, [(1.0, C)], unit_term(d), Direction.GE),
        ContrastInstance("log-det and trace", mix, [(1.0, C)],
                         QuadraticTerm(const, -C.inverse), Direction.LE),
    ]


def _conditional_swap(mix: Mixture, C: PDMatrix, p: int) -> Mixture:
    """Keep each component's X_1^p marginal, draw X_{p+1}^d from its conditional law under C"""
    head = IndexSet.span(C.dim, 1, p)
    out = []
    for w, comp in mix:
        sigma = comp.entries[:p, :p]
        out.append((w, _completed(C, head, sigma)))
    return out


def conditional_max_entropy_instances(C1: PDMatrix, C2: PDMatrix, lam: float,
                                      p: int) -> List[ContrastInstance]:
    mix = mixture(lam, C1, C2)
    C = mixture_covariance(mix)
    d = C.dim
    if not 1 <= p < d:
        raise DimensionError(f"block split p must satisfy 1 <= p < {d}, got {p}")
    return [
        ContrastInstance("conditional", mix, _conditional_swap(mix, C, p), unit_term(d), Direction.GE),
        regression_instance(mix, C, p),
    ]


def regression_instance(mix: Mixture, C: PDMatrix, p: int) -> ContrastInstance:
    """q(x) = ln[(2π)^p det K] + (x_1^p − D x_{p+1}^d)ᵀ K⁻¹ (x_1^p − D x_{p+1}^d)"""
    D, K = conditional_params(C, p)
    d = C.dim
    proj = np.hstack([np.eye(p), -D])
    term = QuadraticTerm(p * LOG_2PI + K.log_det(), proj.T @ K.inverse @ proj)
    return ContrastInstance("regression", mix, [(1.0, C)], term, Direction.LE)


# -- sums of independent Gaussians --------------------------------------------

def sum_instance(C1: PDMatrix, C2: PDMatrix) -> ContrastInstance:
    """On (x, y): N(C1) ⊗ N(C2) against y ~ N(C2), x + y ~ N(C1 + C2) independent"""
    d = C1.dim
    if C2.dim != d:
        raise DimensionError(f"C1 has dimension {d}, C2 has {C2.dim}")
    a = np.zeros((2 * d, 2 * d))
    a[:d, :d] = C1.entries
    c2 = covariance_dense(C2)
    a[d:, d:] = c2
    b = np.block([[C1.entries + 2.0 * c2, -c2],
                  [-c2, c2]])
    return ContrastInstance("sum", [(1.0, PDMatrix(a))], [(1.0, PDMatrix(b))],
                            unit_term(2 * d), Direction.GE)


def sum_conditional_instance(A: PDMatrix, B: PDMatrix) -> ContrastInstance:
    """
    On (z_d, x', y') with Z = X + Y: the law of Z_d given (X', Y') against the law
    of Z_d given Z' = x' + y'
    """
    d = A.dim
    if B.dim != d:
        raise DimensionError(f"A has dimension {d}, B has {B.dim}")
    if d < 2:
        raise DimensionError("sum-conditional condition needs d >= 2")
    top = d - 1
    a_ent, b_ent = A.entries, B.entries
    total = a_ent + b_ent
    a_prime, b_prime = a_ent[:top, :top], b_ent[:top, :top]
    n = 2 * d - 1

    def layout(zz: float, zx: np.ndarray, zy: np.ndarray) -> PDMatrix:
        out = np.zeros((n, n))
        out[0, 0] = zz
        out[0, 1:d] = out[1:d, 0] = zx
        out[0, d:] = out[d:, 0] = zy
        out[1:d, 1:d] = a_prime
        out[d:, d:] = b_prime
        return PDMatrix(out)

    joint = layout(total[-1, -1], a_ent[-1, :top], b_ent[-1, :top])
    c = PDMatrix(total[:top, :top]).solve(total[:top, -1])
    swapped = layout(total[-1, -1], a_prime @ c, b_prime @ c)
    return ContrastInstance("sum-conditional", [(1.0, joint)], [(1.0, swapped)],
                            unit_term(n), Direction.GE)


def instance_count(kind: str, d: int) -> int:
    """Number of quantified instances for dimension d"""
    if kind == "marginal":
        return d * 2 ** (d - 1)
    if kind == "pair":
        return d * (d - 1) // 2 * 2 ** (d - 2) if d >= 2 else 0
    raise KeyError(kind)
