"""
k-indexed sequences of weighted entropies over sub-strings
- h, m: average joint entropy per element of k-subsets
- g, s: average exponentiated entropy exp(r·H(S)/k)
- p, w: average conditional entropy H(S | Sᶜ) per element
- q, u: average mutual entropy per element; I, z: the same without 1/k
- a: entropy of the leading k-block (Toeplitz covariances)
- subset_aggregates: T(k), A(k), Λ(k)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from src.core.exceptions import EnumerationCapError, ScenarioError
from src.linalg.pd_matrix import IndexSet, PDMatrix, is_toeplitz, submatrix, subsets_of_size
from src.montecarlo.engine import Estimate, SampleSpec
from src.entropy.moments import QuadraticTerm, SubsetEntropies, accumulate, weighted_functionals
from src.weights.derived import reduce_wf
from src.weights.weight_function import Constant, WeightFunction, is_product_form

logger = logging.getLogger(__name__)

CHAIN_LABELS = ("h", "g", "p", "q", "I", "m", "s", "a", "w", "u", "z")
DEFAULT_MAX_DIM = 16


@dataclass
class ChainValues:
    label: str
    d: int
    ks: List[int] = field(default_factory=list)
    values: List[Estimate] = field(default_factory=list)

    def rows(self) -> List[dict]:
        return [{"label": self.label, "d": self.d, "k": k, "value": e.value, "stderr": e.stderr}
                for k, e in zip(self.ks, self.values)]

    def to_dict(self) -> dict:
        return {"label": self.label, "d": self.d, "rows": self.rows()}


def check_enumeration_cap(d: int, max_dim: int = DEFAULT_MAX_DIM) -> None:
    if d > max_dim:
        raise EnumerationCapError(f"subset enumeration cap exceeded: d = {d} > {max_dim}")


def k_range(label: str, d: int) -> List[int]:
    if label == "z":
        return list(range(1, d // 2 + 1))
    return list(range(1, d + 1))


def _linear_entry(H: SubsetEntropies, label: str, k: int) -> Estimate:
    d = H.C.dim
    full = IndexSet.full(d).mask
    subsets = list(subsets_of_size(d, k))
    share = 1.0 / len(subsets)
    coefs: Dict[int, float] = {}
    if label in ("h", "m"):
        for S in subsets:
            accumulate(coefs, S.mask, share / k)
    elif label in ("p", "w"):
        accumulate(coefs, full, 1.0 / k)
        for S in subsets:
            accumulate(coefs, S.complement().mask, -share / k)
    else:
        # q, u per element; I, z per sub-string
        scale = 1.0 / k if label in ("q", "u") else 1.0
        for S in subsets:
            accumulate(coefs, S.mask, share * scale)
            accumulate(coefs, S.complement().mask, share * scale)
        accumulate(coefs, full, -scale)
    return H.combine(coefs)


def _exponential_entry(H: SubsetEntropies, k: int, r: float) -> Estimate:
    """avg exp(r·H(S)/k); stderr by the delta method"""
    subsets = list(subsets_of_size(H.C.dim, k))
    total, var, n = 0.0, 0.0, 0
    for S in subsets:
        e = H(S)
        term = math.exp(r * e.value / k)
        total += term
        var += (r / k * term * e.stderr) ** 2
        n = max(n, e.n)
    count = len(subsets)
    return Estimate(total / count, math.sqrt(var) / count, n)


def _check_toeplitz(C: PDMatrix, phi: WeightFunction) -> None:
    if not is_toeplitz(C):
        raise ScenarioError("Toeplitz structure required: C is not Toeplitz")
    if isinstance(phi, Constant):
        return
    if not is_toeplitz(C, cyclic=True):
        raise ScenarioError("Toeplitz structure required: non-constant weights need a cyclic Toeplitz C")
    if not is_product_form(phi):
        raise ScenarioError("Toeplitz structure required: weight must have identical product factors")


def chain(label: str, C: PDMatrix, phi: WeightFunction, spec: Optional[SampleSpec] = None,
          r: Optional[float] = None, max_dim: int = DEFAULT_MAX_DIM,
          probe: Optional[SampleSpec] = None) -> ChainValues:
    """
    Sequence `label` over k for X ~ N(0, C) and weight φ
    Args:
        label: one of CHAIN_LABELS
        C: covariance (d <= max_dim)
        phi: weight on ℝ^d
        spec: Monte Carlo spec; each subset derives its seed from its bitmask
        r: exponent for 'g' and 's' (r > 0)
    Returns:
        ChainValues with one Estimate per k
    """
    if label not in CHAIN_LABELS:
        raise ScenarioError(f"unknown chain label: {label!r}")
    d = C.dim
    check_enumeration_cap(d, max_dim)
    if label in ("g", "s") and (r is None or not r > 0.0):
        raise ScenarioError(f"chain {label!r} needs r > 0")
    if label == "a":
        _check_toeplitz(C, phi)

    H = SubsetEntropies(C, phi, spec, probe)
    result = ChainValues(label, d)
    for k in k_range(label, d):
        if label in ("g", "s"):
            value = _exponential_entry(H, k, float(r))
        elif label == "a":
            value = H(IndexSet.span(d, 1, k)) * (2.0 / k)
        else:
            value = _linear_entry(H, label, k)
        result.ks.append(k)
        result.values.append(value)
        logger.debug("chain %s: k=%d value=%.6g stderr=%.2g", label, k, value.value, value.stderr)
    return result


def subset_aggregates(C: PDMatrix, phi: WeightFunction, spec: Optional[SampleSpec] = None,
                      probe: Optional[SampleSpec] = None, max_dim: int = DEFAULT_MAX_DIM) -> List[dict]:
    """
    Per k: T(k) = Σ τ(S), A(k) = Σ α(S), Λ(k) = Σ α(S) ln det C(S) over #S = k,
    with τ(S) = tr(C(S)⁻¹Φ(S)) and α(S), Φ(S) the moments of ψ(S) under C(S)
    """
    check_enumeration_cap(C.dim, max_dim)
    spec = spec if spec is not None else SampleSpec()
    rows = []
    for k in range(1, C.dim + 1):
        T, A, L = [], [], []
        for S in subsets_of_size(C.dim, k):
            block = submatrix(C, S)
            psi = reduce_wf(phi, C, S, probe)
            zero = np.zeros((k, k))
            alpha, tau, lam = weighted_functionals(
                block, psi,
                [QuadraticTerm(1.0, zero), QuadraticTerm(0.0, block.inverse),
                 QuadraticTerm(block.log_det(), zero)],
                spec.derive(S.mask))
            T.append((1.0, tau))
            A.append((1.0, alpha))
            L.append((1.0, lam))
        rows.append({"k": k, "T": Estimate.combine(T), "A": Estimate.combine(A),
                     "Lambda": Estimate.combine(L)})
    return rows
