"""
Weighted Gaussian moments and weighted entropies
- α_φ(C) = E φ(X), Φ = E φ(X) X Xᵀ, X ~ N(0, C)
- Quadratic functionals E[φ(X)(c + XᵀQX)] (closed form for exponential tilts)
- Joint, conditional and mutual weighted entropies, μ(C), ϖ_ψ(C)
- Moments of a pair weight under independent sums (β, Θ, Θ*, Θ̃)
All logarithms are natural.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.core.exceptions import DimensionError
from src.linalg.pd_matrix import (
    LOG_2PI, IndexSet, PDMatrix, covariance_dense, covariance_dim, covariance_factor, embed,
    submatrix,
)
from src.montecarlo.engine import Estimate, SampleSpec, expect_many
from src.weights.derived import reduce_wf, theta_wfs
from src.weights.weight_function import WeightFunction

logger = logging.getLogger(__name__)

CLOSED_FORM = "closed_form"
MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class MatrixEstimate:
    value: np.ndarray
    stderr: np.ndarray

    def entry(self, i: int, j: int, n: int = 0, seed: Optional[int] = None) -> Estimate:
        return Estimate(float(self.value[i, j]), float(self.stderr[i, j]), n, seed)

    def trace_with(self, Q: np.ndarray) -> Estimate:
        """tr(Q·M) for symmetric M; (i, j) and (j, i) share one estimate"""
        Q = np.asarray(Q, dtype=float)
        value = float(np.sum(Q * self.value))
        coef = np.triu(Q + Q.T) - np.diag(np.diag(Q))
        stderr = float(np.sqrt(np.sum((coef * self.stderr) ** 2)))
        return Estimate(value, stderr, 0 if stderr == 0.0 else 1)

    def to_dict(self) -> dict:
        return {"value": self.value.tolist(), "stderr": self.stderr.tolist()}


@dataclass(frozen=True)
class WeightedMoments:
    alpha: Estimate
    phi: MatrixEstimate
    method: str

    def phi_estimate(self, i: int, j: int) -> Estimate:
        return self.phi.entry(i, j, self.alpha.n, self.alpha.seed)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha.to_dict(), "phi": self.phi.to_dict(), "method": self.method}


@dataclass(frozen=True)
class QuadraticTerm:
    """q(x) = const + xᵀ Q x"""
    const: float
    matrix: np.ndarray

    @classmethod
    def zero(cls, dim: int) -> "QuadraticTerm":
        return cls(0.0, np.zeros((dim, dim)))

    def __add__(self, other: "QuadraticTerm") -> "QuadraticTerm":
        return QuadraticTerm(self.const + other.const, self.matrix + other.matrix)

    def __sub__(self, other: "QuadraticTerm") -> "QuadraticTerm":
        return QuadraticTerm(self.const - other.const, self.matrix - other.matrix)

    def __mul__(self, c: float) -> "QuadraticTerm":
        return QuadraticTerm(c * self.const, c * self.matrix)

    __rmul__ = __mul__

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.const + np.einsum('ni,ij,nj->n', x, self.matrix, x)


def entropy_term(C: PDMatrix, S: IndexSet) -> QuadraticTerm:
    """−ln f_{C(S)}(x(S)) = ½ ln[(2π)^k det C(S)] + ½ x(S)ᵀ C(S)⁻¹ x(S), on ℝ^d"""
    if len(S) == 0:
        return QuadraticTerm.zero(C.dim)
    block = submatrix(C, S)
    const = 0.5 * (len(S) * LOG_2PI + block.log_det())
    return QuadraticTerm(const, embed(0.5 * block.inverse, S))


def method_of(phi: WeightFunction, dim: int) -> str:
    return CLOSED_FORM if phi.tilt_form(dim) is not None else MONTE_CARLO


def _default(spec: Optional[SampleSpec]) -> SampleSpec:
    return spec if spec is not None else SampleSpec()


def weighted_moments(C: PDMatrix, phi: WeightFunction, spec: Optional[SampleSpec] = None) -> WeightedMoments:
    """
    α_φ(C) and Φ_{C,φ}
    - exponential tilt scale·exp(tᵀx): α = scale·exp(½tᵀCt), Φ = α(C + C t tᵀ C)
    - otherwise Monte Carlo (derived weights sample their auxiliary normals jointly)
    """
    phi.check_dim(C.dim)
    d = C.dim
    form = phi.tilt_form(d)
    if form is not None:
        t, scale = form
        ct = C.entries @ t
        alpha = scale * float(np.exp(0.5 * t @ ct))
        phi_value = alpha * (C.entries + np.outer(ct, ct))
        return WeightedMoments(Estimate.exact(alpha),
                               MatrixEstimate(phi_value, np.zeros((d, d))), CLOSED_FORM)

    spec = _default(spec)
    iu, ju = np.triu_indices(d)

    def integrand(x, aux):
        w = phi.joint_evaluate(x, aux)
        return np.column_stack([w, w[:, None] * x[:, iu] * x[:, ju]])

    est = expect_many(integrand, C, spec, aux_dim=phi.aux_dim)
    value = np.zeros((d, d))
    stderr = np.zeros((d, d))
    for col, (i, j) in enumerate(zip(iu, ju), start=1):
        value[i, j] = value[j, i] = est[col].value
        stderr[i, j] = stderr[j, i] = est[col].stderr
    return WeightedMoments(est[0], MatrixEstimate(value, stderr), MONTE_CARLO)


def weighted_functionals(C: PDMatrix, phi: WeightFunction, terms: Sequence[QuadraticTerm],
                         spec: Optional[SampleSpec] = None) -> List[Estimate]:
    """E[φ(X) q_j(X)] for each term, all from one sample set on the Monte Carlo path"""
    phi.check_dim(C.dim)
    if phi.tilt_form(C.dim) is not None:
        mom = weighted_moments(C, phi)
        alpha = mom.alpha.value
        return [Estimate.exact(alpha * q.const + float(np.sum(q.matrix * mom.phi.value))) for q in terms]

    def integrand(x, aux):
        w = phi.joint_evaluate(x, aux)
        return w[:, None] * np.column_stack([q.apply(x) for q in terms])

    return expect_many(integrand, C, _default(spec), aux_dim=phi.aux_dim)


def gaussian_we(C: PDMatrix, phi: WeightFunction, spec: Optional[SampleSpec] = None) -> Estimate:
    """σ_φ(C) = (α/2) ln[(2π)^d det C] + ½ tr(C⁻¹Φ)"""
    return weighted_functionals(C, phi, [entropy_term(C, IndexSet.full(C.dim))], spec)[0]


class SubsetEntropies:
    """
    Cache of H(S) = σ_{ψ(S)}(C(S)) with ψ(S) = reduce_wf(φ, C, S)
    - Monte Carlo seeds derive from (spec seed, bitmask of S)
    """

    def __init__(self, C: PDMatrix, phi: WeightFunction, spec: Optional[SampleSpec] = None,
                 probe: Optional[SampleSpec] = None):
        phi.check_dim(C.dim)
        self.C = C
        self.phi = phi
        self.spec = _default(spec)
        self.probe = probe
        self._cache: Dict[int, Estimate] = {0: Estimate.exact(0.0)}

    def __call__(self, S: IndexSet) -> Estimate:
        if S.mask not in self._cache:
            psi = reduce_wf(self.phi, self.C, S, self.probe)
            self._cache[S.mask] = gaussian_we(submatrix(self.C, S), psi, self.spec.derive(S.mask))
            logger.debug("H(%s) = %.6g", S.label(), self._cache[S.mask].value)
        return self._cache[S.mask]

    def combine(self, coefficients: Dict[int, float]) -> Estimate:
        """Σ coef·H(S) keyed by bitmask; coefficients for the same mask are merged first"""
        terms = []
        for mask, coef in sorted(coefficients.items()):
            if mask == 0 or coef == 0.0:
                continue
            terms.append((coef, self(IndexSet.from_mask(self.C.dim, mask))))
        if not terms:
            return Estimate.exact(0.0)
        return Estimate.combine(terms)


def accumulate(coefs: Dict[int, float], mask: int, value: float) -> None:
    coefs[mask] = coefs.get(mask, 0.0) + value


def conditional_we(C: PDMatrix, p: int, phi: WeightFunction, spec: Optional[SampleSpec] = None,
                   probe: Optional[SampleSpec] = None) -> Estimate:
    """h(X_{p+1}^d | X_1^p) = σ_φ(C) − σ_ψ(C_1^p), ψ = reduce_wf(φ, C, {1..p})"""
    if not 1 <= p < C.dim:
        raise DimensionError(f"p must satisfy 1 <= p < {C.dim}, got {p}")
    H = SubsetEntropies(C, phi, spec, probe)
    coefs: Dict[int, float] = {}
    accumulate(coefs, IndexSet.full(C.dim).mask, 1.0)
    accumulate(coefs, IndexSet.span(C.dim, 1, p).mask, -1.0)
    return H.combine(coefs)


def mutual_we(C: PDMatrix, S: IndexSet, phi: WeightFunction, spec: Optional[SampleSpec] = None,
              probe: Optional[SampleSpec] = None) -> Estimate:
    """
    i(X(S) : X(Sᶜ)) = (α/2) ln[det C(S) det C(Sᶜ) / det C]
                      + ½{tr(C(S)⁻¹Φ(S)) + tr(C(Sᶜ)⁻¹Φ(Sᶜ)) − tr(C⁻¹Φ)}
    """
    if S.dim != C.dim or len(S) == 0 or S.is_full:
        raise DimensionError("mutual entropy needs a nonempty proper subset")
    H = SubsetEntropies(C, phi, spec, probe)
    return _mutual(H, S)


def _mutual(H: SubsetEntropies, S: IndexSet) -> Estimate:
    coefs: Dict[int, float] = {}
    accumulate(coefs, S.mask, 1.0)
    accumulate(coefs, S.complement().mask, 1.0)
    accumulate(coefs, IndexSet.full(S.dim).mask, -1.0)
    return H.combine(coefs)


def mu(C: PDMatrix, p: int, phi: WeightFunction, spec: Optional[SampleSpec] = None,
       probe: Optional[SampleSpec] = None) -> Estimate:
    """
    μ(C) = α ln[(2π)^d det C] + tr(C⁻¹Φ) − α ln[(2π)^p det C_1^p] − tr((C_1^p)⁻¹Φ_1^p)
    (twice the conditional entropy of X_{p+1}^d given X_1^p; 0 for p = d)
    """
    if not 1 <= p <= C.dim:
        raise DimensionError(f"p must satisfy 1 <= p <= {C.dim}, got {p}")
    H = SubsetEntropies(C, phi, spec, probe)
    coefs: Dict[int, float] = {}
    accumulate(coefs, IndexSet.full(C.dim).mask, 2.0)
    accumulate(coefs, IndexSet.span(C.dim, 1, p).mask, -2.0)
    return H.combine(coefs)


def varpi(C: PDMatrix, psi: WeightFunction, spec: Optional[SampleSpec] = None,
          probe: Optional[SampleSpec] = None) -> Estimate:
    """ϖ_ψ(C) = σ_ψ(C) − σ_{ψ_1^{d−1}}(C_1^{d−1}), the last coordinate given the rest"""
    if C.dim < 2:
        raise DimensionError("varpi needs d >= 2")
    H = SubsetEntropies(C, psi, spec, probe)
    coefs: Dict[int, float] = {}
    accumulate(coefs, IndexSet.full(C.dim).mask, 1.0)
    accumulate(coefs, IndexSet.span(C.dim, 1, C.dim - 1).mask, -1.0)
    return H.combine(coefs)


@dataclass(frozen=True)
class SumMoments:
    """β = E φ(X, Y); Θ = E φ(X, Y) V Vᵀ (V = X + Y); Θ* = E φ(X+Y, Y) X Xᵀ;
    Θ̃ = E φ(X+Y, Y)(X Yᵀ + Y Xᵀ + Y Yᵀ)"""
    beta: Estimate
    theta: MatrixEstimate
    theta_star: MatrixEstimate
    theta_tilde: MatrixEstimate
    method: str


def sum_moments(phi: WeightFunction, C1: PDMatrix, C2, spec: Optional[SampleSpec] = None) -> SumMoments:
    """
    Moments of a pair weight for X ~ N(0, C1), Y ~ N(0, C2) independent
    Args:
        phi: weight on ℝ^d × ℝ^d
        C1: PDMatrix
        C2: PDMatrix or positive RankOneUpdate
    """
    d = C1.dim
    if covariance_dim(C2) != d:
        raise DimensionError(f"C1 has dimension {d}, C2 has {covariance_dim(C2)}")
    phi.check_dim(2 * d)
    c2 = covariance_dense(C2)
    zeros = np.zeros((d, d))
    form = phi.tilt_form(2 * d)
    if form is not None:
        t, _ = form
        s, u = t[:d], t[d:]
        theta, theta_star = theta_wfs(phi, C1, C2)
        on_sum = weighted_moments(PDMatrix(C1.entries + c2), theta)
        on_x = weighted_moments(C1, theta_star)
        kappa = on_x.alpha.value
        m_x = C1.entries @ s
        m_y = c2 @ (s + u)
        tilde = kappa * (np.outer(m_x, m_y) + np.outer(m_y, m_x) + c2 + np.outer(m_y, m_y))
        return SumMoments(on_sum.alpha, on_sum.phi, on_x.phi,
                          MatrixEstimate(tilde, zeros.copy()), CLOSED_FORM)

    L2 = covariance_factor(C2)
    iu, ju = np.triu_indices(d)

    def integrand(x, aux):
        y = aux @ L2.T
        v = x + y
        w_pair = phi.evaluate(np.hstack([x, y]))
        w_shift = phi.evaluate(np.hstack([v, y]))
        cross = x[:, iu] * y[:, ju] + y[:, iu] * x[:, ju] + y[:, iu] * y[:, ju]
        return np.column_stack([
            w_pair,
            w_pair[:, None] * v[:, iu] * v[:, ju],
            w_shift[:, None] * x[:, iu] * x[:, ju],
            w_shift[:, None] * cross,
        ])

    est = expect_many(integrand, C1, _default(spec), aux_dim=L2.shape[1])
    m = len(iu)

    def unpack(offset: int) -> MatrixEstimate:
        value, stderr = np.zeros((d, d)), np.zeros((d, d))
        for col, (i, j) in enumerate(zip(iu, ju)):
            e = est[offset + col]
            value[i, j] = value[j, i] = e.value
            stderr[i, j] = stderr[j, i] = e.stderr
        return MatrixEstimate(value, stderr)

    return SumMoments(est[0], unpack(1), unpack(1 + m), unpack(1 + 2 * m), MONTE_CARLO)

