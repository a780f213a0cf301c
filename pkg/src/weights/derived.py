"""
Derived weight functions
- AffineGaussianWF: ψ(z) = E φ(L z + R g), g ~ N(0, I)
- reduce_wf: reduced weight ψ(S; x(S)) = E[φ(X) | X(S) = x(S)]
- theta_wfs: θ / θ* for the sum X + Y of independent Gaussians
- sum_conditioned_wfs: ψ, χ, γ built from a weight on (z_d, x', y')
Every derived weight is flattened onto its root (non-derived) weight, so
Monte Carlo over a derived weight is single-level joint sampling.
"""

import hashlib
import logging
from typing import Optional, Tuple

import numpy as np

from src.core.exceptions import DimensionError
from src.linalg.pd_matrix import (
    IndexSet, PDMatrix, conditional_law, covariance_dense, covariance_dim, covariance_factor,
)
from src.montecarlo.engine import Estimate, SampleSpec, expect_many
from src.weights.weight_function import TiltForm, WeightFunction

logger = logging.getLogger(__name__)

DEFAULT_PROBE = SampleSpec(n_samples=4096, seed=0)


def point_hash(x: np.ndarray) -> int:
    digest = hashlib.blake2b(np.ascontiguousarray(x, dtype=float).tobytes(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class AffineGaussianWF(WeightFunction):
    """ψ(z) = E_g base(lin·z + noise·g)"""

    def __init__(self, base: WeightFunction, lin: np.ndarray, noise: np.ndarray,
                 probe: Optional[SampleSpec] = None):
        lin = np.atleast_2d(np.asarray(lin, dtype=float))
        noise = np.asarray(noise, dtype=float).reshape(lin.shape[0], -1)
        if base.dim is not None and base.dim != lin.shape[0]:
            raise DimensionError(f"base weight has dimension {base.dim}, map produces {lin.shape[0]}")
        self.base = base
        self.lin = lin
        self.noise = noise
        self.probe = probe or DEFAULT_PROBE
        self.dim = lin.shape[1]
        self.aux_dim = noise.shape[1]

    def compose(self, lin: np.ndarray, noise: np.ndarray) -> "AffineGaussianWF":
        """Weight z ↦ E ψ(lin·z + noise·h) flattened onto the same base"""
        lin = np.atleast_2d(np.asarray(lin, dtype=float))
        noise = np.asarray(noise, dtype=float).reshape(lin.shape[0], -1)
        return AffineGaussianWF(self.base, self.lin @ lin,
                                np.hstack([self.lin @ noise, self.noise]), self.probe)

    def tilt_form(self, dim: int) -> Optional[TiltForm]:
        self.check_dim(dim)
        root = self.base.tilt_form(self.lin.shape[0])
        if root is None:
            return None
        t, scale = root
        spread = self.noise.T @ t
        return self.lin.T @ t, scale * float(np.exp(0.5 * spread @ spread))

    def joint_evaluate(self, z: np.ndarray, aux: np.ndarray) -> np.ndarray:
        return self.base.evaluate(np.atleast_2d(z) @ self.lin.T + aux @ self.noise.T)

    def estimate_at(self, x, probe: Optional[SampleSpec] = None) -> Estimate:
        """ψ(x) by Monte Carlo over g; seed derived from (probe seed, hash of x)"""
        x = np.asarray(x, dtype=float).reshape(-1)
        self.check_dim(x.size)
        probe = probe or self.probe
        centre = self.lin @ x
        if self.aux_dim == 0:
            return Estimate.exact(float(self.base.evaluate(centre[None, :])[0]))
        spec = probe.derive(point_hash(x))
        noise = self.noise
        base = self.base
        return expect_many(lambda g, _aux: base.evaluate(centre + g @ noise.T),
                           np.eye(self.aux_dim), spec)[0]

    def evaluate(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        form = self.tilt_form(self.dim)
        if form is not None:
            t, scale = form
            return scale * np.exp(x @ t)
        return np.array([self.estimate_at(row).value for row in x])

    def scaled(self, c):
        return AffineGaussianWF(self.base.scaled(c), self.lin, self.noise, self.probe)

    @property
    def method(self) -> str:
        return "closed_form" if self.tilt_form(self.dim) is not None else "monte_carlo"


class ReducedWF(AffineGaussianWF):
    """ψ(S; ·) of a weight under the model N(0, C)"""

    def __init__(self, base, lin, noise, probe, source: WeightFunction, model: PDMatrix,
                 subset: IndexSet):
        super().__init__(base, lin, noise, probe)
        self.source = source
        self.model = model
        self.subset = subset

    def scaled(self, c):
        return ReducedWF(self.base.scaled(c), self.lin, self.noise, self.probe,
                         self.source.scaled(c), self.model, self.subset)


def derive(phi: WeightFunction, lin: np.ndarray, noise: np.ndarray,
           probe: Optional[SampleSpec] = None) -> AffineGaussianWF:
    if isinstance(phi, AffineGaussianWF):
        return phi.compose(lin, noise)
    return AffineGaussianWF(phi, lin, noise, probe)


def reduce_wf(phi: WeightFunction, C: PDMatrix, S: IndexSet,
              probe: Optional[SampleSpec] = None) -> WeightFunction:
    """
    Reduced weight ψ(S; x(S)) = ∫ φ(x) f(x(Sᶜ) | x(S)) dx(Sᶜ)
    Args:
        phi: weight on ℝ^d
        C: model covariance
        S: nonempty subset; the full set returns phi itself
        probe: sample spec for pointwise Monte Carlo evaluation
    """
    phi.check_dim(C.dim)
    if S.dim != C.dim:
        raise DimensionError(f"index set lives in dimension {S.dim}, matrix has {C.dim}")
    if len(S) == 0:
        raise DimensionError("empty index set")
    if S.is_full:
        return phi
    M, K = conditional_law(C, S)
    s, r = S.positions, S.complement().positions
    lin = np.zeros((C.dim, len(S)))
    lin[s, :] = np.eye(len(S))
    lin[r, :] = M
    noise = np.zeros((C.dim, C.dim - len(S)))
    noise[r, :] = K.chol
    flat = derive(phi, lin, noise, probe)
    return ReducedWF(flat.base, flat.lin, flat.noise, flat.probe, phi, C, S)


def theta_wfs(phi: WeightFunction, C1: PDMatrix, C2,
              probe: Optional[SampleSpec] = None) -> Tuple[AffineGaussianWF, AffineGaussianWF]:
    """
    Weights induced on X + Y and on X by a pair weight φ(x, y)
    Args:
        phi: weight on ℝ^d × ℝ^d
        C1: covariance of X
        C2: covariance of Y (PDMatrix or positive RankOneUpdate)
    Returns:
        (θ, θ*) with θ(v) = E[φ(v − Y, Y) | X + Y = v] and θ*(x) = E φ(x + Y, Y)
    """
    d = C1.dim
    if covariance_dim(C2) != d:
        raise DimensionError(f"C1 has dimension {d}, C2 has {covariance_dim(C2)}")
    phi.check_dim(2 * d)
    L2 = covariance_factor(C2)
    eye = np.eye(d)

    theta_star = derive(phi, np.vstack([eye, np.zeros((d, d))]), np.vstack([L2, L2]), probe)

    total = PDMatrix(C1.entries + covariance_dense(C2))
    gain = total.solve(covariance_dense(C2)).T
    # η | X+Y=v has covariance I − L2ᵀ(C1+C2)⁻¹L2, so Y | v = G v + L2·chol(·)·g
    inner = PDMatrix(np.eye(L2.shape[1]) - L2.T @ total.solve(L2))
    spread = L2 @ inner.chol
    theta = derive(phi, np.vstack([eye - gain, gain]), np.vstack([-spread, spread]), probe)
    return theta, theta_star


def sum_conditioned_wfs(phi: WeightFunction, A: PDMatrix, B: PDMatrix,
                        probe: Optional[SampleSpec] = None):
    """
    Weights for Z = X + Y, X ~ N(0, A), Y ~ N(0, B), from φ(z_d, x', y')
    (primes are the first d−1 coordinates)
    Returns:
        (ψ, χ, γ): ψ(z) = E[φ(z_d, X', z' − X') | Z = z],
        χ(x) = E ψ(x + Y_B), γ(x) = E ψ(x + Y_A)
    """
    d = A.dim
    if B.dim != d:
        raise DimensionError(f"A has dimension {d}, B has {B.dim}")
    phi.check_dim(2 * d - 1)
    total = A + B
    gain = total.solve(A.entries).T
    cond = PDMatrix(A.entries - gain @ A.entries)
    top = d - 1
    lin = np.zeros((2 * d - 1, d))
    lin[0, d - 1] = 1.0
    lin[1:d, :] = gain[:top]
    lin[d:, :] = np.eye(d)[:top] - gain[:top]
    noise = np.zeros((2 * d - 1, d))
    noise[1:d, :] = cond.chol[:top]
    noise[d:, :] = -cond.chol[:top]
    psi = derive(phi, lin, noise, probe)
    chi = psi.compose(np.eye(d), B.chol)
    gamma = psi.compose(np.eye(d), A.chol)
    return psi, chi, gamma
