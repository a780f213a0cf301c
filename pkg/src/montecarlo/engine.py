"""
Seeded Monte Carlo engine over Gaussian laws
- SampleSpec / Estimate value types
- Chunked sampling with counter-based (Philox) per-chunk streams
- Plain expectations, joint expectations with auxiliary normals
- Importance-sampled integrals against differences of Gaussian mixtures
- Signed verdicts with a z-band
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from src.core.exceptions import DimensionError, IntegrandError
from src.linalg.pd_matrix import PDMatrix, covariance_factor

logger = logging.getLogger(__name__)

SEED_MODULUS = 2 ** 64

# (weight, covariance) pairs; weights of one mixture sum to 1
Mixture = Sequence[Tuple[float, PDMatrix]]


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed of (seed, keys...)"""
    ss = np.random.SeedSequence(entropy=int(seed) % SEED_MODULUS,
                                spawn_key=tuple(int(k) % SEED_MODULUS for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    """Generator for chunk i: Philox keyed by SeedSequence(seed, spawn_key=(i,))"""
    ss = np.random.SeedSequence(entropy=int(seed) % SEED_MODULUS, spawn_key=(int(chunk_index),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SampleSpec:
    n_samples: int = 100000
    seed: int = 0
    chunk_size: int = 4096
    workers: int = 1

    def __post_init__(self):
        if int(self.n_samples) < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if int(self.chunk_size) < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if int(self.workers) < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    @classmethod
    def from_config(cls, config: dict) -> "SampleSpec":
        sampling = config.get('sampling', {})
        return cls(
            n_samples=int(sampling.get('samples', 100000)),
            seed=int(sampling.get('seed', 0)),
            chunk_size=int(sampling.get('chunk_size', 4096)),
            workers=int(sampling.get('workers', 1)),
        )

    def derive(self, *keys: int) -> "SampleSpec":
        return replace(self, seed=derive_seed(self.seed, *keys))

    def with_samples(self, n_samples: int) -> "SampleSpec":
        return replace(self, n_samples=int(n_samples))

    def chunk_sizes(self) -> List[int]:
        full, rest = divmod(int(self.n_samples), int(self.chunk_size))
        return [int(self.chunk_size)] * full + ([rest] if rest else [])

    def to_dict(self) -> dict:
        return {"samples": self.n_samples, "seed": self.seed, "chunk_size": self.chunk_size}


@dataclass(frozen=True)
class Estimate:
    """Value with standard error; n == 0 marks an exact (closed-form) value"""
    value: float
    stderr: float = 0.0
    n: int = 0
    seed: Optional[int] = None

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(float(value), 0.0, 0, None)

    @property
    def is_exact(self) -> bool:
        return self.n == 0

    @staticmethod
    def combine(terms: Iterable[Tuple[float, "Estimate"]]) -> "Estimate":
        """Σ c_i·e_i with root-sum-square stderr (terms treated as independent)"""
        value, var, n, seeds = 0.0, 0.0, 0, set()
        for coef, est in terms:
            if coef == 0.0:
                continue
            value += coef * est.value
            var += (coef * est.stderr) ** 2
            n = max(n, est.n)
            if est.seed is not None:
                seeds.add(est.seed)
        seed = seeds.pop() if len(seeds) == 1 else None
        return Estimate(float(value), float(math.sqrt(var)), n, seed)

    def __add__(self, other: "Estimate") -> "Estimate":
        return Estimate.combine([(1.0, self), (1.0, other)])

    def __sub__(self, other: "Estimate") -> "Estimate":
        return Estimate.combine([(1.0, self), (-1.0, other)])

    def __neg__(self) -> "Estimate":
        return Estimate(-self.value, self.stderr, self.n, self.seed)

    def __mul__(self, c: float) -> "Estimate":
        return Estimate(float(c) * self.value, abs(float(c)) * self.stderr, self.n, self.seed)

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n, "seed": self.seed}


class Direction(str, Enum):
    GE = ">=0"
    LE = "<=0"
    EQ = "=0"

    def flipped(self) -> "Direction":
        return {Direction.GE: Direction.LE, Direction.LE: Direction.GE}.get(self, self)


class Verdict(str, Enum):
    HOLDS = "Holds"
    FAILS = "Fails"
    INCONCLUSIVE = "Inconclusive"


def signed_verdict(e: Estimate, direction: Direction, z_crit: float = 4.0,
                   tolerance: float = 0.0) -> Verdict:
    """
    Holds when the direction is met with margin >= z·stderr, Fails when it is
    violated by that margin, Inconclusive otherwise; tolerance widens the band.
    For =0 the Holds region |value| <= z·stderr + tolerance and the Fails region
    are complementary, so an equality is never Inconclusive.
    """
    direction = Direction(direction)
    band = z_crit * e.stderr
    if direction == Direction.EQ:
        return Verdict.HOLDS if abs(e.value) <= band + tolerance else Verdict.FAILS
    signed = e.value if direction == Direction.GE else -e.value
    if e.stderr == 0.0:
        return Verdict.HOLDS if signed >= -tolerance else Verdict.FAILS
    if signed >= band - tolerance:
        return Verdict.HOLDS
    if signed <= -band - tolerance:
        return Verdict.FAILS
    return Verdict.INCONCLUSIVE


def aggregate_verdicts(verdicts: Iterable[Verdict]) -> Verdict:
    """Holds iff all hold; Fails if any fails; otherwise Inconclusive"""
    verdicts = list(verdicts)
    if any(v == Verdict.FAILS for v in verdicts):
        return Verdict.FAILS
    if all(v == Verdict.HOLDS for v in verdicts):
        return Verdict.HOLDS
    return Verdict.INCONCLUSIVE


# -- chunk driver ---------------------------------------------------------

ChunkFn = Callable[[np.random.Generator, int], np.ndarray]


def _run_chunks(chunk_fn: ChunkFn, spec: SampleSpec) -> List[Estimate]:
    """Evaluate chunk_fn on every chunk and pool means/variances in chunk order"""
    sizes = spec.chunk_sizes()

    def task(index: int):
        values = np.asarray(chunk_fn(chunk_rng(spec.seed, index), sizes[index]), dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if not np.all(np.isfinite(values)):
            raise IntegrandError("integrand not finite at sample")
        mean = values.mean(axis=0)
        m2 = np.sum((values - mean) ** 2, axis=0)
        return values.shape[0], mean, m2

    if spec.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(task, range(len(sizes))))
    else:
        results = [task(i) for i in range(len(sizes))]

    # Chan et al. pairwise update, always in chunk order
    n, mean, m2 = results[0]
    for n_b, mean_b, m2_b in results[1:]:
        total = n + n_b
        delta = mean_b - mean
        mean = mean + delta * (n_b / total)
        m2 = m2 + m2_b + delta ** 2 * (n * n_b / total)
        n = total
    if n > 1:
        stderr = np.sqrt(m2 / (n - 1) / n)
    else:
        stderr = np.zeros_like(mean)
    logger.debug("pooled %d chunks, n=%d, seed=%d", len(sizes), n, spec.seed)
    return [Estimate(float(v), float(s), int(n), int(spec.seed)) for v, s in zip(mean, stderr)]


def _gaussian_block(rng: np.random.Generator, m: int, factor: np.ndarray, aux_dim: int):
    g = rng.standard_normal((m, factor.shape[1] + aux_dim))
    return g[:, :factor.shape[1]] @ factor.T, g[:, factor.shape[1]:]


def sample_gaussian(C, spec: SampleSpec) -> Iterator[np.ndarray]:
    """Yield the chunks of L·g, g i.i.d. standard normal; chunk i uses chunk_rng(seed, i)"""
    factor = covariance_factor(C)
    for index, m in enumerate(spec.chunk_sizes()):
        x, _ = _gaussian_block(chunk_rng(spec.seed, index), m, factor, 0)
        yield x


def expect_many(g: Callable[[np.ndarray, np.ndarray], np.ndarray], C, spec: SampleSpec,
                aux_dim: int = 0) -> List[Estimate]:
    """
    Means of the columns of g(x, aux) with x ~ N(0, C) and aux ~ N(0, I_aux_dim)
    Args:
        g: pure routine mapping (m, d) samples and (m, aux_dim) normals to (m,) or (m, k)
        C: PDMatrix, RankOneUpdate or anything with a factor()
        spec: sample spec
        aux_dim: number of independent auxiliary standard normals per sample
    """
    factor = covariance_factor(C)

    def chunk(rng, m):
        x, aux = _gaussian_block(rng, m, factor, aux_dim)
        return g(x, aux)

    return _run_chunks(chunk, spec)


def expect(g: Callable[[np.ndarray], np.ndarray], C, spec: SampleSpec) -> Estimate:
    """E g(X), X ~ N(0, C)"""
    estimates = expect_many(lambda x, _aux: np.asarray(g(x), dtype=float).reshape(-1), C, spec)
    return estimates[0]


def mixture_contrast(integrand: Callable[[np.ndarray], np.ndarray], mix_a: Mixture, mix_b: Mixture,
                     spec: SampleSpec) -> List[Estimate]:
    """
    ∫ integrand(x) [f_a(x) − f_b(x)] dx for Gaussian mixtures f_a, f_b
    - proposal q = ½ f_a + ½ f_b, so |f_a − f_b| / q <= 2
    Returns:
        one Estimate per integrand column
    """
    mix_a = [(float(w), c) for w, c in mix_a if w > 0.0]
    mix_b = [(float(w), c) for w, c in mix_b if w > 0.0]
    components = [c for _, c in mix_a] + [c for _, c in mix_b]
    dims = {c.dim for c in components}
    if len(dims) != 1:
        raise DimensionError(f"mixture components have different dimensions: {sorted(dims)}")
    dim = dims.pop()
    total_a = sum(w for w, _ in mix_a)
    total_b = sum(w for w, _ in mix_b)
    log_wa = np.log([w for w, _ in mix_a])
    log_wb = np.log([w for w, _ in mix_b])
    probs = np.array([0.5 * w / total_a for w, _ in mix_a] + [0.5 * w / total_b for w, _ in mix_b])
    probs = probs / probs.sum()
    log_q_weights = np.log(probs)
    n_a = len(mix_a)

    def chunk(rng, m):
        labels = rng.choice(len(components), size=m, p=probs)
        g = rng.standard_normal((m, dim))
        x = np.empty((m, dim))
        for j, comp in enumerate(components):
            rows = labels == j
            if np.any(rows):
                x[rows] = g[rows] @ comp.chol.T
        log_dens = np.column_stack([comp.log_density(x) for comp in components])
        log_a = logsumexp(log_dens[:, :n_a] + log_wa, axis=1)
        log_b = logsumexp(log_dens[:, n_a:] + log_wb, axis=1)
        log_q = logsumexp(log_dens + log_q_weights, axis=1)
        ratio = np.exp(log_a - log_q) - np.exp(log_b - log_q)
        values = np.asarray(integrand(x), dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return values * ratio[:, None]

    return _run_chunks(chunk, spec)
