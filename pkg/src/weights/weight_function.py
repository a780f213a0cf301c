"""
Weight-function families
- Constant, ExpTilt (scale·exp(tᵀx)), coordinate Product, HostRoutine
- Vectorized evaluation over (n, d) sample arrays
- Exponential-tilt normal form used by every closed-form path
- JSON encoding
"""

import logging
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from src.core.exceptions import DimensionError, WeightError

logger = logging.getLogger(__name__)

# (t, scale) with φ(x) = scale·exp(tᵀx)
TiltForm = Tuple[np.ndarray, float]


class WeightFunction:
    """Nonnegative weight on ℝ^dim (dim None: any dimension)"""

    dim: Optional[int] = None
    aux_dim: int = 0

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def joint_evaluate(self, x: np.ndarray, aux: np.ndarray) -> np.ndarray:
        """Weight at x; derived weights also consume auxiliary normals"""
        return self.evaluate(x)

    def tilt_form(self, dim: int) -> Optional[TiltForm]:
        return None

    def is_closed_form(self) -> bool:
        return self.tilt_form(self.dim or 1) is not None

    def scaled(self, c: float) -> "WeightFunction":
        raise NotImplementedError

    def check_dim(self, dim: int) -> None:
        if self.dim is not None and self.dim != dim:
            raise DimensionError(f"weight function has dimension {self.dim}, expected {dim}")

    def to_json(self) -> dict:
        raise WeightError(f"{type(self).__name__} has no JSON encoding")


class Constant(WeightFunction):
    def __init__(self, c: float = 1.0, dim: Optional[int] = None):
        if not c >= 0.0:
            raise WeightError("weight function must be nonnegative")
        self.c = float(c)
        self.dim = dim

    def evaluate(self, x):
        x = np.atleast_2d(x)
        return np.full(x.shape[0], self.c)

    def tilt_form(self, dim):
        return np.zeros(dim), self.c

    def scaled(self, c):
        return Constant(self.c * c, self.dim)

    def to_json(self):
        return {"type": "constant", "c": self.c}

    def __repr__(self):
        return f"Constant({self.c})"


class ExpTilt(WeightFunction):
    def __init__(self, t: Sequence[float], scale: float = 1.0):
        t = np.array(t, dtype=float).reshape(-1)
        if t.size == 0:
            raise DimensionError("tilt vector must be nonempty")
        if not scale >= 0.0:
            raise WeightError("weight function must be nonnegative")
        t.setflags(write=False)
        self.t = t
        self.scale = float(scale)
        self.dim = t.size

    def evaluate(self, x):
        x = np.atleast_2d(x)
        return self.scale * np.exp(x @ self.t)

    def tilt_form(self, dim):
        self.check_dim(dim)
        return self.t.copy(), self.scale

    def scaled(self, c):
        return ExpTilt(self.t, self.scale * c)

    def to_json(self):
        data = {"type": "exp_tilt", "t": self.t.tolist()}
        if self.scale != 1.0:
            data["scale"] = self.scale
        return data

    def __repr__(self):
        return f"ExpTilt(t={self.t.tolist()}, scale={self.scale})"


class Product(WeightFunction):
    """φ(x) = scale·∏ φ_i(x_i) with 1-D Constant / ExpTilt factors"""

    def __init__(self, factors: Sequence[WeightFunction], scale: float = 1.0):
        factors = tuple(factors)
        if not factors:
            raise DimensionError("product weight needs at least one factor")
        for f in factors:
            if not isinstance(f, (Constant, ExpTilt)) or (f.dim not in (None, 1)):
                raise WeightError("product factors must be 1-D constant or exp_tilt weights")
        self.factors = factors
        self.scale = float(scale)
        self.dim = len(factors)

    def _normal_form(self) -> TiltForm:
        t = np.zeros(self.dim)
        scale = self.scale
        for i, f in enumerate(self.factors):
            ft, fc = f.tilt_form(1)
            t[i] = ft[0]
            scale *= fc
        return t, scale

    def evaluate(self, x):
        t, scale = self._normal_form()
        return scale * np.exp(np.atleast_2d(x) @ t)

    def tilt_form(self, dim):
        self.check_dim(dim)
        return self._normal_form()

    def scaled(self, c):
        return Product(self.factors, self.scale * c)

    def identical_factors(self) -> bool:
        t, _ = self._normal_form()
        return bool(np.all(t == t[0]))

    def to_json(self):
        data = {"type": "product", "factors": [f.to_json() for f in self.factors]}
        if self.scale != 1.0:
            data["scale"] = self.scale
        return data


class HostRoutine(WeightFunction):
    """Externally supplied pure routine mapping (n, dim) arrays to (n,) weights"""

    def __init__(self, routine: Callable[[np.ndarray], np.ndarray], dim: int, name: str = "host"):
        self.routine = routine
        self.dim = int(dim)
        self.name = name

    def evaluate(self, x):
        x = np.atleast_2d(x)
        out = np.asarray(self.routine(x), dtype=float).reshape(-1)
        if out.shape[0] != x.shape[0]:
            raise WeightError(f"host routine returned {out.shape[0]} values for {x.shape[0]} points")
        if np.any(out < 0.0):
            raise WeightError("weight function must be nonnegative")
        return out

    def scaled(self, c):
        routine = self.routine
        return HostRoutine(lambda x: c * np.asarray(routine(x), dtype=float), self.dim, self.name)

    def __repr__(self):
        return f"HostRoutine({self.name}, dim={self.dim})"


def eval_wf(phi: WeightFunction, x) -> float:
    """φ(x) at a single point"""
    x = np.asarray(x, dtype=float).reshape(-1)
    phi.check_dim(x.size)
    return float(phi.evaluate(x[None, :])[0])


def tilt_of(phi: WeightFunction, dim: int) -> Optional[TiltForm]:
    """(t, scale) when φ has a closed-form exponential-tilt normal form"""
    phi.check_dim(dim)
    return phi.tilt_form(dim)


def as_host_routine(phi: WeightFunction, dim: int) -> HostRoutine:
    """Same weight, but routed through the Monte Carlo paths"""
    return HostRoutine(phi.evaluate, dim, name=f"mc:{type(phi).__name__}")


def is_product_form(phi: WeightFunction) -> bool:
    """Identical per-coordinate factors (constant, equal tilts, identical product)"""
    if isinstance(phi, Constant):
        return True
    if isinstance(phi, ExpTilt):
        return bool(np.all(phi.t == phi.t[0]))
    if isinstance(phi, Product):
        return phi.identical_factors()
    return False


def weight_from_json(data: Dict) -> WeightFunction:
    kind = data.get("type")
    if kind == "constant":
        return Constant(float(data.get("c", 1.0)))
    if kind == "exp_tilt":
        return ExpTilt(data["t"], float(data.get("scale", 1.0)))
    if kind == "product":
        return Product([weight_from_json(f) for f in data["factors"]], float(data.get("scale", 1.0)))
    raise WeightError(f"unknown weight type: {kind!r}")
