"""
Scenario: the named matrices, weight and scalars an inequality or condition refers to
- pydantic schema for scenario JSON files (unknown keys rejected)
- Scenario runtime object with field validation
- Parameter substitution for sweeps; default scenarios per id
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.core.exceptions import ScenarioError, WeightError
from src.linalg.pd_matrix import PDMatrix, RankOneUpdate, random_cyclic_toeplitz, random_pd
from src.montecarlo.engine import SampleSpec
from src.weights.weight_function import (
    Constant, ExpTilt, Product, WeightFunction, as_host_routine, weight_from_json,
)

logger = logging.getLogger(__name__)

SWEEP_AXES = ("t", "lambda", "r", "p")
RANK_ONE_NAMES = ("E",)


class MatrixModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dim: Optional[int] = None
    rows: Optional[List[List[float]]] = None
    vector: Optional[List[float]] = None
    sign: int = 1

    @model_validator(mode="after")
    def _one_encoding(self):
        if (self.rows is None) == (self.vector is None):
            raise ValueError("matrix needs exactly one of 'rows' or 'vector'")
        if self.sign not in (1, -1):
            raise ValueError("rank-one sign must be 1 or -1")
        return self


class WeightModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["constant", "exp_tilt", "product"]
    c: Optional[float] = Field(None, ge=0.0)
    t: Optional[List[float]] = None
    scale: Optional[float] = Field(None, ge=0.0)
    factors: Optional[List["WeightModel"]] = None

    @model_validator(mode="after")
    def _fields_for_type(self):
        if self.type == "exp_tilt" and not self.t:
            raise ValueError("exp_tilt weight needs a nonempty 't'")
        if self.type == "product" and not self.factors:
            raise ValueError("product weight needs 'factors'")
        return self


class ScenarioModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    matrices: Dict[str, MatrixModel] = Field(default_factory=dict)
    wf: Optional[WeightModel] = None
    lam: Optional[float] = Field(None, alias="lambda", ge=0.0, le=1.0)
    p: Optional[int] = Field(None, ge=1)
    r: Optional[float] = Field(None, gt=0.0)
    tolerance: Optional[float] = Field(None, gt=0.0)
    method: Literal["auto", "monte_carlo"] = "auto"


def _matrix(name: str, model: MatrixModel):
    if model.vector is not None:
        return RankOneUpdate(model.vector, model.sign)
    rows = np.array(model.rows, dtype=float)
    if model.dim is not None and rows.shape != (model.dim, model.dim):
        raise ScenarioError(f"matrix {name}: declared dim {model.dim} but rows have shape {rows.shape}")
    if name in RANK_ONE_NAMES:
        return RankOneUpdate.from_matrix(rows)
    return PDMatrix(rows)


@dataclass
class Scenario:
    matrices: Dict[str, object] = field(default_factory=dict)
    wf: Optional[WeightFunction] = None
    lam: Optional[float] = None
    p: Optional[int] = None
    r: Optional[float] = None
    tolerance: Optional[float] = None
    method: str = "auto"
    spec: SampleSpec = field(default_factory=SampleSpec)
    # tilt sweeps scale this weight, not the current one
    base_wf: Optional[WeightFunction] = None

    @property
    def dim(self) -> int:
        for name in ("C", "C1", "A", "C2", "B"):
            if name in self.matrices:
                return int(self.matrices[name].dim)
        raise ScenarioError("scenario has no matrix to take the dimension from")

    def matrix(self, name: str):
        if name not in self.matrices:
            raise ScenarioError(f"scenario is missing field: {name}")
        return self.matrices[name]

    def require(self, fields: Sequence[str]) -> None:
        """Fail fast when any referenced field is absent or inconsistent"""
        for name in fields:
            if name == "wf":
                if self.wf is None:
                    raise ScenarioError("scenario is missing field: wf")
            elif name == "lambda":
                if self.lam is None:
                    raise ScenarioError("scenario is missing field: lambda")
                if not 0.0 <= self.lam <= 1.0:
                    raise ScenarioError(f"lambda must lie in [0, 1], got {self.lam}")
            elif name == "p":
                if self.p is None:
                    raise ScenarioError("scenario is missing field: p")
            elif name == "r":
                if self.r is None or not self.r > 0.0:
                    raise ScenarioError("scenario is missing field: r (r > 0)")
            else:
                self.matrix(name)
        dims = {name: int(self.matrices[name].dim) for name in fields if name in self.matrices}
        if len(set(dims.values())) > 1:
            raise ScenarioError(f"matrices must share one dimension, got {dims}")

    def weight(self, dim: int) -> WeightFunction:
        """The scenario weight on ℝ^dim, routed through Monte Carlo when method says so"""
        if self.wf is None:
            raise ScenarioError("scenario is missing field: wf")
        if self.wf.dim is not None and self.wf.dim != dim:
            raise ScenarioError(f"weight function has dimension {self.wf.dim}, expected {dim}")
        if self.method == "monte_carlo":
            return as_host_routine(self.wf, dim)
        return self.wf

    def with_param(self, axis: str, value: float) -> "Scenario":
        """Copy with one scalar parameter replaced (t scales the base tilt vector)"""
        if axis == "t":
            base = self.base_wf or self.wf
            if base is None:
                raise ScenarioError("scenario is missing field: wf")
            return replace(self, wf=scale_tilt(base, value), base_wf=base)
        if axis == "lambda":
            return replace(self, lam=float(value))
        if axis == "r":
            return replace(self, r=float(value))
        if axis == "p":
            return replace(self, p=int(round(value)))
        raise ScenarioError(f"unknown sweep axis: {axis!r} (expected one of {', '.join(SWEEP_AXES)})")

    def with_spec(self, spec: SampleSpec) -> "Scenario":
        return replace(self, spec=spec)

    def to_dict(self) -> dict:
        data = {"matrices": {k: m.to_json() for k, m in sorted(self.matrices.items())}}
        if self.wf is not None:
            try:
                data["wf"] = self.wf.to_json()
            except WeightError:
                data["wf"] = repr(self.wf)
        for key, value in (("lambda", self.lam), ("p", self.p), ("r", self.r),
                           ("tolerance", self.tolerance)):
            if value is not None:
                data[key] = value
        data["method"] = self.method
        return data


def scale_tilt(phi: WeightFunction, magnitude: float) -> WeightFunction:
    """Tilt vector multiplied by magnitude; constants are unchanged"""
    if isinstance(phi, ExpTilt):
        return ExpTilt(phi.t * float(magnitude), phi.scale)
    if isinstance(phi, Product):
        factors = [scale_tilt(f, magnitude) for f in phi.factors]
        return Product(factors, phi.scale)
    if isinstance(phi, Constant):
        return phi
    raise ScenarioError(f"tilt sweep needs an exp_tilt or product weight, got {type(phi).__name__}")


def _line_of(text: str, key) -> int:
    needle = f'"{key}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return 1


def parse_scenario(text: str, source: str = "<scenario>", spec: Optional[SampleSpec] = None) -> Scenario:
    """Parse scenario JSON text; errors carry source:line[:col]"""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{source}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        model = ScenarioModel.model_validate(raw)
    except ValidationError as e:
        err = e.errors()[0]
        loc = [str(part) for part in err.get("loc", ())]
        anchor = loc[-1] if loc else ""
        where = ".".join(loc) or "scenario"
        raise ScenarioError(f"{source}:{_line_of(text, anchor)}: {where}: {err.get('msg')}") from e

    try:
        matrices = {name: _matrix(name, m) for name, m in model.matrices.items()}
        wf = weight_from_json(model.wf.model_dump(exclude_none=True)) if model.wf is not None else None
    except ScenarioError:
        raise
    except ValueError as e:
        raise ScenarioError(f"{source}:{_line_of(text, 'matrices')}: {e}") from e

    return Scenario(matrices=matrices, wf=wf, lam=model.lam, p=model.p, r=model.r,
                    tolerance=model.tolerance, method=model.method, spec=spec or SampleSpec())


def load_scenario(path, spec: Optional[SampleSpec] = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"{path}: cannot read scenario: {e.strerror}") from e
    scenario = parse_scenario(text, str(path), spec)
    logger.debug("loaded scenario %s: matrices=%s", path, sorted(scenario.matrices))
    return scenario


# ids whose weight acts on pairs (x, y) ∈ ℝ^d × ℝ^d, or on (z_d, x', y')
PAIR_WEIGHT_IDS = ("C5.3", "Thm5.1", "Thm5.1alt", "Rank1")
SUM_CONDITIONAL_IDS = ("C6.17", "Superadd")


def default_scenario(item_id: str, d: int = 3, seed: int = 0) -> Scenario:
    """A valid scenario for any condition or inequality id, mildly tilted"""
    if d < 2:
        raise ScenarioError("default scenarios need d >= 2")
    if item_id in PAIR_WEIGHT_IDS:
        n = 2 * d
    elif item_id in SUM_CONDITIONAL_IDS:
        n = 2 * d - 1
    else:
        n = d
    vector = np.linspace(0.5, 1.0, d)
    return Scenario(
        matrices={
            "C": random_cyclic_toeplitz(d, seed),
            "C1": random_pd(d, seed + 1),
            "C2": random_pd(d, seed + 2),
            "A": random_pd(d, seed + 3),
            "B": random_pd(d, seed + 4),
            "E": RankOneUpdate(vector, 1),
        },
        wf=ExpTilt(np.full(n, 0.1)),
        lam=0.5,
        p=max(1, d // 2),
        r=1.0,
        tolerance=1e-9,
    )
