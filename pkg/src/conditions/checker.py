"""
Sufficient-condition checker
- Registry of every condition id with its label and required scenario fields
- Each part is ∫ φ q [f_a − f_b]: closed form for exponential tilts,
  mixture importance sampling otherwise
- Quantified conditions enumerate every (S, i) / (S, i, j) instance
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.conditions import densities
from src.conditions.densities import ContrastInstance
from src.core.exceptions import EnumerationCapError, UnknownIdError
from src.montecarlo.engine import (
    Direction, Estimate, SampleSpec, Verdict, aggregate_verdicts, mixture_contrast, signed_verdict,
)
from src.weights.weight_function import WeightFunction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConditionInfo:
    id: str
    label: str
    description: str
    fields: Tuple[str, ...]
    quantified: bool
    weight_dim: Callable[[int], int]
    build: Callable[..., List[ContrastInstance]]
    realizes: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"id": self.id, "label": self.label, "description": self.description,
                "fields": list(self.fields), "quantified": self.quantified,
                "realizes": list(self.realizes)}


def _same(d: int) -> int:
    return d


def _chain_marginal(s):
    return densities.marginal_break_instances(s.matrix("C"))


def _chain_product(s):
    return [densities.product_instance(s.matrix("C"))]


def _chain_pair(s):
    return densities.pair_break_instances(s.matrix("C"))


def _ky_fan(s):
    return densities.ky_fan_instances(s.matrix("C1"), s.matrix("C2"), s.lam)


def _max_entropy(s):
    return densities.max_entropy_instances(s.matrix("C1"), s.matrix("C2"), s.lam)


def _conditional_max_entropy(s):
    return densities.conditional_max_entropy_instances(s.matrix("C1"), s.matrix("C2"), s.lam, s.p)


def _conditional_part(s):
    return _conditional_max_entropy(s)[:1]


def _regression_part(s):
    return _conditional_max_entropy(s)[1:]


def _sum(s):
    return [densities.sum_instance(s.matrix("C1"), s.matrix("C2"))]


def _strong_hadamard(s):
    return densities.strong_hadamard_instances(s.matrix("C"), s.p)


def _sum_conditional(s):
    return [densities.sum_conditional_instance(s.matrix("A"), s.matrix("B"))]


CONDITIONS: Dict[str, ConditionInfo] = {c.id: c for c in [
    ConditionInfo("C1.6", "(1.6)", "weighted Gibbs bounds for the Ky Fan mixture (two parts)",
                  ("C1", "C2", "lambda", "wf"), False, _same, _ky_fan),
    ConditionInfo("C2.8", "(2.8)", "reduced weight favours the marginal over the dependence-broken product",
                  ("C", "wf"), True, _same, _chain_marginal),
    ConditionInfo("C2.15", "(2.15)", "weight favours the joint law over the product of marginals",
                  ("C", "wf"), False, _same, _chain_product),
    ConditionInfo("C2.20", "(2.20)", "conditional dependence between X_i and X_j broken",
                  ("C", "wf"), True, _same, _chain_pair),
    ConditionInfo("C3.1", "(3.1)", "mixture against its Gaussian comparison (two parts)",
                  ("C1", "C2", "lambda", "wf"), False, _same, _max_entropy),
    ConditionInfo("C3.5", "(3.5)", "conditional mixture against Gaussian regression (two parts)",
                  ("C1", "C2", "lambda", "p", "wf"), False, _same, _conditional_max_entropy),
    ConditionInfo("C5.3", "(5.3)", "pair weight under sums of independent Gaussians",
                  ("C1", "C2", "wf"), False, lambda d: 2 * d, _sum, ("(4.10)",)),
    ConditionInfo("C5.12", "(5.12)", "Gaussian broken-dependence condition",
                  ("C", "wf"), True, _same, _chain_marginal),
    ConditionInfo("C5.20", "(5.20)", "Gaussian joint law against the product of its marginals",
                  ("C", "wf"), False, _same, _chain_product),
    ConditionInfo("C5.24", "(5.24)", "Gaussian pairwise conditional-independence condition",
                  ("C", "wf"), True, _same, _chain_pair),
    ConditionInfo("C6.3", "(6.3)", "reduced-weight condition for the strong Hadamard inequality",
                  ("C", "p", "wf"), False, _same, _strong_hadamard),
    ConditionInfo("C6.11", "(6.11)", "mixture conditional law against the Gaussian one",
                  ("C1", "C2", "lambda", "p", "wf"), False, _same, _conditional_part),
    ConditionInfo("C6.12", "(6.12)", "mixture against Gaussian regression quadratic form",
                  ("C1", "C2", "lambda", "p", "wf"), False, _same, _regression_part),
    ConditionInfo("C6.17", "(6.17)", "conditional normal densities of a sum",
                  ("A", "B", "wf"), False, lambda d: 2 * d - 1, _sum_conditional, ("(4.7)",)),
]}

# labels of the general-space conditions with no standalone checker
ABSTRACT_ONLY = ("(4.1)", "(4.4)")


def list_conditions() -> List[dict]:
    return [info.to_dict() for info in CONDITIONS.values()]


def condition_info(condition_id: str) -> ConditionInfo:
    if condition_id not in CONDITIONS:
        raise UnknownIdError(f"unknown id: {condition_id}")
    return CONDITIONS[condition_id]


@dataclass
class ConditionPart:
    name: str
    estimate: Estimate
    direction: Direction
    verdict: Verdict

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.estimate.value, "stderr": self.estimate.stderr,
                "direction": self.direction.value, "verdict": self.verdict.value}


@dataclass
class ConditionReport:
    id: str
    label: str
    parts: List[ConditionPart] = field(default_factory=list)
    verdict: Verdict = Verdict.HOLDS
    method: str = "closed_form"

    @property
    def directions(self) -> List[Direction]:
        return [p.direction for p in self.parts]

    def to_dict(self) -> dict:
        return {"id": self.id, "label": self.label, "method": self.method,
                "instances": len(self.parts), "parts": [p.to_dict() for p in self.parts],
                "verdict": self.verdict.value}


def tilt_contrast(inst: ContrastInstance, t: np.ndarray, scale: float) -> float:
    """Closed form of ∫ scale·exp(tᵀx) q(x) [f_a − f_b] dx"""
    Q = inst.term.matrix
    const = inst.term.const
    if not np.any(t):
        # mixture second moments in the same operation order on both sides
        w_a = sum(w for w, _ in inst.mix_a)
        w_b = sum(w for w, _ in inst.mix_b)
        m_a = sum(w * c.entries for w, c in inst.mix_a)
        m_b = sum(w * c.entries for w, c in inst.mix_b)
        return scale * (const * (w_a - w_b) + float(np.sum(Q * (m_a - m_b))))

    def side(mix) -> float:
        total = 0.0
        for w, comp in mix:
            st = comp.entries @ t
            alpha = float(np.exp(0.5 * t @ st))
            total += w * alpha * (const + float(np.sum(Q * (comp.entries + np.outer(st, st)))))
        return total

    return scale * (side(inst.mix_a) - side(inst.mix_b))


def evaluate_instance(inst: ContrastInstance, phi: WeightFunction, spec: SampleSpec) -> Estimate:
    if inst.is_trivial:
        return Estimate.exact(0.0)
    form = phi.tilt_form(inst.dim)
    if form is not None:
        t, scale = form
        return Estimate.exact(tilt_contrast(inst, t, scale))
    term = inst.term
    return mixture_contrast(lambda x: phi.evaluate(x) * term.apply(x), inst.mix_a, inst.mix_b, spec)[0]


class ConditionChecker:
    """Evaluates registered conditions on a scenario"""

    def __init__(self, config: dict):
        self.config = config
        verdict_config = config.get('verdict', {})
        self.zcrit = float(verdict_config.get('zcrit', 4.0))
        self.tolerance = float(verdict_config.get('tolerance', 1e-9))
        self.quantified_max_dim = int(config.get('limits', {}).get('quantified_max_dim', 8))

    def check(self, condition_id: str, scenario, spec: Optional[SampleSpec] = None) -> ConditionReport:
        """
        Evaluate every part (or quantified instance) of a condition
        Args:
            condition_id: registry id, e.g. "C1.6"
            scenario: Scenario supplying the referenced matrices, weight, λ, p
            spec: sample spec; defaults to the scenario's
        Returns:
            ConditionReport, Holds only if every part holds
        """
        info = condition_info(condition_id)
        scenario.require(info.fields)
        spec = spec or scenario.spec
        d = scenario.dim
        if info.quantified and d > self.quantified_max_dim:
            raise EnumerationCapError(
                f"quantifier blowup: {condition_id} needs d <= {self.quantified_max_dim}, got {d}")

        # 1. instances
        instances = info.build(scenario)
        phi = scenario.weight(info.weight_dim(d))
        tolerance = scenario.tolerance if scenario.tolerance is not None else self.tolerance
        logger.debug("%s: %d instance(s)", condition_id, len(instances))

        # 2. evaluate
        report = ConditionReport(condition_id, info.label)
        report.method = "closed_form" if phi.tilt_form(info.weight_dim(d)) is not None else "monte_carlo"
        for index, inst in enumerate(instances):
            seed_keys = inst.key or (index,)
            value = evaluate_instance(inst, phi, spec.derive(*seed_keys))
            verdict = signed_verdict(value, inst.direction, self.zcrit, tolerance)
            report.parts.append(ConditionPart(inst.label, value, inst.direction, verdict))

        # 3. aggregate
        report.verdict = aggregate_verdicts(p.verdict for p in report.parts)
        logger.info("condition %s: %s over %d part(s)", condition_id, report.verdict.value, len(report.parts))
        return report
