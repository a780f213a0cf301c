"""
Weighted determinant inequality verifier
- Both sides of every registered inequality, oriented margin (>= 0 means it holds)
- Prerequisite conditions evaluated and attached; failure never short-circuits
- k-indexed chains verified step by step
- Parameter sweeps with the condition × inequality classification
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.conditions.checker import ConditionChecker, ConditionReport
from src.core.exceptions import ScenarioError, UnknownIdError, WdiError
from src.entropy.chains import ChainValues, chain
from src.entropy.moments import (
    CLOSED_FORM, MONTE_CARLO, QuadraticTerm, SubsetEntropies, accumulate, gaussian_we, method_of,
    mu, sum_moments, varpi, weighted_functionals,
)
from src.linalg.pd_matrix import (
    LOG_2PI, IndexSet, PDMatrix, covariance_dense, embed, sherman_morrison_inverse, submatrix, update_trace,
)
from src.montecarlo.engine import (
    Direction, Estimate, SampleSpec, Verdict, aggregate_verdicts, signed_verdict,
)
from src.weights.derived import sum_conditioned_wfs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InequalityInfo:
    id: str
    label: str
    fields: Tuple[str, ...]
    prerequisites: Tuple[str, ...]
    weight_dim: Callable[[int], int]
    chain_label: Optional[str] = None
    increasing: bool = False

    def to_dict(self) -> dict:
        data = {"id": self.id, "label": self.label, "fields": list(self.fields),
                "prerequisites": list(self.prerequisites)}
        if self.chain_label:
            data["chain"] = self.chain_label
            data["order"] = "increasing" if self.increasing else "decreasing"
        return data


def _same(d: int) -> int:
    return d


def _pair(d: int) -> int:
    return 2 * d


INEQUALITIES: Dict[str, InequalityInfo] = {i.id: i for i in [
    InequalityInfo("KyFanW", "(1.2)", ("C1", "C2", "lambda", "wf"), ("C1.6",), _same),
    InequalityInfo("KyFanStd", "(1.1)", ("C1", "C2", "lambda"), (), _same),
    InequalityInfo("Thm5.1", "(5.4)", ("C1", "C2", "wf"), ("C5.3",), _pair),
    InequalityInfo("Thm5.1alt", "(5.5)", ("C1", "C2", "wf"), ("C5.3",), _pair),
    InequalityInfo("Rank1", "(5.6)", ("C1", "E", "wf"), (), _pair),
    InequalityInfo("SzaszM", "(5.13)", ("C", "wf"), ("C5.12",), _same, "m"),
    InequalityInfo("SzaszS", "(5.14)", ("C", "wf", "r"), ("C5.12",), _same, "s"),
    InequalityInfo("ToeplitzA", "(5.17)", ("C", "wf"), ("C5.12",), _same, "a"),
    InequalityInfo("WChain", "(5.21)", ("C", "wf"), ("C5.20",), _same, "w", True),
    InequalityInfo("UChain", "(5.25)", ("C", "wf"), ("C5.24",), _same, "u"),
    InequalityInfo("ZChain", "(5.26)", ("C", "wf"), ("C5.24",), _same, "z", True),
    InequalityInfo("WHI", "(6.1)", ("C", "wf"), ("C5.20",), _same),
    InequalityInfo("WSHI", "(6.5)", ("C", "p", "wf"), ("C6.3",), _same),
    InequalityInfo("Identity6.7", "(6.7)", ("C", "wf"), (), _same),
    InequalityInfo("Concavity", "(6.14)", ("C1", "C2", "lambda", "p", "wf"), ("C6.11", "C6.12"), _same),
    InequalityInfo("Superadd", "(6.18)", ("A", "B", "wf"), ("C6.17",), lambda d: 2 * d - 1),
    InequalityInfo("Sandwich", "(6.25)", ("C", "wf"), ("C5.20",), _same),
    InequalityInfo("Chain2.9", "(2.9)", ("C", "wf"), ("C2.8",), _same, "h"),
    InequalityInfo("Chain2.13", "(2.13)", ("C", "wf", "r"), ("C2.8",), _same, "g"),
    InequalityInfo("Chain2.16", "(2.16)", ("C", "wf"), ("C2.15",), _same, "p", True),
    InequalityInfo("Chain2.19", "(2.19)", ("C", "wf"), ("C2.8",), _same, "q"),
    InequalityInfo("Chain2.22", "(2.22)", ("C", "wf"), ("C2.20",), _same, "I", True),
]}


def list_inequalities() -> List[dict]:
    return [info.to_dict() for info in INEQUALITIES.values()]


def inequality_info(inequality_id: str) -> InequalityInfo:
    if inequality_id not in INEQUALITIES:
        raise UnknownIdError(f"unknown id: {inequality_id}")
    return INEQUALITIES[inequality_id]


@dataclass
class Step:
    name: str
    margin: Estimate
    verdict: Verdict

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.margin.value, "stderr": self.margin.stderr,
                "verdict": self.verdict.value}


@dataclass
class InequalityReport:
    id: str
    label: str
    lhs: Estimate
    rhs: Estimate
    margin: Estimate
    direction: Direction = Direction.GE
    steps: List[Step] = field(default_factory=list)
    chain: Optional[ChainValues] = None
    prerequisites: List[ConditionReport] = field(default_factory=list)
    verdict: Verdict = Verdict.HOLDS
    note: str = ""
    method: str = CLOSED_FORM
    extra: Dict[str, Estimate] = field(default_factory=dict)

    @property
    def condition_verdict(self) -> Optional[Verdict]:
        if not self.prerequisites:
            return None
        return aggregate_verdicts(r.verdict for r in self.prerequisites)

    def to_dict(self) -> dict:
        data = {
            "id": self.id,
            "label": self.label,
            "lhs": self.lhs.to_dict(),
            "rhs": self.rhs.to_dict(),
            "margin": {"value": self.margin.value, "stderr": self.margin.stderr},
            "direction": self.direction.value,
            "method": self.method,
            "prerequisites": [r.to_dict() for r in self.prerequisites],
            "verdict": self.verdict.value,
            "note": self.note,
        }
        if self.steps:
            data["steps"] = [s.to_dict() for s in self.steps]
        if self.chain is not None:
            data["chain"] = self.chain.rows()
        if self.extra:
            data["extra"] = {k: v.to_dict() for k, v in self.extra.items()}
        return data


@dataclass
class SweepPoint:
    index: int
    value: float
    report: InequalityReport

    @property
    def classification(self) -> str:
        cond = self.report.condition_verdict
        cond_text = "no condition" if cond is None else f"condition {cond.value}"
        return f"{cond_text} / inequality {self.report.verdict.value}"

    def row(self) -> dict:
        cond = self.report.condition_verdict
        return {
            "grid_value": self.value,
            "margin": self.report.margin.value,
            "margin_stderr": self.report.margin.stderr,
            "condition_verdict": "None" if cond is None else cond.value,
            "inequality_verdict": self.report.verdict.value,
        }

    def to_dict(self) -> dict:
        data = self.row()
        data["classification"] = self.classification
        data["report"] = self.report.to_dict()
        return data


def _worst(steps: Sequence[Step]) -> Estimate:
    return min((s.margin for s in steps), key=lambda e: e.value)


class InequalityVerifier:
    """Verifies registered inequalities on scenarios"""

    def __init__(self, config: dict):
        self.config = config
        verdict_config = config.get('verdict', {})
        self.zcrit = float(verdict_config.get('zcrit', 4.0))
        self.tolerance = float(verdict_config.get('tolerance', 1e-9))
        self.chain_max_dim = int(config.get('limits', {}).get('chain_max_dim', 16))
        probe_samples = int(config.get('sampling', {}).get('probe_samples', 4096))
        self.probe = SampleSpec(n_samples=probe_samples, seed=0)
        self.checker = ConditionChecker(config)

    # -- public ---------------------------------------------------------------

    def verify(self, inequality_id: str, scenario, spec: Optional[SampleSpec] = None) -> InequalityReport:
        """
        Evaluate one inequality and its prerequisites
        Args:
            inequality_id: registry id, e.g. "WHI"
            scenario: Scenario with the fields the id requires
            spec: sample spec; defaults to the scenario's
        Returns:
            InequalityReport
        """
        info = inequality_info(inequality_id)
        scenario.require(info.fields)
        spec = spec or scenario.spec
        tolerance = scenario.tolerance if scenario.tolerance is not None else self.tolerance

        # 1. prerequisites (seeds kept apart from the inequality's own)
        prerequisites, notes = [], []
        for index, condition_id in enumerate(info.prerequisites):
            try:
                prerequisites.append(self.checker.check(condition_id, scenario, spec.derive(1, index)))
            except WdiError as e:
                notes.append(f"prerequisite {condition_id} not evaluable: {e}")
                logger.warning("prerequisite %s not evaluable: %s", condition_id, e)

        # 2. inequality
        if info.chain_label is not None:
            report = self._verify_chain(info, scenario, spec, tolerance)
        else:
            evaluate = getattr(self, "_verify_" + inequality_id.replace(".", "_"))
            report = evaluate(info, scenario, spec.derive(0), tolerance)
        report.prerequisites = prerequisites

        # 3. notes
        for cond in prerequisites:
            if cond.verdict == Verdict.FAILS:
                notes.append(f"prerequisite {cond.id} failed; inequality evaluated anyway")
                logger.warning("%s: prerequisite %s failed", inequality_id, cond.id)
            elif cond.verdict == Verdict.INCONCLUSIVE:
                notes.append(f"prerequisite {cond.id} inconclusive; inequality evaluated anyway")
        if report.note:
            notes.append(report.note)
        report.note = "; ".join(notes)
        logger.info("inequality %s: %s (margin %.6g ± %.2g)", inequality_id, report.verdict.value,
                    report.margin.value, report.margin.stderr)
        return report

    def sweep(self, inequality_id: str, scenario, axis: str, grid: Sequence[float],
              spec: Optional[SampleSpec] = None) -> List[SweepPoint]:
        """verify at each grid point; point i uses seed derived from (base seed, i)"""
        spec = spec or scenario.spec
        points = []
        for index, value in enumerate(grid):
            point = scenario.with_param(axis, value)
            report = self.verify(inequality_id, point, spec.derive(index))
            points.append(SweepPoint(index, float(value), report))
            logger.debug("sweep %s %s=%g: %s", inequality_id, axis, value, points[-1].classification)
        return points

    # -- helpers --------------------------------------------------------------

    def _report(self, info: InequalityInfo, lhs: Estimate, rhs: Estimate, margin: Estimate,
                tolerance: float, method: str, direction: Direction = Direction.GE,
                note: str = "") -> InequalityReport:
        verdict = signed_verdict(margin, direction, self.zcrit, tolerance)
        return InequalityReport(info.id, info.label, lhs, rhs, margin, direction,
                                verdict=verdict, note=note, method=method)

    def _functionals(self, C: PDMatrix, phi, terms: List[QuadraticTerm], spec: SampleSpec):
        return weighted_functionals(C, phi, terms, spec), method_of(phi, C.dim)

    # -- Ky Fan -----------------------------------------------------------------

    def _verify_KyFanW(self, info, scenario, spec, tolerance):
        C1, C2, lam = scenario.matrix("C1"), scenario.matrix("C2"), scenario.lam
        C = PDMatrix(lam * C1.entries + (1.0 - lam) * C2.entries)
        phi = scenario.weight(C.dim)
        sigma = gaussian_we(C, phi, spec.derive(0))
        sigma1 = gaussian_we(C1, phi, spec.derive(1))
        sigma2 = gaussian_we(C2, phi, spec.derive(2))
        lhs = 2.0 * sigma
        rhs = Estimate.combine([(2.0 * lam, sigma1), (2.0 * (1.0 - lam), sigma2)])
        margin = Estimate.combine([(2.0, sigma), (-2.0 * lam, sigma1), (-2.0 * (1.0 - lam), sigma2)])
        report = self._report(info, lhs, rhs, margin, tolerance, method_of(phi, C.dim))
        report.extra = {"sigma(C)": sigma, "sigma(C1)": sigma1, "sigma(C2)": sigma2}
        return report

    def _verify_KyFanStd(self, info, scenario, spec, tolerance):
        C1, C2, lam = scenario.matrix("C1"), scenario.matrix("C2"), scenario.lam
        C = PDMatrix(lam * C1.entries + (1.0 - lam) * C2.entries)
        lhs = C.log_det()
        rhs = lam * C1.log_det() + (1.0 - lam) * C2.log_det()
        return self._report(info, Estimate.exact(lhs), Estimate.exact(rhs), Estimate.exact(lhs - rhs),
                            tolerance, CLOSED_FORM)

    # -- sums of independent vectors -------------------------------------------

    def _pair_terms(self, scenario, second: str, spec):
        C1 = scenario.matrix("C1")
        C2 = scenario.matrix(second)
        phi = scenario.weight(2 * C1.dim)
        moments = sum_moments(phi, C1, C2, spec)
        total = PDMatrix(C1.entries + covariance_dense(C2))
        log_ratio = total.log_det() - C1.log_det()
        return C1, C2, total, log_ratio, moments

    def _verify_Thm5_1(self, info, scenario, spec, tolerance):
        C1, C2, total, log_ratio, mom = self._pair_terms(scenario, "C2", spec)
        lhs = Estimate.combine([(log_ratio, mom.beta), (1.0, mom.theta.trace_with(total.inverse))])
        rhs = mom.theta_star.trace_with(C1.inverse)
        margin = lhs - rhs
        return self._report(info, lhs, rhs, margin, tolerance, mom.method)

    def _verify_Thm5_1alt(self, info, scenario, spec, tolerance):
        C1, C2, total, log_ratio, mom = self._pair_terms(scenario, "C2", spec)
        star = mom.theta_star.trace_with(total.inverse - C1.inverse)
        tilde = mom.theta_tilde.trace_with(total.inverse)
        margin = Estimate.combine([(log_ratio, mom.beta), (1.0, star), (1.0, tilde)])
        lhs = Estimate.combine([(log_ratio, mom.beta), (1.0, tilde)])
        rhs = -star
        # the two displays agree when Θ = Θ* + Θ̃
        direct = Estimate.combine([(log_ratio, mom.beta), (1.0, mom.theta.trace_with(total.inverse)),
                                   (-1.0, mom.theta_star.trace_with(C1.inverse))])
        report = self._report(info, lhs, rhs, margin, tolerance, mom.method)
        report.extra = {"margin(5.4)": direct}
        diff = margin - direct
        if signed_verdict(diff, Direction.EQ, self.zcrit, tolerance) != Verdict.HOLDS:
            report.note = "margin differs from the (5.4) form: Θ ≠ Θ* + Θ̃ for this weight"
        return report

    def _verify_Rank1(self, info, scenario, spec, tolerance):
        C1 = scenario.matrix("C1")
        E = scenario.matrix("E")
        phi = scenario.weight(2 * C1.dim)
        mom = sum_moments(phi, C1, E, spec)
        g = update_trace(C1, E)
        updated_inverse = sherman_morrison_inverse(C1, E)
        e_dense = covariance_dense(E)
        correction = C1.inverse @ e_dense @ C1.inverse / (1.0 + g)
        star = mom.theta_star.trace_with(correction)
        tilde = mom.theta_tilde.trace_with(updated_inverse)
        log_ratio = float(np.log1p(g))
        lhs = Estimate.combine([(log_ratio, mom.beta), (1.0, tilde)])
        rhs = star
        margin = Estimate.combine([(log_ratio, mom.beta), (-1.0, star), (1.0, tilde)])
        report = self._report(info, lhs, rhs, margin, tolerance, mom.method)
        report.extra = {"g": Estimate.exact(g)}
        return report

    # -- chains -----------------------------------------------------------------

    def _verify_chain(self, info, scenario, spec, tolerance):
        C = scenario.matrix("C")
        phi = scenario.weight(C.dim)
        r = scenario.r if info.chain_label in ("g", "s") else None
        values = chain(info.chain_label, C, phi, spec.derive(0), r=r, max_dim=self.chain_max_dim,
                       probe=self.probe)
        entries = list(zip(values.ks, values.values))
        if info.chain_label == "I":
            entries = entries[:C.dim // 2]
        steps = []
        for (k, v), (k_next, v_next) in zip(entries, entries[1:]):
            diff = v_next - v if info.increasing else v - v_next
            name = f"{info.chain_label}({k_next}) - {info.chain_label}({k})" if info.increasing \
                else f"{info.chain_label}({k}) - {info.chain_label}({k_next})"
            steps.append(Step(name, diff, signed_verdict(diff, Direction.GE, self.zcrit, tolerance)))

        first, last = values.values[0], values.values[-1]
        if steps:
            margin = _worst(steps)
            verdict = aggregate_verdicts(s.verdict for s in steps)
            note = ""
        else:
            margin = Estimate.exact(0.0)
            verdict = Verdict.HOLDS
            note = "chain has a single entry; nothing to compare"
        method = method_of(phi, C.dim)
        return InequalityReport(info.id, info.label, first, last, margin, Direction.GE, steps, values,
                                verdict=verdict, note=note, method=method)

    # -- Hadamard family --------------------------------------------------------

    def _verify_WHI(self, info, scenario, spec, tolerance):
        C = scenario.matrix("C")
        phi = scenario.weight(C.dim)
        diag = np.diag(C.entries)
        lhs_term = QuadraticTerm(float(np.sum(np.log(diag))), np.diag(1.0 / diag))
        rhs_term = QuadraticTerm(C.log_det(), C.inverse)
        (lhs, rhs, margin), method = self._functionals(C, phi, [lhs_term, rhs_term, lhs_term - rhs_term], spec)
        is_diagonal = not np.any(C.entries - np.diag(diag))
        direction = Direction.EQ if is_diagonal else Direction.GE
        return self._report(info, lhs, rhs, margin, tolerance, method, direction)

    def _verify_WSHI(self, info, scenario, spec, tolerance):
        C = scenario.matrix("C")
        d, p = C.dim, scenario.p
        if not 1 <= p < d:
            raise ScenarioError(f"p must satisfy 1 <= p < {d}, got {p}")
        phi = scenario.weight(d)
        H = SubsetEntropies(C, phi, spec, self.probe)
        tail = IndexSet.span(d, p + 1, d)
        lhs_coefs: Dict[int, float] = {}
        accumulate(lhs_coefs, IndexSet.full(d).mask, 2.0)
        accumulate(lhs_coefs, tail.mask, 2.0 * (p - 1))
        rhs_coefs: Dict[int, float] = {}
        for i in range(1, p + 1):
            accumulate(rhs_coefs, IndexSet(d, (i,)).union(tail).mask, 2.0)
        margin_coefs = dict(rhs_coefs)
        for mask, coef in lhs_coefs.items():
            accumulate(margin_coefs, mask, -coef)
        # margin >= 0 ⇔ lhs <= rhs
        return self._report(info, H.combine(lhs_coefs), H.combine(rhs_coefs), H.combine(margin_coefs),
                            tolerance, method_of(phi, d))

    def _verify_Identity6_7(self, info, scenario, spec, tolerance):
        C = scenario.matrix("C")
        d = C.dim
        if d < 2:
            raise ScenarioError("Identity6.7 needs d >= 2")
        phi = scenario.weight(d)
        head = IndexSet.span(d, 1, d - 1)
        C_head = submatrix(C, head)
        v = float(np.exp(C.log_det() - C_head.log_det()))
        b = C_head.solve(C.entries[:d - 1, d - 1])
        w = np.zeros(d)
        w[:d - 1] = -b
        w[d - 1] = 1.0
        const = (np.log(2.0 * np.pi * v) + (d - 1) * LOG_2PI + C_head.log_det()
                 - d * LOG_2PI - C.log_det())
        lhs_term = QuadraticTerm(float(const), np.zeros((d, d)))
        rhs_term = QuadraticTerm(0.0, C.inverse - embed(C_head.inverse, head) - np.outer(w, w) / v)
        (lhs, rhs, margin), method = self._functionals(C, phi, [lhs_term, rhs_term, lhs_term - rhs_term], spec)
        return self._report(info, lhs, rhs, margin, tolerance, method, Direction.EQ)

    def _verify_Sandwich(self, info, scenario, spec, tolerance):
        C = scenario.matrix("C")
        d = C.dim
        if d < 2:
            raise ScenarioError("Sandwich needs d >= 2")
        phi = scenario.weight(d)
        full = IndexSet.full(d)
        left = QuadraticTerm.zero(d)
        for i in range(1, d + 1):
            rest = full.without(i)
            block = submatrix(C, rest)
            left = left + QuadraticTerm(C.log_det() - block.log_det(),
                                        C.inverse - embed(block.inverse, rest))
        middle = QuadraticTerm(C.log_det(), C.inverse)
        diag = np.diag(C.entries)
        right = QuadraticTerm(float(np.sum(np.log(diag))), np.diag(1.0 / diag))
        (lo, mid, hi, lower_gap, upper_gap), method = self._functionals(
            C, phi, [left, middle, right, middle - left, right - middle], spec)
        steps = [
            Step("middle - left", lower_gap, signed_verdict(lower_gap, Direction.GE, self.zcrit, tolerance)),
            Step("right - middle", upper_gap, signed_verdict(upper_gap, Direction.GE, self.zcrit, tolerance)),
        ]
        report = InequalityReport(info.id, info.label, lo, hi, _worst(steps), Direction.GE, steps,
                                  verdict=aggregate_verdicts(s.verdict for s in steps), method=method)
        report.extra = {"middle": mid}
        return report

    # -- concavity and superadditivity ------------------------------------------

    def _verify_Concavity(self, info, scenario, spec, tolerance):
        C1, C2, lam, p = scenario.matrix("C1"), scenario.matrix("C2"), scenario.lam, scenario.p
        C = PDMatrix(lam * C1.entries + (1.0 - lam) * C2.entries)
        phi = scenario.weight(C.dim)
        mu_c = mu(C, p, phi, spec.derive(0), self.probe)
        mu_1 = mu(C1, p, phi, spec.derive(1), self.probe)
        mu_2 = mu(C2, p, phi, spec.derive(2), self.probe)
        rhs = Estimate.combine([(lam, mu_1), (1.0 - lam, mu_2)])
        margin = Estimate.combine([(1.0, mu_c), (-lam, mu_1), (-(1.0 - lam), mu_2)])
        return self._report(info, mu_c, rhs, margin, tolerance, method_of(phi, C.dim))

    def _verify_Superadd(self, info, scenario, spec, tolerance):
        A, B = scenario.matrix("A"), scenario.matrix("B")
        d = A.dim
        if d < 2:
            raise ScenarioError("Superadd needs d >= 2")
        phi = scenario.weight(2 * d - 1)
        psi, chi, gamma = sum_conditioned_wfs(phi, A, B, self.probe)
        lhs = varpi(A + B, psi, spec.derive(0), self.probe)
        v_a = varpi(A, chi, spec.derive(1), self.probe)
        v_b = varpi(B, gamma, spec.derive(2), self.probe)
        rhs = v_a + v_b
        margin = lhs - rhs
        statement = varpi(A, psi, spec.derive(3), self.probe) + varpi(B, psi, spec.derive(4), self.probe)
        method = MONTE_CARLO if MONTE_CARLO in (psi.method, chi.method, gamma.method) else CLOSED_FORM
        report = self._report(info, lhs, rhs, margin, tolerance, method)
        report.extra = {"statement_rhs": statement, "statement_margin": lhs - statement}
        if signed_verdict(statement - rhs, Direction.EQ, self.zcrit, tolerance) != Verdict.HOLDS:
            report.note = (f"statement form ϖ_ψ(A) + ϖ_ψ(B) = {statement.value:.6g} differs from "
                           f"ϖ_χ(A) + ϖ_γ(B) = {rhs.value:.6g}")
        return report
