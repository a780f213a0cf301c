"""
Self-test batteries
- φ ≡ 1 reduction: σ_1(C) against ½ ln[(2πe)^d det C]
- exponential-tilt moments: closed form against Monte Carlo within the z-band
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.entropy.moments import gaussian_we, weighted_moments
from src.linalg.pd_matrix import LOG_2PI, random_pd
from src.montecarlo.engine import SampleSpec, Verdict, derive_seed
from src.weights.weight_function import Constant, ExpTilt, as_host_routine

logger = logging.getLogger(__name__)


@dataclass
class BatteryResult:
    name: str
    passed: int
    total: int
    required: int
    worst: float
    failures: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed >= self.required

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "total": self.total,
                "required": self.required, "worst": self.worst, "failures": self.failures,
                "ok": self.ok}


@dataclass
class SelfTestReport:
    batteries: List[BatteryResult]

    @property
    def verdict(self) -> Verdict:
        return Verdict.HOLDS if all(b.ok for b in self.batteries) else Verdict.FAILS

    def to_dict(self) -> dict:
        return {"batteries": [b.to_dict() for b in self.batteries], "verdict": self.verdict.value}


class SelfTest:
    """Runs the reduction and moment batteries; deterministic for a fixed spec"""

    def __init__(self, config: dict):
        self.config = config
        selftest_config = config.get('selftest', {})
        self.reduction_cases = int(selftest_config.get('reduction_cases', 100))
        self.reduction_max_dim = int(selftest_config.get('reduction_max_dim', 8))
        self.moment_cases = int(selftest_config.get('moment_cases', 100))
        self.moment_max_dim = int(selftest_config.get('moment_max_dim', 6))
        self.tilt_scale = float(selftest_config.get('tilt_scale', 0.3))
        self.moment_pass_threshold = int(selftest_config.get('moment_pass_threshold', 95))
        verdict_config = config.get('verdict', {})
        self.zcrit = float(verdict_config.get('zcrit', 4.0))
        self.tolerance = float(verdict_config.get('tolerance', 1e-9))

    def run(self, spec: Optional[SampleSpec] = None) -> SelfTestReport:
        spec = spec or SampleSpec.from_config(self.config)
        report = SelfTestReport([self.reduction_battery(spec), self.moment_battery(spec)])
        for battery in report.batteries:
            logger.info("selftest %s: %d/%d (required %d)", battery.name, battery.passed,
                        battery.total, battery.required)
        return report

    def reduction_battery(self, spec: SampleSpec) -> BatteryResult:
        passed, worst, failures = 0, 0.0, []
        for case in range(self.reduction_cases):
            d = 1 + case % self.reduction_max_dim
            C = random_pd(d, derive_seed(spec.seed, 0, case))
            value = gaussian_we(C, Constant(1.0)).value
            expected = 0.5 * (d * (LOG_2PI + 1.0) + C.log_det())
            error = abs(value - expected)
            worst = max(worst, error)
            if error <= self.tolerance:
                passed += 1
            else:
                failures.append(case)
        return BatteryResult("reduction", passed, self.reduction_cases, self.reduction_cases, worst, failures)

    def moment_battery(self, spec: SampleSpec) -> BatteryResult:
        passed, worst, failures = 0, 0.0, []
        for case in range(self.moment_cases):
            d = 1 + case % self.moment_max_dim
            rng = np.random.default_rng(derive_seed(spec.seed, 1, case))
            C = random_pd(d, derive_seed(spec.seed, 2, case))
            phi = ExpTilt(rng.standard_normal(d) * self.tilt_scale / math.sqrt(d))
            exact = weighted_moments(C, phi)
            sampled = weighted_moments(C, as_host_routine(phi, d), spec.derive(3, case))

            # largest |closed − MC| / stderr over α and the upper triangle of Φ
            iu = np.triu_indices(d)
            diffs = np.concatenate([[exact.alpha.value - sampled.alpha.value],
                                    (exact.phi.value - sampled.phi.value)[iu]])
            errs = np.concatenate([[sampled.alpha.stderr], sampled.phi.stderr[iu]])
            z = float(np.max(np.abs(diffs) / np.maximum(errs, 1e-300)))
            worst = max(worst, z)
            if z <= self.zcrit:
                passed += 1
            else:
                failures.append(case)
        required = min(self.moment_pass_threshold, self.moment_cases)
        return BatteryResult("moments", passed, self.moment_cases, required, worst, failures)
