import math
from dataclasses import replace

import numpy as np
import pytest

from src.conditions.checker import ConditionReport
from src.core.exceptions import ScenarioError, UnknownIdError
from src.inequalities.scenario import (
    Scenario, default_scenario, load_scenario, parse_scenario, scale_tilt,
)
from src.inequalities.verifier import INEQUALITIES, InequalityVerifier, list_inequalities
from src.linalg.pd_matrix import PDMatrix, RankOneUpdate, random_cyclic_toeplitz, random_pd
from src.montecarlo.engine import Direction, SampleSpec, Verdict
from src.weights.weight_function import Constant, ExpTilt

CONFIG = {'verdict': {'zcrit': 4.0, 'tolerance': 1e-9},
          'limits': {'chain_max_dim': 16, 'quantified_max_dim': 8},
          'sampling': {'probe_samples': 4096}}
SPEC = SampleSpec(n_samples=100000, seed=3)
UNIT = Constant(1.0)


@pytest.fixture
def verifier():
    return InequalityVerifier(CONFIG)


def scalar_ky_fan(lam, wf=UNIT):
    return Scenario(matrices={"C1": PDMatrix([[1.0]]), "C2": PDMatrix([[4.0]])}, wf=wf, lam=lam)


# -- registry -----------------------------------------------------------------

def test_registry_lists_every_inequality():
    ids = [i["id"] for i in list_inequalities()]
    assert ids == list(INEQUALITIES)
    assert len(ids) == 22
    assert INEQUALITIES["WChain"].increasing
    assert not INEQUALITIES["UChain"].increasing


def test_unknown_id(verifier):
    with pytest.raises(UnknownIdError):
        verifier.verify("Nope", scalar_ky_fan(0.5), SPEC)


def test_missing_field(verifier):
    with pytest.raises(ScenarioError, match="missing field: wf"):
        verifier.verify("WHI", Scenario(matrices={"C": random_pd(3, 0)}), SPEC)


# -- Ky Fan -------------------------------------------------------------------

def test_standard_ky_fan_scalar(verifier):
    report = verifier.verify("KyFanStd", scalar_ky_fan(0.5), SPEC)
    assert report.margin.value == pytest.approx(math.log(2.5) - 0.5 * math.log(4.0), abs=1e-12)
    assert report.margin.value == pytest.approx(0.22314, abs=1e-5)
    assert report.verdict == Verdict.HOLDS


@pytest.mark.parametrize("lam", [0.0, 0.25, 0.5, 1.0])
def test_weighted_ky_fan_reduces_to_standard(verifier, lam):
    scenario = Scenario(matrices={"C1": random_pd(3, 1), "C2": random_pd(3, 2)}, wf=UNIT, lam=lam)
    weighted = verifier.verify("KyFanW", scenario, SPEC)
    standard = verifier.verify("KyFanStd", scenario, SPEC)
    assert abs(weighted.margin.value - standard.margin.value) <= 1e-9
    if lam in (0.0, 1.0):
        assert abs(weighted.margin.value) <= 1e-9
    assert [p.id for p in weighted.prerequisites] == ["C1.6"]
    assert weighted.prerequisites[0].verdict == Verdict.HOLDS


# -- Hadamard family ----------------------------------------------------------

def test_hadamard_equality_for_diagonal_covariance(verifier):
    scenario = Scenario(matrices={"C": PDMatrix(np.diag([1.0, 2.0, 0.5]))}, wf=ExpTilt([0.4, -0.3, 0.2]))
    report = verifier.verify("WHI", scenario, SPEC)
    assert report.direction == Direction.EQ
    assert abs(report.margin.value) <= 1e-9
    assert report.verdict == Verdict.HOLDS


def test_hadamard_strict_for_correlated_covariance(verifier):
    C = PDMatrix([[1.0, 0.3, 0.0], [0.3, 1.0, 0.0], [0.0, 0.0, 1.0]])
    report = verifier.verify("WHI", Scenario(matrices={"C": C}, wf=UNIT), SPEC)
    assert report.direction == Direction.GE
    assert report.margin.value == pytest.approx(-math.log(1.0 - 0.09), abs=1e-12)
    assert report.verdict == Verdict.HOLDS


def test_hadamard_monte_carlo_path(verifier):
    scenario = Scenario(matrices={"C": PDMatrix(np.diag([1.0, 2.0]))}, wf=ExpTilt([0.3, 0.1]),
                        method="monte_carlo")
    report = verifier.verify("WHI", scenario, SPEC)
    assert report.method == "monte_carlo"
    assert report.verdict == Verdict.HOLDS


@pytest.mark.parametrize("seed", range(5))
def test_block_identity_is_exact(verifier, seed):
    d = 2 + seed % 3
    t = np.random.default_rng(seed).standard_normal(d) * 0.2
    scenario = Scenario(matrices={"C": random_pd(d, seed)}, wf=ExpTilt(t))
    report = verifier.verify("Identity6.7", scenario, SPEC)
    assert report.direction == Direction.EQ
    assert report.verdict == Verdict.HOLDS
    assert abs(verifier.verify("Identity6.7", replace(scenario, wf=UNIT), SPEC).margin.value) <= 1e-9


def test_block_identity_monte_carlo(verifier):
    for case in range(50):
        d = 2 + case % 5
        t = np.random.default_rng(case).standard_normal(d) * 0.3
        scenario = Scenario(matrices={"C": random_pd(d, 100 + case)}, wf=ExpTilt(t), method="monte_carlo")
        report = verifier.verify("Identity6.7", scenario, SampleSpec(n_samples=20000, seed=case))
        assert report.method == "monte_carlo"
        assert abs(report.margin.value) <= 4.0 * report.margin.stderr + 1e-9, case


def test_strong_hadamard_unit_weight(verifier):
    scenario = Scenario(matrices={"C": random_pd(4, 5)}, wf=UNIT, p=2)
    report = verifier.verify("WSHI", scenario, SPEC)
    assert report.verdict == Verdict.HOLDS
    assert report.margin.value >= -1e-9
    with pytest.raises(ScenarioError):
        verifier.verify("WSHI", replace(scenario, p=4), SPEC)


def test_sandwich_unit_weight(verifier):
    report = verifier.verify("Sandwich", Scenario(matrices={"C": random_pd(4, 6)}, wf=UNIT), SPEC)
    assert [s.name for s in report.steps] == ["middle - left", "right - middle"]
    assert report.verdict == Verdict.HOLDS
    assert report.lhs.value <= report.extra["middle"].value <= report.rhs.value


# -- chains -------------------------------------------------------------------

CHAIN_IDS = ["SzaszM", "WChain", "UChain", "ZChain", "Chain2.9", "Chain2.16", "Chain2.19", "Chain2.22"]


@pytest.mark.parametrize("inequality_id", CHAIN_IDS)
def test_standard_chains_hold_for_unit_weight(verifier, inequality_id):
    for seed in range(100):
        scenario = Scenario(matrices={"C": random_pd(6, seed)}, wf=UNIT)
        report = verifier.verify(inequality_id, scenario, SPEC)
        assert report.method == "closed_form"
        assert report.verdict == Verdict.HOLDS, seed
        assert report.margin.value >= -1e-9, seed
        assert all(s.verdict == Verdict.HOLDS for s in report.steps), seed


def test_toeplitz_chain_unit_weight(verifier):
    for seed in range(50):
        scenario = Scenario(matrices={"C": random_cyclic_toeplitz(6, seed)}, wf=UNIT)
        report = verifier.verify("ToeplitzA", scenario, SPEC)
        assert report.verdict == Verdict.HOLDS, seed
        assert report.margin.value >= -1e-9, seed


def test_exponential_chain_needs_r(verifier):
    scenario = Scenario(matrices={"C": random_pd(3, 0)}, wf=UNIT, r=0.5)
    report = verifier.verify("SzaszS", scenario, SPEC)
    assert len(report.chain.values) == 3
    with pytest.raises(ScenarioError, match="missing field: r"):
        verifier.verify("SzaszS", replace(scenario, r=None), SPEC)


def test_mutual_chain_checked_to_half_dimension(verifier):
    report = verifier.verify("Chain2.22", Scenario(matrices={"C": random_pd(6, 1)}, wf=UNIT), SPEC)
    assert len(report.chain.values) == 6
    assert len(report.steps) == 2


# -- sums and rank-one updates --------------------------------------------------

def test_rank_one_matches_general_sum_form(verifier):
    C1 = random_pd(1, 2)
    E = RankOneUpdate([0.7])
    for wf in (UNIT, ExpTilt([0.0, 0.3])):
        general = verifier.verify("Thm5.1", Scenario(matrices={"C1": C1, "C2": E}, wf=wf), SPEC)
        rank_one = verifier.verify("Rank1", Scenario(matrices={"C1": C1, "E": E}, wf=wf), SPEC)
        assert abs(general.margin.value - rank_one.margin.value) <= 1e-9


def test_rank_one_unit_weight_margin(verifier):
    C1 = random_pd(3, 8)
    E = RankOneUpdate([0.3, -0.2, 0.5])
    report = verifier.verify("Rank1", Scenario(matrices={"C1": C1, "E": E}, wf=UNIT), SPEC)
    g = report.extra["g"].value
    assert report.margin.value == pytest.approx(math.log1p(g), abs=1e-12)


def test_alternative_sum_form_agrees_on_monte_carlo(verifier):
    scenario = Scenario(matrices={"C1": random_pd(2, 3), "C2": random_pd(2, 4)},
                        wf=ExpTilt([0.0, 0.0, 0.2, -0.1]), method="monte_carlo")
    alt = verifier.verify("Thm5.1alt", scenario, SPEC)
    direct = alt.extra["margin(5.4)"]
    assert alt.method == "monte_carlo"
    band = 4.0 * math.hypot(alt.margin.stderr, direct.stderr)
    assert abs(alt.margin.value - direct.value) <= band


def test_superadditivity_statement_form_for_unit_weight(verifier):
    scenario = Scenario(matrices={"A": random_pd(3, 1), "B": random_pd(3, 2)}, wf=UNIT)
    report = verifier.verify("Superadd", scenario, SPEC)
    assert report.extra["statement_rhs"].value == pytest.approx(report.rhs.value)
    assert "statement form" not in report.note


def test_concavity_unit_weight(verifier):
    scenario = Scenario(matrices={"C1": random_pd(3, 5), "C2": random_pd(3, 6)}, wf=UNIT, lam=0.5, p=1)
    report = verifier.verify("Concavity", scenario, SPEC)
    assert report.verdict == Verdict.HOLDS
    assert [p.id for p in report.prerequisites] == ["C6.11", "C6.12"]


# -- prerequisites, sweeps, determinism ---------------------------------------

def test_failed_prerequisite_does_not_short_circuit(verifier, monkeypatch):
    failing = ConditionReport("C5.20", "(5.20)", verdict=Verdict.FAILS)
    monkeypatch.setattr(verifier.checker, "check", lambda *args, **kwargs: failing)
    report = verifier.verify("WHI", Scenario(matrices={"C": random_pd(3, 0)}, wf=UNIT), SPEC)
    assert report.condition_verdict == Verdict.FAILS
    assert report.verdict == Verdict.HOLDS
    assert "prerequisite C5.20 failed" in report.note


def test_sweep_over_mixture_weight(verifier):
    scenario = Scenario(matrices={"C1": random_pd(2, 1), "C2": random_pd(2, 2)}, wf=UNIT, lam=0.5)
    points = verifier.sweep("KyFanStd", scenario, "lambda", [0.0, 0.5, 1.0], SPEC)
    assert [p.value for p in points] == [0.0, 0.5, 1.0]
    assert abs(points[0].report.margin.value) <= 1e-12
    row = points[1].row()
    assert list(row) == ["grid_value", "margin", "margin_stderr", "condition_verdict", "inequality_verdict"]
    assert row["condition_verdict"] == "None"


def test_sweep_over_tilt_magnitude(verifier):
    scenario = Scenario(matrices={"C": random_pd(3, 2)}, wf=ExpTilt([1.0, -0.5, 0.5]))
    points = verifier.sweep("WHI", scenario, "t", [0.0, 1.0, 2.0], SPEC)
    assert points[0].report.margin.value == pytest.approx(
        verifier.verify("WHI", replace(scenario, wf=UNIT), SPEC).margin.value)
    assert points[2].report.verdict in (Verdict.HOLDS, Verdict.FAILS, Verdict.INCONCLUSIVE)
    assert "inequality" in points[1].classification


def test_weighted_ky_fan_holds_where_its_condition_does_not(verifier):
    grid = [round(0.1 * i, 12) for i in range(21)]
    table = []
    for seed in range(10):
        scenario = Scenario(matrices={"C1": random_pd(2, 2 * seed), "C2": random_pd(2, 2 * seed + 1)},
                            wf=ExpTilt([1.0, -1.0]), lam=0.5)
        for point in verifier.sweep("KyFanW", scenario, "t", grid, SPEC):
            table.append((seed, point.value, point.report.condition_verdict, point.report.margin.value))
        if any(cond != Verdict.HOLDS and margin >= 0.0 for _, _, cond, margin in table):
            break
    assert len(table) % 21 == 0
    region = [row for row in table if row[2] != Verdict.HOLDS and row[3] >= 0.0]
    assert region, table


def test_verify_is_deterministic(verifier):
    scenario = Scenario(matrices={"C": random_pd(3, 9)}, wf=ExpTilt([0.2, 0.1, 0.0]), method="monte_carlo")
    first = verifier.verify("WHI", scenario, SPEC).to_dict()
    second = verifier.verify("WHI", scenario, SPEC).to_dict()
    assert first == second


# -- scenarios ----------------------------------------------------------------

SCENARIO_TEXT = """{
  "matrices": {
    "C1": {"dim": 2, "rows": [[2.0, 0.5], [0.5, 1.0]]},
    "C2": {"rows": [[1.0, 0.0], [0.0, 3.0]]},
    "E": {"rows": [[1.0, 2.0], [2.0, 4.0]]}
  },
  "wf": {"type": "exp_tilt", "t": [0.1, 0.2]},
  "lambda": 0.25,
  "p": 1
}"""


def test_parse_scenario():
    scenario = parse_scenario(SCENARIO_TEXT, "s.json")
    assert scenario.dim == 2
    assert scenario.lam == 0.25
    assert isinstance(scenario.matrix("E"), RankOneUpdate)
    assert isinstance(scenario.wf, ExpTilt)
    assert scenario.to_dict()["lambda"] == 0.25


def test_scenario_errors_carry_locations(tmp_path):
    with pytest.raises(ScenarioError, match=r"^s\.json:2:"):
        parse_scenario('{\n  "matrices": ,\n}', "s.json")
    with pytest.raises(ScenarioError, match=r"^s\.json:9: "):
        parse_scenario(SCENARIO_TEXT.replace('"p": 1', '"q": 1'), "s.json")
    with pytest.raises(ScenarioError, match="lambda"):
        parse_scenario('{"lambda": 1.5}', "s.json")
    with pytest.raises(ScenarioError, match="cannot read scenario"):
        load_scenario(tmp_path / "missing.json")


def test_scenario_file_round_trip(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(SCENARIO_TEXT, encoding="utf-8")
    scenario = load_scenario(path, SPEC)
    assert scenario.spec == SPEC
    assert scenario.matrix("C1") == PDMatrix([[2.0, 0.5], [0.5, 1.0]])


def test_scale_tilt_and_param_substitution():
    phi = ExpTilt([0.2, -0.4])
    assert np.allclose(scale_tilt(phi, 2.5).t, [0.5, -1.0])
    scenario = Scenario(matrices={"C": random_pd(2, 0)}, wf=phi, lam=0.5, p=1, r=1.0)
    twice = scenario.with_param("t", 2.0).with_param("t", 3.0)
    assert np.allclose(twice.wf.t, [0.6, -1.2])
    assert scenario.with_param("p", 2.0).p == 2
    with pytest.raises(ScenarioError, match="unknown sweep axis"):
        scenario.with_param("zeta", 1.0)


@pytest.mark.parametrize("inequality_id", sorted(INEQUALITIES))
def test_default_scenarios_are_valid(inequality_id):
    scenario = default_scenario(inequality_id, d=3)
    scenario.require(INEQUALITIES[inequality_id].fields)
    assert scenario.wf.dim == INEQUALITIES[inequality_id].weight_dim(3)
