from src.montecarlo.engine import SampleSpec, Verdict
from src.runner.selftest import BatteryResult, SelfTest, SelfTestReport

SPEC = SampleSpec(n_samples=50000, seed=0)


def test_default_batteries_hold():
    report = SelfTest({}).run(SPEC)
    reduction, moments = report.batteries
    assert reduction.name == "reduction"
    assert reduction.passed == reduction.total == 100
    assert reduction.worst <= 1e-9
    assert moments.total == 100
    assert moments.passed >= 95
    assert report.verdict == Verdict.HOLDS


def test_batteries_are_deterministic():
    config = {'selftest': {'reduction_cases': 8, 'moment_cases': 8, 'moment_pass_threshold': 7}}
    first = SelfTest(config).run(SampleSpec(n_samples=20000, seed=3)).to_dict()
    second = SelfTest(config).run(SampleSpec(n_samples=20000, seed=3)).to_dict()
    assert first == second


def test_one_failed_battery_fails_the_report():
    good = BatteryResult("reduction", 10, 10, 10, 0.0)
    bad = BatteryResult("moments", 3, 10, 9, 6.2, [1, 4])
    assert not bad.ok
    report = SelfTestReport([good, bad])
    assert report.verdict == Verdict.FAILS
    assert report.to_dict()["batteries"][1]["failures"] == [1, 4]
