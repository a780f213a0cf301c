"""
Command-line runner
- Commands: entropy, moments, check, verify, sweep, selftest, list
- Settings resolved as CLI flag > WDE_SEED (seed only) > config file > default
- Reports written as JSON (default) or CSV to --out or stdout
- Exit codes: 0 Holds / computation done, 1 any Fails, 2 any Inconclusive (none Fails), 64 usage or scenario error
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Literal, Optional, Sequence

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.conditions.checker import ABSTRACT_ONLY, ConditionChecker, list_conditions
from src.core.config import DEFAULT_CONFIG_PATH, load_config, setup_logging
from src.core.exceptions import UsageError, WdiError
from src.entropy.chains import CHAIN_LABELS, chain
from src.entropy.moments import gaussian_we, method_of, weighted_moments
from src.inequalities.scenario import SWEEP_AXES, default_scenario, load_scenario
from src.inequalities.verifier import InequalityVerifier, list_inequalities
from src.montecarlo.engine import SampleSpec, Verdict, aggregate_verdicts
from src.runner.selftest import SelfTest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILS = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 64

EXIT_CODES = {Verdict.HOLDS: EXIT_OK, Verdict.FAILS: EXIT_FAILS, Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE}


class RunConfig(BaseModel):
    """Resolved settings of one invocation; echoed into every report"""
    model_config = ConfigDict(extra="forbid")

    command: Literal["entropy", "moments", "check", "verify", "sweep", "selftest", "list"]
    item_id: Optional[str] = None
    scenario_path: Optional[str] = None
    samples: int = Field(100000, ge=1)
    seed: int = Field(0, ge=0)
    chunk_size: int = Field(4096, ge=1)
    workers: int = Field(1, ge=1)
    zcrit: float = Field(4.0, gt=0.0)
    tolerance: float = Field(1e-9, gt=0.0)
    out_path: Optional[str] = None
    format: Literal["json", "csv"] = "json"
    axis: Optional[str] = None
    grid: Optional[List[float]] = None

    def sample_spec(self) -> SampleSpec:
        return SampleSpec(n_samples=self.samples, seed=self.seed, chunk_size=self.chunk_size,
                          workers=self.workers)

    def report_dict(self) -> dict:
        return self.model_dump(exclude={"out_path"}, exclude_none=True)


class _Parser(argparse.ArgumentParser):
    """argparse whose errors surface as UsageError instead of exiting with 2"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wde", description="Weighted Gaussian entropies and determinant inequalities")
    parser.add_argument('--config', type=str, default=DEFAULT_CONFIG_PATH, help='config file path')
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)
    sub.required = True

    def common(p, scenario: bool = True):
        if scenario:
            p.add_argument('--scenario', type=str, help='scenario JSON file')
        p.add_argument('--samples', type=int, help='Monte Carlo sample count')
        p.add_argument('--seed', type=int, help='base seed')
        p.add_argument('--zcrit', type=float, help='z-band multiplier for verdicts')
        p.add_argument('--tol', type=float, help='absolute tolerance for closed-form verdicts')
        p.add_argument('--out', type=str, help='write the report here instead of stdout')
        p.add_argument('--format', type=str, choices=['json', 'csv'], help='report format')

    p = sub.add_parser('entropy', help='weighted Gaussian entropy of the scenario covariance')
    common(p)
    p.add_argument('--chain', type=str, choices=CHAIN_LABELS, help='print a subset chain instead')
    p.add_argument('--r', type=float, help='exponent for the g and s chains')

    p = sub.add_parser('moments', help='α and Φ of the scenario weight under N(0, C)')
    common(p)

    for name, what in (('check', 'condition'), ('verify', 'inequality')):
        p = sub.add_parser(name, help=f'evaluate one {what}')
        p.add_argument('id', type=str)
        common(p)
        p.add_argument('--dim', type=int, default=3, help='dimension of the default scenario')

    p = sub.add_parser('sweep', help='verify an inequality along a parameter grid')
    p.add_argument('id', type=str)
    common(p)
    p.add_argument('--axis', type=str, required=True, choices=SWEEP_AXES)
    p.add_argument('--grid', type=str, required=True, help="'start:stop:step' (inclusive) or 'a,b,c'")
    p.add_argument('--dim', type=int, default=3, help='dimension of the default scenario')

    p = sub.add_parser('selftest', help='reduction and moment self-test batteries')
    common(p, scenario=False)

    p = sub.add_parser('list', help='registered condition and inequality ids')
    p.add_argument('--examples', action='store_true', help='include a default scenario per id')
    p.add_argument('--out', type=str)
    p.add_argument('--format', type=str, choices=['json', 'csv'])
    return parser


def parse_grid(text: str) -> List[float]:
    """'start:stop:step' with stop included, or a comma-separated list"""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            if step == 0.0 or (stop - start) / step < 0:
                raise UsageError(f"grid step {step} does not reach {stop} from {start}")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 12) for i in range(count)]
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"bad grid {text!r}: {e}") from e
    if not values:
        raise UsageError("grid is empty")
    return values


def resolve_config(args: argparse.Namespace, config: dict, environ=None) -> RunConfig:
    """Merge flags, the WDE_SEED environment variable and the config file"""
    environ = os.environ if environ is None else environ
    sampling = config.get('sampling', {})
    verdict = config.get('verdict', {})

    seed = getattr(args, 'seed', None)
    if seed is None and environ.get('WDE_SEED'):
        try:
            seed = int(environ['WDE_SEED'])
        except ValueError as e:
            raise UsageError(f"WDE_SEED must be an integer, got {environ['WDE_SEED']!r}") from e
    if seed is None:
        seed = sampling.get('seed', 0)

    def pick(flag, section, key, default):
        value = getattr(args, flag, None)
        return value if value is not None else section.get(key, default)

    try:
        return RunConfig(
            command=args.command,
            item_id=getattr(args, 'id', None),
            scenario_path=getattr(args, 'scenario', None),
            samples=pick('samples', sampling, 'samples', 100000),
            seed=seed,
            chunk_size=sampling.get('chunk_size', 4096),
            workers=sampling.get('workers', 1),
            zcrit=pick('zcrit', verdict, 'zcrit', 4.0),
            tolerance=pick('tol', verdict, 'tolerance', 1e-9),
            out_path=getattr(args, 'out', None),
            format=pick('format', config.get('output', {}), 'format', 'json'),
            axis=getattr(args, 'axis', None),
            grid=parse_grid(args.grid) if getattr(args, 'grid', None) else None,
        )
    except ValidationError as e:
        err = e.errors()[0]
        where = ".".join(str(part) for part in err.get("loc", ()))
        raise UsageError(f"{where}: {err.get('msg')}") from e


def _effective_config(config: dict, run_config: RunConfig) -> dict:
    merged = {section: dict(values) if isinstance(values, dict) else values
              for section, values in config.items()}
    merged.setdefault('verdict', {}).update({'zcrit': run_config.zcrit, 'tolerance': run_config.tolerance})
    merged.setdefault('sampling', {}).update({'samples': run_config.samples, 'seed': run_config.seed})
    return merged


def _scenario(args, run_config: RunConfig, spec: SampleSpec, fallback_id: Optional[str] = None):
    if run_config.scenario_path is None:
        if fallback_id is None:
            raise UsageError(f"{run_config.command} needs --scenario")
        scenario = default_scenario(fallback_id, getattr(args, 'dim', 3), run_config.seed)
        scenario = scenario.with_spec(spec)
    else:
        scenario = load_scenario(run_config.scenario_path, spec)
    if getattr(args, 'tol', None) is not None:
        scenario.tolerance = run_config.tolerance
    return scenario


# -- commands -----------------------------------------------------------------

def _cmd_entropy(args, run_config, config, spec):
    scenario = _scenario(args, run_config, spec)
    scenario.require(("C", "wf"))
    C = scenario.matrix("C")
    phi = scenario.weight(C.dim)
    if args.chain:
        r = args.r if args.r is not None else scenario.r
        max_dim = int(config.get('limits', {}).get('chain_max_dim', 16))
        probe = SampleSpec(n_samples=int(config.get('sampling', {}).get('probe_samples', 4096)))
        values = chain(args.chain, C, phi, spec, r=r, max_dim=max_dim, probe=probe)
        return values.to_dict(), values.rows(), None
    value = gaussian_we(C, phi, spec)
    payload = {"entropy": value.to_dict(), "method": method_of(phi, C.dim)}
    return payload, [{"value": value.value, "stderr": value.stderr}], None


def _cmd_moments(args, run_config, config, spec):
    scenario = _scenario(args, run_config, spec)
    scenario.require(("C", "wf"))
    C = scenario.matrix("C")
    moments = weighted_moments(C, scenario.weight(C.dim), spec)
    rows = [{"i": 0, "j": 0, "name": "alpha", "value": moments.alpha.value, "stderr": moments.alpha.stderr}]
    for i in range(C.dim):
        for j in range(i, C.dim):
            rows.append({"i": i + 1, "j": j + 1, "name": "Phi",
                         "value": float(moments.phi.value[i, j]), "stderr": float(moments.phi.stderr[i, j])})
    return moments.to_dict(), rows, None


def _cmd_check(args, run_config, config, spec):
    scenario = _scenario(args, run_config, spec, fallback_id=args.id)
    report = ConditionChecker(config).check(args.id, scenario, spec)
    return report.to_dict(), [p.to_dict() for p in report.parts], report.verdict


def _cmd_verify(args, run_config, config, spec):
    scenario = _scenario(args, run_config, spec, fallback_id=args.id)
    report = InequalityVerifier(config).verify(args.id, scenario, spec)
    row = {"id": report.id, "lhs": report.lhs.value, "rhs": report.rhs.value,
           "margin": report.margin.value, "margin_stderr": report.margin.stderr,
           "condition_verdict": "None" if report.condition_verdict is None else report.condition_verdict.value,
           "inequality_verdict": report.verdict.value}
    return report.to_dict(), [row], report.verdict


def _cmd_sweep(args, run_config, config, spec):
    scenario = _scenario(args, run_config, spec, fallback_id=args.id)
    points = InequalityVerifier(config).sweep(args.id, scenario, run_config.axis, run_config.grid, spec)
    payload = {"id": args.id, "axis": run_config.axis, "points": [p.to_dict() for p in points]}
    verdict = aggregate_verdicts(p.report.verdict for p in points)
    return payload, [p.row() for p in points], verdict


def _cmd_selftest(args, run_config, config, spec):
    report = SelfTest(config).run(spec)
    rows = [{k: v for k, v in b.to_dict().items() if k != "failures"} for b in report.batteries]
    return report.to_dict(), rows, report.verdict


def _cmd_list(args, run_config, config, spec):
    conditions = list_conditions()
    inequalities = list_inequalities()
    if args.examples:
        for item in conditions + inequalities:
            item["example"] = default_scenario(item["id"]).to_dict()
    payload = {"conditions": conditions, "inequalities": inequalities, "abstract_only": list(ABSTRACT_ONLY)}
    rows = ([{"kind": "condition", "id": c["id"], "label": c["label"], "fields": " ".join(c["fields"])}
             for c in conditions]
            + [{"kind": "inequality", "id": i["id"], "label": i["label"], "fields": " ".join(i["fields"])}
               for i in inequalities])
    return payload, rows, None


HANDLERS = {
    "entropy": _cmd_entropy,
    "moments": _cmd_moments,
    "check": _cmd_check,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
    "selftest": _cmd_selftest,
    "list": _cmd_list,
}


# -- output -------------------------------------------------------------------

def render(payload: dict, rows: Sequence[dict], fmt: str) -> str:
    if fmt == "csv":
        buffer = io.StringIO()
        fieldnames = list(rows[0].keys()) if rows else []
        writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        return buffer.getvalue()
    return json.dumps(payload, indent=2) + "\n"


def _write(text: str, out_path: Optional[str], stdout) -> None:
    if out_path is None:
        stdout.write(text)
        return
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info("report written to %s", path)


def execute(args: argparse.Namespace, config: dict, stdout=None, environ=None) -> int:
    """Run one parsed command; returns the process exit code"""
    stdout = stdout or sys.stdout
    try:
        run_config = resolve_config(args, config, environ)
        effective = _effective_config(config, run_config)
        spec = run_config.sample_spec()
        payload, rows, verdict = HANDLERS[args.command](args, run_config, effective, spec)
    except WdiError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_USAGE

    payload = dict(payload)
    payload["config"] = run_config.report_dict()
    _write(render(payload, rows, run_config.format), run_config.out_path, stdout)
    return EXIT_OK if verdict is None else EXIT_CODES[verdict]


def run(argv: Optional[Sequence[str]] = None, stdout=None, environ=None) -> int:
    """Parse argv, load the config and execute; never raises for user errors"""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    try:
        config = load_config(args.config)
    except (OSError, yaml.YAMLError) as e:
        logger.error("cannot load config %s: %s", args.config, e)
        return EXIT_USAGE
    setup_logging(config)
    return execute(args, config, stdout, environ)
