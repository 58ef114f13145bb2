"""Declarative scenario runner.

A scenario file (YAML) names a base, a model, optional actions, and a list
of checks with tolerances; the runner executes every check (continuing past
failures), prints a table, and optionally writes a structured JSON report.
Exit status: 0 all checks pass, 1 any check failed or errored, 2 the
scenario file could not be parsed.
"""

from __future__ import annotations

import argparse
import ast
import json
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import jets as jetfns
from .jets import ChartPoint, ScalarField, lift_coordinate, sample_box
from .forms import KFormField, exterior_derivative, lie_derivative, max_abs_coeff, one_form
from .curvature import einstein_residual, holonomy_dim_estimate, riemann_ricci_scalar
from .einstein_ode import system_residual
from .reduction import (
    build_lift,
    frame_identities,
    hkqk_inverse,
    level_set_identities,
    level_set_restrict,
    moment_map,
    reduced_metric,
)
from .spaces import (
    ConstructionError,
    HKData,
    ProfileSet,
    SpaceModel,
    balanced_check,
    build_hypercomplex,
    build_total_space,
    build_xi_eta_bundle,
    expected_lambda,
    exponential_profiles,
    flat_base,
    gibbons_hawking,
    hypercomplex_nijenhuis_residual,
    ricci_flat_specials,
    structure_equation_residual,
)

__all__ = ["CheckRow", "Report", "Scenario", "list_scenarios", "load_scenario", "main", "run"]

DEFAULT_TOL_FIRST_ORDER = 1e-8
DEFAULT_TOL_CURVATURE = 1e-7


class ScenarioError(Exception):
    """The scenario file is malformed."""


# -- expression grammar --------------------------------------------------------

_FUNCTIONS = {
    "exp": jetfns.exp,
    "ln": jetfns.ln,
    "log": jetfns.ln,
    "sqrt": jetfns.sqrt,
    "sin": jetfns.sin,
    "cos": jetfns.cos,
    "tan": jetfns.tan,
    "arctan": jetfns.arctan,
    "sinh": jetfns.sinh,
    "cosh": jetfns.cosh,
}


def parse_expression(text: str, names: Sequence[str]) -> ScalarField:
    """Compile an arithmetic expression over named coordinates to a field.

    Supported: +, -, *, /, **, unary minus, numbers, coordinate names, and
    the functions exp, ln, sqrt, sin, cos, tan, arctan, sinh, cosh.
    """
    dim = len(names)
    index = {n: i for i, n in enumerate(names)}
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as err:
        raise ScenarioError(f"bad expression {text!r}: {err}") from err

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ScenarioError(f"non-numeric constant in {text!r}")
            return jetfns.constant_field(float(node.value), dim)
        if isinstance(node, ast.Name):
            if node.id not in index:
                raise ScenarioError(f"unknown coordinate {node.id!r} in {text!r}")
            return lift_coordinate(index[node.id], dim)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -build(node.operand)
        if isinstance(node, ast.BinOp):
            left, right = build(node.left), build(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if isinstance(node.op, ast.Div):
                return left / right
            if isinstance(node.op, ast.Pow):
                expo = node.right
                sign = 1.0
                if isinstance(expo, ast.UnaryOp) and isinstance(expo.op, ast.USub):
                    sign, expo = -1.0, expo.operand
                if not isinstance(expo, ast.Constant) or not isinstance(expo.value, (int, float)):
                    raise ScenarioError(f"exponent must be a constant in {text!r}")
                return left ** (sign * float(expo.value))
            raise ScenarioError(f"unsupported operator in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ScenarioError(f"unknown function in {text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ScenarioError(f"functions take one argument in {text!r}")
            return _FUNCTIONS[node.func.id](build(node.args[0]))
        raise ScenarioError(f"unsupported syntax in {text!r}")

    out = build(tree)
    if isinstance(out, (int, float)):
        out = jetfns.constant_field(float(out), dim)
    return out


def _parse_one_form(spec: Dict, names: Sequence[str]) -> KFormField:
    comps = {}
    index = {n: i for i, n in enumerate(names)}
    for coord, expr in spec.items():
        if coord not in index:
            raise ScenarioError(f"unknown coordinate {coord!r} in 1-form spec")
        comps[index[coord]] = parse_expression(expr, names)
    return one_form(len(names), comps)


# -- scenario model --------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    base_spec: Dict
    model_spec: Dict
    actions: List[Dict] = field(default_factory=list)
    checks: List[Dict] = field(default_factory=list)
    samples: int = 50
    seed: int = 7
    box_overrides: Dict[str, List[float]] = field(default_factory=dict)
    tolerances: Dict[str, float] = field(default_factory=dict)
    runtime_overrides: Dict[str, float] = field(default_factory=dict)

    @staticmethod
    def from_dict(raw: Dict) -> "Scenario":
        if not isinstance(raw, dict):
            raise ScenarioError("scenario document must be a mapping")
        for key in ("name", "model", "checks"):
            if key not in raw:
                raise ScenarioError(f"scenario misses required key {key!r}")
        sampling = raw.get("sampling", {})
        return Scenario(
            name=str(raw["name"]),
            base_spec=raw.get("base", {"kind": "flat", "n": 1}),
            model_spec=raw["model"],
            actions=raw.get("actions", []),
            checks=raw["checks"],
            samples=int(sampling.get("count", 50)),
            seed=int(sampling.get("seed", 7)),
            box_overrides=sampling.get("box", {}),
            tolerances=raw.get("tolerances", {}),
        )


@dataclass
class CheckRow:
    name: str
    status: str  # pass | fail | error
    max_residual: Optional[float]
    tolerance: Optional[float]
    worst_point: Optional[List[float]] = None
    detail: str = ""

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "status": self.status,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "worst_point": self.worst_point,
            "detail": self.detail,
        }


@dataclass
class Report:
    scenario: str
    seed: int
    samples: int
    checks: List[CheckRow]
    elapsed_seconds: float

    @property
    def all_passed(self) -> bool:
        return all(row.status == "pass" for row in self.checks)

    def body_dict(self) -> Dict:
        """Deterministic report body (timing excluded)."""
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "samples": self.samples,
            "checks": [row.to_dict() for row in self.checks],
            "all_passed": self.all_passed,
        }

    def to_json(self) -> str:
        out = self.body_dict()
        out["elapsed_seconds"] = self.elapsed_seconds
        return json.dumps(out, indent=2, sort_keys=True)

    def table(self) -> str:
        lines = [f"scenario {self.scenario} (seed {self.seed}, {self.samples} samples)"]
        width = max((len(r.name) for r in self.checks), default=10)
        for r in self.checks:
            res = "-" if r.max_residual is None else f"{r.max_residual:.3e}"
            tol = "-" if r.tolerance is None else f"{r.tolerance:.1e}"
            extra = f"  {r.detail}" if r.detail else ""
            lines.append(f"  {r.name:<{width}}  {r.status:<5}  residual {res:>10}  tol {tol}{extra}")
        verdict = "ALL PASSED" if self.all_passed else "FAILURES PRESENT"
        lines.append(f"  -> {verdict} ({self.elapsed_seconds:.1f}s)")
        return "\n".join(lines)


# -- builders ----------------------------------------------------------------------


def _build_base(spec: Dict) -> HKData:
    kind = spec.get("kind", "flat")
    if kind == "flat":
        return flat_base(
            n=int(spec.get("n", 1)),
            torus=bool(spec.get("torus", False)),
            kappa=spec.get("kappa", "default"),
        )
    if kind == "gibbons_hawking":
        names = ("u1", "u2", "u3", "y")
        v_field = parse_expression(spec["V"], names)
        theta = _parse_one_form(spec["theta"], names)
        kappa = None
        if "kappa" in spec:
            kappa = tuple(_parse_one_form(k, names) for k in spec["kappa"])
        box = spec.get("box")
        return gibbons_hawking(v_field, theta, kappa=kappa, box=box)
    raise ScenarioError(f"unknown base kind {kind!r}")


def _build_profiles(spec: Dict) -> ProfileSet:
    if not spec or spec == "exponential":
        return exponential_profiles()
    if isinstance(spec, dict) and spec.get("kind") == "exponential":
        return exponential_profiles(a=float(spec.get("a", 1.0)), b=float(spec.get("b", 1.0)))
    fields = {}
    for name in ("p", "q", "r", "s"):
        if name in spec:
            fields[name] = parse_expression(spec[name], ("t",))
    return ProfileSet(label="scenario", **fields)


def _build_model(scenario: Scenario, base: HKData) -> SpaceModel:
    spec = scenario.model_spec
    kind = spec.get("kind")
    if kind in ("Q", "P", "L", "N"):
        profiles = _build_profiles(spec.get("profiles", "exponential"))
        t_box = tuple(spec.get("t_box", (-0.3, 0.3)))
        return build_total_space(base, profiles, kind, t_box=t_box)
    if kind == "xi_eta":
        return build_xi_eta_bundle(base)
    if kind == "hypercomplex":
        pots = []
        for pot in spec.get("potentials", []):
            pots.append(None if pot is None else _parse_one_form(pot, base.chart))
        return build_hypercomplex(base, pots)
    if kind in ("calabi_P", "as_G2_L7", "spin7_N8"):
        return ricci_flat_specials(
            kind,
            b=float(spec.get("b", 1.0)),
            c=float(spec.get("c", 2.0)),
            n=int(spec.get("n", 1)),
            base=base,
            t_box=tuple(spec.get("t_box", (0.5, 3.0))),
        )
    raise ScenarioError(f"unknown model kind {kind!r}")


def _scenario_box(scenario: Scenario, model: SpaceModel) -> List:
    box = [list(b) for b in model.box]
    for coord, rng in scenario.box_overrides.items():
        if coord not in model.chart:
            raise ScenarioError(f"box override for unknown coordinate {coord!r}")
        box[model.chart.index(coord)] = list(rng)
    return box


# -- checks ------------------------------------------------------------------------


def _tol(scenario: Scenario, check: Dict, key: str, default: float) -> float:
    if key in scenario.runtime_overrides:
        return float(scenario.runtime_overrides[key])
    if "tolerance" in check:
        return float(check["tolerance"])
    if key in scenario.tolerances:
        return float(scenario.tolerances[key])
    return default


def _run_check(
    scenario: Scenario,
    check: Dict,
    model: SpaceModel,
    base: HKData,
    actions: Dict[str, object],
    pts: List[ChartPoint],
) -> List[CheckRow]:
    kind = check.get("kind")
    if kind is None:
        raise ScenarioError("check entry misses 'kind'")

    if kind == "structure_equations":
        tol = _tol(scenario, check, kind, 1e-10)
        res = structure_equation_residual(model, pts)
        return [_row(kind, res, tol)]

    if kind == "closed_4form":
        tol = _tol(scenario, check, kind, 1e-10)
        name = check.get("form", "Omega")
        d = exterior_derivative(model.forms[name])
        res, worst = _max_over(d, pts)
        return [_row(kind, res, tol, worst)]

    if kind == "einstein":
        tol = _tol(scenario, check, kind, DEFAULT_TOL_CURVATURE)
        lam = float(check["lam"]) if "lam" in check else expected_lambda(model.which, base.n)
        res = einstein_residual(model.metric, lam, pts)
        return [_row(f"einstein(lambda={lam:g})", res, tol)]

    if kind == "holonomy_dim":
        expected = int(check["expected"])
        estimate = holonomy_dim_estimate(model.metric, pts[0])
        lower_bound_ok = bool(check.get("lower_bound", False))
        if estimate == expected:
            status = "pass"
            detail = f"estimate {estimate}"
        elif lower_bound_ok and estimate <= expected:
            status = "pass"
            detail = f"estimate {estimate} <= expected {expected} (documented lower bound)"
        else:
            status = "fail"
            detail = f"estimate {estimate} != expected {expected}"
        return [CheckRow(f"holonomy_dim(expected={expected})", status, float(estimate), float(expected), None, detail)]

    if kind == "nijenhuis":
        tol = _tol(scenario, check, kind, 1e-9)
        res = hypercomplex_nijenhuis_residual(model, pts)
        return [_row(kind, res, tol)]

    if kind == "balanced":
        tol = _tol(scenario, check, kind, 1e-10)
        res = balanced_check(model, check["form"], int(check["power"]), pts)
        return [_row(f"balanced({check['form']}^{check['power']})", res, tol)]

    if kind == "holomorphic_volume":
        tol = _tol(scenario, check, kind, 1e-10)
        name = check.get("form", "Upsilon")
        d = model.complex_forms[name].d()
        worst = 0.0
        for p in pts:
            worst = max(worst, d.max_abs_coeff(p))
        return [_row(f"holomorphic_volume({name})", worst, tol)]

    if kind == "moment_map":
        tol = _tol(scenario, check, kind, 1e-9)
        action = actions[check["action"]]
        try:
            data = moment_map(action, model, pts, tol=tol)
            return [_row(f"moment_map({check['action']})", data.residual, tol)]
        except Exception as err:  # verification failure carries the residual
            return [CheckRow(f"moment_map({check['action']})", "fail", None, tol, None, str(err))]

    if kind == "invariant_4form":
        tol = _tol(scenario, check, kind, 1e-9)
        action = actions[check["action"]]
        ld = lie_derivative(action.lift, model.forms["Omega"])
        res, worst = _max_over(ld, pts)
        return [_row(f"invariant_4form({check['action']})", res, tol, worst)]

    if kind == "reduced_metric":
        which = check["which"]
        quotient = reduced_metric(which, check.get("params", {}))
        qpts = sample_box(quotient.box, min(scenario.samples, 12), scenario.seed)
        rows = []
        target = quotient.metric if not quotient.degenerate else None
        if quotient.degenerate:
            descended = quotient.aux.get("descended")
            if descended is None:
                raise ScenarioError(f"degenerate quotient {which} has no descended form")
            quotient = descended
            qpts = sample_box(quotient.box, min(scenario.samples, 12), scenario.seed)
        if "scal" in check or "scal" in quotient.expected:
            tol = _tol(scenario, check, "scal", 1e-6)
            want = float(check.get("scal", quotient.expected.get("scal")))
            worst = 0.0
            for p in qpts:
                c = riemann_ricci_scalar(quotient.metric, p)
                worst = max(worst, abs(c.scalar - want))
            rows.append(_row(f"reduced_metric({which}).scal", worst, tol))
        lam = float(check.get("lam", quotient.expected.get("lambda", 0.0)))
        tol = _tol(scenario, check, kind, DEFAULT_TOL_CURVATURE)
        res = einstein_residual(quotient.metric, lam, qpts)
        rows.append(_row(f"reduced_metric({which}).einstein", res, tol))
        return rows

    if kind == "level_set":
        tol = _tol(scenario, check, kind, 1e-9)
        action = actions[check["action"]]
        level = level_set_restrict(model, action)
        lpts = sample_box(level.box, min(scenario.samples, 30), scenario.seed)
        res = level_set_identities(level, lpts)
        rows = []
        for name, value in res.items():
            this_tol = 1e-10 if name in ("restricted_metric", "connection_form") else tol
            rows.append(_row(f"level_set.{name}", value, this_tol))
        return rows

    if kind == "hkqk_roundtrip":
        tol = _tol(scenario, check, kind, 1e-8)
        action = actions[check["action"]]
        level = level_set_restrict(model, action)
        lpts = sample_box(level.box, min(scenario.samples, 30), scenario.seed)
        _, _, diag = hkqk_inverse(level, lpts)
        rows = []
        for name in ("sigma_match", "metric_match", "closedness", "permuting_relations"):
            this_tol = 1e-9 if name in ("closedness", "permuting_relations") else tol
            rows.append(_row(f"hkqk.{name}", diag[name], this_tol))
        return rows

    if kind == "frame_identities":
        tol = _tol(scenario, check, kind, 1e-8)
        action = actions[check["action"]]
        level = level_set_restrict(model, action)
        lpts = sample_box(level.box, min(scenario.samples, 10), scenario.seed)
        res = frame_identities(level, lpts)
        return [_row(f"frame.{name}", value, tol) for name, value in res.items()]

    if kind == "ode_residual":
        tol = _tol(scenario, check, kind, 1e-12)
        which = check.get("which", model.which)
        profiles = (
            _build_profiles(check["profiles"]) if "profiles" in check else model.profiles
        )
        lam = float(check["lam"]) if "lam" in check else expected_lambda(which, base.n)
        rng = np.random.default_rng(scenario.seed)
        worst = 0.0
        for _ in range(min(scenario.samples, 100)):
            t = float(rng.uniform(*check.get("t_range", (-0.4, 0.4))))
            worst = max(worst, float(np.max(np.abs(system_residual(profiles, base.n, lam, t, which)))))
        return [_row(f"ode_residual({which})", worst, tol)]

    raise ScenarioError(f"unknown check kind {kind!r}")


def _row(name: str, res: float, tol: float, worst: Optional[ChartPoint] = None) -> CheckRow:
    status = "pass" if res <= tol else "fail"
    wp = None if worst is None else [float(v) for v in worst.coords]
    return CheckRow(name, status, float(res), float(tol), wp)


def _max_over(form, pts):
    worst, worst_pt = 0.0, None
    for p in pts:
        v = max_abs_coeff(form, p)
        if v > worst:
            worst, worst_pt = v, p
    return worst, worst_pt


# -- runner -------------------------------------------------------------------------


def load_scenario(path_or_name: str) -> Scenario:
    """Load a scenario from a file path or from the bundled catalogue."""
    text = None
    try:
        with open(path_or_name) as fh:
            text = fh.read()
    except OSError:
        ref = resources.files("qklab").joinpath(f"scenarios/{path_or_name}.yaml")
        if ref.is_file():
            text = ref.read_text()
    if text is None:
        raise ScenarioError(f"no scenario file or bundled scenario named {path_or_name!r}")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ScenarioError(f"cannot parse scenario: {err}") from err
    return Scenario.from_dict(raw)


def list_scenarios() -> List[str]:
    out = []
    for entry in resources.files("qklab").joinpath("scenarios").iterdir():
        if entry.name.endswith(".yaml"):
            out.append(entry.name[: -len(".yaml")])
    return sorted(out)


def run(
    scenario: Scenario,
    seed: Optional[int] = None,
    samples: Optional[int] = None,
    tolerance_overrides: Optional[Dict[str, float]] = None,
) -> Report:
    start = time.perf_counter()
    if seed is not None:
        scenario.seed = seed
    if samples is not None:
        scenario.samples = samples
    if tolerance_overrides:
        scenario.runtime_overrides.update(tolerance_overrides)
    base = _build_base(scenario.base_spec)
    model = _build_model(scenario, base)
    box = _scenario_box(scenario, model)
    pts = sample_box(box, scenario.samples, scenario.seed)
    actions = {}
    for spec in scenario.actions:
        spec = dict(spec)
        name = spec.pop("name")
        kind = spec.pop("kind")
        actions[name] = build_lift(base, kind, spec)
    rows: List[CheckRow] = []
    for check in scenario.checks:
        label = check.get("kind", "?")
        try:
            rows.extend(_run_check(scenario, check, model, base, actions, pts))
        except ScenarioError:
            raise
        except Exception as err:
            rows.append(CheckRow(str(label), "error", None, None, None, f"{type(err).__name__}: {err}"))
    return Report(
        scenario=scenario.name,
        seed=scenario.seed,
        samples=scenario.samples,
        checks=rows,
        elapsed_seconds=time.perf_counter() - start,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qklab",
        description="Verification scenarios for Einstein geometries on torus bundles",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run a scenario file or bundled scenario")
    runp.add_argument("scenario", help="path to a YAML scenario or a bundled name")
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--samples", type=int, default=None)
    runp.add_argument(
        "--tolerance",
        action="append",
        default=[],
        metavar="KEY=VAL",
        help="override a named tolerance (repeatable)",
    )
    runp.add_argument("--out", default=None, help="write the JSON report here")
    sub.add_parser("list", help="list bundled scenarios")
    args = parser.parse_args(argv)

    if args.command == "list":
        for name in list_scenarios():
            print(name)
        return 0

    overrides = {}
    for item in args.tolerance:
        if "=" not in item:
            print(f"bad --tolerance {item!r}, expected KEY=VAL", file=sys.stderr)
            return 2
        key, val = item.split("=", 1)
        overrides[key] = float(val)
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return 2
    try:
        report = run(scenario, seed=args.seed, samples=args.samples, tolerance_overrides=overrides)
    except (ScenarioError, ConstructionError) as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return 2
    print(report.table())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json())
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
