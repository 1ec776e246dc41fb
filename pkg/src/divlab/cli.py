"""Command-line interface.

Subcommands:

- ``risk``         evaluate a risk functional on a law
- ``div``          evaluate a divergence between two laws
- ``conditional``  evaluate blockwise conditional risk
- ``verify``       run a suite of seeded checks and emit a report
- ``search``       hunt for counterexamples to one target property
- ``sweep``        rerun one check over a parameter range, emit (parameter, gap) CSV

All inputs are JSON documents read from files or standard input ("-").
Exit status is nonzero iff a must-pass check reports a violation.
"""

from __future__ import annotations

import argparse
import json
import sys

from .consistency import SEARCH_TARGETS, SearchBudget, counterexample_search
from .divergence import DivergenceSpec
from .errors import ConfigParseError, DivLabError
from .prob import FiniteDist, Partition
from .report import (
    CheckSpec,
    SuiteConfig,
    canonical_json,
    emit_report,
    now_timestamp,
    run_check,
    run_suite,
    suite_failed,
    worker_count,
)
from .risk import RiskSpec, rho_conditional, rho_of_law


def _load_json(source: str):
    try:
        if source == "-":
            return json.load(sys.stdin)
        text = source
        if not source.lstrip().startswith(("{", "[")):
            with open(source, "r", encoding="utf-8") as handle:
                text = handle.read()
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigParseError(f"cannot read JSON from {source!r}: {exc}") from exc


def _print_or_write(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)


def _cmd_risk(args) -> int:
    spec = RiskSpec.from_json(_load_json(args.spec))
    law = FiniteDist.from_json(_load_json(args.law))
    value = rho_of_law(spec, law)
    _print_or_write(canonical_json({"value": value}) + "\n", args.out)
    return 0


def _cmd_div(args) -> int:
    div = DivergenceSpec.from_json(_load_json(args.divergence))
    nu = FiniteDist.from_json(_load_json(args.nu))
    mu = FiniteDist.from_json(_load_json(args.mu))
    value = div.evaluate(nu, mu)
    _print_or_write(canonical_json({"value": value}) + "\n", args.out)
    return 0


def _cmd_conditional(args) -> int:
    spec = RiskSpec.from_json(_load_json(args.spec))
    mu = FiniteDist.from_json(_load_json(args.mu))
    values = [float(v) for v in _load_json(args.values)]
    partition = Partition.from_json(_load_json(args.partition))
    cond = rho_conditional(spec, mu, values, partition)
    doc = {
        "blocks": [
            {"block": list(block), "weight": w, "value": v}
            for (block, v), w in zip(cond.values, cond.weights)
        ]
    }
    _print_or_write(canonical_json(doc) + "\n", args.out)
    return 0


def _apply_overrides(doc: dict, args) -> dict:
    for check in doc.get("checks", []):
        if args.seed is not None:
            check["seed"] = args.seed
        if args.trials is not None:
            check["trials"] = args.trials
        tols = dict(check.get("tolerances", {}))
        if args.tol_noise is not None:
            tols["noise"] = args.tol_noise
        if args.tol_violation is not None:
            tols["violation"] = args.tol_violation
        if tols:
            check["tolerances"] = tols
    return doc


def _cmd_verify(args) -> int:
    doc = _apply_overrides(_load_json(args.config), args)
    config = SuiteConfig.from_json(doc)
    reports = run_suite(config, workers=worker_count())
    timestamp = None if args.no_timestamp else now_timestamp()
    text = emit_report(reports, args.format, args.out, timestamp, config.name)
    if args.out == "-":
        sys.stdout.write(text)
    return 1 if suite_failed(reports) else 0


def _cmd_search(args) -> int:
    spec = RiskSpec.from_json(_load_json(args.spec))
    divergence = (
        DivergenceSpec.from_json(_load_json(args.divergence)) if args.divergence else None
    )
    budget = SearchBudget(
        trials=args.trials,
        seed=args.seed,
        max_e=args.size_e,
        max_f=args.size_f,
    )
    result = counterexample_search(spec, budget, args.target, divergence)
    _print_or_write(canonical_json(result.as_json()) + "\n", args.out)
    return 0


def _set_by_path(doc: dict, path: str, value: float) -> None:
    parts = path.split(".")
    node = doc
    for key in parts[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigParseError(f"sweep path {path!r} does not exist in the check")
        node = node[key]
    if parts[-1] not in node:
        raise ConfigParseError(f"sweep path {path!r} does not exist in the check")
    node[parts[-1]] = value


def _cmd_sweep(args) -> int:
    base = _load_json(args.config)
    values = [float(v) for v in args.values.split(",")]
    lines = ["parameter,worst_gap"]
    for v in values:
        doc = json.loads(json.dumps(base))
        _set_by_path(doc, args.param, v)
        report = run_check(CheckSpec.from_json(doc), workers=worker_count())
        gap = "" if report.worst_gap is None else format(report.worst_gap, ".17g")
        lines.append(f"{format(v, '.17g')},{gap}")
    _print_or_write("\n".join(lines) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divlab",
        description="Risk functionals, induced divergences, and seeded property verification on finite spaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_risk = sub.add_parser("risk", help="evaluate a risk functional on a law")
    p_risk.add_argument("--spec", required=True, help="risk spec JSON (path, inline, or -)")
    p_risk.add_argument("--law", required=True, help="law JSON (path, inline, or -)")
    p_risk.add_argument("--out", default="-")
    p_risk.set_defaults(fn=_cmd_risk)

    p_div = sub.add_parser("div", help="evaluate a divergence between two laws")
    p_div.add_argument("--divergence", required=True)
    p_div.add_argument("--nu", required=True)
    p_div.add_argument("--mu", required=True)
    p_div.add_argument("--out", default="-")
    p_div.set_defaults(fn=_cmd_div)

    p_cond = sub.add_parser("conditional", help="evaluate blockwise conditional risk")
    p_cond.add_argument("--spec", required=True)
    p_cond.add_argument("--mu", required=True)
    p_cond.add_argument("--values", required=True)
    p_cond.add_argument("--partition", required=True)
    p_cond.add_argument("--out", default="-")
    p_cond.set_defaults(fn=_cmd_conditional)

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--out", default="-")
    p_verify.add_argument("--format", choices=("json", "csv"), default="json")
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument("--trials", type=int, default=None)
    p_verify.add_argument("--tol-noise", type=float, default=None)
    p_verify.add_argument("--tol-violation", type=float, default=None)
    p_verify.add_argument("--no-timestamp", action="store_true")
    p_verify.set_defaults(fn=_cmd_verify)

    p_search = sub.add_parser("search", help="hunt for counterexamples")
    p_search.add_argument("--spec", required=True)
    p_search.add_argument("--divergence", default=None)
    p_search.add_argument(
        "--target", required=True, help=f"one of {', '.join(SEARCH_TARGETS)} or any check kind"
    )
    p_search.add_argument("--trials", type=int, default=1000)
    p_search.add_argument("--seed", type=int, default=0)
    p_search.add_argument("--size-e", type=int, default=3)
    p_search.add_argument("--size-f", type=int, default=3)
    p_search.add_argument("--out", default="-")
    p_search.set_defaults(fn=_cmd_search)

    p_sweep = sub.add_parser("sweep", help="rerun one check over a parameter range")
    p_sweep.add_argument("--config", required=True, help="a single check JSON document")
    p_sweep.add_argument("--param", required=True, help="dotted path, e.g. spec.eta")
    p_sweep.add_argument("--values", required=True, help="comma-separated floats")
    p_sweep.add_argument("--out", default="-")
    p_sweep.set_defaults(fn=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DivLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
