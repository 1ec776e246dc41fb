"""Suite configuration, check execution, and deterministic report emission.

A suite is a list of named checks. Each check binds a risk spec and/or a
divergence spec to a check kind from ``consistency.CHECK_KINDS``, a seeded
sampling budget, and a two-tier tolerance: gaps inside the noise band are
ignored, gaps beyond the violation threshold are defects, and the strip in
between is "inconclusive, refine".

Reports are emitted as a single JSON document (with a schema_version field)
or as CSV with one row per check. Serialization is deterministic: keys are
sorted, floats carry 17 significant digits, infinities are encoded as the
strings "inf"/"-inf", and timestamps can be suppressed. Identical configs
and seeds produce byte-identical JSON regardless of the worker count.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Sequence

from .consistency import (
    CHECK_KINDS,
    SearchBudget,
    TrialStats,
    describe_trial,
    run_trials,
)
from .divergence import DivergenceSpec, divergence_for_risk_spec
from .errors import ConfigParseError, IoError, UnknownFamilyError
from .risk import RiskSpec

SCHEMA_VERSION = 1

DEFAULT_NOISE_TOL = 1e-8
DEFAULT_VIOLATION_TOL = 1e-4


@dataclass(frozen=True)
class Tolerances:
    noise: float = DEFAULT_NOISE_TOL
    violation: float = DEFAULT_VIOLATION_TOL

    def __post_init__(self):
        if not (0 <= self.noise <= self.violation):
            raise ConfigParseError("need 0 <= noise <= violation")

    @classmethod
    def from_json(cls, doc: Mapping | None) -> "Tolerances":
        if not doc:
            return cls()
        return cls(
            noise=float(doc.get("noise", DEFAULT_NOISE_TOL)),
            violation=float(doc.get("violation", DEFAULT_VIOLATION_TOL)),
        )

    def as_json(self) -> dict:
        return {"noise": self.noise, "violation": self.violation}


@dataclass(frozen=True)
class CheckSpec:
    """One named check: what to sample, what to evaluate, how to judge it."""

    name: str
    target: str
    budget: SearchBudget
    risk: RiskSpec | None = None
    divergence: DivergenceSpec | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    must_pass: bool = True

    def __post_init__(self):
        if self.target not in CHECK_KINDS:
            raise UnknownFamilyError(f"unknown check target {self.target!r}")
        needs = CHECK_KINDS[self.target]["needs"]
        if needs == "risk" and self.risk is None:
            raise ConfigParseError(f"check {self.name!r} needs a risk spec")
        if needs == "div" and self.divergence is None and self.risk is None:
            raise ConfigParseError(
                f"check {self.name!r} needs a divergence (or a risk spec to derive one)"
            )

    def resolved_divergence(self) -> DivergenceSpec | None:
        if CHECK_KINDS[self.target]["needs"] != "div":
            return self.divergence
        if self.divergence is not None:
            return self.divergence
        return divergence_for_risk_spec(self.risk)

    @classmethod
    def from_json(cls, doc: Mapping) -> "CheckSpec":
        try:
            name = doc["name"]
            target = doc["target"]
        except KeyError as exc:
            raise ConfigParseError(f"check is missing field {exc}") from exc
        return cls(
            name=name,
            target=target,
            budget=SearchBudget.from_json(doc),
            risk=RiskSpec.from_json(doc["spec"]) if "spec" in doc else None,
            divergence=(
                DivergenceSpec.from_json(doc["divergence"]) if "divergence" in doc else None
            ),
            tolerances=Tolerances.from_json(doc.get("tolerances")),
            must_pass=bool(doc.get("must_pass", True)),
        )

    def as_json(self) -> dict:
        doc = {"name": self.name, "target": self.target, **self.budget.as_json()}
        if self.risk is not None:
            doc["spec"] = self.risk.as_json()
        if self.divergence is not None:
            doc["divergence"] = self.divergence.as_json()
        doc["tolerances"] = self.tolerances.as_json()
        doc["must_pass"] = self.must_pass
        return doc


@dataclass(frozen=True)
class SuiteConfig:
    checks: tuple
    name: str | None = None

    def __post_init__(self):
        names = [c.name for c in self.checks]
        if len(set(names)) != len(names):
            raise ConfigParseError("check names must be unique")

    @classmethod
    def from_json(cls, doc: Mapping) -> "SuiteConfig":
        if not isinstance(doc, Mapping) or "checks" not in doc:
            raise ConfigParseError("suite config must be an object with a 'checks' list")
        return cls(
            checks=tuple(CheckSpec.from_json(c) for c in doc["checks"]),
            name=doc.get("name"),
        )

    def as_json(self) -> dict:
        doc: dict = {"schema_version": SCHEMA_VERSION, "checks": [c.as_json() for c in self.checks]}
        if self.name is not None:
            doc["name"] = self.name
        return doc


@dataclass(frozen=True)
class CheckReport:
    """Verdict and evidence for one executed check."""

    name: str
    target: str
    trials: int
    vacuous: int
    worst_gap: float | None
    verdict: str  # "pass" | "violation" | "inconclusive"
    seed: int
    must_pass: bool = True
    worst_trial: int | None = None
    class_worst: dict | None = None
    instance: dict | None = None

    def as_json(self) -> dict:
        doc = {
            "name": self.name,
            "target": self.target,
            "trials": self.trials,
            "vacuous": self.vacuous,
            "worst_gap": self.worst_gap,
            "verdict": self.verdict,
            "seed": self.seed,
            "must_pass": self.must_pass,
            "worst_trial": self.worst_trial,
        }
        if self.class_worst is not None:
            doc["class_worst"] = {
                k: {"trial": v[1], "gap": v[2]} for k, v in sorted(self.class_worst.items())
            }
        if self.instance is not None:
            doc["instance"] = self.instance
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "CheckReport":
        cw = None
        if "class_worst" in doc:
            cw = {
                k: (abs(v["gap"]), v["trial"], v["gap"])
                for k, v in doc["class_worst"].items()
            }
        return cls(
            name=doc["name"],
            target=doc["target"],
            trials=doc["trials"],
            vacuous=doc["vacuous"],
            worst_gap=doc["worst_gap"],
            verdict=doc["verdict"],
            seed=doc["seed"],
            must_pass=doc.get("must_pass", True),
            worst_trial=doc.get("worst_trial"),
            class_worst=cw,
            instance=doc.get("instance"),
        )


def _verdict(target: str, worst_gap: float | None, tol: Tolerances) -> str:
    if worst_gap is None:
        return "pass"
    side = CHECK_KINDS[target]["side"]
    badness = abs(worst_gap) if side == "abs" else -worst_gap
    if badness <= tol.noise:
        return "pass"
    if badness > tol.violation:
        return "violation"
    return "inconclusive"


def worker_count() -> int:
    raw = os.environ.get("DIVLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_check(check: CheckSpec, workers: int | None = None) -> CheckReport:
    """Execute one check; trial chunks may run on a thread pool.

    The chunk merge is associative with a trial-index tie-break, so the
    outcome is identical for any worker count.
    """
    workers = workers or worker_count()
    div = check.resolved_divergence()
    budget = check.budget
    trials = budget.trials
    if trials == 0:
        stats = TrialStats()
    elif workers == 1:
        stats = run_trials(check.target, check.risk, div, budget, 0, trials)
    else:
        chunk = max(1, -(-trials // (workers * 4)))
        ranges = [(s, min(s + chunk, trials)) for s in range(0, trials, chunk)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(
                    lambda r: run_trials(check.target, check.risk, div, budget, r[0], r[1]),
                    ranges,
                )
            )
        stats = TrialStats()
        for part in parts:
            stats = stats.merge(part)
    verdict = _verdict(check.target, stats.worst_gap, check.tolerances)
    instance = None
    if verdict != "pass" and stats.worst_trial is not None:
        instance = describe_trial(check.target, check.risk, div, budget, stats.worst_trial)
    return CheckReport(
        name=check.name,
        target=check.target,
        trials=stats.count,
        vacuous=stats.vacuous,
        worst_gap=stats.worst_gap,
        verdict=verdict,
        seed=budget.seed,
        must_pass=check.must_pass,
        worst_trial=stats.worst_trial,
        class_worst=stats.class_worst,
        instance=instance,
    )


def run_suite(config: SuiteConfig, workers: int | None = None) -> list[CheckReport]:
    """Run every check in order; an empty suite yields an empty report."""
    return [run_check(c, workers) for c in config.checks]


def suite_failed(reports: Sequence[CheckReport]) -> bool:
    return any(r.verdict == "violation" and r.must_pass for r in reports)


# ---------------------------------------------------------------------------
# deterministic serialization
# ---------------------------------------------------------------------------


def format_float(x: float) -> str:
    if math.isnan(x):
        raise IoError("refusing to serialize NaN; gaps must be vacuous instead")
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _emit_value(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        import json as _json

        out.append(_json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, Mapping):
        out.append("{")
        first = True
        for key in sorted(obj.keys()):
            if not isinstance(key, str):
                raise IoError(f"JSON object keys must be strings, got {key!r}")
            if not first:
                out.append(",")
            first = False
            _emit_value(key, out)
            out.append(":")
            _emit_value(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _emit_value(item, out)
        out.append("]")
    else:
        raise IoError(f"cannot serialize {type(obj).__name__} deterministically")


def canonical_json(obj) -> str:
    """Byte-stable JSON: sorted keys, 17 significant digits, "inf" strings."""
    out: list = []
    _emit_value(obj, out)
    return "".join(out)


def decode_special_floats(obj):
    """Undo the "inf"/"-inf" string encoding after a stdlib json parse."""
    if obj == "inf":
        return math.inf
    if obj == "-inf":
        return -math.inf
    if isinstance(obj, dict):
        return {k: decode_special_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode_special_floats(v) for v in obj]
    return obj


def report_document(
    reports: Sequence[CheckReport],
    timestamp: str | None = None,
    suite_name: str | None = None,
) -> dict:
    doc: dict = {
        "schema_version": SCHEMA_VERSION,
        "checks": [r.as_json() for r in reports],
    }
    if suite_name is not None:
        doc["suite"] = suite_name
    if timestamp is not None:
        doc["created_at"] = timestamp
    return doc


def reports_from_document(doc: Mapping) -> list[CheckReport]:
    return [CheckReport.from_json(c) for c in doc["checks"]]


def now_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


CSV_COLUMNS = ("name", "trials", "vacuous", "worst_gap", "verdict", "seed")


def reports_to_csv(reports: Sequence[CheckReport]) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in reports:
        gap = ""
        if r.worst_gap is not None:
            gap = format_float(r.worst_gap).strip('"')
        buf.write(f"{r.name},{r.trials},{r.vacuous},{gap},{r.verdict},{r.seed}\n")
    return buf.getvalue()


def emit_report(
    reports: Sequence[CheckReport],
    fmt: str,
    path: str,
    timestamp: str | None = None,
    suite_name: str | None = None,
) -> str:
    """Write reports as JSON or CSV; path "-" means stdout (caller prints)."""
    if fmt == "json":
        text = canonical_json(report_document(reports, timestamp, suite_name)) + "\n"
    elif fmt == "csv":
        text = reports_to_csv(reports)
    else:
        raise ConfigParseError(f"unknown report format {fmt!r}")
    if path != "-":
        try:
            with open(path, "w", encoding="utf-8") as handle:
                handle.write(text)
        except OSError as exc:
            raise IoError(f"cannot write report to {path!r}: {exc}") from exc
    return text
