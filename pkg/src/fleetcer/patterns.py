"""Declarative initiation/termination rules and the threshold registry.

A rule fires at time-point T when all of its triggers occur at T, every
guard fluent holds at T, and every comparison against the threshold
registry is satisfied.  Patterns are stratified so that a fluent only
guards on (or reacts to boundaries of) fluents from earlier strata.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from fractions import Fraction

INITIATES = "init"
TERMINATES = "term"

#: arity of each input event type (args beyond the vehicle id)
INPUT_EVENT_ARITY = {
    "moving": 1,
    "stopped": 0,
    "abruptAcceleration": 0,
    "abruptDeceleration": 0,
    "abruptCornering": 0,
    "fuelLevel": 1,
    "iceOnRoad": 0,
    "closeToGas": 0,
}

_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


class PatternError(Exception):
    """Problem in a pattern definition (syntax, unknown name, cycle)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class ThresholdError(KeyError):
    pass


@dataclass(frozen=True, slots=True)
class Trigger:
    """An event atom; boundary_of names a fluent for start(F)/end(F) atoms."""

    event_type: str
    args: tuple[str, ...] = ()
    boundary_of: str | None = None

    def key(self) -> str:
        """Occurrence-list key as used by the recognizer buffers."""
        if self.boundary_of:
            return f"{self.event_type}({self.boundary_of})"
        return self.event_type


@dataclass(frozen=True, slots=True)
class Comparison:
    """`<arg> <op> threshold(<param>) * scale` over a trigger argument."""

    arg: str
    op: str
    param: str
    scale: Fraction = Fraction(1)

    def holds(self, value: float, threshold: float) -> bool:
        return _OPS[self.op](value, threshold * self.scale)


@dataclass(frozen=True, slots=True)
class Rule:
    kind: str  # INITIATES | TERMINATES
    target: str  # fluent name
    triggers: tuple[Trigger, ...]
    guards: tuple[str, ...] = ()
    comparisons: tuple[Comparison, ...] = ()

    def __post_init__(self):
        if not self.triggers:
            raise PatternError(f"rule for {self.target} has no trigger")
        declared = {a for t in self.triggers for a in t.args}
        for c in self.comparisons:
            if c.arg not in declared:
                raise PatternError(
                    f"comparison argument {c.arg!r} not bound by any trigger "
                    f"of {self.target}"
                )


@dataclass(frozen=True, slots=True)
class FluentDef:
    name: str
    init_rules: tuple[Rule, ...]
    term_rules: tuple[Rule, ...]
    deadline: int | None = None  # seconds; automatic termination

    @property
    def rules(self) -> tuple[Rule, ...]:
        return self.init_rules + self.term_rules

    def dependencies(self) -> set[str]:
        deps = set()
        for rule in self.rules:
            deps.update(rule.guards)
            deps.update(t.boundary_of for t in rule.triggers if t.boundary_of)
        return deps


@dataclass(frozen=True)
class PatternSet:
    fluents: dict[str, FluentDef]
    strata: tuple[tuple[str, ...], ...]

    def __iter__(self):
        for stratum in self.strata:
            for name in stratum:
                yield self.fluents[name]


@dataclass
class ThresholdRegistry:
    """(vehicle, parameter) -> numeric threshold, with a `*` default row."""

    entries: dict[tuple[str, str], float] = field(default_factory=dict)

    def add(self, vehicle: str, param: str, value: float) -> None:
        if value <= 0:
            raise ValueError(f"threshold {param} for {vehicle} must be > 0")
        self.entries[(vehicle, param)] = value

    def lookup(self, vehicle: str, param: str) -> float:
        try:
            return self.entries[(vehicle, param)]
        except KeyError:
            pass
        try:
            return self.entries[("*", param)]
        except KeyError:
            raise ThresholdError(
                f"no {param} threshold for vehicle {vehicle} and no default"
            ) from None

    @classmethod
    def from_csv(cls, text: str) -> "ThresholdRegistry":
        reg = cls()
        for row in csv.reader(io.StringIO(text)):
            if not row or row[0].startswith("#") or row[0] == "vehicle":
                continue
            vehicle, param, value = row[0].strip(), row[1].strip(), float(row[2])
            reg.add(vehicle, param, value)
        return reg


def dependency_order(fluents: dict[str, FluentDef]) -> tuple[tuple[str, ...], ...]:
    """Topological strata of the fluent dependency graph.

    Raises PatternError naming the members of any dependency cycle.
    """
    level: dict[str, int] = {}

    def visit(name: str, trail: tuple[str, ...]) -> int:
        if name in level:
            if level[name] == -1:
                cycle = trail[trail.index(name):] + (name,)
                raise PatternError("cyclic dependency: " + " -> ".join(cycle))
            return level[name]
        level[name] = -1
        deps = [d for d in fluents[name].dependencies() if d in fluents]
        lv = 1 + max((visit(d, trail + (name,)) for d in deps), default=-1)
        level[name] = lv
        return lv

    for name in fluents:
        visit(name, ())
    if not fluents:
        return ()
    n = max(level.values()) + 1
    strata = [[] for _ in range(n)]
    for name in fluents:  # keep declaration order inside each stratum
        strata[level[name]].append(name)
    return tuple(tuple(s) for s in strata)


def make_pattern_set(defs: list[FluentDef]) -> PatternSet:
    fluents = {d.name: d for d in defs}
    for d in defs:
        for dep in d.dependencies():
            if dep not in fluents:
                raise PatternError(
                    f"fluent {d.name} references undefined fluent {dep}"
                )
        for rule in d.rules:
            for trig in rule.triggers:
                if trig.boundary_of is None and trig.event_type not in INPUT_EVENT_ARITY:
                    raise PatternError(
                        f"unknown event type {trig.event_type!r} in {d.name}"
                    )
    return PatternSet(fluents, dependency_order(fluents))


def builtin_fleet_patterns() -> PatternSet:
    """The three built-in fleet patterns (speeding, dangerous driving, refuel)."""
    high_speed = FluentDef(
        "highSpeed",
        init_rules=(
            Rule(INITIATES, "highSpeed", (Trigger("moving", ("S",)),),
                 comparisons=(Comparison("S", ">", "speed"),)),
        ),
        term_rules=(
            Rule(TERMINATES, "highSpeed", (Trigger("moving", ("S",)),),
                 comparisons=(Comparison("S", "<=", "speed"),)),
            Rule(TERMINATES, "highSpeed", (Trigger("stopped"),)),
        ),
    )
    guard = ("highSpeed",)
    dangerous = FluentDef(
        "dangerousDriving",
        init_rules=tuple(
            Rule(INITIATES, "dangerousDriving", (Trigger(ev),), guards=guard)
            for ev in ("abruptAcceleration", "abruptDeceleration",
                       "abruptCornering", "iceOnRoad")
        ),
        term_rules=(
            Rule(TERMINATES, "dangerousDriving",
                 (Trigger("end", boundary_of="highSpeed"),)),
            Rule(TERMINATES, "dangerousDriving", (Trigger("stopped"),)),
        ),
    )
    refuel = FluentDef(
        "reFuelOpportunity",
        init_rules=(
            Rule(INITIATES, "reFuelOpportunity",
                 (Trigger("closeToGas"), Trigger("fuelLevel", ("L",))),
                 guards=guard,
                 comparisons=(Comparison("L", "<", "fuel", Fraction(1, 2)),)),
        ),
        term_rules=(
            Rule(TERMINATES, "reFuelOpportunity",
                 (Trigger("fuelLevel", ("L",)),),
                 comparisons=(Comparison("L", ">=", "fuel", Fraction(1, 2)),)),
        ),
    )
    return make_pattern_set([high_speed, dangerous, refuel])


# ---------------------------------------------------------------------------
# line-oriented pattern grammar
#
#   fluent <name> [deadline <seconds>]
#   init when <event>(args) [and <event>(args)] [if holds <fluent>]
#                           [if <arg> <op> threshold(<param>)[/k]]
#   term when ...
# ---------------------------------------------------------------------------

_TRIGGER_RE = re.compile(r"^(\w+)\(([^)]*)\)$")
_CMP_RE = re.compile(
    r"^(\w+)\s*(<=|>=|<|>)\s*threshold\((\w+)\)(?:\s*/\s*(\d+))?$"
)


def _parse_trigger(text: str, line: int) -> Trigger:
    m = _TRIGGER_RE.match(text.strip())
    if not m:
        raise PatternError(f"bad trigger syntax {text!r}", line)
    name, inner = m.group(1), m.group(2).strip()
    if name in ("start", "end"):
        if not inner:
            raise PatternError(f"{name}() needs a fluent name", line)
        return Trigger(name, boundary_of=inner)
    args = tuple(a.strip() for a in inner.split(",")) if inner else ()
    return Trigger(name, args)


def _parse_rule(kind: str, body: str, target: str, line: int) -> Rule:
    if not body.startswith("when "):
        raise PatternError("expected 'when' after init/term", line)
    parts = body[len("when "):].split(" if ")
    triggers = tuple(
        _parse_trigger(t, line) for t in re.split(r"\s+and\s+", parts[0].strip())
    )
    guards: list[str] = []
    comparisons: list[Comparison] = []
    for cond in parts[1:]:
        cond = cond.strip()
        if cond.startswith("holds "):
            guards.append(cond[len("holds "):].strip())
            continue
        m = _CMP_RE.match(cond)
        if not m:
            raise PatternError(f"bad condition {cond!r}", line)
        scale = Fraction(1, int(m.group(4))) if m.group(4) else Fraction(1)
        comparisons.append(Comparison(m.group(1), m.group(2), m.group(3), scale))
    try:
        return Rule(kind, target, triggers, tuple(guards), tuple(comparisons))
    except PatternError as e:
        raise PatternError(str(e), line) from None


def parse_pattern_file(text: str) -> PatternSet:
    """Parse the line-oriented pattern grammar into a PatternSet."""
    defs: list[FluentDef] = []
    name: str | None = None
    deadline: int | None = None
    inits: list[Rule] = []
    terms: list[Rule] = []

    def flush():
        nonlocal name
        if name is not None:
            defs.append(FluentDef(name, tuple(inits), tuple(terms), deadline))
            name = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "fluent":
            flush()
            if len(tokens) not in (2, 4):
                raise PatternError("expected: fluent <name> [deadline <s>]", lineno)
            name = tokens[1]
            deadline = None
            inits, terms = [], []
            if len(tokens) == 4:
                if tokens[2] != "deadline":
                    raise PatternError(f"unexpected token {tokens[2]!r}", lineno)
                deadline = int(tokens[3])
                if deadline <= 0:
                    raise PatternError("deadline must be positive", lineno)
        elif tokens[0] in ("init", "term"):
            if name is None:
                raise PatternError("rule outside a fluent block", lineno)
            rule = _parse_rule(
                INITIATES if tokens[0] == "init" else TERMINATES,
                line[len(tokens[0]):].strip(), name, lineno,
            )
            (inits if tokens[0] == "init" else terms).append(rule)
        else:
            raise PatternError(f"unexpected token {tokens[0]!r}", lineno)
    flush()
    return make_pattern_set(defs)


def serialize_patterns(ps: PatternSet) -> str:
    """Inverse of parse_pattern_file."""
    lines: list[str] = []
    for fd in ps:
        head = f"fluent {fd.name}"
        if fd.deadline is not None:
            head += f" deadline {fd.deadline}"
        lines.append(head)
        for rule in fd.rules:
            parts = []
            for t in rule.triggers:
                inner = t.boundary_of if t.boundary_of else ",".join(t.args)
                parts.append(f"{t.event_type}({inner})")
            body = f"{rule.kind} when " + " and ".join(parts)
            for g in rule.guards:
                body += f" if holds {g}"
            for c in rule.comparisons:
                expr = f"threshold({c.param})"
                if c.scale != 1:
                    expr += f"/{c.scale.denominator}"
                body += f" if {c.arg} {c.op} {expr}"
            lines.append("  " + body)
    return "\n".join(lines) + ("\n" if lines else "")


def builtin_patterns_text() -> str:
    return serialize_patterns(builtin_fleet_patterns())
