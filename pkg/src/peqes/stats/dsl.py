"""Restricted flow-based statistics language.

Line-oriented pipeline with no loops, conditionals, or user functions,
so every plan is finite and statically checkable against the survey
schema before the study can be registered:

    let young, old = split(data, age < 25)
    let e_y = score_scale(young, items=[bfi1, bfi6], reverse=[bfi1])
    let e_o = score_scale(old, items=[bfi1, bfi6], reverse=[bfi1])
    let extraversion = ttest_ind(e_y, e_o, welch)
    output extraversion

``data`` names the full response dataset; its columns are the survey
item ids. Outputting a record declares one output per field; datasets
can never be output. The full grammar lives in docs/dsl.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from peqes.errors import ScriptInvalid

PRIMITIVE_NAMES = (
    "split",
    "score_scale",
    "mean",
    "sample_sd",
    "sample_var",
    "count",
    "min",
    "max",
    "ttest_ind",
)

TTEST_VARIANTS = ("welch", "pooled")
TTEST_FIELDS = ("t", "df", "p_two_sided")

_CMP_OPS = ("<=", ">=", "==", "!=", "<", ">")

DEFAULT_RESOURCE_BUDGET = 100_000_000

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>-?\d+(?:\.\d+)?)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r'|(?P<str>"[^"]*")|(?P<op><=|>=|==|!=|[<>=(),.\[\]]))'
)


@dataclass(frozen=True)
class Ref:
    name: str
    field: str | None = None

    def __str__(self) -> str:
        return self.name if self.field is None else f"{self.name}.{self.field}"


@dataclass(frozen=True)
class Predicate:
    column: str
    op: str
    value: object


@dataclass(frozen=True)
class Kwarg:
    name: str
    value: object


@dataclass(frozen=True)
class Call:
    primitive: str
    args: tuple
    kwargs: dict


@dataclass(frozen=True)
class LetStep:
    line: int
    targets: tuple[str, ...]
    call: Call


@dataclass(frozen=True)
class OutputDecl:
    line: int
    name: str


@dataclass
class AnalysisPlan:
    """Validated, executable form of an analysis script.

    ``outputs`` maps declared output names to their kind ("scalar",
    "vector", or a record field list). The plan is a one-shot handle:
    the engine marks it consumed on execution.
    """

    steps: tuple[LetStep, ...]
    outputs: tuple[OutputDecl, ...]
    output_schema: dict
    value_kinds: dict
    resource_budget: int = DEFAULT_RESOURCE_BUDGET
    consumed: bool = field(default=False, compare=False)

    @property
    def declared_output_names(self) -> list[str]:
        names = []
        for decl in self.outputs:
            kind = self.output_schema[decl.name]
            if isinstance(kind, tuple):
                names.extend(f"{decl.name}.{f}" for f in kind)
            else:
                names.append(decl.name)
        return names


def _tokenize(text: str, line_no: int, problems: list) -> list | None:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if not match or match.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            problems.append((line_no, f"unexpected character {rest[0]!r}"))
            return None
        if match.group("num") is not None:
            raw = match.group("num")
            tokens.append(("num", float(raw) if "." in raw else int(raw)))
        elif match.group("ident") is not None:
            tokens.append(("ident", match.group("ident")))
        elif match.group("str") is not None:
            tokens.append(("str", match.group("str")[1:-1]))
        else:
            tokens.append(("op", match.group("op")))
        pos = match.end()
    return tokens


class _LineParser:
    def __init__(self, tokens, line_no, problems):
        self.tokens = tokens
        self.pos = 0
        self.line = line_no
        self.problems = problems

    def error(self, msg) -> None:
        self.problems.append((self.line, msg))
        raise _Bail()

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, value = self.take()
        if kind != "op" or value != op:
            self.error(f"expected {op!r}")

    def expect_ident(self):
        kind, value = self.take()
        if kind != "ident":
            self.error("expected an identifier")
        return value

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def parse_ref(self, name: str) -> Ref:
        if self.peek() == ("op", "."):
            self.take()
            return Ref(name, self.expect_ident())
        return Ref(name)

    def parse_list(self) -> tuple:
        items = []
        if self.peek() == ("op", "]"):
            self.take()
            return tuple(items)
        while True:
            kind, value = self.take()
            if kind not in ("ident", "num", "str"):
                self.error("list items must be identifiers, numbers, or strings")
            items.append(value)
            kind, value = self.take()
            if (kind, value) == ("op", "]"):
                return tuple(items)
            if (kind, value) != ("op", ","):
                self.error("expected ',' or ']' in list")

    def parse_arg(self):
        kind, value = self.take()
        if kind == "num" or kind == "str":
            return value
        if kind == "op" and value == "[":
            return self.parse_list()
        if kind != "ident":
            self.error("expected an argument")
        name = value
        nxt_kind, nxt = self.peek()
        if (nxt_kind, nxt) == ("op", "="):
            self.take()
            k2, v2 = self.peek()
            if (k2, v2) == ("op", "["):
                self.take()
                return Kwarg(name, self.parse_list())
            k2, v2 = self.take()
            if k2 not in ("ident", "num", "str"):
                self.error(f"bad value for {name}=")
            return Kwarg(name, v2)
        if nxt_kind == "op" and nxt in _CMP_OPS:
            self.take()
            vk, vv = self.take()
            if vk not in ("num", "str"):
                self.error("predicate compares a column against a constant")
            return Predicate(column=name, op=nxt, value=vv)
        return self.parse_ref(name)

    def parse_call(self) -> Call:
        primitive = self.expect_ident()
        self.expect_op("(")
        args, kwargs = [], {}
        if self.peek() == ("op", ")"):
            self.take()
        else:
            while True:
                arg = self.parse_arg()
                if isinstance(arg, Kwarg):
                    if arg.name in kwargs:
                        self.error(f"duplicate keyword {arg.name!r}")
                    kwargs[arg.name] = arg.value
                else:
                    if kwargs:
                        self.error("positional argument after keyword argument")
                    args.append(arg)
                kind, value = self.take()
                if (kind, value) == ("op", ")"):
                    break
                if (kind, value) != ("op", ","):
                    self.error("expected ',' or ')'")
        return Call(primitive=primitive, args=tuple(args), kwargs=kwargs)


class _Bail(Exception):
    pass


def _column_kinds(survey) -> dict:
    kinds = {}
    for item in survey:
        kinds[item.id] = "num" if item.kind == "integer" else "cat"
    return kinds


class _Validator:
    """Static checks: every reference resolves, every call is well-typed."""

    def __init__(self, survey, problems):
        self.problems = problems
        self.datasets = {"data": _column_kinds(survey)}
        self.kinds = {"data": "dataset"}

    def fail(self, line, msg):
        self.problems.append((line, msg))
        raise _Bail()

    def resolve_vector(self, line, arg, what):
        """A vector-valued argument: either a vector name or dataset.column."""
        if not isinstance(arg, Ref):
            self.fail(line, f"{what} must reference a column or derived vector")
        if arg.field is not None:
            cols = self.datasets.get(arg.name)
            if cols is None:
                self.fail(line, f"unknown dataset {arg.name!r}")
            if arg.field not in cols:
                self.fail(line, f"unknown column {arg.field!r} in {arg.name!r}")
            if cols[arg.field] != "num":
                self.fail(line, f"column {arg.field!r} is not numeric")
            return
        kind = self.kinds.get(arg.name)
        if kind is None:
            self.fail(line, f"unknown name {arg.name!r}")
        if kind != "vector":
            self.fail(line, f"{what} must be a vector, {arg.name!r} is a {kind}")

    def check_call(self, step: LetStep):
        call, line = step.call, step.line
        if call.primitive not in PRIMITIVE_NAMES:
            self.fail(line, f"unknown primitive {call.primitive!r}")
        n_targets = 2 if call.primitive == "split" else 1
        if len(step.targets) != n_targets:
            self.fail(line, f"{call.primitive} binds {n_targets} name(s)")
        for target in step.targets:
            if target in self.kinds:
                self.fail(line, f"name {target!r} already defined")
            if not target.isidentifier():
                self.fail(line, f"bad name {target!r}")

        method = getattr(self, f"_check_{call.primitive}", None)
        result_kinds = method(line, call)
        for target, kind in zip(step.targets, result_kinds):
            self.kinds[target] = kind[0]
            if kind[0] == "dataset":
                self.datasets[target] = kind[1]

    def _dataset_arg(self, line, call, pos=0):
        if len(call.args) <= pos or not isinstance(call.args[pos], Ref) or call.args[pos].field:
            self.fail(line, f"{call.primitive} expects a dataset argument")
        name = call.args[pos].name
        if name not in self.datasets:
            self.fail(line, f"unknown dataset {name!r}")
        return name

    def _check_split(self, line, call):
        ds = self._dataset_arg(line, call)
        if len(call.args) != 2 or not isinstance(call.args[1], Predicate):
            self.fail(line, "split(dataset, column <op> constant)")
        pred = call.args[1]
        cols = self.datasets[ds]
        if pred.column not in cols:
            self.fail(line, f"unknown column {pred.column!r} in {ds!r}")
        if cols[pred.column] == "num" and not isinstance(pred.value, (int, float)):
            self.fail(line, f"column {pred.column!r} compares against a number")
        if cols[pred.column] == "cat":
            if pred.op not in ("==", "!="):
                self.fail(line, "categorical columns support only == and !=")
            if not isinstance(pred.value, str):
                self.fail(line, f"column {pred.column!r} compares against a string")
        return (("dataset", dict(cols)), ("dataset", dict(cols)))

    def _check_score_scale(self, line, call):
        ds = self._dataset_arg(line, call)
        if len(call.args) != 1:
            self.fail(line, "score_scale takes one dataset plus keyword arguments")
        items = call.kwargs.get("items")
        if not items or not isinstance(items, tuple):
            self.fail(line, "score_scale requires items=[...]")
        reverse = call.kwargs.get("reverse", ())
        low = call.kwargs.get("low", 1)
        high = call.kwargs.get("high", 5)
        extra = set(call.kwargs) - {"items", "reverse", "low", "high"}
        if extra:
            self.fail(line, f"unknown keyword(s) {sorted(extra)}")
        if not isinstance(low, int) or not isinstance(high, int) or low >= high:
            self.fail(line, "low/high must be integers with low < high")
        cols = self.datasets[ds]
        for col in tuple(items) + tuple(reverse):
            if not isinstance(col, str) or col not in cols:
                self.fail(line, f"unknown column {col!r} in {ds!r}")
            if cols[col] != "num":
                self.fail(line, f"column {col!r} is not numeric")
        if not set(reverse) <= set(items):
            self.fail(line, "reverse-coded columns must be listed in items")
        return (("vector", None),)

    def _reduction(self, line, call):
        if len(call.args) != 1 or call.kwargs:
            self.fail(line, f"{call.primitive} takes exactly one argument")
        self.resolve_vector(line, call.args[0], f"{call.primitive} argument")
        return (("scalar", None),)

    _check_mean = _reduction
    _check_sample_sd = _reduction
    _check_sample_var = _reduction
    _check_min = _reduction
    _check_max = _reduction

    def _check_count(self, line, call):
        if len(call.args) != 1 or call.kwargs:
            self.fail(line, "count takes exactly one argument")
        arg = call.args[0]
        if isinstance(arg, Ref) and arg.field is None and arg.name in self.datasets:
            return (("scalar", None),)
        self.resolve_vector(line, arg, "count argument")
        return (("scalar", None),)

    def _check_ttest_ind(self, line, call):
        if len(call.args) != 3 or call.kwargs:
            self.fail(line, "ttest_ind(group_a, group_b, welch|pooled)")
        self.resolve_vector(line, call.args[0], "group_a")
        self.resolve_vector(line, call.args[1], "group_b")
        variant = call.args[2]
        if not isinstance(variant, Ref) or variant.field or variant.name not in TTEST_VARIANTS:
            self.fail(line, f"t-test variant must be one of {TTEST_VARIANTS}")
        return (("record", None),)


def parse(source: str, survey) -> AnalysisPlan:
    """Parse and statically validate an analysis script.

    Raises ScriptInvalid carrying all positioned problems; pure and
    deterministic.
    """
    problems: list[tuple[int, str]] = []
    steps: list[LetStep] = []
    outputs: list[OutputDecl] = []

    for line_no, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        tokens = _tokenize(text, line_no, problems)
        if tokens is None:
            continue
        parser = _LineParser(tokens, line_no, problems)
        try:
            keyword = parser.expect_ident()
            if keyword == "let":
                targets = [parser.expect_ident()]
                if parser.peek() == ("op", ","):
                    parser.take()
                    targets.append(parser.expect_ident())
                parser.expect_op("=")
                call = parser.parse_call()
                if not parser.at_end():
                    parser.error("trailing tokens after statement")
                steps.append(LetStep(line_no, tuple(targets), call))
            elif keyword == "output":
                name = parser.expect_ident()
                if not parser.at_end():
                    parser.error("trailing tokens after output")
                outputs.append(OutputDecl(line_no, name))
            else:
                parser.error(f"unknown statement {keyword!r} (expected let/output)")
        except _Bail:
            continue

    validator = _Validator(survey, problems)
    checked_steps = []
    for step in steps:
        try:
            validator.check_call(step)
            checked_steps.append(step)
        except _Bail:
            continue

    output_schema = {}
    value_kinds = dict(validator.kinds)
    seen_outputs = set()
    for decl in outputs:
        kind = validator.kinds.get(decl.name)
        if kind is None:
            problems.append((decl.line, f"output of undeclared name {decl.name!r}"))
            continue
        if kind == "dataset":
            problems.append((decl.line, f"datasets cannot be output ({decl.name!r})"))
            continue
        if decl.name in seen_outputs:
            problems.append((decl.line, f"duplicate output {decl.name!r}"))
            continue
        seen_outputs.add(decl.name)
        output_schema[decl.name] = TTEST_FIELDS if kind == "record" else kind

    if not outputs and not problems:
        problems.append((1, "no outputs declared"))

    if problems:
        raise ScriptInvalid(sorted(problems))

    return AnalysisPlan(
        steps=tuple(checked_steps),
        outputs=tuple(outputs),
        output_schema=output_schema,
        value_kinds=value_kinds,
    )
