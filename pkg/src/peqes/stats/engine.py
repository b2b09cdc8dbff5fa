"""One-shot execution of a validated analysis plan.

The engine's entire capability surface is the primitive registry below:
pure functions over in-memory columns, no I/O, no clock, no randomness.
Execution consumes the plan handle; a second execution of the same
handle is refused. Degenerate statistical inputs abort the whole
analysis instead of emitting NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from peqes.errors import AnalysisFailed
from peqes.stats.dsl import AnalysisPlan, Call, Predicate, Ref
from peqes.stats.special import student_t_two_sided_p

MAX_OUTPUT_ARRAY = 16


class PlanConsumed(Exception):
    """The plan handle was already executed once."""


@dataclass(frozen=True)
class Dataset:
    columns: dict
    kinds: dict

    @property
    def n(self) -> int:
        if not self.columns:
            return 0
        return len(next(iter(self.columns.values())))


@dataclass(frozen=True)
class Vector:
    values: tuple


def dataset_from_rows(survey, rows: list[dict]) -> Dataset:
    """Columnar dataset from validated answer vectors, in submission order."""
    columns = {item.id: [] for item in survey}
    kinds = {item.id: ("num" if item.kind == "integer" else "cat") for item in survey}
    for row in rows:
        for item in survey:
            columns[item.id].append(row[item.id])
    return Dataset(columns={k: tuple(v) for k, v in columns.items()}, kinds=kinds)


_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def _split(ds: Dataset, pred: Predicate) -> tuple[Dataset, Dataset]:
    cmp = _CMP[pred.op]
    mask = [cmp(v, pred.value) for v in ds.columns[pred.column]]
    left = {k: tuple(v for v, m in zip(col, mask) if m) for k, col in ds.columns.items()}
    right = {k: tuple(v for v, m in zip(col, mask) if not m) for k, col in ds.columns.items()}
    return Dataset(left, dict(ds.kinds)), Dataset(right, dict(ds.kinds))


def _score_scale(ds: Dataset, items, reverse, low: int, high: int) -> Vector:
    flip = set(reverse)
    total = low + high
    scores = []
    for i in range(ds.n):
        values = [
            (total - ds.columns[col][i]) if col in flip else ds.columns[col][i] for col in items
        ]
        scores.append(sum(values) / len(values))
    return Vector(tuple(scores))


def _require_values(values, what: str):
    if not values:
        raise AnalysisFailed(f"empty: {what} has no rows")
    return values


def _mean(values) -> float:
    values = _require_values(values, "mean input")
    return sum(values) / len(values)


def _sample_var(values) -> float:
    values = _require_values(values, "variance input")
    if len(values) < 2:
        raise AnalysisFailed("empty: sample variance needs at least 2 rows")
    m = _mean(values)
    return sum((v - m) ** 2 for v in values) / (len(values) - 1)


def _sample_sd(values) -> float:
    return math.sqrt(_sample_var(values))


def _ttest_ind(a, b, variant: str) -> dict:
    if len(a) < 2 or len(b) < 2:
        raise AnalysisFailed("degenerate group: each group needs at least 2 rows")
    na, nb = len(a), len(b)
    ma, mb = _mean(a), _mean(b)
    va, vb = _sample_var(a), _sample_var(b)
    if variant == "welch":
        if va == 0.0 or vb == 0.0:
            raise AnalysisFailed("degenerate group: zero variance")
        sea, seb = va / na, vb / nb
        se2 = sea + seb
        t = (ma - mb) / math.sqrt(se2)
        df = se2 * se2 / (sea * sea / (na - 1) + seb * seb / (nb - 1))
    else:
        pooled = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        if pooled == 0.0:
            raise AnalysisFailed("degenerate group: zero pooled variance")
        t = (ma - mb) / math.sqrt(pooled * (1.0 / na + 1.0 / nb))
        df = float(na + nb - 2)
    return {"t": t, "df": df, "p_two_sided": student_t_two_sided_p(t, df)}


PRIMITIVES = {
    "split": _split,
    "score_scale": _score_scale,
    "mean": _mean,
    "sample_sd": _sample_sd,
    "sample_var": _sample_var,
    "count": len,
    "min": lambda v: min(_require_values(v, "min input")),
    "max": lambda v: max(_require_values(v, "max input")),
    "ttest_ind": _ttest_ind,
}


class _Runner:
    def __init__(self, plan: AnalysisPlan, dataset: Dataset):
        self.env = {"data": dataset}
        self.plan = plan
        self.rows_used = 0

    def charge(self, rows: int) -> None:
        self.rows_used += max(rows, 1)
        if self.rows_used > self.plan.resource_budget:
            raise AnalysisFailed("budget: resource budget exceeded")

    def vector_values(self, ref: Ref):
        value = self.env[ref.name]
        if ref.field is not None:
            return value.columns[ref.field]
        return value.values

    def run_step(self, step) -> None:
        call: Call = step.call
        if call.primitive == "split":
            ds = self.env[call.args[0].name]
            self.charge(ds.n)
            a, b = _split(ds, call.args[1])
            self.env[step.targets[0]] = a
            self.env[step.targets[1]] = b
        elif call.primitive == "score_scale":
            ds = self.env[call.args[0].name]
            self.charge(ds.n)
            self.env[step.targets[0]] = _score_scale(
                ds,
                call.kwargs["items"],
                call.kwargs.get("reverse", ()),
                call.kwargs.get("low", 1),
                call.kwargs.get("high", 5),
            )
        elif call.primitive == "count":
            arg = call.args[0]
            value = self.env[arg.name]
            if isinstance(value, Dataset) and arg.field is None:
                result = value.n
            else:
                result = len(self.vector_values(arg))
            self.charge(1)
            self.env[step.targets[0]] = result
        elif call.primitive == "ttest_ind":
            a = self.vector_values(call.args[0])
            b = self.vector_values(call.args[1])
            self.charge(len(a) + len(b))
            self.env[step.targets[0]] = _ttest_ind(a, b, call.args[2].name)
        else:
            values = self.vector_values(call.args[0])
            self.charge(len(values))
            self.env[step.targets[0]] = PRIMITIVES[call.primitive](values)


def execute_once(plan: AnalysisPlan, dataset: Dataset) -> dict:
    """Run the plan over the dataset and return only the declared outputs.

    Deterministic; consumes the plan handle.
    """
    if plan.consumed:
        raise PlanConsumed("analysis plan was already executed")
    plan.consumed = True

    runner = _Runner(plan, dataset)
    for step in plan.steps:
        runner.run_step(step)

    outputs = {}
    for decl in plan.outputs:
        kind = plan.output_schema[decl.name]
        value = runner.env[decl.name]
        if isinstance(kind, tuple):
            for fld in kind:
                outputs[f"{decl.name}.{fld}"] = value[fld]
        elif kind == "vector":
            values = list(value.values)
            if len(values) > MAX_OUTPUT_ARRAY:
                raise AnalysisFailed(
                    f"output {decl.name!r} has {len(values)} elements (max {MAX_OUTPUT_ARRAY})"
                )
            outputs[decl.name] = values
        else:
            outputs[decl.name] = float(value) if isinstance(value, float) else value
    return outputs
