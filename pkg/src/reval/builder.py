"""Construction of the four aligned task problem sets from traces.

Each covered question site with an admissible target variable yields a
coverage, state, and path instance under one shared key; one output
instance per (record, input) completes the quad. Extra coverage-only
instances cover unexecuted block terminals so both coverage classes exist.
State and path ground truth anchor to the first dynamic execution of the
site's statement, and the question text says so.
"""

import ast
import hashlib
import json
import re
from dataclasses import dataclass

from reval.analyzer import (
    BlockGraph,
    StatementTable,
    select_psp_targets,
    select_sites,
)
from reval.corpus import BenchmarkRecord
from reval.tracer import Trace

EXIT = "EXIT"  # function-exit successor sentinel

TASK_CCP = "CCP"
TASK_PSP = "PSP"
TASK_EPP = "EPP"
TASK_OP = "OP"
TASKS = (TASK_CCP, TASK_PSP, TASK_EPP, TASK_OP)


class BuildSkip(Exception):
    """The record/input pair contributes no problems."""


class NotExecuted(LookupError):
    pass


class VariableAbsent(LookupError):
    pass


@dataclass(frozen=True)
class ProblemKey:
    record_id: str
    input_id: str
    stmt_index: int
    variable: str

    @property
    def prefix(self) -> "tuple[str, str]":
        return (self.record_id, self.input_id)


@dataclass(frozen=True)
class GroundTruth:
    coverage: "bool | None" = None
    value_repr: "str | None" = None
    type_name: "str | None" = None
    next_lines: "tuple | None" = None
    expected_literal: "str | None" = None
    assertion_text: "str | None" = None
    occurrence: "int | None" = None


@dataclass(frozen=True)
class ProblemInstance:
    key: ProblemKey
    task: str
    rendered_program: str
    question_payload: dict
    ground_truth: GroundTruth


@dataclass(frozen=True)
class BuildConfig:
    site_budget: int = 3
    seed: int = 0


@dataclass(frozen=True)
class MaskedAssertion:
    assertion_index: int
    original_text: str
    masked_text: str
    expected_literal: str


_LINE_PREFIX = re.compile(r"^\d+ \| ")


def render_program(program: str) -> str:
    """Prefix every line with its 1-based number; all line references in
    questions and answers use these numbers."""
    return "\n".join(
        "%d | %s" % (i, line) for i, line in enumerate(program.splitlines(), start=1)
    )


def strip_line_numbers(rendered: str) -> str:
    return "\n".join(_LINE_PREFIX.sub("", line) for line in rendered.splitlines())


def _stmt_positions(trace: Trace, table: StatementTable, stmt_index: int) -> "list[int]":
    seq = trace.stmt_steps
    return [i for i, s in enumerate(seq) if table.stmt_at_line(s.line_no) == stmt_index]


def next_statements(trace: Trace, table: StatementTable, stmt_index: int, occurrence: int = 1) -> set:
    """Observed dynamic successors of a statement across all its
    executions, so loop sites legitimately admit several answers. The
    sentinel EXIT marks leaving the traced call."""
    seq = trace.stmt_steps
    positions = _stmt_positions(trace, table, stmt_index)
    if len(positions) < occurrence:
        raise NotExecuted("statement %d executed %d time(s)" % (stmt_index, len(positions)))
    out = set()
    for pos in positions:
        if pos + 1 < len(seq):
            out.add(seq[pos + 1].line_no)
        else:
            out.add(EXIT)
    return out


def state_after(trace: Trace, table: StatementTable, stmt_index: int, variable: str, occurrence: int = 1):
    """Snapshot of one variable right after the chosen execution of the
    statement."""
    positions = _stmt_positions(trace, table, stmt_index)
    if len(positions) < occurrence:
        raise NotExecuted("statement %d executed %d time(s)" % (stmt_index, len(positions)))
    step = trace.stmt_steps[positions[occurrence - 1]]
    if variable not in step.state_after:
        raise VariableAbsent(variable)
    return step.state_after[variable]


def mask_assertions(record: BenchmarkRecord) -> "list[MaskedAssertion]":
    """Mask the right operand of every constant-equality assertion with
    the ?? token; assertions without a literal right side are skipped."""
    out = []
    for idx, stmt in enumerate(record.assertions):
        if stmt.rhs_literal is None:
            continue
        try:
            node = ast.parse(stmt.text).body[0]
        except SyntaxError:
            continue
        if not isinstance(node, ast.Assert) or not isinstance(node.test, ast.Compare):
            continue
        comp = node.test.comparators[0]
        masked = stmt.text[: comp.col_offset] + "??" + stmt.text[comp.end_col_offset:]
        out.append(
            MaskedAssertion(
                assertion_index=idx,
                original_text=stmt.text,
                masked_text=masked,
                expected_literal=stmt.rhs_literal,
            )
        )
    return out


def _assertion_index_for_input(input_id: str) -> "int | None":
    m = re.fullmatch(r"in(\d+)", input_id)
    return int(m.group(1)) if m else None


def _site_seed(seed: int, record_id: str, input_id: str) -> int:
    digest = hashlib.sha256(("%d:%s:%s" % (seed, record_id, input_id)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _sorted_next_lines(next_set: set) -> tuple:
    ints = sorted(x for x in next_set if x != EXIT)
    if EXIT in next_set:
        return tuple(ints) + (EXIT,)
    return tuple(ints)


def build_problems(
    record: BenchmarkRecord,
    trace: Trace,
    table: StatementTable,
    graph: BlockGraph,
    config: "BuildConfig | None" = None,
) -> "list[ProblemInstance]":
    """Build the aligned problem instances for one (record, input) trace.

    Raises BuildSkip when the trace did not terminate normally or nothing
    admissible survives the filtering rules.
    """
    config = config or BuildConfig()
    if trace.terminated != "ok":
        raise BuildSkip("trace terminated %s" % trace.terminated)

    program = record.full_program
    rendered = render_program(program)
    invocation = _invocation_for(record, trace.input_id)
    sites = select_sites(
        graph,
        trace,
        config.site_budget,
        table,
        seed=_site_seed(config.seed, record.record_id, trace.input_id),
    )
    targets_by_stmt: "dict[int, list]" = {}
    for target in select_psp_targets(table, trace):
        targets_by_stmt.setdefault(target.stmt_index, []).append(target)

    masked_by_index = {m.assertion_index: m for m in mask_assertions(record)}
    assertion_idx = _assertion_index_for_input(trace.input_id)
    op_mask = masked_by_index.get(assertion_idx) if assertion_idx is not None else None

    instances: "list[ProblemInstance]" = []
    built_quads = False
    for site in sites:
        entry = table.by_index(site)
        base_payload = {
            "invocation": invocation,
            "target_line": entry.line_no,
            "target_text": entry.text,
        }
        # coverage truth is line membership in the executed-line set
        line_covered = entry.line_no in trace.executed_lines
        if line_covered and site in targets_by_stmt and op_mask is not None:
            chosen = None
            for target in targets_by_stmt[site]:
                try:
                    snap = state_after(trace, table, site, target.variable, occurrence=1)
                except (NotExecuted, VariableAbsent):
                    continue
                if snap.representable:
                    chosen = (target, snap)
                    break
            if chosen is None:
                continue
            target, snap = chosen
            key = ProblemKey(record.record_id, trace.input_id, site, target.variable)
            nexts = _sorted_next_lines(next_statements(trace, table, site, occurrence=1))
            instances.append(
                ProblemInstance(key, TASK_CCP, rendered, dict(base_payload), GroundTruth(coverage=True))
            )
            instances.append(
                ProblemInstance(
                    key,
                    TASK_PSP,
                    rendered,
                    {**base_payload, "variable": target.variable, "occurrence": 1},
                    GroundTruth(value_repr=snap.value_repr, type_name=snap.type_name, occurrence=1),
                )
            )
            instances.append(
                ProblemInstance(
                    key,
                    TASK_EPP,
                    rendered,
                    {**base_payload, "occurrence": 1},
                    GroundTruth(next_lines=nexts, occurrence=1),
                )
            )
            built_quads = True
        elif not line_covered:
            key = ProblemKey(record.record_id, trace.input_id, site, "")
            instances.append(
                ProblemInstance(key, TASK_CCP, rendered, dict(base_payload), GroundTruth(coverage=False))
            )

    if built_quads and op_mask is not None:
        op_key = ProblemKey(record.record_id, trace.input_id, 0, "")
        instances.append(
            ProblemInstance(
                op_key,
                TASK_OP,
                rendered,
                {"invocation": invocation, "masked_assertion": op_mask.masked_text},
                GroundTruth(
                    expected_literal=op_mask.expected_literal,
                    assertion_text=op_mask.original_text,
                ),
            )
        )

    if not instances:
        raise BuildSkip("no admissible sites")
    return instances


def _invocation_for(record: BenchmarkRecord, input_id: str) -> str:
    for case in record.test_inputs:
        if case.input_id == input_id:
            return case.invocation_text
    return ""


# -- problems.jsonl serialization ------------------------------------------


def key_to_json(key: ProblemKey) -> dict:
    return {
        "record_id": key.record_id,
        "input_id": key.input_id,
        "stmt_index": key.stmt_index,
        "variable": key.variable,
    }


def key_from_json(obj: dict) -> ProblemKey:
    return ProblemKey(obj["record_id"], obj["input_id"], obj["stmt_index"], obj["variable"])


_TRUTH_FIELDS = (
    "coverage",
    "value_repr",
    "type_name",
    "next_lines",
    "expected_literal",
    "assertion_text",
    "occurrence",
)


def instance_to_json(instance: ProblemInstance) -> str:
    truth = {}
    for name in _TRUTH_FIELDS:
        value = getattr(instance.ground_truth, name)
        if value is None:
            continue
        truth[name] = list(value) if name == "next_lines" else value
    obj = {
        "key": key_to_json(instance.key),
        "task": instance.task,
        "rendered_program": instance.rendered_program,
        "question_payload": instance.question_payload,
        "ground_truth": truth,
    }
    return json.dumps(obj, separators=(",", ":"))


def instance_from_json(line: str) -> ProblemInstance:
    obj = json.loads(line)
    truth = obj["ground_truth"]
    next_lines = truth.get("next_lines")
    return ProblemInstance(
        key=key_from_json(obj["key"]),
        task=obj["task"],
        rendered_program=obj["rendered_program"],
        question_payload=obj["question_payload"],
        ground_truth=GroundTruth(
            coverage=truth.get("coverage"),
            value_repr=truth.get("value_repr"),
            type_name=truth.get("type_name"),
            next_lines=tuple(next_lines) if next_lines is not None else None,
            expected_literal=truth.get("expected_literal"),
            assertion_text=truth.get("assertion_text"),
            occurrence=truth.get("occurrence"),
        ),
    )
