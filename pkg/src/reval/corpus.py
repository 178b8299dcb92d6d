"""Loading and validation of base-benchmark corpora.

Corpus files are line-delimited JSON, one record per line, UTF-8. Two
input shapes are understood: ``humaneval_like`` (function problems with a
``check(candidate)`` style test) and ``classeval_like`` (class problems
whose entry point is ``ClassName.method``). Both normalize into the same
BenchmarkRecord shape, which also round-trips through the ``normalized``
format written by the adapt stage.

Test inputs are derived from the assertion statements: the k-th assertion
contributes input ``in<k>`` whose invocation is the entry-point call
inside it.
"""

import ast
import json
import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

FORMAT_HUMANEVAL = "humaneval_like"
FORMAT_CLASSEVAL = "classeval_like"
FORMAT_NORMALIZED = "normalized"


class FormatError(ValueError):
    """A corpus line does not satisfy the declared format."""


@dataclass(frozen=True)
class AssertionStmt:
    text: str
    rhs_literal: "str | None" = None


@dataclass(frozen=True)
class InputCase:
    input_id: str
    arguments: "tuple[str, ...]"
    invocation_text: str


@dataclass(frozen=True)
class BenchmarkRecord:
    record_id: str
    source_code: str
    entry_point: str
    canonical_solution: str
    test_inputs: "tuple[InputCase, ...]"
    assertions: "tuple[AssertionStmt, ...]"
    context: str = ""

    @property
    def full_program(self) -> str:
        """Context plus canonical solution, the text that gets traced and
        shown to models. Line numbers in problems refer to this text."""
        if not self.context:
            return self.canonical_solution
        ctx = self.context if self.context.endswith("\n") else self.context + "\n"
        return ctx + self.canonical_solution


def _entry_call(tree: ast.AST, entry_point: str) -> "ast.Call | None":
    if "." in entry_point:
        method = entry_point.split(".", 1)[1]
        for node in ast.walk(tree):
            if isinstance(node, ast.Call) and isinstance(node.func, ast.Attribute):
                if node.func.attr == method:
                    return node
    else:
        for node in ast.walk(tree):
            if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
                if node.func.id == entry_point:
                    return node
    return None


class _Rename(ast.NodeTransformer):
    def __init__(self, old: str, new: str):
        self.old = old
        self.new = new

    def visit_Name(self, node):
        if node.id == self.old:
            return ast.copy_location(ast.Name(id=self.new, ctx=node.ctx), node)
        return node


def _asserts_from_test(test_text: str, entry_point: str) -> "list[str]":
    """Pull assertion statements out of a test blob.

    Handles module-level asserts and the ``def check(candidate)`` idiom,
    where the check parameter is an alias for the entry point.
    """
    tree = ast.parse(test_text)
    call_name = entry_point.split(".", 1)[0]
    texts = []
    for top in tree.body:
        if isinstance(top, ast.FunctionDef) and top.args.args:
            alias = top.args.args[0].arg
            rename = _Rename(alias, call_name)
            for node in ast.walk(top):
                if isinstance(node, ast.Assert):
                    texts.append(ast.unparse(rename.visit(node)))
        elif isinstance(top, ast.Assert):
            texts.append(ast.unparse(top))
    return texts


def _literal_rhs(assert_text: str) -> "str | None":
    try:
        node = ast.parse(assert_text).body[0]
    except SyntaxError:
        return None
    if not isinstance(node, ast.Assert):
        return None
    test = node.test
    if not isinstance(test, ast.Compare) or len(test.ops) != 1:
        return None
    if not isinstance(test.ops[0], ast.Eq):
        return None
    rhs = test.comparators[0]
    try:
        ast.literal_eval(rhs)
    except (ValueError, SyntaxError, TypeError):
        return None
    return ast.unparse(rhs)


def _build_assertions(texts: "list[str]") -> "tuple[AssertionStmt, ...]":
    return tuple(AssertionStmt(text=t, rhs_literal=_literal_rhs(t)) for t in texts)


def _derive_inputs(assertions, entry_point) -> "tuple[InputCase, ...]":
    cases = []
    for idx, stmt in enumerate(assertions):
        try:
            tree = ast.parse(stmt.text)
        except SyntaxError:
            continue
        call = _entry_call(tree, entry_point)
        if call is None:
            continue
        cases.append(
            InputCase(
                input_id="in%d" % idx,
                arguments=tuple(ast.unparse(a) for a in call.args),
                invocation_text=ast.unparse(call),
            )
        )
    return tuple(cases)


def _require(obj: dict, key: str, ordinal: int):
    if key not in obj or obj[key] is None:
        raise FormatError("record %d: missing field %r" % (ordinal, key))
    return obj[key]


def _assertion_texts(obj: dict, entry_point: str, ordinal: int) -> "list[str]":
    if "assertions" in obj and obj["assertions"]:
        return [str(t) for t in obj["assertions"]]
    test_text = _require(obj, "test", ordinal)
    try:
        return _asserts_from_test(test_text, entry_point)
    except SyntaxError as exc:
        raise FormatError("record %d: unparseable test: %s" % (ordinal, exc)) from exc


def _record_from_humaneval(obj: dict, ordinal: int) -> BenchmarkRecord:
    record_id = obj.get("task_id") or obj.get("record_id")
    if not record_id:
        raise FormatError("record %d: missing field 'task_id'" % ordinal)
    entry_point = _require(obj, "entry_point", ordinal)
    body = _require(obj, "canonical_solution", ordinal)
    prompt = obj.get("prompt") or ""
    solution = prompt + body if prompt else body
    texts = _assertion_texts(obj, entry_point, ordinal)
    assertions = _build_assertions(texts)
    return BenchmarkRecord(
        record_id=str(record_id),
        source_code=prompt or solution,
        entry_point=str(entry_point),
        canonical_solution=solution,
        test_inputs=_derive_inputs(assertions, entry_point),
        assertions=assertions,
        context=str(obj.get("context") or ""),
    )


def _record_from_classeval(obj: dict, ordinal: int) -> BenchmarkRecord:
    record_id = obj.get("task_id") or obj.get("record_id")
    if not record_id:
        raise FormatError("record %d: missing field 'task_id'" % ordinal)
    entry_point = _require(obj, "entry_point", ordinal)
    if "." not in entry_point:
        raise FormatError(
            "record %d: classeval entry_point must be 'ClassName.method'" % ordinal
        )
    solution = _require(obj, "canonical_solution", ordinal)
    # class scaffolding (imports etc.) flattens into the context field
    context = str(obj.get("import_statement") or obj.get("context") or "")
    texts = _assertion_texts(obj, entry_point, ordinal)
    assertions = _build_assertions(texts)
    return BenchmarkRecord(
        record_id=str(record_id),
        source_code=str(obj.get("skeleton") or solution),
        entry_point=str(entry_point),
        canonical_solution=solution,
        test_inputs=_derive_inputs(assertions, entry_point),
        assertions=assertions,
        context=context,
    )


def _record_from_normalized(obj: dict, ordinal: int) -> BenchmarkRecord:
    try:
        return BenchmarkRecord(
            record_id=obj["record_id"],
            source_code=obj["source_code"],
            entry_point=obj["entry_point"],
            canonical_solution=obj["canonical_solution"],
            test_inputs=tuple(
                InputCase(c["input_id"], tuple(c["arguments"]), c["invocation_text"])
                for c in obj["test_inputs"]
            ),
            assertions=tuple(
                AssertionStmt(a["text"], a.get("rhs_literal")) for a in obj["assertions"]
            ),
            context=obj.get("context", ""),
        )
    except KeyError as exc:
        raise FormatError("record %d: missing field %s" % (ordinal, exc)) from exc


_PARSERS = {
    FORMAT_HUMANEVAL: _record_from_humaneval,
    FORMAT_CLASSEVAL: _record_from_classeval,
    FORMAT_NORMALIZED: _record_from_normalized,
}


def load_corpus(path, format_id: str) -> "list[BenchmarkRecord]":
    """Load one corpus file into normalized records, preserving file order."""
    if format_id not in _PARSERS:
        raise FormatError("unknown corpus format %r" % format_id)
    parser = _PARSERS[format_id]
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for ordinal, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError("record %d: malformed JSON: %s" % (ordinal, exc)) from exc
            record = parser(obj, ordinal)
            if record.record_id in seen:
                raise FormatError("record %d: duplicate record_id %r" % (ordinal, record.record_id))
            seen.add(record.record_id)
            records.append(record)
    return records


def record_to_json(record: BenchmarkRecord) -> dict:
    return {
        "record_id": record.record_id,
        "source_code": record.source_code,
        "entry_point": record.entry_point,
        "canonical_solution": record.canonical_solution,
        "context": record.context,
        "test_inputs": [
            {
                "input_id": c.input_id,
                "arguments": list(c.arguments),
                "invocation_text": c.invocation_text,
            }
            for c in record.test_inputs
        ],
        "assertions": [
            {"text": a.text, "rhs_literal": a.rhs_literal} for a in record.assertions
        ],
    }


def corpus_to_jsonl(records) -> str:
    return "".join(json.dumps(record_to_json(r), sort_keys=True) + "\n" for r in records)


def validate_record(record: BenchmarkRecord) -> "list[str]":
    """Check record invariants; an empty report means valid."""
    report = []
    if not record.record_id:
        report.append("record_id empty")
    try:
        tree = ast.parse(record.full_program)
    except SyntaxError as exc:
        report.append("parse failure: %s" % exc)
        tree = None
    if not record.assertions:
        report.append("assertions empty")
    for stmt in record.assertions:
        if not stmt.text.startswith("assert"):
            report.append("assertion does not start with assert keyword: %r" % stmt.text[:40])
    if tree is not None and not _entry_defined(tree, record.entry_point):
        report.append("entry point %r not defined in program" % record.entry_point)
    for case in record.test_inputs:
        try:
            inv_tree = ast.parse(case.invocation_text, mode="eval")
        except SyntaxError:
            report.append("input %s: invocation does not parse" % case.input_id)
            continue
        if _entry_call(inv_tree, record.entry_point) is None:
            report.append("input %s: invocation does not call entry point" % case.input_id)
    return report


def _entry_defined(tree: ast.Module, entry_point: str) -> bool:
    if "." in entry_point:
        cls_name, method = entry_point.split(".", 1)
        for node in tree.body:
            if isinstance(node, ast.ClassDef) and node.name == cls_name:
                return any(
                    isinstance(m, (ast.FunctionDef, ast.AsyncFunctionDef)) and m.name == method
                    for m in node.body
                )
        return False
    return any(
        isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == entry_point
        for node in tree.body
    )
