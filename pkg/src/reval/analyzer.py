"""Static analysis of subject programs.

Three concerns live here: assigning dense 1-based indices to the traceable
statements of a program, partitioning those statements into basic blocks
over the control-flow graph, and choosing question sites and target
variables under the benchmark's filtering rules.

Only statements that can produce trace events are indexed: bodies of
functions and methods, plus anything nested inside them. Module-level
scaffolding (imports, def/class headers, class attributes) executes before
tracing starts and is deliberately absent from the table.
"""

import ast
import random
from dataclasses import dataclass, field

_EXIT_IDX = -1  # internal successor sentinel for leaving the flow unit

KIND_ASSIGN = "assign"
KIND_AUG_ASSIGN = "aug_assign"
KIND_RETURN = "return_stmt"
KIND_BRANCH = "branch_head"
KIND_LOOP = "loop_head"
KIND_CALL = "call_stmt"
KIND_OTHER = "other"

RULE_ASSIGN_LHS = "assign_lhs"
RULE_AUG_ASSIGN = "aug_assign"
RULE_RETURN_VAR = "return_var"
RULE_NEAREST_VAR = "nearest_var"
RULE_CHANGED_NEW = "changed_new"
RULE_CHANGED_VAR = "changed_var"
RULE_CHANGED_ATTR = "changed_attr"


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class StatementEntry:
    stmt_index: int
    line_no: int
    text: str
    kind: str
    end_line_no: int
    scope_id: int


@dataclass(frozen=True)
class StatementTable:
    entries: "tuple[StatementEntry, ...]"
    line_map: "dict[int, int]" = field(compare=False)

    def __len__(self):
        return len(self.entries)

    def by_index(self, stmt_index: int) -> StatementEntry:
        return self.entries[stmt_index - 1]

    def stmt_at_line(self, line_no: int) -> "int | None":
        """Map any line inside a statement's span to its index; header
        lines of compound statements map to the header entry."""
        return self.line_map.get(line_no)

    def lines(self) -> "set[int]":
        return {e.line_no for e in self.entries}


@dataclass(frozen=True)
class Block:
    block_id: int
    stmt_indices: "tuple[int, ...]"
    terminal_stmt: int


@dataclass(frozen=True)
class BlockGraph:
    blocks: "tuple[Block, ...]"
    edges: "frozenset[tuple[int, int]]"

    def block_of(self, stmt_index: int) -> Block:
        for b in self.blocks:
            if stmt_index in b.stmt_indices:
                return b
        raise KeyError(stmt_index)


@dataclass(frozen=True)
class PspTarget:
    stmt_index: int
    variable: str
    source_rule: str


@dataclass
class _LoopCtx:
    head: int
    break_target: int


class _Analysis:
    def __init__(self, program: str):
        self.program = program
        self.entries: "list[StatementEntry]" = []
        self.node_index: "dict[int, int]" = {}  # id(ast node) -> stmt_index
        self.succs: "dict[int, set[int]]" = {}
        self.scope_counter = 0

    # -- indexing ---------------------------------------------------------

    def index(self, tree: ast.Module):
        for node in tree.body:
            self._module_stmt(node)

    def _module_stmt(self, node):
        # module-level headers execute during untraced setup; only dive in
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            self._body(node.body, self._new_scope(), skip_docstring=True)
        elif isinstance(node, ast.ClassDef):
            for inner in node.body:
                self._module_stmt(inner)

    def _new_scope(self) -> int:
        self.scope_counter += 1
        return self.scope_counter

    def _body(self, stmts, scope: int, skip_docstring: bool = False):
        for pos, node in enumerate(stmts):
            if skip_docstring and pos == 0 and self._is_docstring(node):
                continue
            self._stmt(node, scope)

    @staticmethod
    def _is_docstring(node) -> bool:
        return (
            isinstance(node, ast.Expr)
            and isinstance(node.value, ast.Constant)
            and isinstance(node.value.value, str)
        )

    @staticmethod
    def _no_bytecode(node) -> bool:
        # these produce no line events and must not enter the table
        if isinstance(node, (ast.Global, ast.Nonlocal)):
            return True
        if isinstance(node, ast.AnnAssign) and node.value is None:
            return True
        return False

    def _add(self, node, kind: str, scope: int) -> int:
        idx = len(self.entries) + 1
        segment = ast.get_source_segment(self.program, node)
        if segment is None:
            segment = self.program.splitlines()[node.lineno - 1]
        text = segment.split("\n", 1)[0].strip()
        self.entries.append(
            StatementEntry(
                stmt_index=idx,
                line_no=node.lineno,
                text=text,
                kind=kind,
                end_line_no=getattr(node, "end_lineno", node.lineno) or node.lineno,
                scope_id=scope,
            )
        )
        self.node_index[id(node)] = idx
        return idx

    def _stmt(self, node, scope: int):
        if self._no_bytecode(node):
            return
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            self._add(node, KIND_OTHER, scope)
            self._body(node.body, self._new_scope(), skip_docstring=True)
        elif isinstance(node, ast.ClassDef):
            self._add(node, KIND_OTHER, scope)
            self._body(node.body, self._new_scope(), skip_docstring=True)
        elif isinstance(node, (ast.Assign, ast.AnnAssign)):
            self._add(node, KIND_ASSIGN, scope)
        elif isinstance(node, ast.AugAssign):
            self._add(node, KIND_AUG_ASSIGN, scope)
        elif isinstance(node, ast.Return):
            self._add(node, KIND_RETURN, scope)
        elif isinstance(node, ast.If):
            self._add(node, KIND_BRANCH, scope)
            self._body(node.body, scope)
            self._body(node.orelse, scope)
        elif isinstance(node, (ast.While, ast.For, ast.AsyncFor)):
            self._add(node, KIND_LOOP, scope)
            self._body(node.body, scope)
            self._body(node.orelse, scope)
        elif isinstance(node, (ast.With, ast.AsyncWith)):
            self._add(node, KIND_OTHER, scope)
            self._body(node.body, scope)
        elif isinstance(node, ast.Try):
            self._add(node, KIND_OTHER, scope)
            self._body(node.body, scope)
            for handler in node.handlers:
                self._add(handler, KIND_OTHER, scope)
                self._body(handler.body, scope)
            self._body(node.orelse, scope)
            self._body(node.finalbody, scope)
        elif isinstance(node, ast.Match):
            self._add(node, KIND_BRANCH, scope)
            for case in node.cases:
                self._body(case.body, scope)
        elif isinstance(node, ast.Expr):
            kind = KIND_CALL if isinstance(node.value, ast.Call) else KIND_OTHER
            self._add(node, kind, scope)
        else:
            self._add(node, KIND_OTHER, scope)

    # -- control flow ------------------------------------------------------

    def flow(self, tree: ast.Module):
        for node in ast.walk(tree):
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                self._flow_body(node.body, _EXIT_IDX, None)

    def _idx(self, node) -> "int | None":
        return self.node_index.get(id(node))

    def _first(self, stmts) -> "int | None":
        for node in stmts:
            idx = self._idx(node)
            if idx is not None:
                return idx
        return None

    def _flow_body(self, stmts, follow: int, loop: "_LoopCtx | None"):
        indexed = [n for n in stmts if self._idx(n) is not None]
        for pos, node in enumerate(indexed):
            nxt = self._idx(indexed[pos + 1]) if pos + 1 < len(indexed) else follow
            self._flow_stmt(node, nxt, loop)

    def _set(self, node, targets: "set[int]"):
        self.succs[self._idx(node)] = {t for t in targets if t is not None}

    def _flow_stmt(self, node, follow: int, loop: "_LoopCtx | None"):
        idx = self._idx(node)
        if isinstance(node, (ast.Return, ast.Raise)):
            self._set(node, {_EXIT_IDX})
        elif isinstance(node, ast.Break):
            self._set(node, {loop.break_target if loop else _EXIT_IDX})
        elif isinstance(node, ast.Continue):
            self._set(node, {loop.head if loop else _EXIT_IDX})
        elif isinstance(node, ast.If):
            body_first = self._first(node.body)
            else_first = self._first(node.orelse)
            self._set(node, {body_first or follow, else_first or follow})
            self._flow_body(node.body, follow, loop)
            self._flow_body(node.orelse, follow, loop)
        elif isinstance(node, (ast.While, ast.For, ast.AsyncFor)):
            exit_target = self._first(node.orelse) or follow
            body_first = self._first(node.body)
            self._set(node, {body_first or idx, exit_target})
            inner = _LoopCtx(head=idx, break_target=follow)
            self._flow_body(node.body, idx, inner)
            self._flow_body(node.orelse, follow, loop)
        elif isinstance(node, (ast.With, ast.AsyncWith)):
            self._set(node, {self._first(node.body) or follow})
            self._flow_body(node.body, follow, loop)
        elif isinstance(node, ast.Try):
            # exception edges are approximated: the try header may reach
            # any handler entry directly
            final_first = self._first(node.finalbody)
            after_try = final_first or follow
            body_exit = self._first(node.orelse) or after_try
            targets = {self._first(node.body) or body_exit}
            for handler in node.handlers:
                targets.add(self._idx(handler))
            self._set(node, targets)
            self._flow_body(node.body, body_exit, loop)
            for handler in node.handlers:
                self._set(handler, {self._first(handler.body) or after_try})
                self._flow_body(handler.body, after_try, loop)
            self._flow_body(node.orelse, after_try, loop)
            self._flow_body(node.finalbody, follow, loop)
        elif isinstance(node, ast.Match):
            targets = {self._first(case.body) or follow for case in node.cases}
            targets.add(follow)
            self._set(node, targets)
            for case in node.cases:
                self._flow_body(case.body, follow, loop)
        elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            self._set(node, {follow})
            # the nested body is its own flow unit
            self._flow_body(node.body, _EXIT_IDX, None)
        else:
            self._set(node, {follow})


def _analyze(program: str) -> _Analysis:
    try:
        tree = ast.parse(program)
    except SyntaxError as exc:
        raise ParseError(str(exc)) from exc
    analysis = _Analysis(program)
    analysis.index(tree)
    analysis.flow(tree)
    return analysis


def _line_map(entries) -> "dict[int, int]":
    # entries come in DFS source order, so nested statements re-claim the
    # inner lines of their enclosing compound statement
    mapping = {}
    for entry in entries:
        for line in range(entry.line_no, entry.end_line_no + 1):
            mapping[line] = entry.stmt_index
    return mapping


def index_statements(program: str) -> StatementTable:
    """Index every traceable statement of the program in source order."""
    analysis = _analyze(program)
    entries = tuple(analysis.entries)
    return StatementTable(entries=entries, line_map=_line_map(entries))


def build_blocks(table: StatementTable, program: str) -> BlockGraph:
    """Partition the statement table into basic blocks with control-flow
    edges. Straight-line runs form single blocks; branch and loop heads
    always terminate theirs."""
    analysis = _analyze(program)
    if tuple(analysis.entries) != table.entries:
        raise ValueError("statement table does not match program")
    succs = analysis.succs
    n = len(table.entries)
    preds: "dict[int, set[int]]" = {i: set() for i in range(1, n + 1)}
    for src, targets in succs.items():
        for t in targets:
            if t != _EXIT_IDX:
                preds[t].add(src)

    blocks = []
    current: "list[int]" = []

    def close():
        if current:
            blocks.append(
                Block(
                    block_id=len(blocks),
                    stmt_indices=tuple(current),
                    terminal_stmt=current[-1],
                )
            )
            current.clear()

    for idx in range(1, n + 1):
        entry = table.by_index(idx)
        if current:
            prev = current[-1]
            chained = succs.get(prev) == {idx} and preds[idx] == {prev}
            if not chained:
                close()
        current.append(idx)
        if entry.kind in (KIND_BRANCH, KIND_LOOP):
            close()
    close()

    owner = {}
    for block in blocks:
        for idx in block.stmt_indices:
            owner[idx] = block.block_id
    edges = set()
    for block in blocks:
        for target in succs.get(block.terminal_stmt, ()):
            if target != _EXIT_IDX:
                edges.add((block.block_id, owner[target]))
    return BlockGraph(blocks=tuple(blocks), edges=frozenset(edges))


def executed_stmt_indices(table: StatementTable, trace) -> "set[int]":
    out = set()
    for line in trace.executed_lines:
        idx = table.stmt_at_line(line)
        if idx is not None:
            out.add(idx)
    return out


def select_sites(graph: BlockGraph, trace, budget: int, table: StatementTable, seed: int = 0) -> "list[int]":
    """Choose up to ``budget`` question sites, block terminals first.

    When terminals exceed the budget they are sampled with the given seed,
    keeping at least one covered and one uncovered terminal whenever both
    classes exist; if the budget is not filled, remaining statements join
    in source order. The result is ascending and deterministic for equal
    inputs and seed.
    """
    if budget <= 0:
        return []
    terminals = [b.terminal_stmt for b in graph.blocks]
    if len(terminals) > budget:
        executed = executed_stmt_indices(table, trace)
        covered = [t for t in terminals if t in executed]
        uncovered = [t for t in terminals if t not in executed]
        rng = random.Random(seed)
        picked: "set[int]" = set()
        if covered:
            picked.add(rng.choice(covered))
        if uncovered and budget >= 2:
            picked.add(rng.choice(uncovered))
        remaining = [t for t in terminals if t not in picked]
        picked.update(rng.sample(remaining, budget - len(picked)))
        return sorted(picked)
    sites = list(terminals)
    chosen = set(sites)
    for entry in table.entries:
        if len(sites) >= budget:
            break
        if entry.stmt_index not in chosen:
            sites.append(entry.stmt_index)
            chosen.add(entry.stmt_index)
    return sorted(sites)


# -- target-variable extraction -------------------------------------------


def _lhs_names(target) -> "list[str]":
    """Variable names written by one assignment target, in source order.

    Subscript writes map to the base identifier; attribute writes map to a
    dotted path only for ``self``, since snapshots store other objects
    whole under their base name.
    """
    names: "list[str]" = []
    for node in ast.walk(target):
        if isinstance(node, ast.Name) and isinstance(node.ctx, (ast.Store,)):
            names.append(node.id)
        elif isinstance(node, ast.Subscript) and isinstance(node.ctx, ast.Store):
            base = node.value
            if isinstance(base, ast.Name):
                names.append(base.id)
        elif isinstance(node, ast.Attribute) and isinstance(node.ctx, ast.Store):
            if isinstance(node.value, ast.Name):
                if node.value.id == "self":
                    names.append("self." + node.attr)
                else:
                    names.append(node.value.id)
    seen = set()
    ordered = []
    for name in names:
        if name not in seen:
            seen.add(name)
            ordered.append(name)
    return ordered


def _is_trivial_init(value) -> bool:
    """Naive initializations (zero or empty collection) are skipped."""
    if isinstance(value, ast.Constant):
        v = value.value
        if type(v) is int and v == 0:
            return True
        if type(v) is float and v == 0.0:
            return True
        if type(v) is str and v == "":
            return True
        return False
    if isinstance(value, (ast.List, ast.Tuple)) and not value.elts:
        return True
    if isinstance(value, ast.Dict) and not value.keys:
        return True
    if isinstance(value, ast.Call) and isinstance(value.func, ast.Name):
        if value.func.id in ("list", "dict", "set", "tuple") and not value.args and not value.keywords:
            return True
    return False


def _parse_entry_stmt(entry: StatementEntry):
    try:
        body = ast.parse(entry.text).body
    except SyntaxError:
        return None
    return body[0] if body else None


def _static_targets(entry: StatementEntry) -> "list[tuple[str, str]]":
    """(variable, rule) candidates readable off the statement itself."""
    node = _parse_entry_stmt(entry)
    if node is None:
        return []
    if entry.kind == KIND_ASSIGN and isinstance(node, (ast.Assign, ast.AnnAssign)):
        value = node.value
        if value is None or _is_trivial_init(value):
            return []
        targets = node.targets if isinstance(node, ast.Assign) else [node.target]
        names: "list[str]" = []
        for target in targets:
            names.extend(_lhs_names(target))
        return [(name, RULE_ASSIGN_LHS) for name in names]
    if entry.kind == KIND_AUG_ASSIGN and isinstance(node, ast.AugAssign):
        return [(name, RULE_AUG_ASSIGN) for name in _lhs_names(node.target)]
    return []


def _return_load_names(entry: StatementEntry) -> "list[str]":
    node = _parse_entry_stmt(entry)
    if not isinstance(node, ast.Return) or node.value is None:
        return []
    names = []
    for sub in ast.walk(node.value):
        if isinstance(sub, ast.Name) and isinstance(sub.ctx, ast.Load):
            if sub.id not in names:
                names.append(sub.id)
    return names


def _first_states(table: StatementTable, trace) -> "dict[int, tuple[dict, dict]]":
    """(state_before, state_after) at each statement's first execution.

    The frame stack is reconstructed from call/return events so the
    before-state is the previous snapshot of the same frame.
    """
    out: "dict[int, tuple[dict, dict]]" = {}
    stack: "list[dict]" = []
    for step in trace.steps:
        if step.event == "call":
            stack.append({"last": step.state_after})
        elif step.event == "return_event":
            if stack:
                stack.pop()
        else:
            if not stack:
                continue
            frame = stack[-1]
            idx = table.stmt_at_line(step.line_no)
            if idx is not None and idx not in out:
                out[idx] = (frame["last"], step.state_after)
            frame["last"] = step.state_after
    return out


def _diff_target(before: dict, after: dict) -> "tuple[str, str] | None":
    new_vars, changed_vars, changed_attrs = [], [], []
    for name, snap in after.items():
        dotted = "." in name
        if name not in before:
            (changed_attrs if dotted else new_vars).append(name)
        elif before[name] != snap:
            (changed_attrs if dotted else changed_vars).append(name)
    if new_vars:
        return sorted(new_vars)[0], RULE_CHANGED_NEW
    if changed_vars:
        return sorted(changed_vars)[0], RULE_CHANGED_VAR
    if changed_attrs:
        return sorted(changed_attrs)[0], RULE_CHANGED_ATTR
    return None


def select_psp_targets(table: StatementTable, trace) -> "list[PspTarget]":
    """Admissible (statement, variable) pairs for state prediction.

    Assignments contribute their left-hand side (naive zero/empty
    initializations skipped, augmented assignments always kept); returns
    contribute the variables inside the returned expression, falling back
    to the nearest prior admissible variable for constant returns; any
    other executed statement contributes its observed state change with
    priority new variable, then changed variable, then changed attribute.
    """
    states = _first_states(table, trace)
    targets: "list[PspTarget]" = []
    for entry in table.entries:
        idx = entry.stmt_index
        if idx not in states:
            continue
        _before, after = states[idx]
        if entry.kind in (KIND_ASSIGN, KIND_AUG_ASSIGN):
            for name, rule in _static_targets(entry):
                if name in after:
                    targets.append(PspTarget(idx, name, rule))
        elif entry.kind == KIND_RETURN:
            local_names = [n for n in _return_load_names(entry) if n in after]
            if local_names:
                for name in local_names:
                    targets.append(PspTarget(idx, name, RULE_RETURN_VAR))
            else:
                nearest = _nearest_variable(table, entry, after)
                if nearest is not None:
                    targets.append(PspTarget(idx, nearest, RULE_NEAREST_VAR))
        else:
            picked = _diff_target(*states[idx])
            if picked is not None:
                name, rule = picked
                targets.append(PspTarget(idx, name, rule))
    return targets


def _nearest_variable(table: StatementTable, entry: StatementEntry, state: dict) -> "str | None":
    """Most recent prior admissible variable of the same function body."""
    for prior in reversed(table.entries[: entry.stmt_index - 1]):
        if prior.scope_id != entry.scope_id:
            continue
        for name, _rule in _static_targets(prior):
            if name in state:
                return name
    return None
