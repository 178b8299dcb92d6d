"""Sandboxed statement-level execution tracing of subject programs.

Every trace runs the subject in a fresh OS process (see ``reval._child``)
with a wall-clock limit enforced here and a step cap enforced in the
child. The resulting Trace records, per executed statement, the local
variable state immediately after the statement completed, plus frame
entry/exit events and the entry call's return value.
"""

import json
import logging
import os
import subprocess
import sys
from dataclasses import dataclass, field

from reval.snapshots import (
    VariableSnapshot,
    bindings_from_wire,
    bindings_to_wire,
    snapshot_bindings,
    snapshot_from_wire,
    snapshot_to_wire,
)

log = logging.getLogger(__name__)

# ProgramState: local bindings after a step, keyed by identifier or dotted
# self-attribute path, sorted by name.
ProgramState = "dict[str, VariableSnapshot]"

STMT = "stmt"
CALL = "call"
RETURN_EVENT = "return_event"

TERMINATED_OK = "ok"
TERMINATED_TIMEOUT = "timeout"
TERMINATED_EXCEPTION = "exception"


@dataclass(frozen=True)
class ResourceLimits:
    wall_seconds: float = 10.0
    max_steps: int = 100000


@dataclass(frozen=True)
class ExecutionStep:
    step_index: int
    line_no: int
    event: str
    state_after: "dict[str, VariableSnapshot]"


@dataclass(frozen=True)
class Trace:
    record_id: str
    input_id: str
    steps: "tuple[ExecutionStep, ...]"
    output_value: "VariableSnapshot | None"
    terminated: str
    error: "str | None" = field(default=None, compare=False)

    @property
    def executed_lines(self) -> "set[int]":
        return {s.line_no for s in self.steps if s.event == STMT}

    @property
    def stmt_steps(self) -> "tuple[ExecutionStep, ...]":
        return tuple(s for s in self.steps if s.event == STMT)


def snapshot_state(raw_bindings) -> "dict[str, VariableSnapshot]":
    """Canonicalize raw local bindings into a ProgramState mapping."""
    return snapshot_bindings(raw_bindings)


def _spawn_child(payload: dict, wall_seconds: float) -> "tuple[str, str, bool]":
    env = dict(os.environ)
    env["PYTHONHASHSEED"] = "0"
    proc = subprocess.Popen(
        [sys.executable, "-m", "reval._child"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        env=env,
        text=True,
    )
    timed_out = False
    try:
        out, err = proc.communicate(json.dumps(payload), timeout=wall_seconds)
    except subprocess.TimeoutExpired:
        timed_out = True
        proc.kill()
        out, err = proc.communicate()
    return out, err, timed_out


def trace_execution(
    program: str,
    invocation: str,
    limits: "ResourceLimits | None" = None,
    record_id: str = "",
    input_id: str = "",
) -> Trace:
    """Run ``invocation`` against ``program`` in a sandboxed child and
    collect the ordered statement trace.

    Timeouts and uncaught subject exceptions are reported through
    ``Trace.terminated`` with the steps finalized so far retained; they do
    not raise here.
    """
    limits = limits or ResourceLimits()
    payload = {
        "mode": "trace",
        "program": program,
        "invocation": invocation,
        "max_steps": limits.max_steps,
    }
    out, err, timed_out = _spawn_child(payload, limits.wall_seconds)

    steps = []
    terminated = None
    output_value = None
    error = None
    for line in out.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            continue  # truncated tail after a kill
        if "terminated" in obj:
            terminated = obj["terminated"]
            if obj.get("output_value") is not None:
                output_value = snapshot_from_wire(obj["output_value"])
            error = obj.get("error")
        else:
            steps.append(
                ExecutionStep(
                    step_index=obj["step_index"],
                    line_no=obj["line_no"],
                    event=obj["event"],
                    state_after=bindings_from_wire(obj["state_after"]),
                )
            )
    steps.sort(key=lambda s: s.step_index)

    if timed_out:
        terminated = TERMINATED_TIMEOUT
        output_value = None
    elif terminated is None:
        # child died without a trailer (segfault, interpreter abort)
        terminated = TERMINATED_EXCEPTION
        error = (err or "").strip()[-500:] or "child exited without result"
        log.warning("tracer child crashed for %s/%s: %s", record_id, input_id, error)

    return Trace(
        record_id=record_id,
        input_id=input_id,
        steps=tuple(steps),
        output_value=output_value,
        terminated=terminated,
        error=error,
    )


def grade_in_sandbox(program: str, assertion_text: str, limits: "ResourceLimits | None" = None) -> str:
    """Execute one assertion against the program in a sandboxed child.

    Returns "pass" when the assertion runs without raising, "fail" when
    the predicate is false, "error" for any other raised condition or a
    timeout.
    """
    if "??" in assertion_text:
        raise ValueError("assertion still contains the mask token")
    limits = limits or ResourceLimits()
    payload = {"mode": "assert", "program": program, "assertion": assertion_text}
    out, _err, timed_out = _spawn_child(payload, limits.wall_seconds)
    if timed_out:
        return "error"
    for line in out.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            continue
        if "assert_result" in obj:
            return obj["assert_result"]
    return "error"


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def trace_to_jsonl(trace: Trace) -> str:
    """Serialize a trace into its line-delimited wire form.

    The field set and ordering are fixed; golden files depend on the exact
    bytes produced here.
    """
    lines = [_dump({"record_id": trace.record_id, "input_id": trace.input_id})]
    for step in trace.steps:
        lines.append(
            _dump(
                {
                    "step_index": step.step_index,
                    "line_no": step.line_no,
                    "event": step.event,
                    "state_after": bindings_to_wire(step.state_after),
                }
            )
        )
    out_wire = snapshot_to_wire(trace.output_value) if trace.output_value is not None else None
    lines.append(_dump({"terminated": trace.terminated, "output_value": out_wire}))
    return "\n".join(lines) + "\n"


def trace_from_jsonl(text: str) -> Trace:
    lines = [json.loads(line) for line in text.splitlines() if line.strip()]
    if len(lines) < 2 or "record_id" not in lines[0] or "terminated" not in lines[-1]:
        raise ValueError("malformed trace file")
    header, trailer = lines[0], lines[-1]
    steps = tuple(
        ExecutionStep(
            step_index=obj["step_index"],
            line_no=obj["line_no"],
            event=obj["event"],
            state_after=bindings_from_wire(obj["state_after"]),
        )
        for obj in lines[1:-1]
    )
    output_value = None
    if trailer.get("output_value") is not None:
        output_value = snapshot_from_wire(trailer["output_value"])
    return Trace(
        record_id=header["record_id"],
        input_id=header["input_id"],
        steps=steps,
        output_value=output_value,
        terminated=trailer["terminated"],
    )
