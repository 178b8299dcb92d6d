"""Subprocess entry point that runs subject code under a statement tracer.

Reads one JSON payload from stdin and streams line-delimited JSON to the
real stdout: one object per finalized execution step, then a trailer with
the termination status. Subject stdout/stderr are swallowed so they cannot
corrupt the protocol. The parent process owns the wall-clock limit; this
side enforces only the step cap.
"""

import io
import json
import sys

from reval.snapshots import bindings_to_wire, snapshot_bindings, snapshot_to_wire, snapshot_value

SUBJECT_FILE = "<subject>"


class _StepOverflow(Exception):
    pass


def _emit(out, obj):
    out.write(json.dumps(obj, separators=(",", ":")))
    out.write("\n")
    out.flush()


def _run_trace(payload, proto):
    program = payload["program"]
    invocation = payload["invocation"]
    max_steps = int(payload.get("max_steps", 100000))

    namespace = {"__name__": "__subject__"}
    try:
        code = compile(program, SUBJECT_FILE, "exec")
        exec(code, namespace)
        inv_code = compile(invocation, "<invocation>", "eval")
    except BaseException as exc:
        _emit(proto, {"terminated": "exception", "output_value": None, "error": repr(exc)})
        return

    counter = 0
    frames = {}

    def snap(frame):
        return bindings_to_wire(snapshot_bindings(frame.f_locals))

    def finalize_pending(state, frame):
        pending = state["pending"]
        if pending is not None:
            pending["state_after"] = snap(frame)
            _emit(proto, pending)
            state["pending"] = None

    def local_trace(frame, event, arg):
        nonlocal counter
        state = frames.get(id(frame))
        if state is None:
            return None
        if event == "line":
            finalize_pending(state, frame)
            if counter >= max_steps:
                raise _StepOverflow()
            state["pending"] = {"step_index": counter, "line_no": frame.f_lineno, "event": "stmt"}
            counter += 1
        elif event == "return":
            finalize_pending(state, frame)
            if counter >= max_steps:
                raise _StepOverflow()
            _emit(
                proto,
                {
                    "step_index": counter,
                    "line_no": frame.f_lineno,
                    "event": "return_event",
                    "state_after": snap(frame),
                },
            )
            counter += 1
            frames.pop(id(frame), None)
        return local_trace

    def global_trace(frame, event, arg):
        nonlocal counter
        code_obj = frame.f_code
        if code_obj.co_filename != SUBJECT_FILE or code_obj.co_name.startswith("<"):
            return None
        if counter >= max_steps:
            raise _StepOverflow()
        frames[id(frame)] = {"pending": None}
        _emit(
            proto,
            {
                "step_index": counter,
                "line_no": frame.f_lineno,
                "event": "call",
                "state_after": snap(frame),
            },
        )
        counter += 1
        return local_trace

    terminated = "ok"
    output = None
    error = None
    sys.settrace(global_trace)
    try:
        result = eval(inv_code, namespace)
    except _StepOverflow:
        terminated = "timeout"
    except BaseException as exc:
        terminated = "exception"
        error = repr(exc)
    else:
        output = snapshot_to_wire(snapshot_value(result))
    finally:
        sys.settrace(None)
    _emit(proto, {"terminated": terminated, "output_value": output, "error": error})


def _run_assert(payload, proto):
    program = payload["program"]
    assertion = payload["assertion"]
    namespace = {"__name__": "__subject__"}
    try:
        exec(compile(program, SUBJECT_FILE, "exec"), namespace)
    except BaseException as exc:
        _emit(proto, {"assert_result": "error", "error": repr(exc)})
        return
    try:
        exec(compile(assertion, "<assertion>", "exec"), namespace)
    except AssertionError:
        _emit(proto, {"assert_result": "fail", "error": None})
    except BaseException as exc:
        _emit(proto, {"assert_result": "error", "error": repr(exc)})
    else:
        _emit(proto, {"assert_result": "pass", "error": None})


def main():
    payload = json.loads(sys.stdin.read())
    proto = sys.stdout
    # subject code must not write to the protocol stream
    sys.stdout = io.StringIO()
    sys.stderr = io.StringIO()
    try:
        if payload.get("mode") == "assert":
            _run_assert(payload, proto)
        else:
            _run_trace(payload, proto)
    finally:
        sys.stdout = proto


if __name__ == "__main__":
    main()
