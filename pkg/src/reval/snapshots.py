"""Canonical rendering of runtime values into literal-text snapshots.

This code runs inside the trace hook of the subject process, so it must
never raise, must not invoke subject-defined __repr__ methods, and must
produce identical text for equal values on every run. Unordered
collections are sorted by their rendered element text; objects without a
literal form are rendered as ``ClassName(field=value, ...)`` when their
fields are introspectable, and degrade to an opaque marker otherwise.
"""

from dataclasses import dataclass

_MAX_DEPTH = 6


@dataclass(frozen=True)
class VariableSnapshot:
    """One variable's canonicalized value: literal text, type name, and
    whether canonicalization succeeded."""

    value_repr: str
    type_name: str
    representable: bool


def _render_items(items, depth):
    parts = []
    ok = True
    for item in items:
        text, item_ok = _render(item, depth + 1)
        parts.append(text)
        ok = ok and item_ok
    return parts, ok


def _render(value, depth):
    """Return (text, representable) for one value.

    Only exact builtin types take the literal paths; subclasses fall
    through to the constructor form so the rendered text never lies about
    the runtime type.
    """
    t = type(value)
    name = t.__name__
    if depth > _MAX_DEPTH:
        return "<%s>" % name, False
    if value is None or t is bool or t is int:
        return repr(value), True
    if t is float:
        if value != value or value in (float("inf"), float("-inf")):
            # repr() of these is not literal text; use constructor form
            return "float(%r)" % repr(value), True
        return repr(value), True
    if t is complex or t is range:
        return repr(value), True
    if t is str or t is bytes:
        return repr(value), True
    if t is list:
        parts, ok = _render_items(value, depth)
        return "[" + ", ".join(parts) + "]", ok
    if t is tuple:
        parts, ok = _render_items(value, depth)
        if len(parts) == 1:
            return "(" + parts[0] + ",)", ok
        return "(" + ", ".join(parts) + ")", ok
    if t is set or t is frozenset:
        parts, ok = _render_items(value, depth)
        parts.sort()
        if t is set:
            body = "{" + ", ".join(parts) + "}" if parts else "set()"
        else:
            body = "frozenset({%s})" % ", ".join(parts) if parts else "frozenset()"
        return body, ok
    if t is dict:
        parts = []
        ok = True
        for k, v in value.items():
            key_text, key_ok = _render(k, depth + 1)
            val_text, val_ok = _render(v, depth + 1)
            parts.append("%s: %s" % (key_text, val_text))
            ok = ok and key_ok and val_ok
        return "{" + ", ".join(parts) + "}", ok
    try:
        fields = vars(value)
    except TypeError:
        return "<%s>" % name, False
    parts = []
    ok = True
    for field in sorted(fields):
        text, field_ok = _render(fields[field], depth + 1)
        parts.append("%s=%s" % (field, text))
        ok = ok and field_ok
    return "%s(%s)" % (name, ", ".join(parts)), ok


def snapshot_value(value) -> VariableSnapshot:
    name = type(value).__name__
    try:
        text, ok = _render(value, 0)
    except Exception:
        text, ok = "<%s>" % name, False
    return VariableSnapshot(value_repr=text, type_name=name, representable=ok)


def snapshot_bindings(raw) -> "dict[str, VariableSnapshot]":
    """Canonicalize a local-bindings mapping into sorted snapshot form.

    Non-identifier names (comprehension internals) and dunder names are
    dropped. ``self`` is never snapshotted whole: its introspectable
    attributes are captured as dotted ``self.attr`` bindings instead.
    """
    out = {}
    for name, value in raw.items():
        if not isinstance(name, str) or not name.isidentifier():
            continue
        if name.startswith("__") and name.endswith("__"):
            continue
        if name == "self":
            try:
                attrs = vars(value)
            except TypeError:
                continue
            for attr in attrs:
                if isinstance(attr, str) and attr.isidentifier():
                    out["self." + attr] = snapshot_value(attrs[attr])
            continue
        out[name] = snapshot_value(value)
    return dict(sorted(out.items()))


def snapshot_to_wire(snap: VariableSnapshot) -> dict:
    return {
        "value_repr": snap.value_repr,
        "type_name": snap.type_name,
        "representable": snap.representable,
    }


def snapshot_from_wire(obj: dict) -> VariableSnapshot:
    return VariableSnapshot(
        value_repr=obj["value_repr"],
        type_name=obj["type_name"],
        representable=obj["representable"],
    )


def bindings_to_wire(bindings) -> dict:
    return {name: snapshot_to_wire(snap) for name, snap in bindings.items()}


def bindings_from_wire(obj) -> "dict[str, VariableSnapshot]":
    return {name: snapshot_from_wire(snap) for name, snap in obj.items()}
