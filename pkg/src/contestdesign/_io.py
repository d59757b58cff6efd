"""Deterministic JSON/CSV writers: fixed key order, 17 significant digits."""

import math


def _number(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return "null"
    text = f"{x:.17g}"
    if "e" not in text and "." not in text and "inf" not in text:
        text += ".0"
    return text


def _escape(s):
    out = ['"']
    for ch in s:
        if ch in '"\\':
            out.append("\\" + ch)
        elif ch == "\n":
            out.append("\\n")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def dumps(obj, indent=2, _level=0):
    """JSON text with floats at 17 significant digits and insertion-ordered keys."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return _escape(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_escape(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):
        obj = obj.item()
    return _number(obj)


def csv_text(columns, rows, header_comment=None):
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append(",".join(columns))
    for row in rows:
        cells = []
        for c in columns:
            v = row[c]
            cells.append("" if v is None else (_number(v) if not isinstance(v, str) else v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
