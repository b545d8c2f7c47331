"""Structured report serialization.

Reports are JSON-shaped records with floats rendered at 17 significant
digits, enough for exact round-trips, so reruns with the same seed produce
byte-identical files.
"""

import numpy as np

__all__ = ["dumps", "write_report"]


def _fmt_float(x):
    if np.isnan(x):
        return "null"
    if np.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    return format(float(x), ".17g")


def _escape(s):
    out = s.replace("\\", "\\\\").replace('"', '\\"')
    out = out.replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    return f'"{out}"'


def _render(obj, indent, pad):
    space = " " * (indent * pad)
    inner = " " * ((indent + 1) * pad)
    if obj is None:
        return "null"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return _escape(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            return "[]"
        items = [_render(v, indent + 1, pad) for v in obj]
        return "[\n" + ",\n".join(inner + it for it in items) + "\n" + space + "]"
    if isinstance(obj, dict):
        if len(obj) == 0:
            return "{}"
        items = [
            f"{inner}{_escape(str(k))}: {_render(v, indent + 1, pad)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + space + "}"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps(obj, pad=2):
    return _render(obj, 0, pad) + "\n"


def write_report(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))
