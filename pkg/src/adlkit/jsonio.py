"""Deterministic JSON rendering and atomic file writes.

Floats are rendered with 17 significant digits (lossless for IEEE-754
doubles), matrices row-major as nested lists, and dictionary keys sorted, so
identical inputs produce byte-identical output.  Non-finite floats are
rendered as the strings ``"inf"``, ``"-inf"`` and ``"nan"`` since JSON has
no literals for them.
"""

from __future__ import annotations

import math
import os
import tempfile

import numpy as np


def _render(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(_escape(obj))
    elif isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            out.append('"nan"')
        elif math.isinf(x):
            out.append('"inf"' if x > 0 else '"-inf"')
        else:
            out.append(format(x, ".17g"))
    elif isinstance(obj, np.ndarray):
        _render(obj.tolist(), out)
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {type(key)}")
            if i:
                out.append(",")
            out.append(_escape(key))
            out.append(":")
            _render(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _render(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj)}")


def _escape(s: str) -> str:
    chunks = ['"']
    for ch in s:
        if ch == '"':
            chunks.append('\\"')
        elif ch == "\\":
            chunks.append("\\\\")
        elif ch == "\n":
            chunks.append("\\n")
        elif ch == "\t":
            chunks.append("\\t")
        elif ch == "\r":
            chunks.append("\\r")
        elif ord(ch) < 0x20:
            chunks.append(f"\\u{ord(ch):04x}")
        else:
            chunks.append(ch)
    chunks.append('"')
    return "".join(chunks)


def dumps(obj) -> str:
    out: list[str] = []
    _render(obj, out)
    return "".join(out)


def parse_float_17g(s: str) -> float:
    return float(s)


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj) -> None:
    atomic_write_text(path, dumps(obj) + "\n")
