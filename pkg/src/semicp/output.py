"""CSV / JSON emission of experiment rows, and reading them back.

Field names match the row dataclasses except ``lam``, which is written
as ``lambda``.  Floats are written with 17 significant digits so a
round trip is exact.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import typing
from pathlib import Path

ALIASES = {"lam": "lambda"}
_REVERSE = {v: k for k, v in ALIASES.items()}


def _fmt_float(x: float) -> float | str:
    if math.isnan(x) or math.isinf(x):
        return repr(x)
    return float(format(x, ".17g"))


def _plain(value):
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        return _fmt_float(value)
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        return _plain(value.item())
    return value


def row_to_dict(row) -> dict:
    return {ALIASES.get(f.name, f.name): _plain(getattr(row, f.name)) for f in dataclasses.fields(row)}


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True)
    return str(value)


def dumps(rows: list, row_type: type, fmt: str) -> str:
    names = [ALIASES.get(f.name, f.name) for f in dataclasses.fields(row_type)]
    if fmt == "json":
        return json.dumps([row_to_dict(r) for r in rows], indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for r in rows:
        d = row_to_dict(r)
        writer.writerow([_csv_cell(d[k]) for k in names])
    return buf.getvalue()


def write_rows(rows: list, row_type: type, path: str | Path, fmt: str = "csv") -> None:
    Path(path).write_text(dumps(rows, row_type, fmt))


def _parse(text, hint):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union:
        if text is None or text == "":
            return None
        hint = next(a for a in args if a is not type(None))
    if hint is bool:
        return text if isinstance(text, bool) else text == "true"
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    if hint is dict:
        return text if isinstance(text, dict) else json.loads(text)
    return text


def loads(text: str, row_type: type, fmt: str) -> list:
    hints = typing.get_type_hints(row_type)
    if fmt == "json":
        records = json.loads(text)
    else:
        records = list(csv.DictReader(io.StringIO(text)))
    out = []
    for rec in records:
        kwargs = {_REVERSE.get(k, k): v for k, v in rec.items()}
        out.append(row_type(**{k: _parse(v, hints[k]) for k, v in kwargs.items()}))
    return out


def read_rows(path: str | Path, row_type: type, fmt: str | None = None) -> list:
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix.lower() == ".json" else "csv"
    return loads(path.read_text(), row_type, fmt)
