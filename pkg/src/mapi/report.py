"""Diff-stable serialization helpers shared by every experiment track."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

TRACE_COLUMNS = ("iter", "delta_l1", "delta_l2", "alignment_error",
                 "mults", "divs", "adds", "cmps")


def fmt(x) -> str:
    """Numbers with 17 significant digits; ``None`` as an empty cell."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _to_json(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + _to_json(v, indent, level + 1)
                 for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_to_json(v, indent, level + 1) for v in seq) + "]"
        return "[" + pad + ("," + pad).join(_to_json(v, indent, level + 1) for v in seq) + end + "]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return "null"
        return format(float(obj), ".17g")
    if isinstance(obj, Path):
        return json.dumps(str(obj))
    return json.dumps(obj)


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written at 17 significant digits."""
    return _to_json(obj, indent, 0) + "\n"


def traces_to_csv(traces: dict, stream=None) -> str:
    """Write several traces into one CSV with a leading ``variant`` column."""
    buf = stream if stream is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("variant",) + TRACE_COLUMNS)
    for variant, trace in traces.items():
        for row in trace.rows():
            writer.writerow((variant,) + tuple(fmt(v) for v in row))
    return buf.getvalue() if stream is None else ""


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to re-run a subcommand and reproduce its outputs."""

    command: str
    config: dict
    seed: int | None
    version: str = __version__
    input_digests: dict = field(default_factory=dict)

    @classmethod
    def build(cls, command: str, config: dict, seed=None, inputs=()) -> "RunManifest":
        digests = {str(p): file_digest(p) for p in inputs}
        return cls(command=command, config=dict(config), seed=seed, input_digests=digests)

    def as_dict(self) -> dict:
        return asdict(self)


def output_paths(out, stem: str) -> tuple[Path, str]:
    """Resolve ``--out`` into (directory, file stem).

    ``--out run/trace.csv`` keeps the given stem; ``--out run/`` uses
    ``stem``. Without ``--out`` the ``MAPI_OUT_DIR`` environment variable
    (default ``mapi-out``) is used.
    """
    if out is None:
        out = os.environ.get("MAPI_OUT_DIR", "mapi-out")
    path = Path(out)
    if path.suffix.lower() in (".csv", ".json"):
        return path.parent if str(path.parent) else Path("."), path.stem
    return path, stem
