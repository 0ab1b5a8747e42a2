"""Instance files and deterministic CSV output."""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np

from seqalloc.errors import ValidationError
from seqalloc.prob import DemandModel
from seqalloc.solver import Instance

INSTANCE_FORMAT = "seqalloc-instance"
INSTANCE_VERSION = 1


def fmt(x) -> str:
    """Round-trip-safe text for a number (17 significant digits)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def instance_to_dict(inst: Instance) -> dict:
    return {
        "format": INSTANCE_FORMAT,
        "version": INSTANCE_VERSION,
        "horizon": inst.horizon,
        "prices": [float(p) for p in inst.prices],
        "limit": float(inst.limit),
        "mu": [float(m) for m in inst.model.mu],
        "sigma": [[float(v) for v in row] for row in inst.model.sigma],
    }


def instance_from_dict(data: dict) -> Instance:
    if not isinstance(data, dict) or data.get("format") != INSTANCE_FORMAT:
        raise ValidationError(f"not a {INSTANCE_FORMAT} document", "format")
    if data.get("version") != INSTANCE_VERSION:
        raise ValidationError(f"unsupported version {data.get('version')!r}", "version")
    for key in ("prices", "limit", "mu", "sigma"):
        if key not in data:
            raise ValidationError("missing", key)
    try:
        model = DemandModel(np.asarray(data["mu"], float), np.asarray(data["sigma"], float))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc), "sigma") from None
    return Instance(np.asarray(data["prices"], float), data["limit"], model)


def write_instance(inst: Instance, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # json writes floats with repr(), which round-trips bit for bit
    path.write_text(json.dumps(instance_to_dict(inst), indent=1) + "\n", encoding="utf-8")
    return path


def read_instance(path) -> Instance:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", "instance") from None
    return instance_from_dict(data)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
