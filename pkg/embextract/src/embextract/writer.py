"""JSON Lines embedding files, matching the fairsphere on-disk contract.

Header line {"format_version": 1, "d": ..., "count": ..., "dtype": "f32"},
then one record per line with id, modality, labels and vector. Floats are
written with 17 significant digits; vectors are rounded to float32 before
formatting so the stored values are exactly what an f32 consumer sees.
Writes are atomic. The format is duplicated here on purpose: the two
packages share files, not code.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ExtractError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Record:
    id: str
    modality: str
    vector: np.ndarray


def _format_float(x: float) -> str:
    return f"{float(x):.17g}"


def write_embedding_file(path: str | Path, records: list[Record]):
    if not records:
        raise ExtractError("refusing to write an embedding file with no records")
    d = records[0].vector.size
    seen: set[str] = set()
    lines = ['{"format_version":%d,"d":%d,"count":%d,"dtype":"f32"}'
             % (FORMAT_VERSION, d, len(records))]
    for rec in records:
        if rec.vector.size != d:
            raise ExtractError(
                f"record {rec.id!r} has {rec.vector.size} values, expected {d}"
            )
        if rec.id in seen:
            raise ExtractError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        values = ",".join(
            _format_float(v) for v in rec.vector.astype(np.float32)
        )
        lines.append(
            '{"id":%s,"modality":%s,"labels":null,"vector":[%s]}'
            % (json.dumps(rec.id), json.dumps(rec.modality), values)
        )
    payload = ("\n".join(lines) + "\n").encode("utf-8")
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
