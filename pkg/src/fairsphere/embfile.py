"""Embedding file formats: JSON Lines and the EMBF binary container.

JSONL layout: a header line {"format_version": 1, "d": ..., "count": ...,
"dtype": "f32"|"f64"} followed by one record per line with fields id,
modality, labels and vector. Floats are written with 17 significant
digits so an f64 value survives the round trip exactly.

EMBF layout, all integers little-endian:

    bytes 0-3   magic "EMBF"
    u32         format_version (1)
    u32         d
    u32         count
    u8          dtype code (0 = f32, 1 = f64)
    u64         metadata length in bytes
    ...         metadata: UTF-8 JSON list of {id, modality, labels}
    ...         count rows of d little-endian dtype values

Vectors are renormalized to unit length on load; a stored vector whose
norm falls below 1e-12 is rejected as a ZeroVector. All writers go
through a temporary file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    MalformedHeader,
    ZeroVector,
)
from .geometry import AttributeSubspace, Embedding, ORTHONORMAL_TOL

FORMAT_VERSION = 1
EMBF_MAGIC = b"EMBF"
_DTYPE_CODES = {"f32": 0, "f64": 1}
_NUMPY_DTYPES = {"f32": "<f4", "f64": "<f8"}


def format_float(x: float) -> str:
    """Serialize one float with 17 significant digits."""
    return f"{float(x):.17g}"


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace, 17-digit floats."""
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}:{canonical_json(v)}" for k, v in sorted(obj.items()))
        return "{" + ",".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def atomic_write_bytes(path: str | Path, payload: bytes):
    """Write through a sibling temp file and rename into place."""
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


def atomic_write_text(path: str | Path, payload: str):
    atomic_write_bytes(path, payload.encode("utf-8"))


@dataclass
class EmbeddingFileHeader:
    d: int
    count: int
    dtype: str


def _validate_records(embeddings: list[Embedding]) -> int:
    if not embeddings:
        raise MalformedHeader("refusing to write an embedding file with no records")
    d = embeddings[0].dim
    seen = set()
    for e in embeddings:
        if e.dim != d:
            raise DimensionMismatch(f"embedding {e.id!r} has dimension {e.dim}, expected {d}")
        if e.id in seen:
            raise DuplicateId(f"duplicate embedding id {e.id!r}")
        seen.add(e.id)
    return d


def _stored_vector(e: Embedding, dtype: str) -> np.ndarray:
    if dtype == "f32":
        return e.vector.astype(np.float32)
    return e.vector


def _record_meta(e: Embedding) -> dict:
    return {"id": e.id, "modality": e.modality, "labels": e.labels}


def _jsonl_payload(embeddings: list[Embedding], dtype: str) -> str:
    d = _validate_records(embeddings)
    lines = [
        '{"format_version":%d,"d":%d,"count":%d,"dtype":"%s"}'
        % (FORMAT_VERSION, d, len(embeddings), dtype)
    ]
    for e in embeddings:
        values = ",".join(format_float(v) for v in _stored_vector(e, dtype))
        lines.append(
            '{"id":%s,"modality":%s,"labels":%s,"vector":[%s]}'
            % (
                json.dumps(e.id),
                json.dumps(e.modality),
                json.dumps(e.labels, sort_keys=True),
                values,
            )
        )
    return "\n".join(lines) + "\n"


def _embf_payload(embeddings: list[Embedding], dtype: str) -> bytes:
    d = _validate_records(embeddings)
    meta = json.dumps(
        [_record_meta(e) for e in embeddings], sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    header = EMBF_MAGIC + struct.pack(
        "<IIIBQ", FORMAT_VERSION, d, len(embeddings), _DTYPE_CODES[dtype], len(meta)
    )
    rows = np.stack([_stored_vector(e, dtype) for e in embeddings]).astype(
        _NUMPY_DTYPES[dtype]
    )
    return header + meta + rows.tobytes(order="C")


def save_embeddings(path: str | Path, embeddings: list[Embedding], dtype: str = "f64"):
    """Write an embedding file; .embf paths get the binary container."""
    if dtype not in _DTYPE_CODES:
        raise MalformedHeader(f"unknown dtype {dtype!r}")
    path = Path(path)
    if path.suffix == ".embf":
        atomic_write_bytes(path, _embf_payload(embeddings, dtype))
    else:
        atomic_write_text(path, _jsonl_payload(embeddings, dtype))


def _ingest(raw_records: list[tuple[str, str, dict | None, np.ndarray]], d: int) -> list[Embedding]:
    out: list[Embedding] = []
    seen = set()
    for rec_id, modality, labels, vector in raw_records:
        if rec_id in seen:
            raise DuplicateId(f"duplicate embedding id {rec_id!r}")
        seen.add(rec_id)
        if vector.size != d:
            raise DimensionMismatch(
                f"record {rec_id!r} has {vector.size} values, header declares {d}"
            )
        norm = float(np.linalg.norm(vector))
        if norm < 1e-12:
            raise ZeroVector(f"record {rec_id!r} has norm {norm!r}")
        out.append(Embedding(id=rec_id, vector=vector / norm, modality=modality, labels=labels))
    return out


def _load_jsonl(text: str) -> tuple[EmbeddingFileHeader, list[Embedding]]:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise MalformedHeader("empty embedding file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"header line is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise MalformedHeader("header line must be a JSON object")
    for key in ("format_version", "d", "count", "dtype"):
        if key not in header:
            raise MalformedHeader(f"header is missing {key!r}")
    if header["format_version"] != FORMAT_VERSION:
        raise MalformedHeader(f"unsupported format_version {header['format_version']!r}")
    if header["dtype"] not in _DTYPE_CODES:
        raise MalformedHeader(f"unknown dtype {header['dtype']!r}")
    d, count = header["d"], header["count"]
    if not isinstance(d, int) or d < 2 or not isinstance(count, int) or count < 1:
        raise MalformedHeader(f"bad dimensions in header: d={d!r}, count={count!r}")
    records = []
    for line in lines[1:]:
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedHeader(f"record is not valid JSON: {exc}") from None
        for key in ("id", "modality", "vector"):
            if key not in rec:
                raise MalformedHeader(f"record is missing {key!r}")
        labels = rec.get("labels")
        if labels is not None and not isinstance(labels, dict):
            raise MalformedHeader(f"labels of record {rec['id']!r} must be an object or null")
        records.append(
            (rec["id"], rec["modality"], labels, np.asarray(rec["vector"], dtype=np.float64))
        )
    if len(records) != count:
        raise MalformedHeader(f"header declares {count} records, file has {len(records)}")
    return EmbeddingFileHeader(d=d, count=count, dtype=header["dtype"]), _ingest(records, d)


def _load_embf(blob: bytes) -> tuple[EmbeddingFileHeader, list[Embedding]]:
    fixed = 4 + struct.calcsize("<IIIBQ")
    if len(blob) < fixed or blob[:4] != EMBF_MAGIC:
        raise MalformedHeader("not an EMBF file")
    version, d, count, dtype_code, meta_len = struct.unpack("<IIIBQ", blob[4:fixed])
    if version != FORMAT_VERSION:
        raise MalformedHeader(f"unsupported format_version {version}")
    dtype = {v: k for k, v in _DTYPE_CODES.items()}.get(dtype_code)
    if dtype is None:
        raise MalformedHeader(f"unknown dtype code {dtype_code}")
    if d < 2 or count < 1:
        raise MalformedHeader(f"bad dimensions in header: d={d}, count={count}")
    meta_end = fixed + meta_len
    item = np.dtype(_NUMPY_DTYPES[dtype]).itemsize
    expected = meta_end + count * d * item
    if len(blob) != expected:
        raise MalformedHeader(f"file has {len(blob)} bytes, layout requires {expected}")
    try:
        meta = json.loads(blob[fixed:meta_end].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedHeader(f"metadata block is not valid JSON: {exc}") from None
    if not isinstance(meta, list) or len(meta) != count:
        raise MalformedHeader(f"metadata must list {count} records")
    rows = np.frombuffer(blob[meta_end:], dtype=_NUMPY_DTYPES[dtype]).reshape(count, d)
    records = []
    for rec, row in zip(meta, rows):
        for key in ("id", "modality"):
            if key not in rec:
                raise MalformedHeader(f"metadata record is missing {key!r}")
        records.append(
            (rec["id"], rec["modality"], rec.get("labels"), row.astype(np.float64))
        )
    return EmbeddingFileHeader(d=d, count=count, dtype=dtype), _ingest(records, d)


def read_embedding_file(path: str | Path) -> tuple[EmbeddingFileHeader, list[Embedding]]:
    """Load a JSONL or EMBF embedding file, sniffing the format by magic."""
    blob = Path(path).read_bytes()
    if blob[:4] == EMBF_MAGIC:
        return _load_embf(blob)
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"file is neither EMBF nor UTF-8 JSONL: {exc}") from None
    return _load_jsonl(text)


def load_embeddings(path: str | Path) -> list[Embedding]:
    """Load an embedding file, renormalizing every vector to unit length."""
    return read_embedding_file(path)[1]


def save_subspace(path: str | Path, subspace: AttributeSubspace):
    """Persist an attribute subspace as canonical JSON."""
    payload = canonical_json(
        {
            "format_version": FORMAT_VERSION,
            "kind": "attribute_subspace",
            "d": subspace.dim,
            "rank": subspace.rank,
            "reference_group": subspace.reference_group,
            "source_groups": list(subspace.source_groups),
            "basis_columns": [list(col) for col in subspace.basis.T],
        }
    )
    atomic_write_text(path, payload + "\n")


def load_subspace(path: str | Path) -> AttributeSubspace:
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"subspace file is not valid JSON: {exc}") from None
    for key in ("format_version", "kind", "d", "rank", "reference_group", "source_groups", "basis_columns"):
        if key not in data:
            raise MalformedHeader(f"subspace file is missing {key!r}")
    if data["format_version"] != FORMAT_VERSION or data["kind"] != "attribute_subspace":
        raise MalformedHeader("not an attribute subspace file")
    basis = np.asarray(data["basis_columns"], dtype=np.float64).T
    if basis.ndim != 2 or basis.shape != (data["d"], data["rank"]):
        raise MalformedHeader(
            f"basis shape {basis.shape} does not match d={data['d']}, rank={data['rank']}"
        )
    gram = basis.T @ basis
    if float(np.max(np.abs(gram - np.eye(basis.shape[1])))) > ORTHONORMAL_TOL:
        raise MalformedHeader("stored basis columns are not orthonormal")
    return AttributeSubspace(
        basis=basis,
        rank=int(data["rank"]),
        source_groups=list(data["source_groups"]),
        reference_group=data["reference_group"],
    )
