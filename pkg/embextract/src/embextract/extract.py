"""Run a job: encode every input, normalize, write one embedding file.

Per-record problems (unreadable image, zero feature vector) are collected
and the job keeps going; a model that cannot load at all aborts the job
since no record could succeed. Text records are written under the SHA-256
hex digest of the text, so identical texts collapse to one record; image
records keep their manifest ids.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import get_encoder
from .errors import ExtractError
from .job import ExtractionInput, ExtractionJob
from .writer import Record, write_embedding_file

DEFAULT_BATCH_SIZE = 32


@dataclass
class ExtractSummary:
    output_path: str
    written: int = 0
    failed: int = 0
    errors: list[tuple[str, str]] = field(default_factory=list)


def text_record_id(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _batches(items: list, size: int):
    for start in range(0, len(items), size):
        yield items[start:start + size]


def extract(
    job: ExtractionJob,
    batch_size: int = DEFAULT_BATCH_SIZE,
    device: str = "cpu",
) -> ExtractSummary:
    if batch_size < 1:
        raise ExtractError(f"batch_size must be >= 1, got {batch_size}")
    encoder = get_encoder(job.model_name, device=device)
    summary = ExtractSummary(output_path=job.output_path)

    # readability is checked per record up front so one bad path cannot
    # take down the batch it would have landed in
    ready: list[ExtractionInput] = []
    for item in job.inputs:
        if item.modality == "image":
            try:
                with open(item.source, "rb"):
                    pass
            except OSError as exc:
                summary.failed += 1
                summary.errors.append((item.id, f"unreadable image: {exc}"))
                continue
        ready.append(item)

    features: dict[str, np.ndarray] = {}
    for modality, encode in (
        ("text", lambda batch: encoder.encode_texts([i.source for i in batch])),
        ("image", lambda batch: encoder.encode_images([Path(i.source) for i in batch])),
    ):
        subset = [i for i in ready if i.modality == modality]
        for batch in _batches(subset, batch_size):
            rows = np.asarray(encode(batch), dtype=np.float64)
            for item, row in zip(batch, rows):
                features[item.id] = row

    records: list[Record] = []
    emitted: set[str] = set()
    for item in ready:
        record_id = text_record_id(item.source) if item.modality == "text" else item.id
        if record_id in emitted:
            # identical texts hash to the same id and, the encoder being
            # deterministic, to the same vector; keep the first
            continue
        row = features[item.id]
        norm = float(np.linalg.norm(row))
        if not np.isfinite(norm) or norm < 1e-12:
            summary.failed += 1
            summary.errors.append((item.id, f"feature vector has norm {norm!r}"))
            continue
        records.append(Record(id=record_id, modality=item.modality, vector=row / norm))
        emitted.add(record_id)

    if not records:
        raise ExtractError("every input failed, nothing to write")
    write_embedding_file(job.output_path, records)
    summary.written = len(records)
    return summary
