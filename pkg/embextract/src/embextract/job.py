"""Job manifests: which inputs to encode with which model, and where to.

A manifest is a JSON object:

    {
      "model_name": "hash-test",
      "inputs": [["img-1", "photos/a.png", "image"],
                 ["cap-1", "a photo of a doctor", "text"]],
      "output_path": "out.jsonl",
      "dtype": "f32"
    }

For image inputs the middle element is a file path; for text inputs it is
the text itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BadJob

MODALITIES = ("image", "text")


@dataclass(frozen=True)
class ExtractionInput:
    id: str
    source: str
    modality: str


@dataclass
class ExtractionJob:
    model_name: str
    inputs: list[ExtractionInput] = field(default_factory=list)
    output_path: str = ""
    dtype: str = "f32"

    def __post_init__(self):
        if not self.model_name:
            raise BadJob("job needs a model_name")
        if not self.inputs:
            raise BadJob("job has no inputs")
        if not self.output_path:
            raise BadJob("job needs an output_path")
        if self.dtype != "f32":
            raise BadJob(f"unsupported dtype {self.dtype!r}, only 'f32' is written")
        seen: set[str] = set()
        for item in self.inputs:
            if not isinstance(item, ExtractionInput):
                raise BadJob(f"input {item!r} is not an ExtractionInput")
            if item.modality not in MODALITIES:
                raise BadJob(f"input {item.id!r} has unknown modality {item.modality!r}")
            if not item.id:
                raise BadJob("every input needs a nonempty id")
            if item.id in seen:
                raise BadJob(f"duplicate input id {item.id!r}")
            seen.add(item.id)


def load_job(path: str | Path) -> ExtractionJob:
    """Parse and validate a manifest file."""
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise BadJob(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise BadJob("manifest must be a JSON object")
    for key in ("model_name", "inputs", "output_path"):
        if key not in data:
            raise BadJob(f"manifest is missing {key!r}")
    raw_inputs = data["inputs"]
    if not isinstance(raw_inputs, list):
        raise BadJob("inputs must be a list")
    inputs = []
    for item in raw_inputs:
        if not isinstance(item, (list, tuple)) or len(item) != 3:
            raise BadJob(f"input {item!r} must be an [id, path-or-text, modality] triple")
        input_id, source, modality = item
        if not all(isinstance(x, str) for x in (input_id, source, modality)):
            raise BadJob(f"input {item!r} must hold three strings")
        inputs.append(ExtractionInput(id=input_id, source=source, modality=modality))
    return ExtractionJob(
        model_name=data["model_name"],
        inputs=inputs,
        output_path=data["output_path"],
        dtype=data.get("dtype", "f32"),
    )
