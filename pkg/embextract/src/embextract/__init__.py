"""Encode images and texts with a vision-language model and write the
embedding files the fairsphere toolchain consumes.

The two packages share a file format, nothing else; this one never imports
fairsphere.
"""

from .encoders import ClipEncoder, HashEncoder, get_encoder
from .errors import BadJob, ExtractError, ModelUnavailable
from .extract import ExtractSummary, extract, text_record_id
from .job import ExtractionInput, ExtractionJob, load_job
from .writer import Record, write_embedding_file

__all__ = [
    "BadJob",
    "ClipEncoder",
    "ExtractError",
    "ExtractSummary",
    "ExtractionInput",
    "ExtractionJob",
    "HashEncoder",
    "ModelUnavailable",
    "Record",
    "extract",
    "get_encoder",
    "load_job",
    "text_record_id",
    "write_embedding_file",
]
