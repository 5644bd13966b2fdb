"""Contextual embedding exporter for static-vector retrieval pipelines."""

from .export import (AocResult, Encoder, IsoResult, PartsResult, export_aoc,
                     export_iso, export_text_parts)
from .jobs import ExportJob

__all__ = ["AocResult", "Encoder", "ExportJob", "IsoResult", "PartsResult",
           "export_aoc", "export_iso", "export_text_parts"]
