"""Offline exporter producing real artifacts for the muprocl engine.

Two jobs: ask a chat model for raw prompt candidates per class, and embed
prompt texts with a pretrained sentence encoder. Both outputs use the
engine's file formats (candidate-pool JSON and the tab-separated embedding
file), which is the only coupling between the packages; nothing here imports
the engine.

All filtering, dedup, and selection stays in the engine. The exporter writes
candidates raw, with the chat model's visual verdicts attached, so the
engine's thresholds act on real data exactly as they act on synthetic data.
"""

from .job import DEFAULT_TEMPLATES, ExportJob, ExportError, read_class_names
from .chat import build_candidate_pool, write_candidate_pool
from .encode import TextEncoder, export_embeddings, write_embedding_file

__all__ = [
    "DEFAULT_TEMPLATES",
    "ExportJob",
    "ExportError",
    "read_class_names",
    "build_candidate_pool",
    "write_candidate_pool",
    "TextEncoder",
    "export_embeddings",
    "write_embedding_file",
]
