"""Attention-guided source attribution for summarization.

Converts decoder attention traces into sentence- and image-level citation
maps, with baselines, metrics, corpus tooling, a synthetic-trace oracle
harness, and a CLI.
"""

from .chunking import (
    IMG,
    ChunkedDocument,
    SentenceSpan,
    locate_caption_sid,
    map_summary_tokens,
    map_tokens_to_sentences,
    split_sentences,
)
from .engine import (
    CitationMap,
    EngineConfig,
    aggregate_sentence,
    attribute,
    citation_map_from_record,
    citation_map_to_record,
    image_scores,
    min_votes,
    token_label,
)
from .trace import (
    Trace,
    TraceError,
    TraceMeta,
    load_trace,
    pool_raw,
    save_trace,
)

__version__ = "0.1.0"

__all__ = [
    "IMG",
    "ChunkedDocument",
    "CitationMap",
    "EngineConfig",
    "SentenceSpan",
    "Trace",
    "TraceError",
    "TraceMeta",
    "aggregate_sentence",
    "attribute",
    "citation_map_from_record",
    "citation_map_to_record",
    "image_scores",
    "load_trace",
    "locate_caption_sid",
    "map_summary_tokens",
    "map_tokens_to_sentences",
    "min_votes",
    "pool_raw",
    "save_trace",
    "split_sentences",
    "token_label",
]
