"""Attention-guided citation engine.

Turns a pooled attention trace into a per-sentence citation map: each
generated token votes for the source sentence holding most of its top-k
attention, and a sentence cites every source whose vote share clears the
aggregation threshold tau. Image evidence is attached either from raw
image-token attention (IMG_RAW) or by rewriting citations of a substituted
caption sentence (IMG_CAP).

Scoring is scale-covariant: top-k selection and argmax are order
statistics, so rescaling the whole matrix by any positive constant leaves
the output unchanged. Rows are never renormalized.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .chunking import (
    IMG,
    ChunkedDocument,
    locate_caption_sid,
    map_summary_tokens,
    map_tokens_to_sentences,
    split_sentences,
)
from .trace import TraceMeta

Citation = Union[int, str]  # source sentence id or IMG
CitationMap = dict[int, set]

VOTE_MODES = ("majority", "max")


class EngineError(ValueError):
    """Raised on config/trace inconsistencies."""


class ModeMismatchError(EngineError):
    """Requested attribution mode needs trace features that are absent."""


@dataclass
class EngineConfig:
    k: int = 3
    vote: str = "majority"
    tau: float = 0.16
    mode: str = "TEXT"

    def validate(self) -> None:
        if self.k < 1:
            raise EngineError(f"k must be >= 1, got {self.k}")
        if self.vote not in VOTE_MODES:
            raise EngineError(f"vote must be one of {VOTE_MODES}, got {self.vote!r}")
        if not (0.0 <= self.tau <= 1.0):
            raise EngineError(f"tau must be in [0, 1], got {self.tau}")
        if self.mode not in ("TEXT", "IMG_RAW", "IMG_CAP"):
            raise EngineError(f"unknown mode {self.mode!r}")


def min_votes(tau: float, total: int) -> int:
    """Smallest vote count c with c/total >= tau, i.e. ceil(tau * total).

    The ceiling is taken on the exact rational value of the float, then
    relaxed by one when the float fraction (c-1)/total already compares >=
    tau. This makes the ceiling form and the fraction form agree
    identically, and preserves the intended decimal semantics: tau=0.16
    admits exactly 16% of the votes even though float 0.16 is a hair above
    the rational 16/100 (a naive math.ceil(tau * total) gets e.g.
    tau=0.14, total=50 wrong in the other direction).
    """
    if total < 0:
        raise EngineError(f"total must be >= 0, got {total}")
    num, den = float(tau).as_integer_ratio()
    c = -((-num * total) // den)
    if c > 0 and (c - 1) / total >= tau:
        c -= 1
    return int(c)


def token_label(row: np.ndarray, chunks: ChunkedDocument, cfg: EngineConfig) -> Union[int, None]:
    """Assign one generated token to a source sentence id (or NONE).

    Candidates are source positions labeled with a sentence id (IMG and
    NONE columns never compete). Ties on attention value rank the lower
    token index first; ties on vote count go to the tied sid holding the
    best-ranked token.
    """
    cfg.validate()
    cand = [i for i, sid in enumerate(chunks.token_sid) if isinstance(sid, int)]
    if not cand:
        return None
    if len(row) != len(chunks.token_sid):
        raise EngineError(f"row length {len(row)} != token count {len(chunks.token_sid)}")
    ranked = sorted(cand, key=lambda i: (-float(row[i]), i))
    if cfg.vote == "max":
        return chunks.token_sid[ranked[0]]
    top = ranked[: cfg.k]
    counts = Counter(chunks.token_sid[i] for i in top)
    best = max(counts.values())
    for i in top:  # ranked order: first tied sid to appear wins
        if counts[chunks.token_sid[i]] == best:
            return chunks.token_sid[i]
    raise AssertionError("unreachable")


def label_tokens(matrix: np.ndarray, chunks: ChunkedDocument, cfg: EngineConfig) -> np.ndarray:
    """Vectorized token_label over all rows; returns int sids, -1 for NONE."""
    cfg.validate()
    t_gen = matrix.shape[0]
    cand_cols = np.array(
        [i for i, sid in enumerate(chunks.token_sid) if isinstance(sid, int)], dtype=np.int64
    )
    if cand_cols.size == 0:
        return np.full(t_gen, -1, dtype=np.int64)
    cand_sids = np.array([chunks.token_sid[i] for i in cand_cols], dtype=np.int64)
    vals = matrix[:, cand_cols]
    # Stable argsort of the negated values: equal values keep ascending
    # column order, implementing the lower-index tie-break.
    order = np.argsort(-vals, axis=1, kind="stable")
    if cfg.vote == "max":
        return cand_sids[order[:, 0]]
    k = min(cfg.k, cand_cols.size)
    top_sids = cand_sids[order[:, :k]]  # (T, k) in rank order
    n_sids = int(cand_sids.max()) + 1
    rows_idx = np.repeat(np.arange(t_gen), k)
    counts = np.zeros((t_gen, n_sids), dtype=np.int64)
    np.add.at(counts, (rows_idx, top_sids.ravel()), 1)
    best = counts.max(axis=1)
    labels = np.full(t_gen, -1, dtype=np.int64)
    unresolved = np.ones(t_gen, dtype=bool)
    for r in range(k):  # first rank whose sid attains the max count wins
        sid_r = top_sids[:, r]
        hit = unresolved & (counts[np.arange(t_gen), sid_r] == best)
        labels[hit] = sid_r[hit]
        unresolved &= ~hit
    return labels


def aggregate_sentence(labels: Sequence[int], tau: float) -> set:
    """Sources cited by one summary sentence: labels with count >= ceil(tau*|T_j|).

    NONE-labeled tokens must be excluded by the caller before counting.
    For tau = 0 every occurring label is kept.
    """
    labels = list(labels)
    if not labels:
        return set()
    need = min_votes(tau, len(labels))
    counts = Counter(labels)
    return {sid for sid, c in counts.items() if c >= need}


def image_scores(
    matrix: np.ndarray, meta: TraceMeta, summary_chunks: ChunkedDocument
) -> np.ndarray:
    """Per-summary-sentence image attention W_img(j).

    w_img(t) is the mean of row t over image-block columns; W_img(j) is the
    mean of w_img over the tokens of sentence j (NaN for token-less
    sentences).
    """
    if meta.image_block is None:
        raise EngineError("not an IMG_RAW trace: image_block absent")
    ib_start, ib_end = meta.image_block
    w_tok = matrix[:, ib_start:ib_end].astype(np.float64).mean(axis=1)
    n_sents = len(summary_chunks.sentences)
    scores = np.full(n_sents, np.nan)
    sid_arr = summary_chunks.token_sid
    for j in range(n_sents):
        idx = [t for t, sid in enumerate(sid_arr) if sid == j]
        if idx:
            scores[j] = float(np.mean(w_tok[idx]))
    return scores


def attribute(
    meta: TraceMeta,
    matrix: np.ndarray,
    cfg: EngineConfig,
    dialogue_mode: bool = False,
) -> CitationMap:
    """Run the full pipeline: chunk, label every token, aggregate, attach IMG.

    TEXT cites source sentences only. IMG_RAW additionally adds IMG to the
    single summary sentence with the highest average image attention.
    IMG_CAP replaces citations of the caption sentence by IMG.
    """
    cfg.validate()
    if cfg.mode == "IMG_RAW" and meta.image_block is None:
        raise ModeMismatchError("mode/trace mismatch: IMG_RAW requires an image_block")
    if cfg.mode == "IMG_CAP" and meta.caption_span is None:
        raise ModeMismatchError("mode/trace mismatch: IMG_CAP requires a caption_span")

    if matrix.shape != (len(meta.gen_tokens), len(meta.source_tokens)):
        raise EngineError(
            f"matrix shape {matrix.shape} inconsistent with meta token counts"
        )
    src_sents = split_sentences(meta.source_text, dialogue_mode)
    chunks = map_tokens_to_sentences(meta, src_sents)
    gen_sents = split_sentences(meta.gen_text, dialogue_mode)
    if not gen_sents:
        raise EngineError("empty summary: no generated sentences")
    summary = map_summary_tokens(meta.gen_tokens, gen_sents)

    labels = label_tokens(matrix, chunks, cfg)
    by_sentence: dict[int, list[int]] = {j: [] for j in range(len(gen_sents))}
    for t, sid in enumerate(summary.token_sid):
        if sid is not None and labels[t] >= 0:
            by_sentence[sid].append(int(labels[t]))

    cmap: CitationMap = {j: aggregate_sentence(by_sentence[j], cfg.tau) for j in by_sentence}

    if cfg.mode == "IMG_RAW":
        scores = image_scores(matrix, meta, summary)
        if np.isnan(scores).all():
            raise EngineError("empty summary: no sentence has tokens for image scoring")
        j_star = int(np.nanargmax(scores))  # ties: first max wins
        cmap[j_star].add(IMG)
    elif cfg.mode == "IMG_CAP":
        cap_sid = chunks.caption_sid
        if cap_sid is None:
            cap_sid = locate_caption_sid(meta, src_sents)
        for j, cites in cmap.items():
            if cap_sid in cites:
                cites.discard(cap_sid)
                cites.add(IMG)
    return cmap


def citation_sort_key(c: Citation) -> tuple[int, int]:
    return (1, 0) if c == IMG else (0, int(c))


def sorted_citations(cites: Iterable[Citation]) -> list[Citation]:
    """Text ids ascending, IMG last."""
    return sorted(cites, key=citation_sort_key)


def citation_map_to_record(cmap: CitationMap) -> dict:
    """Wire form: {"sid_map": {"0": [1, 3, "IMG"], ...}}."""
    return {"sid_map": {str(j): sorted_citations(cmap[j]) for j in sorted(cmap)}}


def citation_map_from_record(record: dict) -> CitationMap:
    sid_map = record["sid_map"]
    out: CitationMap = {}
    for j, cites in sid_map.items():
        parsed = set()
        for c in cites:
            if c == IMG:
                parsed.add(IMG)
            else:
                parsed.add(int(c))
        out[int(j)] = parsed
    return out
