"""Sentence chunking and token-to-sentence alignment.

Evidence units are sentences. The splitter is rule-based and deterministic:
no model, no state, byte-identical output for identical input. Every token
position is assigned exactly one label: a sentence id, IMG (image-block
token), or NONE (outside the evidence region).
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass
from typing import Optional, Union

from .trace import TraceMeta

IMG = "IMG"
NONE = None

TokenLabel = Union[int, str, None]  # sentence id, IMG, or NONE


class ChunkError(ValueError):
    """Raised when tokens and sentences cannot be aligned."""


@dataclass
class SentenceSpan:
    sid: int
    start_char: int
    end_char: int
    text: str


@dataclass
class ChunkedDocument:
    sentences: list[SentenceSpan]
    token_sid: list[TokenLabel]
    caption_sid: Optional[int] = None


# Split after . ! ? when followed by whitespace and an uppercase letter or
# digit, or by end of text. The guard list below suppresses splits after
# common clinical/citation abbreviations.
_BOUNDARY_RE = re.compile(r"[.!?](?=\s+[A-Z0-9]|\s*$)")
_SPEAKER_TURN_RE = re.compile(r"\n(?=\w+:)")
_ABBREVIATIONS = ("Dr.", "Mr.", "Mrs.", "vs.", "e.g.", "i.e.", "Fig.", "No.")
_LEADING_PUNCT = "\"'([{"


def _guarded(text: str, dot_pos: int) -> bool:
    # Word = maximal non-whitespace run ending at the period (inclusive).
    start = dot_pos
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    word = text[start : dot_pos + 1].lstrip(_LEADING_PUNCT)
    return word in _ABBREVIATIONS


def split_sentences(text: str, dialogue_mode: bool = False) -> list[SentenceSpan]:
    """Segment text into sentence spans covering all non-whitespace chars.

    In dialogue_mode, newline-delimited speaker turns (lines matching
    ``\\w+:``) additionally start new spans.
    """
    boundaries = set()
    for m in _BOUNDARY_RE.finditer(text):
        if text[m.start()] == "." and _guarded(text, m.start()):
            continue
        boundaries.add(m.start() + 1)
    if dialogue_mode:
        for m in _SPEAKER_TURN_RE.finditer(text):
            boundaries.add(m.start() + 1)

    cuts = [0] + sorted(boundaries) + [len(text)]
    spans: list[SentenceSpan] = []
    for lo, hi in zip(cuts, cuts[1:]):
        start, end = lo, hi
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if start == end:
            continue
        spans.append(SentenceSpan(len(spans), start, end, text[start:end]))
    return spans


def _sid_at(sentences: list[SentenceSpan], starts: list[int], char: int) -> Optional[int]:
    i = bisect.bisect_right(starts, char) - 1
    if i >= 0 and sentences[i].start_char <= char < sentences[i].end_char:
        return sentences[i].sid
    return None


def map_tokens_to_sentences(meta: TraceMeta, sentences: list[SentenceSpan]) -> ChunkedDocument:
    """Label every source token position with a sentence id, IMG, or NONE.

    Image-block tokens are IMG; tokens outside source_region are NONE;
    every other token gets the sid of the sentence containing its
    start_char. Index shifting past the image block is implicit in the
    char-offset mapping.
    """
    starts = [s.start_char for s in sentences]
    region_start, region_end = meta.source_region
    ib = meta.image_block
    token_sid: list[TokenLabel] = []
    for t, (s, _e) in enumerate(meta.source_tokens):
        if ib is not None and ib[0] <= t < ib[1]:
            token_sid.append(IMG)
            continue
        if not (region_start <= t < region_end):
            token_sid.append(NONE)
            continue
        sid = _sid_at(sentences, starts, s)
        if sid is None:
            raise ChunkError(f"token {t} start_char {s} not covered by any sentence")
        token_sid.append(sid)
    caption_sid = None
    if meta.caption_span is not None:
        try:
            caption_sid = locate_caption_sid(meta, sentences)
        except ChunkError:
            pass  # malformed captions surface on the IMG_CAP path, not here
    return ChunkedDocument(sentences=sentences, token_sid=token_sid, caption_sid=caption_sid)


def map_summary_tokens(gen_tokens: list[tuple[int, int]], sentences: list[SentenceSpan]) -> ChunkedDocument:
    """Label generated tokens with their summary-sentence sid.

    The generated side has no evidence-region contract: tokens not covered
    by any sentence (trailing EOS, inter-sentence whitespace) are NONE and
    belong to no sentence's token set.
    """
    starts = [s.start_char for s in sentences]
    token_sid: list[TokenLabel] = [_sid_at(sentences, starts, s) for s, _e in gen_tokens]
    return ChunkedDocument(sentences=sentences, token_sid=token_sid)


def locate_caption_sid(meta: TraceMeta, sentences: list[SentenceSpan]) -> int:
    """Sentence id of the substituted caption (IMG_CAP traces only)."""
    if meta.caption_span is None:
        raise ChunkError("not an IMG_CAP trace: caption_span absent")
    cs, ce = meta.caption_span
    starts = [s.start_char for s in sentences]
    sid = _sid_at(sentences, starts, cs)
    if sid is None:
        raise ChunkError(f"caption_span start {cs} not covered by any sentence")
    sent = sentences[sid]
    if ce > sent.end_char:
        raise ChunkError(
            f"caption_span ({cs}, {ce}) straddles sentence boundary at {sent.end_char}"
        )
    return sid
