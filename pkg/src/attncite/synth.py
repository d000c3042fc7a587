"""Synthetic traces with known citation maps, plus a naive reference scorer.

Planted traces make correctness checkable without any model: token labels
are assigned so every planted source clears the aggregation threshold by a
margin, and attention rows concentrate their mass on the labeled sentence
so that top-k voting provably recovers the labels. The naive oracle
reimplements the scoring pipeline by direct enumeration (full sorts, no
vectorization) and shares only the sentence splitter and the tie-break
rules with the engine, so the two paths can be compared differentially.

Randomness comes from numpy's PCG64 generator seeded explicitly; the same
seed regenerates byte-identical traces on any platform.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .chunking import IMG, split_sentences
from .engine import CitationMap, EngineConfig, ModeMismatchError, min_votes
from .trace import TraceMeta, validate_matrix

SINK_VALUE = 2.0  # outranks any in-sentence share; mimics an attention sink
IMG_SCALE = 0.05


class PlantError(ValueError):
    pass


@dataclass
class PlantSpec:
    """Recipe for one planted trace.

    support_map gives, per generated sentence, the planted citation set:
    source sentence ids plus at most one sentence holding IMG. Every
    support set must contain at least one text sid. With sink=True an
    attention-sink column (index 0) receives the globally highest value in
    every row, which collapses single-token argmax labeling while leaving
    top-k majority voting intact; sentence 0 must then not be planted.
    """

    n_src_sentences: int
    tokens_per_sentence: int
    n_gen_sentences: int
    tokens_per_gen_sentence: int
    support_map: dict[int, frozenset] = field(default_factory=dict)
    noise_eps: float = 0.0
    seed: int = 0
    margin: float = 0.05
    img_tokens: int = 4
    sink: bool = False

    def text_supports(self, j: int) -> list[int]:
        return sorted(c for c in self.support_map[j] if c != IMG)

    def img_sentence(self) -> Optional[int]:
        holders = [j for j, s in self.support_map.items() if IMG in s]
        if len(holders) > 1:
            raise PlantError(f"IMG planted in {len(holders)} sentences, at most one allowed")
        return holders[0] if holders else None

    def validate(self, tau: float) -> None:
        if not (0.0 <= self.noise_eps < 1.0):
            raise PlantError(f"noise_eps must be in [0, 1), got {self.noise_eps}")
        if self.margin <= 0:
            raise PlantError(f"margin must be > 0, got {self.margin}")
        if set(self.support_map) != set(range(self.n_gen_sentences)):
            raise PlantError("support_map must cover every generated sentence")
        quota = min_votes(tau + self.margin, self.tokens_per_gen_sentence)
        for j in range(self.n_gen_sentences):
            supports = self.text_supports(j)
            if not supports:
                raise PlantError(f"sentence {j}: support set has no text sid")
            for sid in supports:
                if not (0 <= sid < self.n_src_sentences):
                    raise PlantError(f"sentence {j}: support sid {sid} out of range")
                if self.sink and sid == 0:
                    raise PlantError("sink=True reserves source sentence 0; do not plant it")
            if quota * len(supports) > self.tokens_per_gen_sentence:
                raise PlantError(
                    f"sentence {j}: infeasible, ceil((tau+margin)*{self.tokens_per_gen_sentence})"
                    f"={quota} x {len(supports)} supports > {self.tokens_per_gen_sentence} tokens"
                )
        self.img_sentence()


def recovery_guaranteed(spec: PlantSpec, k: int) -> bool:
    """True when top-k majority labeling provably recovers every planted label."""
    m = spec.tokens_per_sentence
    n_off = spec.n_src_sentences * m - m
    eps = spec.noise_eps
    if eps > 0 and not (4.0 * eps * m < (1.0 - eps) * n_off):
        return False  # noise columns may outrank in-sentence shares
    if spec.sink:
        return k >= 3 and m >= k - 1
    return 2 * m >= k


def _build_text(prefix: str, n_sentences: int, tokens_per_sentence: int) -> tuple[str, list[tuple[int, int]]]:
    """Deterministic word-per-token text; each sentence ends '.' before an
    uppercase start, so the rule-based splitter reproduces the layout."""
    parts: list[str] = []
    spans: list[tuple[int, int]] = []
    pos = 0
    for i in range(n_sentences):
        for t in range(tokens_per_sentence):
            word = f"{prefix.upper()}{i}w{t}" if t == 0 else f"{prefix.lower()}{i}w{t}"
            if parts:
                parts.append(" ")
                pos += 1
            parts.append(word)
            spans.append((pos, pos + len(word)))
            pos += len(word)
        parts.append(".")
        pos += 1
    return "".join(parts), spans


def plant_trace(spec: PlantSpec, tau: float) -> tuple[TraceMeta, np.ndarray, CitationMap]:
    """Build (meta, matrix, planted map) for a spec; deterministic per seed."""
    spec.validate(tau)
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    source_text, source_tokens = _build_text("s", spec.n_src_sentences, spec.tokens_per_sentence)
    gen_text, gen_tokens = _build_text("g", spec.n_gen_sentences, spec.tokens_per_gen_sentence)

    n_text = len(source_tokens)
    img_sentence = spec.img_sentence()
    image_block = None
    mode = "TEXT"
    if img_sentence is not None:
        mode = "IMG_RAW"
        end_char = len(source_text)
        source_tokens = source_tokens + [(end_char, end_char)] * spec.img_tokens
        image_block = (n_text, n_text + spec.img_tokens)

    meta = TraceMeta(
        source_text=source_text,
        source_tokens=source_tokens,
        gen_text=gen_text,
        gen_tokens=gen_tokens,
        source_region=(0, n_text),
        mode=mode,
        image_block=image_block,
    )

    m = spec.tokens_per_sentence
    tpg = spec.tokens_per_gen_sentence
    k_total = len(source_tokens)
    matrix = np.zeros((len(gen_tokens), k_total), dtype=np.float64)

    all_text = np.arange(n_text)
    for j in range(spec.n_gen_sentences):
        supports = spec.text_supports(j)
        for t in range(tpg):
            gt = j * tpg + t
            label = supports[t % len(supports)]
            cols = all_text[label * m : (label + 1) * m]
            shares = rng.uniform(1.0, 2.0, m)
            matrix[gt, cols] = (1.0 - spec.noise_eps) * shares / shares.sum()
            off = np.setdiff1d(all_text, cols, assume_unique=True)
            if spec.noise_eps > 0 and off.size:
                noise = rng.uniform(1.0, 2.0, off.size)
                matrix[gt, off] = spec.noise_eps * noise / noise.sum()
            if spec.sink:
                matrix[gt, 0] = SINK_VALUE
            if img_sentence is not None:
                lo, hi = (2.0, 3.0) if j == img_sentence else (0.0, 1.0)
                matrix[gt, n_text:] = rng.uniform(lo, hi, spec.img_tokens) * IMG_SCALE

    matrix32 = matrix.astype(np.float32)
    meta.validate()
    validate_matrix(matrix32, meta)
    planted: CitationMap = {j: set(spec.support_map[j]) for j in range(spec.n_gen_sentences)}
    return meta, matrix32, planted


def random_trace(seed: int) -> tuple[TraceMeta, np.ndarray]:
    """Arbitrary valid trace for differential fuzzing.

    Covers all three modes, instruction prefix/suffix tokens outside the
    evidence region, image blocks before/inside/after the document span,
    uncovered generated tokens, and heavy value ties (rows quantized to one
    decimal about half the time).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    n_src = int(rng.integers(2, 6))
    m_src = int(rng.integers(1, 5))
    n_gen = int(rng.integers(1, 5))
    m_gen = int(rng.integers(1, 9))
    mode = ("TEXT", "IMG_RAW", "IMG_CAP")[int(rng.integers(0, 3))]

    n_prefix = int(rng.integers(0, 3))
    n_suffix = int(rng.integers(0, 2))
    total_sents = n_prefix + n_src + n_suffix
    source_text, source_tokens = _build_text("s", total_sents, m_src)
    doc_lo = n_prefix * m_src
    doc_hi = doc_lo + n_src * m_src
    source_region = (doc_lo, doc_hi)

    image_block = None
    caption_span = None
    if mode == "IMG_RAW":
        n_img = int(rng.integers(1, 5))
        placement = int(rng.integers(0, 3))
        if placement == 0:  # before the document tokens
            at_tok = doc_lo
        elif placement == 1:  # between two document sentences (or at start)
            at_tok = doc_lo + int(rng.integers(0, n_src)) * m_src
        else:  # after the document tokens
            at_tok = doc_hi
        at_char = source_tokens[at_tok][0] if at_tok < len(source_tokens) else len(source_text)
        source_tokens = (
            source_tokens[:at_tok] + [(at_char, at_char)] * n_img + source_tokens[at_tok:]
        )
        image_block = (at_tok, at_tok + n_img)
        lo, hi = source_region
        if at_tok <= lo:
            source_region = (lo + n_img, hi + n_img)
        elif at_tok < hi:
            source_region = (lo, hi + n_img)
    elif mode == "IMG_CAP":
        cap_sent = n_prefix + int(rng.integers(0, n_src))
        sents = split_sentences(source_text)
        caption_span = (sents[cap_sent].start_char, sents[cap_sent].end_char)

    gen_text, gen_tokens = _build_text("g", n_gen, m_gen)
    if rng.random() < 0.3:  # trailing EOS-like token outside any sentence
        gen_tokens = gen_tokens + [(len(gen_text), len(gen_text))]

    meta = TraceMeta(
        source_text=source_text,
        source_tokens=source_tokens,
        gen_text=gen_text,
        gen_tokens=gen_tokens,
        source_region=source_region,
        mode=mode,
        image_block=image_block,
        caption_span=caption_span,
    )
    meta.validate()

    matrix = rng.uniform(0.0, 1.0, (len(gen_tokens), len(source_tokens)))
    if rng.random() < 0.5:
        matrix = np.round(matrix, 1)  # force plenty of exact ties
    if rng.random() < 0.2:
        matrix[int(rng.integers(0, matrix.shape[0]))] = 0.0
    if image_block is not None:
        # Image scores feed an argmax; keep them continuous so exact ties
        # (whose resolution would hang on float summation order) cannot occur.
        lo, hi = image_block
        matrix[:, lo:hi] = rng.uniform(0.0, 1.0, (matrix.shape[0], hi - lo))
    matrix32 = matrix.astype(np.float32)
    validate_matrix(matrix32, meta)
    return meta, matrix32


def _naive_sid(sentences, char: int) -> Optional[int]:
    for s in sentences:
        if s.start_char <= char < s.end_char:
            return s.sid
    return None


def naive_oracle(
    meta: TraceMeta,
    matrix: np.ndarray,
    cfg: EngineConfig,
    dialogue_mode: bool = False,
) -> CitationMap:
    """Reference scorer by direct enumeration; contract-identical to attribute."""
    cfg.validate()
    if cfg.mode == "IMG_RAW" and meta.image_block is None:
        raise ModeMismatchError("mode/trace mismatch: IMG_RAW requires an image_block")
    if cfg.mode == "IMG_CAP" and meta.caption_span is None:
        raise ModeMismatchError("mode/trace mismatch: IMG_CAP requires a caption_span")

    src_sents = split_sentences(meta.source_text, dialogue_mode)
    gen_sents = split_sentences(meta.gen_text, dialogue_mode)
    if not gen_sents:
        raise PlantError("empty summary: no generated sentences")

    source_labels: list[Union[int, str, None]] = []
    for t, (s, _e) in enumerate(meta.source_tokens):
        if meta.image_block is not None and meta.image_block[0] <= t < meta.image_block[1]:
            source_labels.append(IMG)
        elif not (meta.source_region[0] <= t < meta.source_region[1]):
            source_labels.append(None)
        else:
            source_labels.append(_naive_sid(src_sents, s))

    candidates = [t for t, lab in enumerate(source_labels) if isinstance(lab, int)]

    def label_one(row) -> Optional[int]:
        if not candidates:
            return None
        ranked = sorted(candidates, key=lambda t: (-float(row[t]), t))
        if cfg.vote == "max":
            return source_labels[ranked[0]]
        top = ranked[: cfg.k]
        votes = Counter(source_labels[t] for t in top)
        best = max(votes.values())
        for t in top:
            if votes[source_labels[t]] == best:
                return source_labels[t]
        raise AssertionError("unreachable")

    gen_sids = [_naive_sid(gen_sents, s) for s, _e in meta.gen_tokens]
    cmap: CitationMap = {}
    for j in range(len(gen_sents)):
        token_ids = [t for t, sid in enumerate(gen_sids) if sid == j]
        labels = [label_one(matrix[t]) for t in token_ids]
        labels = [l for l in labels if l is not None]
        if not labels:
            cmap[j] = set()
            continue
        # Shared threshold spec: exact ceiling, relaxed when the rounded
        # fraction of one fewer vote already compares >= tau.
        need = math.ceil(Fraction(cfg.tau) * len(labels))
        if need > 0 and (need - 1) / len(labels) >= cfg.tau:
            need -= 1
        votes = Counter(labels)
        cmap[j] = {sid for sid, c in votes.items() if c >= need}

    if cfg.mode == "IMG_RAW":
        lo, hi = meta.image_block
        best_j, best_w = None, None
        for j in range(len(gen_sents)):
            token_ids = [t for t, sid in enumerate(gen_sids) if sid == j]
            if not token_ids:
                continue
            # Exact rational means: the oracle referees ties independently of
            # any floating-point summation order.
            w = sum(
                sum(Fraction(float(matrix[t, c])) for c in range(lo, hi)) / (hi - lo)
                for t in token_ids
            ) / len(token_ids)
            if best_w is None or w > best_w:
                best_j, best_w = j, w
        if best_j is None:
            raise PlantError("empty summary: no sentence has tokens for image scoring")
        cmap[best_j].add(IMG)
    elif cfg.mode == "IMG_CAP":
        cap_start, cap_end = meta.caption_span
        cap_sid = _naive_sid(src_sents, cap_start)
        if cap_sid is None or cap_end > src_sents[cap_sid].end_char:
            raise PlantError("caption_span not contained in one sentence")
        for j in cmap:
            if cap_sid in cmap[j]:
                cmap[j].discard(cap_sid)
                cmap[j].add(IMG)
    return cmap
