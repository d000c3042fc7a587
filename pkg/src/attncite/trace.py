"""Attention trace container: metadata + pooled attention matrix on disk.

A trace directory holds `meta.json` (UTF-8, schema-versioned) and `attn.bin`
(raw float32 little-endian, row-major, one row per generated token over all
source-side token positions). An optional `raw.bin` carries the unpooled
per-layer/per-head tensor with dims declared in meta under `raw_dims`.
The container is model-runtime free: anything that can write these two files
can feed the attribution engine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1
MODES = ("TEXT", "IMG_RAW", "IMG_CAP")

Span = tuple[int, int]


class TraceError(ValueError):
    """Raised when a trace violates the container contract."""


@dataclass
class TraceMeta:
    """Everything about a trace except the attention values.

    Char spans are half-open offsets into the owning text. `source_region`
    is a half-open token index range marking which columns are candidate
    evidence; prompt/template tokens outside it never receive citations.
    Image tokens carry zero-width char spans and are addressed by the
    `image_block` token range.
    """

    source_text: str
    source_tokens: list[Span]
    gen_text: str
    gen_tokens: list[Span]
    source_region: Span
    mode: str = "TEXT"
    image_block: Optional[Span] = None
    caption_span: Optional[Span] = None

    def n_source_tokens(self) -> int:
        return len(self.source_tokens)

    def n_gen_tokens(self) -> int:
        return len(self.gen_tokens)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise TraceError(f"mode: unknown mode {self.mode!r}")
        _check_spans("source_tokens", self.source_tokens, len(self.source_text))
        _check_spans("gen_tokens", self.gen_tokens, len(self.gen_text))
        k = len(self.source_tokens)
        start, end = self.source_region
        if not (0 <= start < end <= k):
            raise TraceError(
                f"source_region: range ({start}, {end}) is empty or outside [0, {k})"
            )
        if self.image_block is not None:
            ib_start, ib_end = self.image_block
            if not (0 <= ib_start < ib_end <= k):
                raise TraceError(
                    f"image_block: range ({ib_start}, {ib_end}) is empty or outside [0, {k})"
                )
            for t in range(ib_start, ib_end):
                s, e = self.source_tokens[t]
                if s != e:
                    raise TraceError(
                        f"image_block: token {t} has non-zero-width char span ({s}, {e})"
                    )
        if self.mode == "IMG_RAW" and self.image_block is None:
            raise TraceError("image_block: required in IMG_RAW mode")
        if (self.caption_span is not None) != (self.mode == "IMG_CAP"):
            raise TraceError("caption_span: present iff mode is IMG_CAP")
        if self.caption_span is not None:
            cs, ce = self.caption_span
            if not (0 <= cs < ce <= len(self.source_text)):
                raise TraceError(
                    f"caption_span: ({cs}, {ce}) outside source_text of length {len(self.source_text)}"
                )


def _check_spans(fieldname: str, spans: Sequence[Span], text_len: int) -> None:
    prev_start = -1
    prev_end = 0
    for i, (s, e) in enumerate(spans):
        if not (0 <= s <= e <= text_len):
            raise TraceError(f"{fieldname}: span {i} = ({s}, {e}) outside text of length {text_len}")
        if s < prev_start:
            raise TraceError(f"{fieldname}: span {i} not ordered by start_char")
        if s < prev_end:
            raise TraceError(f"{fieldname}: span {i} overlaps span {i - 1}")
        prev_start, prev_end = s, e


def validate_matrix(matrix: np.ndarray, meta: TraceMeta) -> None:
    """Check the pooled-attention invariants against the metadata."""
    if matrix.ndim != 2:
        raise TraceError(f"attn: expected 2 dims, got {matrix.ndim}")
    rows, cols = matrix.shape
    if rows != meta.n_gen_tokens():
        raise TraceError(f"attn: {rows} rows but {meta.n_gen_tokens()} gen tokens")
    if cols != meta.n_source_tokens():
        raise TraceError(f"attn: {cols} cols but {meta.n_source_tokens()} source tokens")
    if not np.isfinite(matrix).all():
        raise TraceError("attn: non-finite value")
    if (matrix < 0).any():
        raise TraceError("attn: negative value")


def validate_raw(raw: np.ndarray) -> None:
    if raw.ndim != 4:
        raise TraceError(f"raw: expected dims (T, L, H, K), got {raw.ndim} dims")
    t, l, h, k = raw.shape
    if l < 1 or h < 1:
        raise TraceError(f"raw: need L >= 1 and H >= 1, got L={l}, H={h}")
    if not np.isfinite(raw).all():
        raise TraceError("raw: non-finite value")
    if (raw < 0).any():
        raise TraceError("raw: negative value")


def pool_raw(raw: np.ndarray) -> np.ndarray:
    """Average the (T, L, H, K) tensor over layers and heads to (T, K).

    Query averaging is the extractor's responsibility: each stored T-row
    already corresponds to one generated token.
    """
    validate_raw(raw)
    return raw.astype(np.float32).mean(axis=(1, 2), dtype=np.float64).astype(np.float32)


@dataclass
class Trace:
    meta: TraceMeta
    attn: np.ndarray
    raw: Optional[np.ndarray] = field(default=None, repr=False)


def _meta_to_dict(meta: TraceMeta, raw_dims: Optional[tuple[int, ...]]) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "mode": meta.mode,
        "source_text": meta.source_text,
        "source_tokens": [list(s) for s in meta.source_tokens],
        "image_block": list(meta.image_block) if meta.image_block else None,
        "caption_span": list(meta.caption_span) if meta.caption_span else None,
        "gen_text": meta.gen_text,
        "gen_tokens": [list(s) for s in meta.gen_tokens],
        "source_region": list(meta.source_region),
    }
    if raw_dims is not None:
        d["raw_dims"] = list(raw_dims)
    return d


def _span_list(field_name: str, value) -> list[Span]:
    try:
        return [(int(s), int(e)) for s, e in value]
    except (TypeError, ValueError) as exc:
        raise TraceError(f"{field_name}: malformed span list") from exc


def _span_or_none(field_name: str, value) -> Optional[Span]:
    if value is None:
        return None
    try:
        s, e = value
        return (int(s), int(e))
    except (TypeError, ValueError) as exc:
        raise TraceError(f"{field_name}: malformed span") from exc


def _meta_from_dict(d: dict) -> tuple[TraceMeta, Optional[tuple[int, ...]]]:
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise TraceError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    for key in ("mode", "source_text", "source_tokens", "gen_text", "gen_tokens", "source_region"):
        if d.get(key) is None:
            raise TraceError(f"{key}: missing from meta.json")
    meta = TraceMeta(
        source_text=d["source_text"],
        source_tokens=_span_list("source_tokens", d["source_tokens"]),
        gen_text=d["gen_text"],
        gen_tokens=_span_list("gen_tokens", d["gen_tokens"]),
        source_region=_span_or_none("source_region", d["source_region"]),
        mode=d["mode"],
        image_block=_span_or_none("image_block", d.get("image_block")),
        caption_span=_span_or_none("caption_span", d.get("caption_span")),
    )
    raw_dims = d.get("raw_dims")
    if raw_dims is not None:
        raw_dims = tuple(int(x) for x in raw_dims)
        if len(raw_dims) != 4:
            raise TraceError(f"raw_dims: expected 4 entries, got {raw_dims}")
    return meta, raw_dims


def _read_f32(path: Path, count: int, field_name: str) -> np.ndarray:
    data = path.read_bytes()
    if len(data) != count * 4:
        raise TraceError(
            f"{field_name}: binary length mismatch, {len(data)} bytes for {count} float32 values"
        )
    arr = np.frombuffer(data, dtype="<f4").copy()
    arr.setflags(write=False)  # loaded traces are shared read-only across threads
    return arr


def load_trace(path: str | Path, load_raw: bool = False) -> Trace:
    """Load and validate a trace directory.

    Raises TraceError on any contract violation, naming the offending field.
    """
    path = Path(path)
    meta_path = path / "meta.json"
    attn_path = path / "attn.bin"
    if not meta_path.is_file():
        raise TraceError(f"meta.json: missing from {path}")
    if not attn_path.is_file():
        raise TraceError(f"attn.bin: missing from {path}")
    try:
        d = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TraceError(f"meta.json: invalid JSON ({exc})") from exc
    meta, raw_dims = _meta_from_dict(d)
    meta.validate()
    t, k = meta.n_gen_tokens(), meta.n_source_tokens()
    attn = _read_f32(attn_path, t * k, "attn.bin").reshape(t, k)
    validate_matrix(attn, meta)
    raw = None
    if load_raw and raw_dims is not None:
        raw_path = path / "raw.bin"
        if not raw_path.is_file():
            raise TraceError(f"raw.bin: declared by raw_dims but missing from {path}")
        n = int(np.prod(raw_dims))
        raw = _read_f32(raw_path, n, "raw.bin").reshape(raw_dims)
        validate_raw(raw)
        if raw_dims[0] != t or raw_dims[3] != k:
            raise TraceError(f"raw_dims: {raw_dims} inconsistent with attn shape ({t}, {k})")
    return Trace(meta=meta, attn=attn, raw=raw)


def save_trace(trace: Trace, path: str | Path) -> Path:
    """Write a trace directory; canonical serialization so saves are reproducible."""
    trace.meta.validate()
    validate_matrix(trace.attn, trace.meta)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    raw_dims = tuple(trace.raw.shape) if trace.raw is not None else None
    meta_json = json.dumps(
        _meta_to_dict(trace.meta, raw_dims), ensure_ascii=False, sort_keys=True, indent=2
    )
    (path / "meta.json").write_text(meta_json + "\n", encoding="utf-8")
    (path / "attn.bin").write_bytes(np.ascontiguousarray(trace.attn, dtype="<f4").tobytes())
    if trace.raw is not None:
        validate_raw(trace.raw)
        (path / "raw.bin").write_bytes(np.ascontiguousarray(trace.raw, dtype="<f4").tobytes())
    return path
