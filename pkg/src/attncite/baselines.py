"""Comparison systems: embedding-similarity attribution and the
self-attribution output parser.

Embedding vectors are ingested from files, never computed here; the engine
stays model-free. The similarity baseline ranks source sentences by cosine
for each summary sentence, keeps those above a threshold up to a cap, and
attaches IMG to the single summary sentence most similar to the image in
the shared text-image space (evicting the last text citation if the list
is full).
"""

from __future__ import annotations

import base64
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .chunking import IMG
from .engine import CitationMap, sorted_citations

NORM_TOL = 1e-4


class BaselineError(ValueError):
    pass


class CitationParseError(ValueError):
    def __init__(self, line_no: int, line: str, reason: str):
        self.line_no = line_no
        self.line = line
        super().__init__(f"line {line_no}: {reason}: {line!r}")


@dataclass
class EmbeddingSet:
    """Unit-norm sentence/image vectors for one sample.

    Text-space vectors score sentence-to-sentence similarity; the optional
    shared-space vectors score sentence-to-image similarity.
    """

    src_text_vecs: np.ndarray  # (n_src, d_text)
    gen_text_vecs: np.ndarray  # (n_gen, d_text)
    gen_clip_vecs: Optional[np.ndarray] = None  # (n_gen, d_clip)
    img_vec: Optional[np.ndarray] = None  # (d_clip,)

    def validate(self) -> None:
        if self.src_text_vecs.ndim != 2 or self.gen_text_vecs.ndim != 2:
            raise BaselineError("text vectors must be 2-d arrays")
        if self.src_text_vecs.shape[1] != self.gen_text_vecs.shape[1]:
            raise BaselineError(
                f"text dimensionality mismatch: src {self.src_text_vecs.shape[1]} "
                f"vs gen {self.gen_text_vecs.shape[1]}"
            )
        if (self.img_vec is None) != (self.gen_clip_vecs is None):
            raise BaselineError("img_vec and gen_clip_vecs must be present together")
        if self.img_vec is not None:
            if self.gen_clip_vecs.shape[0] != self.gen_text_vecs.shape[0]:
                raise BaselineError("gen_clip_vecs must cover every summary sentence")
            if self.gen_clip_vecs.shape[1] != self.img_vec.shape[0]:
                raise BaselineError(
                    f"shared-space dimensionality mismatch: {self.gen_clip_vecs.shape[1]} "
                    f"vs {self.img_vec.shape[0]}"
                )
        for name, arr in (
            ("src_text_vecs", self.src_text_vecs),
            ("gen_text_vecs", self.gen_text_vecs),
            ("gen_clip_vecs", self.gen_clip_vecs),
        ):
            if arr is None:
                continue
            norms = np.linalg.norm(arr, axis=1)
            if np.abs(norms - 1.0).max(initial=0.0) > NORM_TOL:
                raise BaselineError(f"{name}: vectors not unit-norm within {NORM_TOL}")
        if self.img_vec is not None:
            if abs(float(np.linalg.norm(self.img_vec)) - 1.0) > NORM_TOL:
                raise BaselineError(f"img_vec: not unit-norm within {NORM_TOL}")


@dataclass
class BaselineConfig:
    threshold_text: float = 0.5
    max_sources: int = 10

    def validate(self) -> None:
        if self.max_sources < 1:
            raise BaselineError(f"max_sources must be >= 1, got {self.max_sources}")


def _cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    sims = a64 @ b64.T
    sims /= np.linalg.norm(a64, axis=1)[:, None]
    sims /= np.linalg.norm(b64, axis=1)[None, :]
    return sims


def embed_attribute(emb: EmbeddingSet, cfg: BaselineConfig) -> CitationMap:
    """Similarity-threshold attribution with a single enforced IMG citation."""
    emb.validate()
    cfg.validate()
    sim_text = _cosine_rows(emb.gen_text_vecs, emb.src_text_vecs)  # (n_gen, n_src)

    have_img = emb.img_vec is not None
    if have_img:
        img64 = emb.img_vec.astype(np.float64)
        sim_img = emb.gen_clip_vecs.astype(np.float64) @ img64
        sim_img /= np.linalg.norm(emb.gen_clip_vecs.astype(np.float64), axis=1)
        sim_img /= np.linalg.norm(img64)
        img_best = int(np.argmax(sim_img))  # ties: lower sentence index
    else:
        img_best = -1

    n_gen, n_src = sim_text.shape
    cmap: CitationMap = {}
    for i in range(n_gen):
        row = sim_text[i]
        # Descending similarity, ties broken by lower source index.
        order = np.argsort(-row, kind="stable")
        chosen: list = []
        for idx in order:
            if row[idx] >= cfg.threshold_text:
                chosen.append(int(idx))
            if len(chosen) >= cfg.max_sources:
                break
        if have_img and i == img_best:
            if len(chosen) >= cfg.max_sources:
                chosen = chosen[: cfg.max_sources - 1]
            chosen.append(IMG)
        cmap[i] = set(chosen)
    return cmap


_RECORD_RE = re.compile(r"^\[(\d+)\]\s*\[([^\[\]]*)\]\s*$")
_ID_RE = re.compile(r"^\d+$")


def parse_self_attribution(text: str) -> CitationMap:
    """Parse `[j] [i1, i2, ..., IMG?]` lines into a citation map.

    Lines not shaped like a record (prose, blanks) are ignored; a line that
    starts with `[` but fails to parse raises CitationParseError with the
    line number. Duplicate ids within a line are deduplicated; repeated
    sentence indices merge their sets.
    """
    cmap: CitationMap = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line.startswith("["):
            continue
        m = _RECORD_RE.match(line)
        if not m:
            raise CitationParseError(line_no, raw, "unparseable citation record")
        j = int(m.group(1))
        body = m.group(2).strip()
        cites = set()
        if body:
            for tok in body.split(","):
                tok = tok.strip()
                if tok == IMG:
                    cites.add(IMG)
                elif _ID_RE.match(tok):
                    cites.add(int(tok))
                else:
                    raise CitationParseError(line_no, raw, f"unparseable id token {tok!r}")
        cmap.setdefault(j, set()).update(cites)
    return cmap


def format_self_attribution(cmap: CitationMap) -> str:
    """Inverse of parse_self_attribution for valid maps."""
    lines = []
    for j in sorted(cmap):
        cites = sorted_citations(cmap[j])
        lines.append(f"[{j}] [{', '.join(str(c) for c in cites)}]")
    return "\n".join(lines) + ("\n" if lines else "")


def _b64_vec(vec: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(vec, dtype="<f4").tobytes()).decode("ascii")


def _vec_from_b64(s: str, dim: int, field: str) -> np.ndarray:
    data = base64.b64decode(s)
    if len(data) != dim * 4:
        raise BaselineError(f"{field}: expected {dim} float32 values, got {len(data)} bytes")
    return np.frombuffer(data, dtype="<f4").copy()


def save_embeddings(emb: EmbeddingSet, path: str | Path) -> None:
    emb.validate()
    d = {
        "text_dim": int(emb.src_text_vecs.shape[1]),
        "clip_dim": int(emb.img_vec.shape[0]) if emb.img_vec is not None else None,
        "src_text_vecs": [_b64_vec(v) for v in emb.src_text_vecs],
        "gen_text_vecs": [_b64_vec(v) for v in emb.gen_text_vecs],
        "gen_clip_vecs": (
            [_b64_vec(v) for v in emb.gen_clip_vecs] if emb.gen_clip_vecs is not None else None
        ),
        "img_vec": _b64_vec(emb.img_vec) if emb.img_vec is not None else None,
    }
    Path(path).write_text(
        json.dumps(d, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_embeddings(path: str | Path) -> EmbeddingSet:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    text_dim = int(d["text_dim"])
    clip_dim = d.get("clip_dim")
    src = np.stack([_vec_from_b64(v, text_dim, "src_text_vecs") for v in d["src_text_vecs"]])
    gen = np.stack([_vec_from_b64(v, text_dim, "gen_text_vecs") for v in d["gen_text_vecs"]])
    gen_clip = None
    img = None
    if d.get("img_vec") is not None:
        clip_dim = int(clip_dim)
        gen_clip = np.stack(
            [_vec_from_b64(v, clip_dim, "gen_clip_vecs") for v in d["gen_clip_vecs"]]
        )
        img = _vec_from_b64(d["img_vec"], clip_dim, "img_vec")
    emb = EmbeddingSet(src_text_vecs=src, gen_text_vecs=gen, gen_clip_vecs=gen_clip, img_vec=img)
    emb.validate()
    return emb
