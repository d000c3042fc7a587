"""Trace extraction from attention-exposing Hugging Face causal LMs.

This is the only component allowed to touch a model runtime. It greedily
generates a summary while recording per-step decoder attentions, pools
them over layers and heads (one query row per generated token), and writes
a trace directory in the container format the attribution engine consumes:
`meta.json` + `attn.bin` (+ optional `raw.bin`). The writer here is an
independent implementation of that file contract; nothing from the
attribution package is imported.

Prompts put the document first and the instruction after it, so source
sentence ids count document sentences from zero; instruction tokens fall
outside `source_region` and can never be cited. Image handling mirrors how
VLM processors splice patch embeddings: a block of image-token positions
with zero-width char spans, recorded as `image_block` (IMG_RAW), or a
model-generated one-sentence caption substituted for the placeholder with
its char span recorded (IMG_CAP).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

SCHEMA_VERSION = 1
IMAGE_PLACEHOLDER = "<image>"
DEFAULT_INSTRUCTION = "Summarize the document above in a few sentences."
DEFAULT_CAPTION_PROMPT = "Describe the image in one short sentence."


class ExtractError(RuntimeError):
    pass


@dataclass
class ExtractionJob:
    """One extraction: greedy decoding only, per the trace contract."""

    model: Optional[str]  # HF id or local dir; None when a runner is passed in
    mode: str  # TEXT | IMG_RAW | IMG_CAP
    source_text: str
    out_dir: str | Path
    image_path: Optional[str] = None
    dump_raw: bool = False
    max_new_tokens: int = 48
    instruction: str = DEFAULT_INSTRUCTION

    def validate(self) -> None:
        if self.mode not in ("TEXT", "IMG_RAW", "IMG_CAP"):
            raise ExtractError(f"unknown mode {self.mode!r}")
        if self.mode in ("IMG_RAW", "IMG_CAP") and not self.image_path:
            raise ExtractError(f"{self.mode} requires an image")
        if not self.source_text.strip():
            raise ExtractError("source text is empty")


class HFRunner:
    """Greedy generation with eager attentions on a causal LM.

    The tokenizer must be a fast tokenizer (offset mappings come from it).
    `image_token` names the vocabulary entry standing in for one image
    patch position; text-only checkpoints use it verbatim, multimodal
    checkpoints can subclass `caption` and the image splice.
    """

    def __init__(
        self,
        model,
        tokenizer,
        image_token: str = "<img>",
        n_image_tokens: int = 4,
        caption_max_tokens: int = 12,
    ):
        if not getattr(tokenizer, "is_fast", False):
            raise ExtractError("tokenizer without offset mapping (fast tokenizer required)")
        self.model = model.eval()
        self.tokenizer = tokenizer
        self.image_token = image_token
        self.n_image_tokens = n_image_tokens
        self.caption_max_tokens = caption_max_tokens
        # Attention weights are only materialized by the eager path.
        self.model.config._attn_implementation = "eager"

    @classmethod
    def from_pretrained(cls, model_id: str, **kwargs) -> "HFRunner":
        from transformers import AutoModelForCausalLM, AutoTokenizer

        model = AutoModelForCausalLM.from_pretrained(model_id, attn_implementation="eager")
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        return cls(model, tokenizer, **kwargs)

    @property
    def image_token_id(self) -> int:
        ids = self.tokenizer.convert_tokens_to_ids([self.image_token])
        if ids[0] is None or ids[0] == self.tokenizer.unk_token_id:
            raise ExtractError(f"image token {self.image_token!r} not in vocabulary")
        return ids[0]

    def encode_with_offsets(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        enc = self.tokenizer(text, return_offsets_mapping=True, add_special_tokens=False)
        return list(enc["input_ids"]), [tuple(o) for o in enc["offset_mapping"]]

    @torch.no_grad()
    def generate(self, input_ids: list[int], max_new_tokens: int):
        """Returns (generated ids, attention steps). Greedy decoding."""
        device = next(self.model.parameters()).device
        ids = torch.tensor([input_ids], dtype=torch.long, device=device)
        pad_id = self.tokenizer.pad_token_id
        if pad_id is None:
            pad_id = self.tokenizer.eos_token_id
        if pad_id is None:
            pad_id = 0
        out = self.model.generate(
            ids,
            do_sample=False,
            max_new_tokens=max_new_tokens,
            output_attentions=True,
            return_dict_in_generate=True,
            pad_token_id=pad_id,
        )
        gen_ids = out.sequences[0, len(input_ids):].tolist()
        attentions = out.attentions
        if not attentions or not attentions[0] or attentions[0][0] is None:
            raise ExtractError(
                "model does not expose attention outputs (needs eager attention)"
            )
        return gen_ids, attentions

    def caption(self, image_path: str) -> str:
        """One-sentence caption for the image.

        A text-only checkpoint cannot condition on pixels; it decodes from
        a fixed caption prompt, which is enough to exercise the IMG_CAP
        plumbing. Multimodal runners should override this with a real
        image-conditioned call.
        """
        ids, _ = self.encode_with_offsets(DEFAULT_CAPTION_PROMPT)
        gen_ids, _ = self.generate(ids, self.caption_max_tokens)
        text = self.tokenizer.decode(gen_ids, skip_special_tokens=True).strip()
        return normalize_caption(text)


def normalize_caption(text: str) -> str:
    """Collapse model output to a single capitalized sentence ending in '.'."""
    text = " ".join(text.split())
    for i, ch in enumerate(text):
        if ch in ".!?":
            text = text[: i + 1]
            break
    if not text:
        text = "An image."
    if text[-1] not in ".!?":
        text += "."
    for i, ch in enumerate(text):
        if ch.isalpha():
            text = text[:i] + ch.upper() + text[i + 1 :]
            break
    return text


def _trim_spans(
    text: str, offsets: list[tuple[int, int]]
) -> list[tuple[int, int]]:
    """Strip leading whitespace from token spans.

    Whitespace-only tokens become zero-width at the next non-whitespace
    character, so every span either covers text or pins to a sentence
    position; the chunker requires source-region starts to sit on covered
    characters.
    """
    trimmed = []
    for s, e in offsets:
        while s < e and text[s].isspace():
            s += 1
        if s == e:
            p = s
            while p < len(text) and text[p].isspace():
                p += 1
            s = e = p
        trimmed.append((s, e))
    return trimmed


def _gen_token_spans(runner: HFRunner, gen_ids: list[int]) -> tuple[str, list[tuple[int, int]]]:
    """Generated text and per-token char spans via incremental decoding.

    Special tokens (EOS etc.) are dropped from the text and carry zero-width
    spans, so they belong to no summary sentence.
    """
    spans = []
    prev = ""
    for n in range(1, len(gen_ids) + 1):
        cur = runner.tokenizer.decode(gen_ids[:n], skip_special_tokens=True)
        s, e = len(prev), len(cur)
        while s < e and cur[s].isspace():
            s += 1
        spans.append((s, e))
        prev = cur
    return prev, spans


def _pool_step(step, prompt_len: int) -> tuple[np.ndarray, np.ndarray]:
    """One generation step -> (pooled row over source columns, raw (L,H,K))."""
    layers = []
    for layer in step:
        a = layer[0]  # (H, q, kv)
        layers.append(a[:, -1, :prompt_len].detach().to("cpu", torch.float32).numpy())
    raw = np.stack(layers)  # (L, H, K)
    pooled = raw.astype(np.float64).mean(axis=(0, 1)).astype(np.float32)
    return pooled, raw


def extract(job: ExtractionJob, runner: Optional[HFRunner] = None) -> Path:
    """Run the job and write a trace directory; returns its path."""
    job.validate()
    if runner is None:
        if not job.model:
            raise ExtractError("no model id and no runner supplied")
        runner = HFRunner.from_pretrained(job.model)

    document = job.source_text.strip()
    caption_span = None
    placeholder_at = document.find(IMAGE_PLACEHOLDER)
    insert_char = 0  # where IMG_RAW splices its image-token block

    if job.mode == "IMG_CAP":
        caption = runner.caption(job.image_path)
        if placeholder_at < 0:
            # no placeholder: the caption becomes the document's last sentence
            document = document + " " + caption
        else:
            document = (
                document[:placeholder_at]
                + caption
                + document[placeholder_at + len(IMAGE_PLACEHOLDER):]
            ).rstrip()
        cap_start = placeholder_at if placeholder_at >= 0 else len(document) - len(caption)
        caption_span = (cap_start, cap_start + len(caption))
    elif placeholder_at >= 0:
        # TEXT and IMG_RAW prompts never show the literal placeholder
        before = document[:placeholder_at]
        after = document[placeholder_at + len(IMAGE_PLACEHOLDER):]
        merged = before + after
        lead = len(merged) - len(merged.lstrip())
        document = merged.strip()
        insert_char = max(0, min(len(before) - lead, len(document)))

    prompt = document + "\n\n" + job.instruction
    input_ids, offsets = runner.encode_with_offsets(prompt)
    if not input_ids:
        raise ExtractError("prompt tokenized to nothing")
    spans = _trim_spans(prompt, offsets)
    doc_len = len(document)
    n_doc_tokens = sum(1 for s, _ in spans if s < doc_len)
    source_region = (0, n_doc_tokens)

    image_block = None
    if job.mode == "IMG_RAW":
        insert_idx = n_doc_tokens
        for t, (s, _e) in enumerate(spans):
            if s >= insert_char:
                insert_idx = min(t, n_doc_tokens)
                break
        if insert_idx < n_doc_tokens:
            anchor = spans[insert_idx][0]
        else:  # block sits at the document/instruction boundary
            anchor = max(doc_len, spans[insert_idx - 1][1]) if insert_idx else doc_len
        n_img = runner.n_image_tokens
        input_ids = input_ids[:insert_idx] + [runner.image_token_id] * n_img + input_ids[insert_idx:]
        spans = spans[:insert_idx] + [(anchor, anchor)] * n_img + spans[insert_idx:]
        image_block = (insert_idx, insert_idx + n_img)
        if insert_idx < n_doc_tokens:
            source_region = (0, n_doc_tokens + n_img)

    gen_ids, attentions = runner.generate(input_ids, job.max_new_tokens)
    if not gen_ids:
        raise ExtractError("model generated no tokens")

    prompt_len = len(input_ids)
    pooled_rows = []
    raw_steps = []
    for step in attentions:
        pooled, raw = _pool_step(step, prompt_len)
        pooled_rows.append(pooled)
        if job.dump_raw:
            raw_steps.append(raw)
    attn = np.stack(pooled_rows)  # (T_gen, K_src)

    gen_text, gen_spans = _gen_token_spans(runner, gen_ids)

    meta = {
        "schema_version": SCHEMA_VERSION,
        "mode": job.mode,
        "source_text": prompt,
        "source_tokens": [list(s) for s in spans],
        "image_block": list(image_block) if image_block else None,
        "caption_span": list(caption_span) if job.mode == "IMG_CAP" else None,
        "gen_text": gen_text,
        "gen_tokens": [list(s) for s in gen_spans],
        "source_region": list(source_region),
    }
    raw_tensor = np.stack(raw_steps) if raw_steps else None
    if raw_tensor is not None:
        meta["raw_dims"] = list(raw_tensor.shape)

    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "meta.json").write_text(
        json.dumps(meta, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    (out_dir / "attn.bin").write_bytes(np.ascontiguousarray(attn, dtype="<f4").tobytes())
    if raw_tensor is not None:
        (out_dir / "raw.bin").write_bytes(
            np.ascontiguousarray(raw_tensor, dtype="<f4").tobytes()
        )
    return out_dir
