"""Citation-map scoring (Text F1/EM, Img Acc, Joint EM) and ROUGE-1/L.

Scores are kept in [0, 1]; the report printer renders x100 with two
decimals. Per-sentence scores are averaged within a sample, then across
samples (macro over samples). Image agreement is computed over multimodal
samples only.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .chunking import IMG
from .engine import CitationMap


class MetricsError(ValueError):
    """Raised when prediction and reference maps cannot be aligned."""


@dataclass
class EvalReport:
    text_macro_f1: float
    text_em: float
    joint_em: float
    img_acc: Optional[float]
    n_samples: int
    n_sentences: int
    rouge1_f: Optional[float] = None
    rougeL_f: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "text_macro_f1": self.text_macro_f1,
            "text_em": self.text_em,
            "img_acc": self.img_acc,
            "joint_em": self.joint_em,
            "n_samples": self.n_samples,
            "n_sentences": self.n_sentences,
            "rouge1_f": self.rouge1_f,
            "rougeL_f": self.rougeL_f,
        }

    def format_lines(self) -> list[str]:
        def pct(x: Optional[float]) -> str:
            return "--" if x is None else f"{100.0 * x:.2f}"

        lines = [
            f"Text Macro-F1   {pct(self.text_macro_f1)}",
            f"Text EM         {pct(self.text_em)}",
            f"Img Acc         {pct(self.img_acc)}",
            f"Joint EM        {pct(self.joint_em)}",
            f"Samples         {self.n_samples}",
            f"Sentences       {self.n_sentences}",
        ]
        if self.rouge1_f is not None:
            lines.append(f"ROUGE-1 F       {pct(self.rouge1_f)}")
        if self.rougeL_f is not None:
            lines.append(f"ROUGE-L F       {pct(self.rougeL_f)}")
        return lines


def sentence_text_f1(pred: set, ref: set) -> float:
    """Set F1 over IMG-stripped citation sets; both empty counts as 1."""
    p_text = {c for c in pred if c != IMG}
    r_text = {c for c in ref if c != IMG}
    if not p_text and not r_text:
        return 1.0
    if not p_text or not r_text:
        return 0.0
    inter = len(p_text & r_text)
    if inter == 0:
        return 0.0
    precision = inter / len(p_text)
    recall = inter / len(r_text)
    return 2.0 * precision * recall / (precision + recall)


def score_citations(
    pred: Mapping[str, CitationMap],
    ref: Mapping[str, CitationMap],
    multimodal: Optional[set] = None,
    pooled: bool = False,
) -> EvalReport:
    """Score predictions against references over identical sample/sentence keys.

    `multimodal` names the samples that carry an image; when omitted, a
    sample counts as multimodal if IMG occurs anywhere in its reference or
    prediction. Default aggregation is macro over samples of per-sample
    sentence means; `pooled=True` averages over all sentences directly.
    """
    if set(pred) != set(ref):
        missing = set(ref) ^ set(pred)
        raise MetricsError(f"sample mismatch between pred and ref: {sorted(missing)[:5]}")
    if not pred:
        raise MetricsError("no samples to score")

    f1s, ems, joints, img_accs = [], [], [], []
    n_sentences = 0
    n_samples = 0
    for sample_id in sorted(pred):
        p_map, r_map = pred[sample_id], ref[sample_id]
        if set(p_map) != set(r_map):
            raise MetricsError(
                f"sentence-index mismatch in sample {sample_id!r}: "
                f"pred {sorted(p_map)} vs ref {sorted(r_map)}"
            )
        if not r_map:
            raise MetricsError(f"sample {sample_id!r} has no sentences")
        sample_f1, sample_em, sample_joint, sample_img = [], [], [], []
        for j in sorted(r_map):
            p, r = p_map[j], r_map[j]
            sample_f1.append(sentence_text_f1(p, r))
            p_text = {c for c in p if c != IMG}
            r_text = {c for c in r if c != IMG}
            sample_em.append(1.0 if p_text == r_text else 0.0)
            sample_joint.append(1.0 if p == r else 0.0)
            sample_img.append(1.0 if (IMG in p) == (IMG in r) else 0.0)
        n_sentences += len(r_map)
        n_samples += 1
        if pooled:
            f1s.extend(sample_f1)
            ems.extend(sample_em)
            joints.extend(sample_joint)
        else:
            f1s.append(sum(sample_f1) / len(sample_f1))
            ems.append(sum(sample_em) / len(sample_em))
            joints.append(sum(sample_joint) / len(sample_joint))
        is_multimodal = (
            sample_id in multimodal
            if multimodal is not None
            else any(IMG in s for s in list(p_map.values()) + list(r_map.values()))
        )
        if is_multimodal:
            if pooled:
                img_accs.extend(sample_img)
            else:
                img_accs.append(sum(sample_img) / len(sample_img))

    n = len(f1s)
    return EvalReport(
        text_macro_f1=sum(f1s) / n,
        text_em=sum(ems) / n,
        joint_em=sum(joints) / n,
        img_acc=(sum(img_accs) / len(img_accs)) if img_accs else None,
        n_samples=n_samples,
        n_sentences=n_sentences,
    )


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _f1(overlap: float, n_pred: int, n_ref: int) -> float:
    if n_pred == 0 and n_ref == 0:
        return 1.0
    if n_pred == 0 or n_ref == 0 or overlap == 0:
        return 0.0
    p = overlap / n_pred
    r = overlap / n_ref
    return 2.0 * p * r / (p + r)


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Classic O(len(a)*len(b)) longest-common-subsequence DP."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[len(b)]


def rouge(pred_text: str, ref_text: str) -> tuple[float, float]:
    """(ROUGE-1 F1, ROUGE-L F1) with lowercase alphanumeric tokenization.

    ROUGE-1 uses clipped unigram counts; ROUGE-L uses the LCS over the
    whole-text token sequences with beta = 1. Both-empty scores 1, one
    empty scores 0.
    """
    pred = _tokenize(pred_text)
    ref = _tokenize(ref_text)
    pred_counts, ref_counts = Counter(pred), Counter(ref)
    overlap = sum(min(c, ref_counts[tok]) for tok, c in pred_counts.items())
    rouge1 = _f1(overlap, len(pred), len(ref))
    rougeL = _f1(lcs_length(pred, ref), len(pred), len(ref))
    return rouge1, rougeL
