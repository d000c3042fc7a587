"""Corpus preparation: report filtering and reference-annotation ingestion.

The report filter keeps single-report patients, extracts FINDINGS and
IMPRESSION sections by header matching, and enforces minimum sentence
counts on both. Reference annotations arrive as per-sample blocks of
`[j] [ids]` lines and parse into citation maps.

Corpus samples travel as newline-delimited JSON records with fields
{id, source, summary?, image?, references?}; one format feeds attribution,
baselines, and metrics uniformly.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .chunking import IMG, split_sentences
from .baselines import parse_self_attribution
from .engine import CitationMap, citation_map_from_record, citation_map_to_record


class CorpusError(ValueError):
    pass


@dataclass
class ReportRecord:
    patient_id: str
    findings: str
    impression: str
    source_path: str


@dataclass
class FilterResult:
    kept: list[ReportRecord]
    drops: Counter = field(default_factory=Counter)

    @property
    def accounted(self) -> int:
        return len(self.kept) + sum(self.drops.values())


DEFAULT_FINDINGS_RE = r"findings\s*:"
DEFAULT_IMPRESSION_RE = r"impression\s*:"
# Terminates a section at the next all-caps header (e.g. "IMPRESSION:",
# "COMPARISON:"); at least three uppercase chars before the colon.
DEFAULT_HEADER_RE = r"\b[A-Z][A-Z ()]{2,}:"


def extract_section(
    text: str, start_pattern: str, header_pattern: str = DEFAULT_HEADER_RE
) -> Optional[str]:
    """Text between a case-insensitive section header and the next all-caps header."""
    m = re.search(start_pattern, text, flags=re.IGNORECASE)
    if m is None:
        return None
    rest = text[m.end() :]
    nxt = re.search(header_pattern, rest)
    body = rest[: nxt.start()] if nxt else rest
    body = body.strip()
    return body or None


def filter_mimic(
    reports: Iterable[tuple],
    min_findings: int = 9,
    min_impression: int = 5,
    findings_pattern: str = DEFAULT_FINDINGS_RE,
    impression_pattern: str = DEFAULT_IMPRESSION_RE,
    header_pattern: str = DEFAULT_HEADER_RE,
) -> FilterResult:
    """Keep single-report patients whose sections clear the sentence minimums.

    Items are (patient_id, raw_text) or (patient_id, raw_text, source_path).
    Nothing raises: every input report is either kept or counted under one
    drop reason (multi_report, missing_section, too_short).
    """
    first: dict[str, tuple] = {}
    counts: Counter = Counter()
    order: list[str] = []
    for item in reports:
        patient_id, raw_text = item[0], item[1]
        source_path = item[2] if len(item) > 2 else patient_id
        counts[patient_id] += 1
        if patient_id not in first:
            first[patient_id] = (raw_text, source_path)
            order.append(patient_id)

    result = FilterResult(kept=[])
    for patient_id in sorted(order):
        n = counts[patient_id]
        if n > 1:
            result.drops["multi_report"] += n
            continue
        raw_text, source_path = first[patient_id]
        findings = extract_section(raw_text, findings_pattern, header_pattern)
        impression = extract_section(raw_text, impression_pattern, header_pattern)
        if findings is None or impression is None:
            result.drops["missing_section"] += 1
            continue
        if (
            len(split_sentences(findings)) < min_findings
            or len(split_sentences(impression)) < min_impression
        ):
            result.drops["too_short"] += 1
            continue
        result.kept.append(
            ReportRecord(
                patient_id=patient_id,
                findings=findings,
                impression=impression,
                source_path=source_path,
            )
        )
    return result


_BLOCK_HEADER_RE = re.compile(r"^#\s*sample\s+(\S+)\s*$")


def parse_reference_annotations(
    path: str | Path,
    sources: Optional[dict] = None,
) -> dict[str, CitationMap]:
    """Parse a reference file of per-sample citation blocks.

    Format: a `# sample <id>` header line starts each block; the block body
    is `[j] [ids]` lines. When `sources` maps sample ids to
    {"n_sentences": int, "has_image": bool}, cited ids are range- and
    modality-checked.
    """
    text = Path(path).read_text(encoding="utf-8")
    blocks: dict[str, list[str]] = {}
    current: Optional[str] = None
    for raw in text.splitlines():
        m = _BLOCK_HEADER_RE.match(raw.strip())
        if m:
            current = m.group(1)
            if current in blocks:
                raise CorpusError(f"duplicate sample block {current!r}")
            blocks[current] = []
            continue
        if current is not None:
            blocks[current].append(raw)
    if not blocks:
        raise CorpusError(f"no '# sample <id>' blocks found in {path}")

    out: dict[str, CitationMap] = {}
    for sample_id, lines in blocks.items():
        cmap = parse_self_attribution("\n".join(lines))
        if sources is not None and sample_id in sources:
            info = sources[sample_id]
            n_sentences = info.get("n_sentences")
            has_image = info.get("has_image", True)
            for j, cites in cmap.items():
                for c in cites:
                    if c == IMG:
                        if not has_image:
                            raise CorpusError(
                                f"sample {sample_id!r} sentence {j}: IMG cited on a text-only sample"
                            )
                    elif n_sentences is not None and not (0 <= c < n_sentences):
                        raise CorpusError(
                            f"sample {sample_id!r} sentence {j}: source id {c} out of range "
                            f"[0, {n_sentences})"
                        )
        out[sample_id] = cmap
    return out


def format_reference_annotations(refs: dict[str, CitationMap]) -> str:
    from .baselines import format_self_attribution

    parts = []
    for sample_id in sorted(refs):
        parts.append(f"# sample {sample_id}")
        parts.append(format_self_attribution(refs[sample_id]).rstrip("\n"))
        parts.append("")
    return "\n".join(parts).rstrip("\n") + "\n"


@dataclass
class Sample:
    id: str
    source: str
    summary: Optional[str] = None
    image: bool = False
    references: Optional[CitationMap] = None


def load_corpus(path: str | Path) -> list[Sample]:
    """Read newline-delimited {id, source, summary?, image?, references?} records."""
    samples = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
        if "id" not in d or "source" not in d:
            raise CorpusError(f"{path}:{line_no}: record needs 'id' and 'source'")
        refs = d.get("references")
        samples.append(
            Sample(
                id=str(d["id"]),
                source=d["source"],
                summary=d.get("summary"),
                image=bool(d.get("image", False)),
                references=citation_map_from_record({"sid_map": refs}) if refs else None,
            )
        )
    return samples


def save_corpus(samples: list[Sample], path: str | Path) -> None:
    lines = []
    for s in samples:
        d: dict = {"id": s.id, "source": s.source}
        if s.summary is not None:
            d["summary"] = s.summary
        if s.image:
            d["image"] = True
        if s.references is not None:
            d["references"] = citation_map_to_record(s.references)["sid_map"]
        lines.append(json.dumps(d, ensure_ascii=False, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
