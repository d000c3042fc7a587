"""Operator CLI: attribution runs, baselines, evaluation, sweeps, corpus
filtering, synthetic fixtures, and report rendering.

All outputs are deterministic: samples and sweep cells may execute on a
thread pool (capped by the ATTN_CITE_THREADS env var) but results are
keyed and sorted before writing, so byte-identical files come out at any
thread count. Failures print a machine-readable JSON error record to
stderr; exit codes: 2 usage, 3 missing input, 4 mode/trace mismatch,
1 other errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import baselines, corpus, metrics, synth
from .chunking import IMG, split_sentences
from .engine import (
    EngineConfig,
    ModeMismatchError,
    attribute,
    citation_map_from_record,
    citation_map_to_record,
)
from .trace import Trace, load_trace, save_trace

MODE_FLAGS = {"text": "TEXT", "img-raw": "IMG_RAW", "img-cap": "IMG_CAP", "auto": None}

EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_MODE_MISMATCH = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _n_threads() -> int:
    env = os.environ.get("ATTN_CITE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise CliError(f"ATTN_CITE_THREADS must be an integer, got {env!r}") from exc
    return min(8, os.cpu_count() or 1)


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {p}", code=EXIT_MISSING_INPUT)
    return p


def _trace_dirs(path: Path) -> list[tuple[str, Path]]:
    """A trace dir itself, or every immediate subdir holding a meta.json."""
    if (path / "meta.json").is_file():
        return [(path.name, path)]
    found = sorted(
        (child.name, child) for child in path.iterdir() if (child / "meta.json").is_file()
    )
    if not found:
        raise CliError(f"no trace directories under {path}", code=EXIT_MISSING_INPUT)
    return found


def _write_predictions(records: list[dict], out: Path) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in records]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_citation_jsonl(path: Path) -> dict[str, dict]:
    maps = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        record = json.loads(line)
        sample_id = str(record.get("id", line_no - 1))
        maps[sample_id] = citation_map_from_record(record)
    if not maps:
        raise CliError(f"no citation records in {path}", code=EXIT_MISSING_INPUT)
    return maps


def _sources_info(samples) -> dict:
    return {
        s.id: {"n_sentences": len(split_sentences(s.source)), "has_image": s.image}
        for s in samples
    }


def _validate_refs(maps: dict[str, dict], info: dict) -> None:
    for sample_id, cmap in maps.items():
        if sample_id not in info:
            continue
        n_sentences = info[sample_id]["n_sentences"]
        has_image = info[sample_id]["has_image"]
        for j, cites in cmap.items():
            for c in cites:
                if c == IMG:
                    if not has_image:
                        raise CliError(
                            f"sample {sample_id!r} sentence {j}: IMG cited on a text-only sample"
                        )
                elif not (0 <= c < n_sentences):
                    raise CliError(
                        f"sample {sample_id!r} sentence {j}: source id {c} out of range "
                        f"[0, {n_sentences})"
                    )


def _read_reference_maps(path: Path, corpus_samples=None) -> dict[str, dict]:
    """References as JSONL sid_map records or '# sample' annotation blocks."""
    info = _sources_info(corpus_samples) if corpus_samples else None
    text = path.read_text(encoding="utf-8")
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.lstrip().startswith("{"):
            maps = _read_citation_jsonl(path)
        else:
            maps = corpus.parse_reference_annotations(path, sources=info)
        if info:
            _validate_refs(maps, info)
        return maps
    raise CliError(f"empty reference file {path}", code=EXIT_MISSING_INPUT)


def _parse_float_axis(text: str) -> list[float]:
    """Either a comma list ('0.1,0.16') or an inclusive range ('0.10:0.30:0.02')."""
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise CliError(f"range step must be positive in {text!r}")
        values = []
        i = 0
        while True:
            v = round(start + i * step, 10)
            if v > stop + 1e-9:
                break
            values.append(v)
            i += 1
        return values
    return [float(x) for x in text.split(",") if x.strip()]


# --- subcommands -----------------------------------------------------------


def cmd_attribute(args) -> int:
    traces = _trace_dirs(_require(args.trace, "trace directory"))
    records = {}

    def run(item):
        sample_id, trace_dir = item
        trace = load_trace(trace_dir)
        mode = MODE_FLAGS[args.mode] or trace.meta.mode
        cfg = EngineConfig(k=args.k, vote=args.vote, tau=args.tau, mode=mode)
        cmap = attribute(trace.meta, trace.attn, cfg, dialogue_mode=args.dialogue)
        return sample_id, cmap

    with ThreadPoolExecutor(max_workers=_n_threads()) as pool:
        for sample_id, cmap in pool.map(run, traces):
            records[sample_id] = cmap

    out = [
        {"id": sample_id, **citation_map_to_record(records[sample_id])}
        for sample_id in sorted(records)
    ]
    _write_predictions(out, Path(args.out))
    print(f"wrote {len(out)} citation map(s) to {args.out}")
    return 0


def cmd_baseline_embed(args) -> int:
    path = _require(args.emb, "embedding file")
    files = [path] if path.is_file() else sorted(path.glob("*.json"))
    if not files:
        raise CliError(f"no embedding files under {path}", code=EXIT_MISSING_INPUT)
    embs = {f.stem: baselines.load_embeddings(f) for f in files}

    def predict(threshold: float) -> dict[str, dict]:
        cfg = baselines.BaselineConfig(threshold_text=threshold, max_sources=args.max_sources)
        return {sid: baselines.embed_attribute(embs[sid], cfg) for sid in embs}

    threshold = args.threshold
    if args.thresholds:
        if not args.refs:
            raise CliError("--thresholds needs --refs to pick the best configuration")
        samples = corpus.load_corpus(_require(args.corpus, "corpus file")) if args.corpus else None
        ref = _read_reference_maps(_require(args.refs, "reference file"), samples)
        modality = {s.id for s in samples if s.image} if samples else None
        header = f"{'threshold':>9}  {'Text F1':>8}  {'Text EM':>8}  {'Joint EM':>8}"
        print(header)
        print("-" * len(header))
        best = None
        for t in _parse_float_axis(args.thresholds):
            pred = predict(t)
            report = metrics.score_citations(pred, ref, multimodal=modality)
            print(
                f"{t:>9.2f}  {100 * report.text_macro_f1:>8.2f}  "
                f"{100 * report.text_em:>8.2f}  {100 * report.joint_em:>8.2f}"
            )
            if best is None or report.text_macro_f1 > best[1]:
                best = (t, report.text_macro_f1)
        threshold = best[0]
        print(f"best threshold by Text F1: {threshold:.2f}")

    pred = predict(threshold)
    out = [{"id": sid, **citation_map_to_record(pred[sid])} for sid in sorted(pred)]
    _write_predictions(out, Path(args.out))
    print(f"wrote {len(out)} citation map(s) to {args.out}")
    return 0


def cmd_parse_self(args) -> int:
    path = _require(args.input, "self-attribution output")
    text = path.read_text(encoding="utf-8")
    try:
        cmap = baselines.parse_self_attribution(text)
    except baselines.CitationParseError as exc:
        if not args.skip_bad:
            raise
        kept_lines = [
            l for i, l in enumerate(text.splitlines(), 1) if i != exc.line_no
        ]
        print(f"warning: skipping line {exc.line_no}: {exc.line!r}", file=sys.stderr)
        cmap = baselines.parse_self_attribution("\n".join(kept_lines))
    record = {"id": path.stem, **citation_map_to_record(cmap)}
    _write_predictions([record], Path(args.out))
    print(f"wrote parsed citations to {args.out}")
    return 0


def cmd_eval(args) -> int:
    pred = _read_citation_jsonl(_require(args.pred, "prediction file"))
    samples = corpus.load_corpus(_require(args.corpus, "corpus file")) if args.corpus else None
    ref = _read_reference_maps(_require(args.ref, "reference file"), samples)
    modality = {s.id for s in samples if s.image} if samples else None
    report = metrics.score_citations(pred, ref, multimodal=modality)
    for line in report.format_lines():
        print(line)
    if args.pooled:
        pooled = metrics.score_citations(pred, ref, multimodal=modality, pooled=True)
        print("pooled over sentences:")
        for line in pooled.format_lines():
            print("  " + line)
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    return 0


_TABLE_HEADER = f"{'Top-k':>5}  {'Attr mode':<9}  {'Agg. tau':>8}  {'Macro-F1':>8}  {'Exact Match':>11}"


def _sweep_table(cells: list[dict]) -> str:
    lines = [_TABLE_HEADER, "-" * len(_TABLE_HEADER)]
    for cell in cells:
        r = cell["report"]
        lines.append(
            f"{cell['k']:>5}  {cell['vote']:<9}  {cell['tau']:>8.2f}  "
            f"{100.0 * r['text_macro_f1']:>8.2f}  {100.0 * r['text_em']:>11.2f}"
        )
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    traces = _trace_dirs(_require(args.traces, "traces directory"))
    samples = corpus.load_corpus(_require(args.corpus, "corpus file")) if args.corpus else None
    ref = _read_reference_maps(_require(args.refs, "reference file"), samples)
    loaded = [(sample_id, load_trace(d)) for sample_id, d in traces]
    missing = [sid for sid, _ in loaded if sid not in ref]
    if missing:
        raise CliError(f"references missing for samples: {missing[:5]}", code=EXIT_MISSING_INPUT)

    k_values = [int(x) for x in str(args.k).split(",") if x.strip()]
    vote_modes = [v.strip() for v in str(args.vote).split(",") if v.strip()]
    tau_values = _parse_float_axis(str(args.tau))
    if not k_values or not vote_modes or not tau_values:
        raise CliError("sweep axes must be non-empty")
    grid = sorted(
        (k, vote, tau) for k in k_values for vote in vote_modes for tau in tau_values
    )

    modality = {s.id for s in samples if s.image} if samples else None

    def run(cell):
        k, vote, tau = cell
        pred = {}
        for sample_id, trace in loaded:
            mode = MODE_FLAGS[args.mode] or trace.meta.mode
            cfg = EngineConfig(k=k, vote=vote, tau=tau, mode=mode)
            pred[sample_id] = attribute(trace.meta, trace.attn, cfg, dialogue_mode=args.dialogue)
        report = metrics.score_citations(pred, {sid: ref[sid] for sid, _ in loaded}, modality)
        return {"k": k, "vote": vote, "tau": tau, "report": report.to_dict()}

    with ThreadPoolExecutor(max_workers=_n_threads()) as pool:
        cells = list(pool.map(run, grid))

    payload = {
        "axes": {"k": sorted(set(k_values)), "vote": sorted(set(vote_modes)), "tau": tau_values},
        "cells": cells,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    table = _sweep_table(cells)
    table_path = out.with_suffix(".txt") if out.suffix != ".txt" else out.with_suffix(".table.txt")
    table_path.write_text(table, encoding="utf-8")
    print(table, end="")
    print(f"wrote {len(cells)} cells to {out} and {table_path}")
    return 0


def cmd_filter_mimic(args) -> int:
    path = _require(args.input, "reports input")
    items = []
    if path.is_dir():
        for f in sorted(path.rglob("*.txt")):
            items.append((f.parent.name, f.read_text(encoding="utf-8"), str(f)))
    else:
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            d = json.loads(line)
            items.append((str(d["patient_id"]), d["text"], f"{path}:{line_no}"))
    result = corpus.filter_mimic(
        items, min_findings=args.min_findings, min_impression=args.min_impression
    )
    out_lines = [
        json.dumps(
            {
                "patient_id": r.patient_id,
                "findings": r.findings,
                "impression": r.impression,
                "source_path": r.source_path,
            },
            ensure_ascii=False,
            sort_keys=True,
        )
        for r in result.kept
    ]
    Path(args.out).write_text("\n".join(out_lines) + ("\n" if out_lines else ""), encoding="utf-8")
    print(f"input reports    {len(items)}")
    print(f"kept             {len(result.kept)}")
    for reason in ("multi_report", "missing_section", "too_short"):
        print(f"dropped: {reason:<16} {result.drops.get(reason, 0)}")
    return 0


def cmd_synth(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    refs: dict[str, dict] = {}
    for i in range(args.n_samples):
        support_map = {}
        img_holder = int(rng.integers(0, args.gen_sentences)) if args.mode == "img-raw" else None
        lo_sid = 1 if args.sink else 0
        for j in range(args.gen_sentences):
            n_sup = int(rng.integers(1, args.max_supports + 1))
            sids = rng.choice(
                np.arange(lo_sid, args.src_sentences), size=n_sup, replace=False
            )
            support = set(int(s) for s in sids)
            if img_holder == j:
                support.add(IMG)
            support_map[j] = frozenset(support)
        spec = synth.PlantSpec(
            n_src_sentences=args.src_sentences,
            tokens_per_sentence=args.tokens_per_sentence,
            n_gen_sentences=args.gen_sentences,
            tokens_per_gen_sentence=args.tokens_per_gen_sentence,
            support_map=support_map,
            noise_eps=args.noise_eps,
            seed=int(rng.integers(0, 2**31 - 1)),
            margin=args.margin,
            sink=args.sink,
        )
        meta, matrix, planted = synth.plant_trace(spec, args.tau)
        sample_id = f"sample_{i:04d}"
        save_trace(Trace(meta=meta, attn=matrix), out_dir / sample_id)
        refs[sample_id] = planted
    ref_records = [
        {"id": sample_id, **citation_map_to_record(refs[sample_id])}
        for sample_id in sorted(refs)
    ]
    _write_predictions(ref_records, out_dir / "refs.jsonl")
    print(f"wrote {args.n_samples} planted trace(s) + refs.jsonl under {out_dir}")
    return 0


def cmd_rouge(args) -> int:
    pred_path = _require(args.pred, "prediction text")
    ref_path = _require(args.ref, "reference text")
    if args.jsonl:
        def read_keyed(p: Path) -> dict[str, str]:
            out = {}
            for line in p.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                d = json.loads(line)
                out[str(d["id"])] = d.get("text", d.get("summary", ""))
            return out

        pred_map, ref_map = read_keyed(pred_path), read_keyed(ref_path)
        if set(pred_map) != set(ref_map):
            raise CliError("pred and ref ids differ")
        r1s, rls = [], []
        for sample_id in sorted(ref_map):
            r1, rl = metrics.rouge(pred_map[sample_id], ref_map[sample_id])
            r1s.append(r1)
            rls.append(rl)
        r1, rl = sum(r1s) / len(r1s), sum(rls) / len(rls)
    else:
        r1, rl = metrics.rouge(
            pred_path.read_text(encoding="utf-8"), ref_path.read_text(encoding="utf-8")
        )
    print(f"ROUGE-1 F       {100.0 * r1:.2f}")
    print(f"ROUGE-L F       {100.0 * rl:.2f}")
    return 0


def cmd_report(args) -> int:
    rows = []
    for f in args.eval:
        d = json.loads(_require(f, "eval report").read_text(encoding="utf-8"))
        rows.append((Path(f).stem, d))

    def pct(x) -> str:
        return "--" if x is None else f"{100.0 * x:.2f}"

    header = f"{'run':<24}  {'Text F1':>8}  {'Text EM':>8}  {'Img Acc':>8}  {'Joint EM':>8}"
    print(header)
    print("-" * len(header))
    for name, d in rows:
        print(
            f"{name:<24}  {pct(d.get('text_macro_f1')):>8}  {pct(d.get('text_em')):>8}  "
            f"{pct(d.get('img_acc')):>8}  {pct(d.get('joint_em')):>8}"
        )
    return 0


# --- argument parsing -------------------------------------------------------


def _load_config(path: Path) -> dict[str, str]:
    """key=value lines; '#' comments; keys match flag names (dashes ok)."""
    cfg = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _apply_config(subparsers: dict[str, argparse.ArgumentParser], cfg: dict[str, str]) -> None:
    """Install config values as parser defaults; explicit flags override them."""
    known = set()
    for sp in subparsers.values():
        defaults = {}
        for action in sp._actions:
            if action.dest not in cfg:
                continue
            known.add(action.dest)
            raw_value = cfg[action.dest]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[action.dest] = raw_value.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                defaults[action.dest] = action.type(raw_value)
            else:
                defaults[action.dest] = raw_value
        if defaults:
            sp.set_defaults(**defaults)
    unknown = set(cfg) - known
    if unknown:
        raise CliError(f"config keys match no flag: {sorted(unknown)}")


def _scan_config_path(argv: list[str]) -> Optional[Path]:
    for i, arg in enumerate(argv):
        if arg == "--config":
            if i + 1 >= len(argv):
                raise CliError("--config needs a path")
            return Path(argv[i + 1])
        if arg.startswith("--config="):
            return Path(arg.split("=", 1)[1])
    return None


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="attncite",
        description="Attention-guided source attribution toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    def add_parser(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="key=value defaults file; flags override")
        subparsers[name] = p
        return p

    p = add_parser("attribute", help="citation map(s) from attention trace(s)")
    p.add_argument("--trace", required=True, help="trace dir, or a dir of trace dirs")
    p.add_argument("--mode", choices=sorted(MODE_FLAGS), default="auto")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--vote", choices=("majority", "max"), default="majority")
    p.add_argument("--tau", type=float, default=0.16)
    p.add_argument("--dialogue", action="store_true", help="split speaker turns as sentences")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attribute)

    p = add_parser("baseline-embed", help="embedding-similarity baseline")
    p.add_argument("--emb", required=True, help="emb.json, or a dir of per-sample *.json")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--thresholds", help="grid to sweep, e.g. 0.3:0.8:0.05 (needs --refs)")
    p.add_argument("--refs", help="reference file for threshold selection")
    p.add_argument("--corpus", help="corpus jsonl for sample modality")
    p.add_argument("--max-sources", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline_embed)

    p = add_parser("parse-self", help="parse self-attribution model output")
    p.add_argument("--input", required=True)
    p.add_argument("--skip-bad", action="store_true", help="skip unparseable lines with a warning")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse_self)

    p = add_parser("eval", help="score predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--corpus", help="corpus jsonl for sample modality and ref validation")
    p.add_argument("--pooled", action="store_true", help="also print pooled-over-sentences scores")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = add_parser("sweep", help="grid over (k, vote, tau) with per-cell scores")
    p.add_argument("--traces", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--k", default="3,4,5")
    p.add_argument("--vote", default="majority,max")
    p.add_argument("--tau", default="0.10:0.30:0.02")
    p.add_argument("--mode", choices=sorted(MODE_FLAGS), default="auto")
    p.add_argument("--dialogue", action="store_true")
    p.add_argument("--corpus", help="corpus jsonl for sample modality")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = add_parser("filter-mimic", help="FINDINGS/IMPRESSION report filter")
    p.add_argument("--input", required=True, help="dir of *.txt or jsonl of {patient_id, text}")
    p.add_argument("--min-findings", type=int, default=9)
    p.add_argument("--min-impression", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter_mimic)

    p = add_parser("synth", help="generate planted fixture traces")
    p.add_argument("--out", required=True)
    p.add_argument("--n-samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("text", "img-raw"), default="text")
    p.add_argument("--src-sentences", type=int, default=6)
    p.add_argument("--tokens-per-sentence", type=int, default=6)
    p.add_argument("--gen-sentences", type=int, default=3)
    p.add_argument("--tokens-per-gen-sentence", type=int, default=20)
    p.add_argument("--max-supports", type=int, default=2)
    p.add_argument("--noise-eps", type=float, default=0.0)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=0.16, help="threshold the plant must clear")
    p.add_argument("--sink", action="store_true", help="add an attention-sink column")
    p.set_defaults(func=cmd_synth)

    p = add_parser("rouge", help="ROUGE-1/L between texts")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--jsonl", action="store_true", help="inputs are {id, text|summary} jsonl")
    p.set_defaults(func=cmd_rouge)

    p = add_parser("report", help="render saved eval reports as a table")
    p.add_argument("--eval", nargs="+", required=True)
    p.set_defaults(func=cmd_report)

    return parser, subparsers


def main(argv: Optional[list[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        parser, subparsers = build_parser()
        config_path = _scan_config_path(list(argv))
        if config_path is not None:
            _apply_config(subparsers, _load_config(_require(config_path, "config file")))
    except CliError as exc:
        _print_error(type(exc).__name__, str(exc))
        return exc.code
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        _print_error(type(exc).__name__, str(exc))
        return exc.code
    except FileNotFoundError as exc:
        _print_error("FileNotFoundError", str(exc))
        return EXIT_MISSING_INPUT
    except ModeMismatchError as exc:
        _print_error("ModeMismatchError", str(exc))
        return EXIT_MODE_MISMATCH
    except Exception as exc:  # validation / parse errors: still machine-readable
        _print_error(type(exc).__name__, str(exc))
        return 1


def _print_error(kind: str, detail: str) -> None:
    print(json.dumps({"error": kind, "detail": detail}, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
