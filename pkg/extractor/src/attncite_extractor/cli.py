"""Command-line entry point: `attncite-extract`."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .adapter import ExtractError, ExtractionJob, HFRunner, extract

MODE_FLAGS = {"text": "TEXT", "img-raw": "IMG_RAW", "img-cap": "IMG_CAP"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attncite-extract",
        description="Run an attention-exposing model and emit a trace directory",
    )
    parser.add_argument("--model", required=True, help="HF model id or local checkpoint dir")
    parser.add_argument("--mode", choices=sorted(MODE_FLAGS), default="text")
    parser.add_argument("--input", required=True, help="source document text file")
    parser.add_argument("--image", help="image path (required for img-* modes)")
    parser.add_argument("--out", required=True, help="trace directory to write")
    parser.add_argument("--dump-raw", action="store_true", help="also write raw.bin")
    parser.add_argument("--max-new-tokens", type=int, default=48)
    parser.add_argument("--image-tokens", type=int, default=4)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    source = Path(args.input)
    if not source.is_file():
        print(json.dumps({"error": "FileNotFoundError", "detail": str(source)}), file=sys.stderr)
        return 3
    job = ExtractionJob(
        model=args.model,
        mode=MODE_FLAGS[args.mode],
        source_text=source.read_text(encoding="utf-8"),
        out_dir=args.out,
        image_path=args.image,
        dump_raw=args.dump_raw,
        max_new_tokens=args.max_new_tokens,
    )
    try:
        runner = HFRunner.from_pretrained(args.model, n_image_tokens=args.image_tokens)
        out = extract(job, runner=runner)
    except ExtractError as exc:
        print(json.dumps({"error": "ExtractError", "detail": str(exc)}), file=sys.stderr)
        return 1
    print(f"wrote trace to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
