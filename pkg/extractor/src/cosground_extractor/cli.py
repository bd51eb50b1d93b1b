"""Batch extraction entry point: annotations + images in, dataset directory out."""

import argparse
import sys

from .encoders import EncoderLoadError
from .extract import ExtractionConfig, ExtractionError, extract

EXIT_OK = 0
EXIT_BAD_FLAGS = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosground-extract",
        description="Encode proposal crops and commands into an embedding dataset directory.",
    )
    parser.add_argument("--annotations", required=True,
                        help="JSONL file: {image, command, gt_box, proposals:[{box, score}]}")
    parser.add_argument("--image-root", required=True,
                        help="directory the annotation image paths are relative to")
    parser.add_argument("--out", required=True, help="output dataset directory")
    parser.add_argument("--image-encoder", default="toy-image-64",
                        help="image encoder name (default: toy-image-64)")
    parser.add_argument("--text-encoder", default="hashed-bow-32",
                        help="sentence encoder name (default: hashed-bow-32)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg = ExtractionConfig(
        image_encoder_name=args.image_encoder,
        sentence_encoder_name=args.text_encoder,
        input_annotations=args.annotations,
        image_root=args.image_root,
        output_dir=args.out,
    )
    try:
        out = extract(cfg)
    except (ExtractionError, EncoderLoadError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
