"""Command-line front end: `candidates` and `embeddings` verbs.

Endpoints and model names fall back to environment variables so that
credentials and deployment details stay out of shell history:
MUPROCL_CHAT_ENDPOINT, MUPROCL_CHAT_MODEL, MUPROCL_TEXT_ENCODER, and the
bearer token named by --api-key-env (default MUPROCL_EXPORT_API_KEY).
"""

import argparse
import os
import sys

from .chat import build_candidate_pool, read_candidate_pool, write_candidate_pool
from .encode import TextEncoder, export_embeddings, pool_prompts
from .job import DEFAULT_TEMPLATES, ExportError, ExportJob, read_class_names, read_templates


def _candidates(args) -> int:
    names = read_class_names(args.classes)
    templates = read_templates(args.templates) if args.templates else DEFAULT_TEMPLATES
    job = ExportJob(
        class_names=names,
        chat_endpoint=args.endpoint or os.environ.get("MUPROCL_CHAT_ENDPOINT", ""),
        chat_model=args.model or os.environ.get("MUPROCL_CHAT_MODEL", ""),
        api_key_env=args.api_key_env,
        templates=templates,
        disambiguation=not args.no_disambiguation,
        expansion=not args.no_expansion,
        timeout=args.timeout,
    )
    classes = build_candidate_pool(job)
    write_candidate_pool(args.out, classes)
    total = sum(len(c["candidates"]) for c in classes)
    print(f"wrote {total} candidates for {len(classes)} classes to {args.out}")
    return 0


def _embeddings(args) -> int:
    classes = read_candidate_pool(args.pool)
    names = tuple(entry["class_name"] or f"class{entry['class_id']}" for entry in classes)
    job = ExportJob(
        class_names=names,
        encoder_model=args.encoder or os.environ.get("MUPROCL_TEXT_ENCODER", ""),
        batch_size=args.batch_size,
    )
    encoder = TextEncoder(job.encoder_model)
    n = export_embeddings(job, pool_prompts(classes), args.out, encoder)
    print(f"wrote {n} embeddings (dim {encoder.dim}) to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="muprocl-export",
        description="Produce prompt-candidate and embedding files for the muprocl engine.")
    sub = parser.add_subparsers(dest="verb", required=True)

    pc = sub.add_parser("candidates", help="raw per-class prompt candidates as JSON")
    pc.add_argument("classes", help="text file, one class name per line")
    pc.add_argument("--out", required=True, help="output candidate-pool JSON")
    pc.add_argument("--endpoint", default="", help="chat endpoint (or MUPROCL_CHAT_ENDPOINT)")
    pc.add_argument("--model", default="", help="chat model name (or MUPROCL_CHAT_MODEL)")
    pc.add_argument("--api-key-env", default="MUPROCL_EXPORT_API_KEY",
                    help="environment variable holding the bearer token")
    pc.add_argument("--templates", default="", help="file of expansion templates, one per line")
    pc.add_argument("--no-disambiguation", action="store_true",
                    help="skip the chat model; senses are not fetched")
    pc.add_argument("--no-expansion", action="store_true", help="skip template rewordings")
    pc.add_argument("--timeout", type=float, default=30.0)
    pc.set_defaults(func=_candidates)

    pe = sub.add_parser("embeddings", help="embed every candidate text in a pool JSON")
    pe.add_argument("pool", help="candidate-pool JSON from the candidates verb")
    pe.add_argument("--out", required=True, help="output embedding file")
    pe.add_argument("--encoder", default="",
                    help="transformers model name or path (or MUPROCL_TEXT_ENCODER)")
    pe.add_argument("--batch-size", type=int, default=32)
    pe.set_defaults(func=_embeddings)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ExportError as exc:
        print(f"export: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"export: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
