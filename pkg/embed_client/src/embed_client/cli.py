"""Command-line entry points: embed catalog texts, run the chat selector.

Exit codes: 0 on success, 1 on validation or endpoint failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import encoder, selector

EXIT_OK = 0
EXIT_ERROR = 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-client",
        description="Produce embedding tables and chat-selector selections "
        "for the oodselect benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    embed = sub.add_parser("embed", help="embed catalog descriptions into a table JSON")
    embed.add_argument("--catalog", required=True, help="catalog JSON with descriptions")
    embed.add_argument(
        "--kind", required=True, choices=("datasets", "models"), help="which block to embed"
    )
    embed.add_argument("--out", required=True, help="output embedding-table JSON path")
    embed.add_argument("--names", nargs="*", default=None, help="subset of names to embed")
    embed.add_argument("--url", default=None, help="embedding endpoint URL (default: mock)")
    embed.add_argument(
        "--encoder-id", default=encoder.MOCK_ENCODER_ID, help="provenance encoder id"
    )

    sel = sub.add_parser("select", help="run the chat selector over split pairs")
    sel.add_argument("--catalog", required=True, help="catalog JSON with descriptions")
    sel.add_argument("--split", required=True, help="split JSON with train/test pair lists")
    sel.add_argument(
        "--which", default="test", choices=("train", "test"), help="which pair list to use"
    )
    sel.add_argument("--responses", default=None, help="recorded-responses JSON (offline mode)")
    sel.add_argument("--out", required=True, help="output selections JSON path")
    sel.add_argument("--url", default=None, help="chat endpoint URL (default: recorded mode)")
    sel.add_argument("--model-id", default="chat-v1", help="chat model id for provenance")
    return parser


def _load_pairs(split_path: str, which: str) -> list[dict]:
    with open(split_path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    pairs = raw.get(which)
    if not isinstance(pairs, list) or not pairs:
        raise encoder.EmbedClientError(f"{split_path}: missing non-empty {which!r} pair list")
    for pair in pairs:
        if not isinstance(pair, dict) or "id" not in pair or "ood" not in pair:
            raise encoder.EmbedClientError(f"{split_path}: pair entries need 'id' and 'ood'")
    return pairs


def cmd_embed(args: argparse.Namespace) -> int:
    description_set = encoder.load_description_set(args.catalog)
    chosen = encoder.select_descriptions(description_set, args.kind, args.names)
    config = encoder.EndpointConfig(url=args.url, encoder_id=args.encoder_id)
    payload = encoder.embed_texts(chosen, config)
    encoder.write_embedding_table(payload, args.out)
    print(f"wrote {len(payload['entries'])} embeddings (dim {payload['dim']}) to {args.out}")
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    description_set = encoder.load_description_set(args.catalog)
    pairs = _load_pairs(args.split, args.which)
    responses = selector.load_responses(args.responses) if args.responses else None
    if responses is None and args.url is None:
        raise encoder.EmbedClientError("select needs --responses or --url")
    config = selector.ChatConfig(url=args.url, model_id=args.model_id)
    payload = selector.llm_select(description_set, pairs, config, responses=responses)
    selector.write_selections(payload, args.out)
    abstained = sum(1 for e in payload["selections"] if e["model"] == selector.ABSTAIN)
    print(f"wrote {len(payload['selections'])} selections to {args.out} ({abstained} abstained)")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"embed": cmd_embed, "select": cmd_select}
    try:
        return handlers[args.command](args)
    except (encoder.EmbedClientError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
