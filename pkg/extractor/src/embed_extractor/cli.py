"""CLI: one `extract` command mirroring the library defaults."""

from __future__ import annotations

import json
import logging
import os
import sys

import click

from .extract import DEFAULT_ENCODER, ExtractionConfig, ExtractorError, extract


@click.group()
def main() -> None:
    logging.basicConfig(level=os.environ.get("HDL_LOG", "WARNING").upper())


@main.command("extract")
@click.option("--posts", type=click.Path(exists=True), required=True, help="Posts JSONL file.")
@click.option("--out", type=click.Path(), required=True, help="Output embeddings JSONL path.")
@click.option("--encoder", default=DEFAULT_ENCODER, show_default=True,
              help="Encoder model name or local path.")
@click.option("--pooling", type=click.Choice(["cls", "mean"]), default="cls", show_default=True)
@click.option("--max-tokens", type=int, default=512, show_default=True)
@click.option("--batch", type=int, default=16, show_default=True)
def extract_cmd(posts, out, encoder, pooling, max_tokens, batch):
    """Embed every post with a frozen pre-trained encoder."""
    try:
        config = ExtractionConfig(encoder=encoder, pooling=pooling, max_tokens=max_tokens,
                                  batch_size=batch)
        n = extract(posts, out, config)
    except ExtractorError as exc:
        click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
        sys.exit(1)
    click.echo(f"wrote {n} embeddings to {out}")


if __name__ == "__main__":
    main()
