"""embed-server command line: serve a model or export an archive."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence


def _parse_layers(text: str) -> list[int]:
    layers: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            layers.extend(range(int(lo), int(hi) + 1))
        elif part:
            layers.append(int(part))
    return layers


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="embed-server", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--model", required=True, help="model name or local path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8331)
    p.add_argument("--device", default="cpu")
    p.add_argument("--max-batch", type=int, default=16)

    p = sub.add_parser("export", help="embed a request manifest into an archive")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True, help="JSONL request manifest")
    p.add_argument("--output", required=True, help="archive directory")
    p.add_argument("--device", default="cpu")
    p.add_argument("--layers", help="override layers, e.g. 0-12 or 4,8")
    p.add_argument("--batch-size", type=int, default=16)

    args = parser.parse_args(argv)
    if args.command == "serve":
        from .service import serve

        serve(args.model, args.host, args.port, args.device, args.max_batch)
        return 0

    from .encoder import MaskedLMEncoder
    from .export import export_archive

    encoder = MaskedLMEncoder(args.model, device=args.device)
    layers = _parse_layers(args.layers) if args.layers else None
    count = export_archive(
        args.manifest, args.output, encoder, layers=layers, batch_size=args.batch_size
    )
    print(f"exported {count} entries to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
