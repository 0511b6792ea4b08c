"""Sidecar launcher: `pairdiff-sidecar --config bindings.yaml`."""

from __future__ import annotations

import argparse
import sys

from .bindings import default_bindings, load_bindings
from .models import ModelLoadError
from .server import create_app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="pairdiff inference sidecar")
    parser.add_argument("--config", help="bindings YAML; defaults to all builtin models")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8600)
    parser.add_argument("--max-batch", type=int, default=64)
    args = parser.parse_args(argv)

    bindings = load_bindings(args.config) if args.config else default_bindings()
    try:
        app = create_app(bindings, max_batch=args.max_batch)
    except ModelLoadError as e:
        print(f"model load failure: {e}", file=sys.stderr)
        return 2

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
