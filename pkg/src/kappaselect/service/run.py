"""Console entry point: `kappaselect-serve --config service.json`."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import load_config


def main() -> None:
    parser = argparse.ArgumentParser(prog="kappaselect-serve")
    parser.add_argument("--config", required=True, help="Service config JSON")
    args = parser.parse_args()
    config = load_config(args.config)
    uvicorn.run(create_app(config), host=config.host, port=config.port)


if __name__ == "__main__":
    main()
