"""Module entry point for the cbf-minphase CLI."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
