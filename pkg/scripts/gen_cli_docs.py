"""Regenerate docs/cli-reference.md from the argument parser."""

import argparse
import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "src"))

from dsentinel.cli import build_parser  # noqa: E402

OUT = os.path.join(ROOT, "docs", "cli-reference.md")


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            yield from action.choices.items()


def _walk(parser, prefix):
    yield prefix, parser
    for name, sub in _subparsers(parser):
        yield from _walk(sub, f"{prefix} {name}")


def render() -> str:
    os.environ["COLUMNS"] = "100"
    parts = ["# Command-line reference", "",
             "Generated by `scripts/gen_cli_docs.py`; do not edit by hand.", "",
             "Exit codes: 0 success, 1 runtime failure (failed cycle stage, locked store),",
             "2 usage or input error (bad arguments, unreadable input, invalid config or scenario).", ""]
    for prog, parser in _walk(build_parser(), "dsentinel"):
        parser.prog = prog
        parts += [f"## `{prog}`", "", "```", parser.format_help().rstrip(), "```", ""]
    return "\n".join(parts)


def main():
    text = render()
    if "--check" in sys.argv:
        with open(OUT, encoding="utf-8") as fh:
            sys.exit(0 if fh.read() == text else 1)
    with open(OUT, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
