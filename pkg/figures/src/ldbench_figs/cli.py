"""Figure CLI: ldbench-figs render --recipe <id>|all --in <run dir> --out <dir>."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .recipes import RECIPES, discover_recipes, render, render_all


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ldbench-figs")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render figures from a run directory")
    p.add_argument("--recipe", required=True, choices=list(RECIPES) + ["all"])
    p.add_argument("--in", dest="run_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    args = parser.parse_args(argv)

    run_dir = Path(args.run_dir)
    out_dir = Path(args.out_dir)
    try:
        if args.recipe == "all":
            produced, warnings = render_all(run_dir, out_dir)
            for warning in warnings:
                print(f"warning: {warning}", file=sys.stderr)
            for path in produced:
                print(path)
            return 0 if produced else 1
        recipes, warnings = discover_recipes(run_dir, out_dir)
        matches = [r for r in recipes if r.figure_id == args.recipe]
        if not matches:
            relevant = [w for w in warnings if args.recipe.split("_")[0] in w] or warnings
            print(f"error: no inputs for recipe {args.recipe} ({'; '.join(relevant)})",
                  file=sys.stderr)
            return 1
        print(render(matches[0]))
        return 0
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
