"""Command-line harness: one subcommand per experiment recipe.

    rwre-lab <recipe> [--manifest PATH] [--seed N] [--workers N]
             [--out-dir DIR]

Flags override manifest fields; without --manifest the recipe's default
(acceptance-suite) manifest runs.  The worker count defaults to the
RWRE_LAB_WORKERS environment variable.  Exit status is 0 iff every
in-recipe check passed.
"""

from __future__ import annotations

import argparse
import os
import sys

from .manifests import (ExperimentManifest, ManifestError, RECIPE_NAMES,
                        default_manifest)
from .recipes import run_recipe


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwre-lab",
        description="desk-scale experiments on random walks in "
                    "low-disorder random environments")
    sub = parser.add_subparsers(dest="recipe", required=True)
    for name in RECIPE_NAMES:
        sp = sub.add_parser(name, help=f"run the {name} recipe")
        sp.add_argument("--manifest", type=str, default=None,
                        help="manifest JSON (defaults to the built-in one)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the manifest seed")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker threads (default $RWRE_LAB_WORKERS)")
        sp.add_argument("--out-dir", type=str, default=None,
                        help="output directory override")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.manifest is not None:
            manifest = ExperimentManifest.from_json(args.manifest)
            if manifest.recipe != args.recipe:
                print(f"manifest is for recipe {manifest.recipe!r}, "
                      f"not {args.recipe!r}", file=sys.stderr)
                return 2
        else:
            manifest = default_manifest(args.recipe)
        if args.seed is not None:
            manifest.seed = args.seed
        if args.out_dir is not None:
            manifest.out_dir = args.out_dir
        if args.workers is not None:
            manifest.workers = args.workers
        elif os.environ.get("RWRE_LAB_WORKERS"):
            manifest.workers = int(os.environ["RWRE_LAB_WORKERS"])
        manifest.validate()
    except (ManifestError, OSError, ValueError) as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    result = run_recipe(manifest)
    for check in result.checks:
        print(check.line())
    print(f"{'OK' if result.all_passed else 'FAILED'} "
          f"({sum(c.passed for c in result.checks)}/{len(result.checks)} "
          f"checks passed); outputs in {manifest.out_dir}")
    return 0 if result.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
