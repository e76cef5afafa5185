"""Command-line entry point: ``finray-optics <subcommand> ...``.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical
failure during a run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .cmaes import NonFiniteObjective
from .commands import SelfConsistencyError, cmd_deform_gen, cmd_evaluate, cmd_optimize, cmd_render
from .config import ConfigError, load_config
from .deformation import DeformationTableError
from .layoutfile import LayoutFileError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("finray_optics")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, help="override the config's cmaes.seed")
    common.add_argument("--out", metavar="DIR", help="override the config's output directory")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    p = argparse.ArgumentParser(prog="finray-optics", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("optimize", parents=[common], help="search for the best layout")
    s.add_argument("config")

    s = sub.add_parser("evaluate", parents=[common], help="score a layout file")
    s.add_argument("config")
    s.add_argument("layout")

    s = sub.add_parser("render", parents=[common], help="draw a layout under one deformation state")
    s.add_argument("config")
    s.add_argument("layout")
    s.add_argument("--state", type=int, required=True, metavar="I", help="deformation state index")

    s = sub.add_parser("deform-gen", parents=[common], help="write the sampled deformation table")
    s.add_argument("config")
    return p


def _fmt_fracs(fracs) -> str:
    return " ".join(f"{f:.3f}" for f in fracs)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    say = (lambda *a: None) if args.quiet else print

    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.out is not None:
            config = config.with_output_dir(args.out)

        if args.command == "optimize":
            res = cmd_optimize(config, progress_every=0 if args.quiet else 50)
            say(f"best objective: {res.best_objective!r}")
            say(f"unique coverage: {res.unique_coverage_fraction:.4f}")
            say(f"per-state coverage: {_fmt_fracs(res.report.per_state_fraction)}")
            say(f"stopped: {res.stop_reason} after {len(res.history)} generations, "
                f"{res.evaluations} evaluations")
            say(f"wrote {config.output_dir}")
        elif args.command == "evaluate":
            rep = cmd_evaluate(config, args.layout)
            say(f"objective: {rep.objective_value!r}")
            say(f"unique coverage: {rep.unique_coverage_fraction:.4f}")
            say(f"per-state coverage: {_fmt_fracs(rep.per_state_fraction)}")
            for v in rep.violations:
                say(f"violation: {v}")
            for i, ok in enumerate(rep.per_state_safe):
                if not ok and not rep.violations:
                    say(f"state {i}: mirror interferes with a beam")
        elif args.command == "render":
            path, covered = cmd_render(config, args.layout, args.state)
            say(f"wrote {path} ({covered} targets covered)")
        elif args.command == "deform-gen":
            path = cmd_deform_gen(config)
            say(f"wrote {path}")
    except (NonFiniteObjective, SelfConsistencyError, ArithmeticError, np.linalg.LinAlgError) as e:
        # LinAlgError subclasses ValueError, so it must be caught first
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, LayoutFileError, DeformationTableError, IndexError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
