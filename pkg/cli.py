import argparse
import logging
import os
import sys
from typing import Optional, Sequence

import conformal_core
import report_components
from conformal_core import COMMAND_NAMES, DEFAULT_SEED, InputError, Options
from smoothfield.errors import EngineError

logger = logging.getLogger("cli")

LOG_LEVEL_ENV = "CONFORMAL_ENGINE_LOG_LEVEL"
EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INPUT = 2


def configure_logging(quiet: bool = False):
    level = logging.WARNING if quiet else logging.INFO
    override = os.environ.get(LOG_LEVEL_ENV)
    if override:
        level = getattr(logging, override.upper(), level)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conformal-engine",
        description="Batch checks for Lorentzian conformal geometry: curvature, Killing fields, plane waves, "
        "Penrose limits and conformal-algebra gradings.",
    )
    parser.add_argument("command", choices=COMMAND_NAMES)
    parser.add_argument("--metric", help="metric document (JSON)")
    parser.add_argument("--spec", help="plane-wave spec (JSON)")
    parser.add_argument("--algebra", help="algebra document (JSON)")
    parser.add_argument("--matrix", help="square matrix (JSON)")
    parser.add_argument("--sigma", help="conformal factor exponent, an expression on the metric chart")
    parser.add_argument("--probes", help="probe grid lo,hi,count x lo,hi,count ...")
    parser.add_argument("--tol", type=float, help="tolerance override")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--out", help="write the structured report to this file")
    parser.add_argument("--format", choices=["text", "structured"], default="text")
    parser.add_argument("--alpha", type=float, help="alpha in B = alpha Id + A")
    parser.add_argument("--window", help="u-window lo,hi for rosen-convert")
    parser.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_PASS
    configure_logging(args.quiet)

    opts = Options(
        command=args.command,
        argv=argv,
        metric=args.metric,
        spec=args.spec,
        algebra=args.algebra,
        matrix=args.matrix,
        sigma=args.sigma,
        probes=args.probes,
        tol=args.tol,
        seed=args.seed,
        alpha=args.alpha,
        window=args.window,
    )
    try:
        report = conformal_core.execute(opts)
    except InputError as e:
        logger.error("[Input] %s", e)
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except EngineError as e:
        logger.error("[Engine] %s failed: %s", args.command, e)
        print(f"{args.command} failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL

    if args.format == "structured":
        print(report_components.render_structured(report))
    else:
        print(report_components.render_text(report))
    if args.out:
        try:
            report_components.write_structured(report, args.out)
        except OSError as e:
            print(f"input error: cannot write {args.out}: {e}", file=sys.stderr)
            return EXIT_INPUT
    return EXIT_PASS if report.passed else EXIT_FAIL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
