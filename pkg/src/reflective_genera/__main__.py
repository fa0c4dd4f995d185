"""Entry point for the reflective-genera command line and MCP server."""

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path

from reflective_genera.lattice import GramLattice
from reflective_genera.utils.errors import ReflectiveGeneraError

logger = logging.getLogger(__name__)


def setup_logging() -> None:
    """Configure logging based on environment variable."""
    level_name = os.environ.get("REFLECTIVE_GENERA_LOG_LEVEL", "INFO").upper()
    level = getattr(logging, level_name, logging.INFO)

    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,  # stdout carries results and MCP protocol traffic
    )


def read_gram(path: str) -> GramLattice:
    """Read a Gram file: integer rows, or JSON ``{"rank": n, "entries": [...]}``."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return GramLattice.from_record(json.loads(text))
    return GramLattice.from_text(text)


# =============================================================================
# Subcommands
# =============================================================================


def cmd_mass(args: argparse.Namespace) -> None:
    from reflective_genera.local import parse_symbol
    from reflective_genera.mass import mass

    print(mass(parse_symbol(args.symbol, args.rank)))


def cmd_symbol(args: argparse.Namespace) -> None:
    from reflective_genera.local import genus_symbol, is_square_free, is_strongly_square_free

    symbol = genus_symbol(read_gram(args.gram_file))
    flags = []
    if is_strongly_square_free(symbol):
        flags.append("strongly square free")
    elif is_square_free(symbol):
        flags.append("square free")
    suffix = f"  ({', '.join(flags)})" if flags else ""
    print(f"{symbol}  det={symbol.determinant}{suffix}")


def cmd_roots(args: argparse.Namespace) -> None:
    from reflective_genera.roots import root_system

    print(root_system(read_gram(args.gram_file)).describe())


def cmd_classes(args: argparse.Namespace) -> None:
    from reflective_genera.classes import genus_classes
    from reflective_genera.local import parse_symbol

    class_set = genus_classes(parse_symbol(args.symbol, args.rank))
    if args.json:
        print(json.dumps(class_set.to_dict(), indent=2))
        return
    status = "certified" if class_set.certified else "uncertified"
    print(f"{class_set.genus}: h={class_set.class_number}, mass={class_set.mass} ({status})")
    for entry in class_set.classes:
        flag = "reflective" if entry.reflective else "non-reflective"
        print(f"  {entry.lattice}  |Aut|={entry.aut_order}  {flag}")


def cmd_bounds(args: argparse.Namespace) -> None:
    from reflective_genera.bounds import (
        prime_count_bounds,
        prime_value_bounds,
        ratio_report,
    )
    from reflective_genera.local import DetShape

    if args.bounds_command == "ratio":
        dim = args.ratio_dim or args.dim
        print(json.dumps(ratio_report(DetShape.parse(args.shape), dim), indent=2))
        return

    counts = prime_count_bounds(args.dim)
    print(f"Dimension {args.dim}: at most {counts.max_r} squared odd primes")
    for r, s in sorted(counts.max_s.items()):
        computed = counts.computed_max_s.get(r)
        note = f" (Nref alone allows {computed})" if r in counts.capped else ""
        print(f"  r={r}: at most {s} simple odd primes{note}")
    for witness in counts.witnesses:
        print(f"  witness {witness.route} {witness.shape}: ratio < {witness.ratio.upper:.6g}")
    tables = prime_value_bounds(args.dim)
    print("Largest admissible prime per position (computed / published -> limit):")
    for row in tables.comparison():
        computed, published = (
            "-" if row[key] is None else row[key] for key in ("computed", "published")
        )
        print(f"  {row['role']:>7} q{row['position']}: {computed} / {published} -> {row['limit']}")


def cmd_classify(args: argparse.Namespace) -> None:
    from reflective_genera.pipeline import PipelineConfig, classify

    config = PipelineConfig(
        dim=args.dim,
        stage=args.stage,
        resume=args.resume,
        class_budget=args.class_budget,
        max_determinant=args.max_determinant,
        **({"jobs": args.jobs} if args.jobs is not None else {}),
    )
    report = classify(config)
    print(report.table())
    if args.output:
        with Path(args.output).open("w") as out:
            for record in report.all_genera or report.sf_genera or report.ssf_genera:
                out.write(record.model_dump_json() + "\n")
        logger.info(f"Wrote records to {args.output}")
    if not report.complete:
        sys.exit(1)


def cmd_serve(args: argparse.Namespace) -> None:
    from reflective_genera.server import run_server

    logger.info("Starting Reflective Genera server...")
    asyncio.run(run_server())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflective-genera",
        description="Classify totally-reflective genera of definite integral lattices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mass", help="exact mass of a genus symbol")
    p.add_argument("symbol")
    p.add_argument("--rank", type=int, default=4)
    p.set_defaults(func=cmd_mass)

    p = sub.add_parser("symbol", help="genus symbol of a Gram matrix")
    p.add_argument("gram_file")
    p.set_defaults(func=cmd_symbol)

    p = sub.add_parser("roots", help="root system of a Gram matrix")
    p.add_argument("gram_file")
    p.set_defaults(func=cmd_roots)

    p = sub.add_parser("classes", help="isometry classes of a genus")
    p.add_argument("symbol")
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--json", action="store_true", help="print the class set as JSON")
    p.set_defaults(func=cmd_classes)

    p = sub.add_parser("bounds", help="prime count and prime value bounds")
    p.add_argument("--dim", type=int, choices=(3, 4), default=3)
    p.set_defaults(func=cmd_bounds, bounds_command=None)
    bounds_sub = p.add_subparsers(dest="bounds_command")
    ratio = bounds_sub.add_parser("ratio", help="bounds for one determinant shape")
    ratio.add_argument("shape", help="determinant or factorization such as 3^2*5*7")
    ratio.add_argument("--dim", dest="ratio_dim", type=int, choices=(3, 4), default=None)

    p = sub.add_parser("classify", help="run the classification pipeline")
    p.add_argument("--dim", type=int, choices=(3, 4), required=True)
    p.add_argument("--stage", choices=("ssf", "sf", "all"), default="all")
    p.add_argument("--resume", type=Path, default=None, help="JSON lines checkpoint log")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--class-budget", type=int, default=None)
    p.add_argument("--max-determinant", type=int, default=None)
    p.add_argument("--output", default=None, help="write one JSON record per genus")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("serve", help="run the MCP server over stdio")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> None:
    """Main entry point for the reflective-genera command."""
    setup_logging()
    args = build_parser().parse_args(argv)

    try:
        args.func(args)
    except KeyboardInterrupt:
        logger.info("Stopped by user")
    except ReflectiveGeneraError as e:
        logger.error(f"{type(e).__name__}: {e}")
        sys.exit(1)
    except Exception as e:
        logger.exception("Unexpected error: %s", e)
        sys.exit(1)


if __name__ == "__main__":
    main()
