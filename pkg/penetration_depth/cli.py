#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Penetration Depth CLI Module

This module provides the rtpd command-line interface: it loads a two-object
scene, runs the penetration depth pipeline (once or as a parameter sweep) and
writes machine-readable reports.
"""

import argparse
import logging
import sys
from typing import Callable, List, NoReturn, Optional, Sequence

from penetration_depth.accel import set_threads
from penetration_depth.benchmark import (
    REPORT_FORMATS,
    BenchmarkHarness,
    SweepSpec,
    emit_aggregates,
    emit_report,
)
from penetration_depth.datasets import MeshCache
from penetration_depth.errors import PenetrationDepthError
from penetration_depth.hdist import AabbBox, HdistConfig, Hemisphere, Sphere, VertexUniform
from penetration_depth.mesh import SceneConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_INTERRUPTED = 130

DEFAULT_RATE = 0.01
DEFAULT_COUNT = 64

STRATEGIES = {
    "vertex": VertexUniform,
    "sphere": Sphere,
    "aabb": AabbBox,
    "hemisphere": Hemisphere,
}


class UsageError(Exception):
    """Raised by the argument parser instead of exiting."""

    pass


class ArgumentParser(argparse.ArgumentParser):
    """Argument parser that reports problems as a single-line UsageError."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def setup_logging(verbose: bool = False) -> logging.Logger:
    """
    Set up logging for the CLI application.

    Args:
        verbose: Whether to log debug messages.

    Returns:
        logging.Logger: The package logger.
    """
    logger = logging.getLogger("penetration_depth")
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)

    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    return logger


def _list_of(kind: Callable) -> Callable[[str], List]:
    def parse(text: str) -> List:
        try:
            values = [kind(item) for item in text.split(",") if item.strip()]
        except ValueError as error:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}: {error}") from error
        if not values:
            raise argparse.ArgumentTypeError("list must not be empty")
        return values

    return parse


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected 'on' or 'off', got {text!r}")
    return text == "on"


def build_parser() -> ArgumentParser:
    """
    Build the command-line parser.

    Returns:
        ArgumentParser: The parser for the rtpd command.
    """
    parser = ArgumentParser(
        prog="rtpd",
        description="Ray-traced penetration depth between two closed triangle meshes",
    )

    scene = parser.add_argument_group("scene")
    scene.add_argument(
        "--mesh-a",
        help="Object A: OBJ/PLY path, http(s) URL, or builtin:icosphere:<k> | builtin:box "
        "| builtin:tetrahedron",
    )
    scene.add_argument("--mesh-b", help="Object B (default: a copy of object A)")
    placement = scene.add_mutually_exclusive_group()
    placement.add_argument(
        "--overlap",
        type=float,
        default=0.5,
        help="AABB overlap ratio of B with A along --axis, in (0, 1] (default: 0.5)",
    )
    placement.add_argument(
        "--raw-translate",
        nargs=3,
        type=float,
        metavar=("DX", "DY", "DZ"),
        help="Translate B by an explicit vector instead of --overlap",
    )
    scene.add_argument(
        "--axis", default="x", choices=["x", "y", "z"], help="Placement axis (default: x)"
    )

    sampling = parser.add_argument_group("sampling")
    sampling.add_argument(
        "--strategy",
        default="vertex",
        choices=sorted(STRATEGIES),
        help="Ray sampling strategy (default: vertex)",
    )
    budget = sampling.add_mutually_exclusive_group()
    budget.add_argument(
        "--rate", type=float, help=f"Vertex sampling rate in (0, 1] (default: {DEFAULT_RATE})"
    )
    budget.add_argument(
        "--count",
        type=int,
        help=f"Rays per point for direction strategies (default: {DEFAULT_COUNT})",
    )
    sampling.add_argument("--seed", type=int, default=0, help="Sampling seed (default: 0)")
    sampling.add_argument(
        "--culling", type=_on_off, default=True, metavar="{on,off}", help="Ray-length culling"
    )
    sampling.add_argument(
        "--dpip", type=_on_off, default=True, metavar="{on,off}", help="d_pip filtering"
    )
    sampling.add_argument(
        "--pip-axis",
        default="x",
        choices=["x", "y", "z"],
        help="Axis of the point-in-polyhedron rays (default: x)",
    )

    runs = parser.add_argument_group("runs")
    runs.add_argument(
        "--oracle", action="store_true", help="Compare against the brute-force vertex-pair oracle"
    )
    sweeps = runs.add_mutually_exclusive_group()
    sweeps.add_argument("--sweep-rate", type=_list_of(float), metavar="LIST", help="Sweep rates")
    sweeps.add_argument(
        "--sweep-overlap", type=_list_of(float), metavar="LIST", help="Sweep overlap ratios"
    )
    sweeps.add_argument(
        "--sweep-count", type=_list_of(int), metavar="LIST", help="Sweep ray counts"
    )
    runs.add_argument(
        "--seeds", type=_list_of(int), metavar="LIST", help="Seeds of a sweep (default: --seed)"
    )
    runs.add_argument("--threads", type=int, help="Number of worker threads")

    output = parser.add_argument_group("output")
    output.add_argument(
        "--format", default="json", choices=REPORT_FORMATS, help="Report format (default: json)"
    )
    output.add_argument("--out", help="Report file (default: standard output)")
    output.add_argument("--aggregate-out", help="Sweep aggregate file (default: log only)")
    output.add_argument("--stats", action="store_true", help="Include traversal statistics")
    output.add_argument("--no-timing", action="store_true", help="Omit stage timings")

    parser.add_argument(
        "--clear-mesh-cache", action="store_true", help="Clear downloaded meshes and exit"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose output")

    return parser


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """
    Parse command-line arguments.

    Args:
        argv: Arguments to parse; sys.argv[1:] when omitted.

    Returns:
        argparse.Namespace: The parsed command-line arguments.

    Raises:
        UsageError: If the arguments are invalid.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.clear_mesh_cache and not args.mesh_a:
        parser.error("--mesh-a is required")
    if args.rate is not None and args.strategy != "vertex":
        parser.error(f"--rate applies to the vertex strategy, not {args.strategy}")
    if args.count is not None and args.strategy == "vertex":
        parser.error("--count applies to direction strategies, not vertex")
    if args.sweep_rate and args.strategy != "vertex":
        parser.error("--sweep-rate needs --strategy vertex")
    if args.sweep_count and args.strategy == "vertex":
        parser.error("--sweep-count needs a direction strategy")
    return args


def build_scene(args: argparse.Namespace) -> SceneConfig:
    """Build the scene described by the parsed arguments."""
    return SceneConfig(
        path_a=args.mesh_a,
        path_b=args.mesh_b or args.mesh_a,
        overlap_ratio=args.overlap,
        axis=args.axis,
        translation=tuple(args.raw_translate) if args.raw_translate else None,
    )


def build_config(args: argparse.Namespace) -> HdistConfig:
    """Build the Hausdorff configuration described by the parsed arguments."""
    if args.strategy == "vertex":
        rate = DEFAULT_RATE if args.rate is None else args.rate
        strategy = VertexUniform(rate=rate, seed=args.seed)
    else:
        count = DEFAULT_COUNT if args.count is None else args.count
        strategy = STRATEGIES[args.strategy](count=count, seed=args.seed)
    return HdistConfig(
        strategy=strategy, culling=args.culling, dpip_filter=args.dpip, pip_axis=args.pip_axis
    )


def build_sweep(args: argparse.Namespace) -> Optional[SweepSpec]:
    """Build the sweep requested by the parsed arguments, if any."""
    seeds = args.seeds or [args.seed]
    if args.sweep_rate:
        return SweepSpec("rate", tuple(args.sweep_rate), tuple(seeds))
    if args.sweep_overlap:
        return SweepSpec("overlap_ratio", tuple(args.sweep_overlap), tuple(seeds))
    if args.sweep_count:
        return SweepSpec("count", tuple(args.sweep_count), tuple(seeds))
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point for the CLI application.

    Args:
        argv: Command-line arguments; sys.argv[1:] when omitted.

    Returns:
        int: 0 on success, 1 on usage errors, 2 on runtime errors, 130 when interrupted.
    """
    try:
        args = parse_arguments(argv)
        scene = None if args.clear_mesh_cache else build_scene(args)
        config = None if args.clear_mesh_cache else build_config(args)
        sweep = None if args.clear_mesh_cache else build_sweep(args)
        if args.threads is not None:
            set_threads(args.threads)
    except (UsageError, ValueError) as error:
        print(f"rtpd: error: {error}", file=sys.stderr)
        return EXIT_USAGE

    logger = setup_logging(args.verbose)

    cache = MeshCache()
    if args.clear_mesh_cache:
        if cache.clear():
            print("Mesh cache cleared successfully.")
        else:
            print("No cached meshes found.")
        return EXIT_OK

    harness = BenchmarkHarness(cache)
    try:
        if sweep is None:
            reports = [harness.run_scene(scene, config, args.oracle)]
            aggregates = []
        else:
            reports, aggregates = harness.run_sweep(scene, config, sweep, args.oracle)

        emit_report(
            reports,
            args.format,
            args.out,
            include_timing=not args.no_timing,
            include_stats=args.stats,
        )
        if aggregates:
            for aggregate in aggregates:
                logger.info(
                    f"{aggregate.variable}={aggregate.value}: runs={aggregate.runs} "
                    f"mean_error={aggregate.mean_error} max_error={aggregate.max_error}"
                )
            if args.aggregate_out:
                emit_aggregates(aggregates, args.format, args.aggregate_out)

    except (PenetrationDepthError, OSError, ValueError) as error:
        logger.error(f"Error: {error}")
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.", file=sys.stderr)
        return EXIT_INTERRUPTED

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
