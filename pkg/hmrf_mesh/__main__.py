#!/usr/bin/env python3
# -*- coding: utf-8 -*-

""" entry point """

import argparse
import json
import logging
import sys

from typing import Callable, Optional, Sequence

import numpy as np

from termcolor import colored

from .__version__ import __version__
from .const import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, EXIT_PARSE, PALETTE
from .em import RunConfig, result_to_json, run
from .exceptions import MeshError, MeshParseError, NumericalError
from .hmrf import LabelField
from .mesh import (
    FeatureMatrix,
    FeatureMode,
    build_adjacency,
    face_features,
    read_mesh,
    write_ply_colored,
)
from .model import CovarianceUpdate, DensityMode, InitMode, ModelConfig
from .synthbench import SynthKind, SynthSpec, evaluate, metrics_to_json, synth

LOGGER = logging.getLogger(__name__)


def _palette(n_classes: int) -> dict:
    if n_classes > len(PALETTE):
        LOGGER.warning(
            "%d classes but only %d distinct colors, colors will repeat",
            n_classes,
            len(PALETTE),
        )
    return {label: PALETTE[label % len(PALETTE)] for label in range(n_classes)}


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        file.write(text)
    LOGGER.info("wrote <%s>", path)


def _write_csv(path: str, rows: np.ndarray, fmt: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        np.savetxt(file, rows, fmt=fmt, delimiter=",")
    LOGGER.info("wrote <%s>", path)


def _read_labels(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as file:
        text = file.read()
    if path.lower().endswith(".json"):
        return np.array(json.loads(text)["labels"], dtype=np.int64)
    try:
        return np.array([int(line) for line in text.split()], dtype=np.int64)
    except ValueError as exc:
        raise ValueError(f"<{path}> is not a CSV of integer labels: {exc}") from exc


def _read_features(path: str) -> FeatureMatrix:
    with open(path, "r", encoding="utf-8") as file:
        rows = np.loadtxt(file, delimiter=",", ndmin=2)
    return FeatureMatrix(rows)


def _echo(line: str, color: Optional[str] = None) -> None:
    print(colored(line, color) if color and sys.stdout.isatty() else line)


def cmd_segment(args: argparse.Namespace) -> int:
    """ segment a mesh and write the result """

    mesh = read_mesh(args.input)
    graph = build_adjacency(mesh)
    features = (
        _read_features(args.feature_file)
        if args.feature_file
        else face_features(mesh, FeatureMode(args.features))
    )

    config = RunConfig(
        model=ModelConfig(
            n_classes=args.classes,
            density_mode=DensityMode(args.density),
            init_mode=InitMode(args.init),
            covariance_update=CovarianceUpdate(args.cov),
        ),
        beta=args.beta,
        max_iterations=args.max_iter,
        tolerance=args.tol,
        icm_sweeps_per_iteration=args.sweeps,
        seed=args.seed,
    )
    LOGGER.info("segmenting <%s> (%s) with %s", args.input, mesh, config)

    result = run(features, graph, config)

    if args.output:
        _write(args.output, result_to_json(result))
    if args.ply:
        palette = _palette(args.classes)
        _write(args.ply, write_ply_colored(mesh, result.labels.labels, palette))
    if args.labels:
        _write_csv(args.labels, result.labels.labels, fmt="%d")

    converged = "true" if result.converged else "false"
    _echo(
        f"iters={result.iterations} bound={result.final_bound:.12g} "
        f"converged={converged}",
        "green" if result.converged else "yellow",
    )

    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    """ generate a synthetic case with planted labels """

    spec = SynthSpec(
        kind=SynthKind(args.kind),
        resolution=args.resolution,
        n_classes=args.classes,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    case = synth(spec)

    palette = _palette(spec.n_classes)
    _write(args.mesh, write_ply_colored(case.mesh, case.truth.labels, palette))
    _write_csv(args.features, case.features.rows, fmt="%.17g")
    _write_csv(args.truth, case.truth.labels, fmt="%d")

    _echo(f"faces={case.mesh.face_count} classes={spec.n_classes} seed={spec.seed}")

    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """ score predicted labels against the truth """

    predicted = _read_labels(args.predicted)
    truth = _read_labels(args.truth)

    if len(predicted) != len(truth):
        raise ValueError(
            f"<{args.predicted}> has {len(predicted)} labels, "
            f"<{args.truth}> has {len(truth)}"
        )

    n_classes = int(max(predicted.max(initial=0), truth.max(initial=0))) + 1
    graph = build_adjacency(read_mesh(args.mesh))
    report = evaluate(
        LabelField(predicted, n_classes), LabelField(truth, n_classes), graph
    )

    if args.output:
        _write(args.output, metrics_to_json(report))

    _echo(
        f"accuracy={report.accuracy:.6f} "
        f"boundary_smoothness={report.boundary_smoothness:.6f}"
    )

    return EXIT_OK


def _choices(enum) -> Sequence[str]:
    return tuple(member.value for member in enum)


def _parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--verbose",
        "-v",
        action="count",
        default=0,
        help="log level (repeat for more verbosity)",
    )
    common.add_argument(
        "--quiet", "-q", action="store_true", help="only log warnings and errors"
    )

    parser = argparse.ArgumentParser(
        prog="hmrf-mesh", description="HMRF-EM segmentation of triangle meshes",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True

    segment = subparsers.add_parser(
        "segment", parents=[common], help="segment a mesh into labeled blocks"
    )
    segment.add_argument("--input", "-i", required=True, help="OBJ or PLY mesh")
    segment.add_argument("--output", "-o", help="result JSON path")
    segment.add_argument("--ply", help="write the mesh colored by label to this path")
    segment.add_argument("--labels", help="write the labels as CSV to this path")
    segment.add_argument(
        "--classes", "-k", type=int, required=True, help="number of classes"
    )
    segment.add_argument(
        "--beta", type=float, default=0.0, help="Potts coupling (0 disables the MRF)"
    )
    segment.add_argument(
        "--max-iter", type=int, default=100, help="maximum EM iterations"
    )
    segment.add_argument(
        "--tol", type=float, default=1e-6, help="relative lower bound tolerance"
    )
    segment.add_argument(
        "--sweeps", type=int, default=10, help="ICM sweeps per EM iteration"
    )
    segment.add_argument("--seed", type=int, default=0, help="random seed")
    segment.add_argument(
        "--init",
        choices=_choices(InitMode),
        default=InitMode.KMEANS.value,
        help="parameter initialization",
    )
    segment.add_argument(
        "--density",
        choices=_choices(DensityMode),
        default=DensityMode.CORRECTED.value,
        help="density normalization",
    )
    segment.add_argument(
        "--cov",
        choices=_choices(CovarianceUpdate),
        default=CovarianceUpdate.FULL.value,
        help="covariance update",
    )
    segment.add_argument(
        "--features",
        choices=_choices(FeatureMode),
        default=FeatureMode.CENTROID.value,
        help="per-face features computed from the geometry",
    )
    segment.add_argument(
        "--feature-file", help="read per-face features from this CSV instead"
    )
    segment.set_defaults(func=cmd_segment)

    synth_ = subparsers.add_parser(
        "synth", parents=[common], help="generate a synthetic case"
    )
    synth_.add_argument(
        "--kind",
        choices=_choices(SynthKind),
        default=SynthKind.TWO_LOBES.value,
        help="mesh family",
    )
    synth_.add_argument("--resolution", "-r", type=int, default=12, help="grid size")
    synth_.add_argument(
        "--classes", "-k", type=int, default=2, help="number of planted regions"
    )
    synth_.add_argument(
        "--noise", type=float, default=0.0, help="feature noise standard deviation"
    )
    synth_.add_argument("--seed", type=int, default=0, help="random seed")
    synth_.add_argument("--mesh", default="synth.ply", help="output PLY path")
    synth_.add_argument("--features", default="features.csv", help="output CSV path")
    synth_.add_argument("--truth", default="truth.csv", help="output labels CSV path")
    synth_.set_defaults(func=cmd_synth)

    eval_ = subparsers.add_parser(
        "eval", parents=[common], help="score labels against the truth"
    )
    eval_.add_argument(
        "--predicted", "-p", required=True, help="labels CSV or segment result JSON"
    )
    eval_.add_argument("--truth", "-t", required=True, help="true labels CSV")
    eval_.add_argument(
        "--mesh", "-m", required=True, help="mesh the labels belong to"
    )
    eval_.add_argument("--output", "-o", help="metrics JSON path")
    eval_.set_defaults(func=cmd_eval)

    return parser.parse_args(argv)


def _run(func: Callable[[argparse.Namespace], int], args: argparse.Namespace) -> int:
    try:
        return func(args)

    except MeshParseError as exc:
        LOGGER.error("cannot parse mesh: %s", exc)
        return EXIT_PARSE

    except MeshError as exc:
        LOGGER.error("invalid mesh: %s", exc)
        return EXIT_PARSE

    except (NumericalError, np.linalg.LinAlgError) as exc:
        LOGGER.error("numerical failure: %s", exc)
        return EXIT_NUMERIC

    except OSError as exc:
        LOGGER.error("cannot access <%s>: %s", exc.filename, exc.strerror or exc)
        return EXIT_INPUT

    except ValueError as exc:
        LOGGER.error("invalid input: %s", exc)
        return EXIT_INPUT


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI entry point."""

    args = _parse_args(argv)

    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG
        if args.verbose > 0
        else logging.WARNING
        if args.quiet
        else logging.INFO,
        format="%(levelname)-4.4s [%(name)s:%(lineno)s] %(message)s",
    )

    LOGGER.debug(args)

    return _run(args.func, args)


if __name__ == "__main__":
    sys.exit(main())
