# -*- coding: utf-8 -*-

""" synthetic meshes with planted labels, and segmentation metrics """

import json
import logging

from dataclasses import dataclass, replace
from enum import Enum
from itertools import permutations
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .const import MAX_EXACT_PERMUTATION_CLASSES
from .em import RunConfig, run
from .hmrf import LabelField
from .mesh import (
    AdjacencyGraph,
    FeatureMatrix,
    TriangleMesh,
    build_adjacency,
    face_features,
)

LOGGER = logging.getLogger(__name__)

LOBE_HEIGHT = 0.4
LOBE_GAP = 1.0


class SynthKind(Enum):
    """ synthetic mesh families """

    GRID_SHEET = "grid_sheet"
    SPHERE = "sphere"
    TWO_LOBES = "two_lobes"


@dataclass(frozen=True)
class SynthSpec:
    """ recipe for a synthetic segmentation case """

    kind: SynthKind
    resolution: int
    n_classes: int
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SynthKind(self.kind))
        if self.resolution < 2:
            raise ValueError(f"resolution must be at least 2, got {self.resolution}")
        if self.n_classes < 1:
            raise ValueError(f"n_classes must be at least 1, got {self.n_classes}")
        if not self.noise_sigma >= 0:
            raise ValueError(
                f"noise_sigma must be non-negative, got {self.noise_sigma}"
            )

    @property
    def max_classes(self) -> int:
        """ number of regions this kind can plant at this resolution """
        if self.kind is SynthKind.GRID_SHEET:
            return self.resolution - 1
        if self.kind is SynthKind.SPHERE:
            return self.resolution
        return 2


@dataclass(frozen=True, eq=False)
class SynthCase:
    """ mesh, noisy features and planted labels """

    mesh: TriangleMesh
    features: FeatureMatrix
    truth: LabelField


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """ segmentation quality against a planted truth """

    accuracy: float
    boundary_smoothness: float
    confusion: np.ndarray
    permutation: Tuple[int, ...] = ()
    exact: bool = True


def _grid_faces(resolution: int) -> np.ndarray:
    # each quad (i, j)-(i+1, j+1) splits along its diagonal into two triangles
    index = np.arange(resolution * resolution).reshape(resolution, resolution)
    v00 = index[:-1, :-1].ravel()
    v10 = index[1:, :-1].ravel()
    v11 = index[1:, 1:].ravel()
    v01 = index[:-1, 1:].ravel()
    first = np.stack((v00, v10, v11), axis=1)
    second = np.stack((v00, v11, v01), axis=1)
    return np.stack((first, second), axis=1).reshape(-1, 3)


def _grid_sheet(spec: SynthSpec) -> Tuple[TriangleMesh, np.ndarray]:
    res = spec.resolution
    u, v = np.meshgrid(np.linspace(0, 1, res), np.linspace(0, 1, res), indexing="ij")
    vertices = np.stack((u.ravel(), v.ravel(), np.zeros(res * res)), axis=1)
    mesh = TriangleMesh(vertices, _grid_faces(res))
    columns = np.minimum(mesh.faces.min(axis=1) // res, res - 2)
    labels = columns * spec.n_classes // (res - 1)
    return mesh, labels


def _two_lobes(spec: SynthSpec) -> Tuple[TriangleMesh, np.ndarray]:
    res = spec.resolution
    seam = (res - 1) // 2  # last vertex column of the left lobe
    u, v = np.meshgrid(
        np.arange(res, dtype=float), np.linspace(0, 1, res), indexing="ij"
    )
    width = max(seam, 1)
    right = u > seam
    local = np.where(right, (u - seam - 1) / max(res - seam - 2, 1), u / width)
    x = np.where(right, 1 + LOBE_GAP + local, local)
    z = LOBE_HEIGHT * np.sin(np.pi * local) * np.sin(np.pi * v)
    vertices = np.stack((x.ravel(), v.ravel(), z.ravel()), axis=1)
    mesh = TriangleMesh(vertices, _grid_faces(res))
    # a face belongs to the lobe holding the majority of its vertices
    on_right = (mesh.faces // res > seam).sum(axis=1) >= 2
    labels = on_right.astype(np.int64) * min(spec.n_classes - 1, 1)
    return mesh, labels


def _sphere(spec: SynthSpec) -> Tuple[TriangleMesh, np.ndarray]:
    rings = spec.resolution
    segments = 2 * rings
    polar = np.pi * np.arange(1, rings) / rings
    azimuth = 2 * np.pi * np.arange(segments) / segments
    theta, phi = np.meshgrid(polar, azimuth, indexing="ij")
    body = np.stack(
        (np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)),
        axis=-1,
    ).reshape(-1, 3)
    vertices = np.vstack(([0.0, 0.0, 1.0], body, [0.0, 0.0, -1.0]))
    south = len(vertices) - 1

    def ring(k: int, s: int) -> int:
        return 1 + k * segments + s % segments

    faces = [(0, ring(0, s), ring(0, s + 1)) for s in range(segments)]
    bands = [0] * segments
    for k in range(rings - 2):
        for s in range(segments):
            faces.append((ring(k, s), ring(k + 1, s), ring(k + 1, s + 1)))
            faces.append((ring(k, s), ring(k + 1, s + 1), ring(k, s + 1)))
            bands.extend((k + 1, k + 1))
    faces.extend(
        (south, ring(rings - 2, s + 1), ring(rings - 2, s)) for s in range(segments)
    )
    bands.extend([rings - 1] * segments)

    mesh = TriangleMesh(vertices, np.array(faces))
    labels = np.array(bands) * spec.n_classes // rings
    return mesh, labels


_BUILDERS = {
    SynthKind.GRID_SHEET: _grid_sheet,
    SynthKind.SPHERE: _sphere,
    SynthKind.TWO_LOBES: _two_lobes,
}


def synth(spec: SynthSpec) -> SynthCase:
    """ planted-region mesh with face features perturbed by Gaussian noise """

    if spec.n_classes > spec.max_classes:
        raise ValueError(
            f"{spec.kind.value} at resolution {spec.resolution} can plant at most "
            f"{spec.max_classes} regions, got n_classes={spec.n_classes}"
        )

    mesh, labels = _BUILDERS[spec.kind](spec)
    clean = face_features(mesh).rows
    rng = np.random.default_rng(spec.seed)
    noisy = clean + spec.noise_sigma * rng.standard_normal(clean.shape)

    LOGGER.debug(
        "synth %s: %s, class sizes %s",
        spec.kind.value,
        mesh,
        np.bincount(labels, minlength=spec.n_classes).tolist(),
    )

    return SynthCase(mesh, FeatureMatrix(noisy), LabelField(labels, spec.n_classes))


def boundary_smoothness(labels: LabelField, graph: AdjacencyGraph) -> float:
    """ fraction of neighbor pairs whose labels agree """

    pairs = graph.pairs

    if not len(pairs):
        raise ValueError("boundary smoothness needs at least one neighbor pair")
    if len(labels) != graph.site_count:
        raise ValueError(f"got {len(labels)} labels for {graph.site_count} sites")

    agree = labels.labels[pairs[:, 0]] == labels.labels[pairs[:, 1]]
    return int(np.count_nonzero(agree)) / len(pairs)


def _aligned(predicted: LabelField, truth: LabelField) -> int:
    if len(predicted) != len(truth):
        raise ValueError(
            f"predicted has {len(predicted)} labels, truth has {len(truth)}"
        )
    if not len(truth):
        raise ValueError("cannot score empty labelings")
    return max(predicted.n_classes, truth.n_classes)


def confusion_matrix(predicted: LabelField, truth: LabelField) -> np.ndarray:
    """ counts[t, p] of sites with true label t and predicted label p """
    n_classes = _aligned(predicted, truth)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (truth.labels, predicted.labels), 1)
    return counts


def _greedy_matching(confusion: np.ndarray) -> Tuple[int, ...]:
    n_classes = len(confusion)
    mapping = [-1] * n_classes
    taken = set()
    order = np.argsort(-confusion, axis=None, kind="stable")
    for flat in order.tolist():
        true, pred = divmod(flat, n_classes)
        if mapping[pred] < 0 and true not in taken:
            mapping[pred] = true
            taken.add(true)
    return tuple(mapping)


def label_accuracy(
    predicted: LabelField, truth: LabelField, greedy: bool = False,
) -> Tuple[float, Tuple[int, ...]]:
    """ best matching fraction over label permutations, and that permutation

    The permutation maps each predicted label to the true label it is scored
    against. Above the exhaustive limit a greedy matching is used only when
    ``greedy`` is set; its accuracy is then a lower bound.
    """

    confusion = confusion_matrix(predicted, truth)
    n_classes = len(confusion)

    if n_classes > MAX_EXACT_PERMUTATION_CLASSES:
        if not greedy:
            raise ValueError(
                f"exhaustive matching supports at most "
                f"{MAX_EXACT_PERMUTATION_CLASSES} classes, got {n_classes}"
            )
        LOGGER.warning(
            "%d classes: greedy label matching, accuracy is a lower bound", n_classes
        )
        best = _greedy_matching(confusion)

    else:
        candidates = np.array(list(permutations(range(n_classes))), dtype=np.int64)
        scores = confusion[candidates, np.arange(n_classes)[None, :]].sum(axis=1)
        best = tuple(candidates[int(np.argmax(scores))].tolist())

    matched = int(confusion[list(best), list(range(n_classes))].sum())
    return matched / len(truth), best


def evaluate(
    predicted: LabelField, truth: LabelField, graph: AdjacencyGraph,
) -> MetricsReport:
    """ accuracy, boundary smoothness and confusion of a predicted labeling """

    n_classes = _aligned(predicted, truth)
    exact = n_classes <= MAX_EXACT_PERMUTATION_CLASSES
    accuracy, permutation = label_accuracy(predicted, truth, greedy=not exact)

    return MetricsReport(
        accuracy=accuracy,
        boundary_smoothness=boundary_smoothness(predicted, graph),
        confusion=confusion_matrix(predicted, truth),
        permutation=permutation,
        exact=exact,
    )


def metrics_to_json(report: MetricsReport) -> str:
    """ serialize a metrics report """
    data = {
        "accuracy": report.accuracy,
        "boundary_smoothness": report.boundary_smoothness,
        "confusion": report.confusion.tolist(),
        "permutation": list(report.permutation),
        "exact": report.exact,
    }
    return json.dumps(data, indent=2) + "\n"


@dataclass(frozen=True)
class BenchmarkRow:
    """ mean metrics of one beta over a set of seeds """

    beta: float
    accuracy: float
    boundary_smoothness: float
    runs: int


def benchmark(
    spec: SynthSpec, betas: Sequence[float], seeds: Sequence[int], config: RunConfig,
) -> List[BenchmarkRow]:
    """ segment the same synthetic instances once per beta and average the metrics """

    scores: Dict[float, List[Tuple[float, float]]] = {beta: [] for beta in betas}

    for seed in seeds:
        case = synth(replace(spec, seed=seed))
        graph = build_adjacency(case.mesh)
        for beta in betas:
            result = run(case.features, graph, replace(config, beta=beta, seed=seed))
            report = evaluate(result.labels, case.truth, graph)
            scores[beta].append((report.accuracy, report.boundary_smoothness))

    rows = []
    for beta, values in scores.items():
        accuracy, smoothness = np.mean(values, axis=0).tolist()
        rows.append(BenchmarkRow(beta, accuracy, smoothness, len(values)))
        LOGGER.info(
            "beta %g: accuracy %.4f, boundary smoothness %.4f over %d runs",
            beta,
            accuracy,
            smoothness,
            len(values),
        )

    return rows
