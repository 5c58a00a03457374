# -*- coding: utf-8 -*-

""" hidden label field with a Potts prior: energy, ICM and exhaustive MAP """

import logging

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .const import BRUTE_FORCE_CHUNK, BRUTE_FORCE_LIMIT
from .mesh import AdjacencyGraph, FeatureMatrix
from .model import ClassParams, DensityMode, log_densities, log_priors

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LabelField:
    """ one label in {0, ..., n_classes - 1} per site """

    labels: np.ndarray
    n_classes: int

    def __post_init__(self) -> None:
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)

        if self.n_classes < 1:
            raise ValueError(f"n_classes must be at least 1, got {self.n_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(
                f"labels must lie in [0, {self.n_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )

        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def constant(cls, site_count: int, n_classes: int, label: int = 0) -> "LabelField":
        """ every site carries the same label """
        return cls(np.full(site_count, label, dtype=np.int64), n_classes)

    @classmethod
    def argmin(cls, unaries: np.ndarray) -> "LabelField":
        """ per-site cheapest label, ties to the smallest index """
        unaries = np.asarray(unaries, dtype=float)
        return cls(np.argmin(unaries, axis=1), unaries.shape[1])

    def permuted(self, permutation: Sequence[int]) -> "LabelField":
        """ relabel every site x -> permutation[x] """
        return LabelField(np.asarray(permutation)[self.labels], self.n_classes)

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelField):
            return NotImplemented
        return self.n_classes == other.n_classes and np.array_equal(
            self.labels, other.labels
        )

    def __hash__(self) -> int:
        return hash((self.n_classes, self.labels.tobytes()))

    def __str__(self) -> str:
        return "".join(map(str, self.labels.tolist()))


@dataclass(frozen=True)
class EnergyBreakdown:
    """ Potts energy split into its unary and pairwise parts """

    unary_total: float
    pairwise_total: float
    total: float


def check_field(
    labels: LabelField, graph: AdjacencyGraph, unaries: np.ndarray, beta: float,
) -> np.ndarray:
    """ validate a labeling against its graph and cost matrix, return the costs """

    unaries = np.asarray(unaries, dtype=float)

    if unaries.shape != (graph.site_count, labels.n_classes):
        raise ValueError(
            f"unaries have shape {unaries.shape}, expected "
            f"{(graph.site_count, labels.n_classes)}"
        )
    if len(labels) != graph.site_count:
        raise ValueError(f"got {len(labels)} labels for {graph.site_count} sites")
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")

    return unaries


def unary_costs(
    features: FeatureMatrix,
    params: Sequence[ClassParams],
    mode: DensityMode = DensityMode.CORRECTED,
    ridge: Optional[float] = None,
) -> np.ndarray:
    """ (sites x classes) cost -(log prior + log density) """
    return -(log_priors(params)[None, :] + log_densities(features, params, mode, ridge))


def disagreement_counts(
    labels: LabelField, graph: AdjacencyGraph, n_classes: int
) -> np.ndarray:
    """ (sites x classes) number of neighbors whose label differs from each class """

    if len(labels) != graph.site_count:
        raise ValueError(f"got {len(labels)} labels for {graph.site_count} sites")
    if labels.n_classes != n_classes:
        raise ValueError(
            f"labels carry {labels.n_classes} classes, expected {n_classes}"
        )

    counts = np.zeros((graph.site_count, n_classes), dtype=np.int64)

    if len(graph.pairs):
        first, second = graph.pairs[:, 0], graph.pairs[:, 1]
        np.add.at(counts, (first, labels.labels[second]), 1)
        np.add.at(counts, (second, labels.labels[first]), 1)

    return graph.degrees[:, None] - counts


def _disagreeing_pairs(labels: np.ndarray, pairs: np.ndarray) -> int:
    if not len(pairs):
        return 0
    return int(np.count_nonzero(labels[pairs[:, 0]] != labels[pairs[:, 1]]))


def potts_energy(
    labels: LabelField, graph: AdjacencyGraph, unaries: np.ndarray, beta: float,
) -> EnergyBreakdown:
    """ sum of unary costs plus beta per disagreeing neighbor pair """

    unaries = check_field(labels, graph, unaries, beta)
    unary_total = float(np.sum(unaries[np.arange(len(labels)), labels.labels]))
    pairwise_total = float(beta * _disagreeing_pairs(labels.labels, graph.pairs))

    return EnergyBreakdown(
        unary_total=unary_total,
        pairwise_total=pairwise_total,
        total=unary_total + pairwise_total,
    )


def icm_sweep(
    labels: LabelField, graph: AdjacencyGraph, unaries: np.ndarray, beta: float,
) -> Tuple[LabelField, int]:
    """ one pass of iterated conditional modes in site order """

    unaries = check_field(labels, graph, unaries, beta)
    n_classes = labels.n_classes
    current = labels.labels.tolist()
    costs = unaries.tolist()
    changed = 0

    for site, (row, neighbors) in enumerate(zip(costs, graph.neighbors_of)):
        agree = [0] * n_classes
        for neighbor in neighbors:
            agree[current[neighbor]] += 1
        degree = len(neighbors)
        best, best_cost = 0, row[0] + beta * (degree - agree[0])
        for label in range(1, n_classes):
            cost = row[label] + beta * (degree - agree[label])
            if cost < best_cost:
                best, best_cost = label, cost
        if best != current[site]:
            current[site] = best
            changed += 1

    return LabelField(current, n_classes), changed


def map_labels(
    initial: LabelField,
    graph: AdjacencyGraph,
    unaries: np.ndarray,
    beta: float,
    max_sweeps: int,
) -> LabelField:
    """ ICM sweeps until no site changes or max_sweeps is reached """

    if max_sweeps < 1:
        raise ValueError(f"max_sweeps must be at least 1, got {max_sweeps}")

    labels = initial

    for sweep in range(1, max_sweeps + 1):
        labels, changed = icm_sweep(labels, graph, unaries, beta)
        LOGGER.debug("ICM sweep %d: %d site(s) changed", sweep, changed)
        if not changed:
            break

    return labels


def brute_force_map(
    graph: AdjacencyGraph, unaries: np.ndarray, beta: float,
) -> Tuple[LabelField, float]:
    """ exact Potts MAP by enumerating every labeling in lexicographic order """

    unaries = np.asarray(unaries, dtype=float)
    site_count, n_classes = unaries.shape

    if site_count != graph.site_count:
        raise ValueError(
            f"unaries cover {site_count} sites, graph has {graph.site_count}"
        )

    total = n_classes ** site_count
    if total > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"{n_classes}^{site_count} = {total} labelings exceed the "
            f"exhaustive search limit of {BRUTE_FORCE_LIMIT}"
        )

    # site 0 is the most significant digit, so codes run in lexicographic order
    place_values = n_classes ** np.arange(site_count - 1, -1, -1, dtype=np.int64)
    pairs = graph.pairs
    best_code, best_energy = 0, np.inf

    for start in range(0, total, BRUTE_FORCE_CHUNK):
        codes = np.arange(start, min(start + BRUTE_FORCE_CHUNK, total), dtype=np.int64)
        candidates = (codes[:, None] // place_values[None, :]) % n_classes
        energies = unaries[np.arange(site_count)[None, :], candidates].sum(axis=1)
        if len(pairs):
            energies = energies + beta * np.count_nonzero(
                candidates[:, pairs[:, 0]] != candidates[:, pairs[:, 1]], axis=1
            )
        index = int(np.argmin(energies))
        if energies[index] < best_energy:
            best_code, best_energy = int(codes[index]), float(energies[index])

    labels = LabelField((best_code // place_values) % n_classes, n_classes)
    energy = potts_energy(labels, graph, unaries, beta).total

    LOGGER.debug("exhaustive MAP over %d labelings: %s (%g)", total, labels, energy)

    return labels, energy
