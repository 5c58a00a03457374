# -*- coding: utf-8 -*-

""" EM estimation of the Gaussian class model coupled with the Potts label field """

import json
import logging
import math

from dataclasses import dataclass, field
from typing import Dict, Generator, List, Optional, Sequence, Tuple

import numpy as np

from scipy.special import logsumexp

from .const import (
    DEFAULT_ICM_SWEEPS,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOLERANCE,
    EMPTY_CLASS_MASS,
    PRIOR_SUM_TOLERANCE,
)
from .exceptions import NumericalError
from .hmrf import (
    LabelField,
    check_field,
    disagreement_counts,
    map_labels,
    unary_costs,
)
from .mesh import AdjacencyGraph, FeatureMatrix
from .model import (
    ClassParams,
    CovarianceUpdate,
    DensityMode,
    ModelConfig,
    init_params,
    log_densities,
    log_priors,
    params_from_dict,
    params_to_dict,
    ridge_term,
)

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    """ settings of one HMRF-EM run """

    model: ModelConfig
    beta: float = 0.0
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    tolerance: float = DEFAULT_TOLERANCE
    icm_sweeps_per_iteration: int = DEFAULT_ICM_SWEEPS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.max_iterations < 1:
            raise ValueError(
                f"max_iterations must be at least 1, got {self.max_iterations}"
            )
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.icm_sweeps_per_iteration < 1:
            raise ValueError(
                "icm_sweeps_per_iteration must be at least 1, "
                f"got {self.icm_sweeps_per_iteration}"
            )


@dataclass(frozen=True, eq=False)
class EmState:
    """ snapshot of the estimation after an iteration (0 = initialization) """

    responsibilities: np.ndarray
    params: Tuple[ClassParams, ...]
    labels: Optional[LabelField]
    bound_trace: Tuple[float, ...] = ()
    likelihood_trace: Tuple[float, ...] = ()
    iteration: int = 0
    converged: bool = False


@dataclass(frozen=True, eq=False)
class SegmentationResult:
    """ final labels and parameters of a run """

    labels: LabelField
    params: Tuple[ClassParams, ...]
    bound_trace: Tuple[float, ...]
    converged: bool
    argmax_prior_class: Tuple[int, float]
    likelihood_trace: Tuple[float, ...] = ()
    responsibilities: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        """ number of EM iterations performed """
        return len(self.bound_trace)

    @property
    def final_bound(self) -> float:
        """ last lower bound value """
        return self.bound_trace[-1] if self.bound_trace else -math.inf


def _log_joint(
    features: FeatureMatrix,
    params: Sequence[ClassParams],
    mode: DensityMode,
    ridge: Optional[float],
) -> np.ndarray:
    return log_priors(params)[None, :] + log_densities(features, params, mode, ridge)


def _check_priors(params: Sequence[ClassParams]) -> None:
    total = math.fsum(par.prior for par in params)
    if abs(total - 1) > PRIOR_SUM_TOLERANCE:
        raise ValueError(f"class priors sum to {total}, not 1")


def log_likelihood(
    features: FeatureMatrix,
    params: Sequence[ClassParams],
    mode: DensityMode = DensityMode.CORRECTED,
    ridge: Optional[float] = None,
) -> float:
    """ sum over sites of the log mixture density """

    if not len(features):
        raise ValueError("cannot evaluate the likelihood of an empty feature set")

    _check_priors(params)

    return float(np.sum(logsumexp(_log_joint(features, params, mode, ridge), axis=1)))


def e_step(
    features: FeatureMatrix,
    params: Sequence[ClassParams],
    labels: Optional[LabelField] = None,
    graph: Optional[AdjacencyGraph] = None,
    beta: float = 0.0,
    mode: DensityMode = DensityMode.CORRECTED,
    ridge: Optional[float] = None,
) -> np.ndarray:
    """ posterior class probabilities, times a neighbor prior if beta > 0 """

    log_weights = _log_joint(features, params, mode, ridge)

    if beta > 0:
        if labels is None or graph is None:
            raise ValueError("labels and graph are required when beta > 0")
        check_field(labels, graph, log_weights, beta)
        log_weights = log_weights - beta * disagreement_counts(
            labels, graph, len(params)
        )

    normalizer = logsumexp(log_weights, axis=1, keepdims=True)

    if not np.all(np.isfinite(normalizer)):
        bad = int(np.flatnonzero(~np.isfinite(normalizer[:, 0]))[0])
        raise NumericalError(f"all classes underflow at site {bad}")

    return np.exp(log_weights - normalizer)


def _rescue_empty(
    features: FeatureMatrix, responsibilities: np.ndarray, empty: np.ndarray,
) -> Dict[int, np.ndarray]:
    # re-seed at the sites least claimed by any class, most doubtful first
    doubtful = np.argsort(responsibilities.max(axis=1), kind="stable")
    seeds = {}

    for j, site in zip(empty.tolist(), doubtful.tolist()):
        LOGGER.warning("class %d is empty, re-seeding it at site %d", j, site)
        seeds[j] = features.rows[site]

    return seeds


def m_step(
    features: FeatureMatrix, responsibilities: np.ndarray, config: ModelConfig,
) -> List[ClassParams]:
    """ closed-form Gaussian parameter updates from the responsibilities """

    rows = features.rows
    resp = np.asarray(responsibilities, dtype=float)
    size = len(rows)

    if resp.shape != (size, config.n_classes):
        raise ValueError(
            f"responsibilities have shape {resp.shape}, expected "
            f"{(size, config.n_classes)}"
        )

    masses = resp.sum(axis=0)
    empty = np.flatnonzero(masses < EMPTY_CLASS_MASS)
    seeds = _rescue_empty(features, resp, empty)
    priors = masses / size

    if seeds:
        priors[empty] = 1.0 / size
        priors = priors / priors.sum()
        spread = np.diag(rows.var(axis=0))
        spread = spread + ridge_term(spread, config.ridge)

    params = []

    for j in range(config.n_classes):
        if config.covariance_update is CovarianceUpdate.FIXED_IDENTITY:
            mean = seeds[j] if j in seeds else resp[:, j] @ rows / masses[j]
            covariance = np.eye(features.dim)

        elif j in seeds:
            mean, covariance = seeds[j], spread

        else:
            weights = resp[:, j]
            mean = weights @ rows / masses[j]
            centered = rows - mean
            scatter = (weights[:, None] * centered).T @ centered / masses[j]
            scatter = 0.5 * (scatter + scatter.T)
            covariance = scatter + ridge_term(scatter, config.ridge)

        params.append(
            ClassParams(
                mean=mean,
                covariance=covariance,
                prior=min(priors[j], 1.0),
                ridge=config.ridge,
            )
        )

    return params


def lower_bound(
    features: FeatureMatrix,
    responsibilities: np.ndarray,
    params: Sequence[ClassParams],
    mode: DensityMode = DensityMode.CORRECTED,
    ridge: Optional[float] = None,
) -> float:
    """ Jensen lower bound sum_i sum_z Q log(p(y, z) / Q); Q = 0 terms add nothing """

    resp = np.asarray(responsibilities, dtype=float)
    log_joint = _log_joint(features, params, mode, ridge)

    if resp.shape != log_joint.shape:
        raise ValueError(
            f"responsibilities have shape {resp.shape}, expected {log_joint.shape}"
        )

    positive = resp > 0
    terms = np.zeros_like(resp)
    terms[positive] = resp[positive] * (
        log_joint[positive] - np.log(resp[positive])
    )

    return float(np.sum(terms))


def _final_labels(
    state_labels: Optional[LabelField], responsibilities: np.ndarray
) -> LabelField:
    if state_labels is not None:
        return state_labels
    return LabelField(np.argmax(responsibilities, axis=1), responsibilities.shape[1])


def iter_states(
    features: FeatureMatrix, graph: AdjacencyGraph, config: RunConfig,
) -> Generator[EmState, None, None]:
    """ yield the initial state, then the state after every EM iteration """

    model = config.model

    if len(features) != graph.site_count:
        raise ValueError(
            f"got {len(features)} feature rows for {graph.site_count} sites"
        )

    params, responsibilities = init_params(features, model, config.seed)
    labels: Optional[LabelField] = None
    bounds: List[float] = []
    likelihoods: List[float] = []

    yield EmState(responsibilities, tuple(params), labels)

    for iteration in range(1, config.max_iterations + 1):
        previous_labels = labels

        if config.beta > 0:
            unaries = unary_costs(features, params, model.density_mode, model.ridge)
            labels = map_labels(
                labels if labels is not None else LabelField.argmin(unaries),
                graph,
                unaries,
                config.beta,
                config.icm_sweeps_per_iteration,
            )

        updated = e_step(
            features,
            params,
            labels,
            graph,
            config.beta,
            model.density_mode,
            model.ridge,
        )
        params = m_step(features, updated, model)
        bound = lower_bound(features, updated, params, model.density_mode, model.ridge)
        likelihood = log_likelihood(features, params, model.density_mode, model.ridge)

        if not math.isfinite(bound):
            raise NumericalError(
                f"lower bound is not finite at iteration {iteration}: {bound}"
            )

        fixed_point = np.array_equal(updated, responsibilities) and (
            labels is None or labels == previous_labels
        )
        converged = fixed_point or (
            bool(bounds)
            and abs(bound - bounds[-1]) / (1 + abs(bound)) < config.tolerance
        )

        responsibilities = updated
        bounds.append(bound)
        likelihoods.append(likelihood)

        LOGGER.debug(
            "iteration %d: bound %.12g, log-likelihood %.12g%s",
            iteration,
            bound,
            likelihood,
            " (converged)" if converged else "",
        )

        yield EmState(
            responsibilities=responsibilities,
            params=tuple(params),
            labels=labels,
            bound_trace=tuple(bounds),
            likelihood_trace=tuple(likelihoods),
            iteration=iteration,
            converged=converged,
        )

        if converged:
            return


def run(
    features: FeatureMatrix, graph: AdjacencyGraph, config: RunConfig,
) -> SegmentationResult:
    """ HMRF-EM: alternate ICM labels, E-step and M-step until the bound settles """

    state = None

    for state in iter_states(features, graph, config):
        pass

    assert state is not None and state.iteration >= 1

    if not state.converged:
        LOGGER.warning(
            "no convergence after %d iterations (tolerance %g)",
            state.iteration,
            config.tolerance,
        )

    priors = [par.prior for par in state.params]
    best = int(np.argmax(priors))

    result = SegmentationResult(
        labels=_final_labels(state.labels, state.responsibilities),
        params=state.params,
        bound_trace=state.bound_trace,
        converged=state.converged,
        argmax_prior_class=(best, priors[best]),
        likelihood_trace=state.likelihood_trace,
        responsibilities=state.responsibilities,
    )

    LOGGER.info(
        "segmented %d sites into %d classes: %d iterations, bound %.12g, converged %s",
        len(features),
        config.model.n_classes,
        result.iterations,
        result.final_bound,
        result.converged,
    )

    return result


def result_to_dict(result: SegmentationResult) -> dict:
    """ JSON-ready mapping of a segmentation result """
    label, prior = result.argmax_prior_class
    return {
        "labels": result.labels.labels.tolist(),
        "params": params_to_dict(result.params),
        "bound_trace": list(result.bound_trace),
        "likelihood_trace": list(result.likelihood_trace),
        "converged": result.converged,
        "iterations": result.iterations,
        "argmax_prior_class": {"label": label, "prior": prior},
    }


def result_to_json(result: SegmentationResult) -> str:
    """ serialize a segmentation result """
    return json.dumps(result_to_dict(result), indent=2) + "\n"


def result_from_json(text: str) -> SegmentationResult:
    """ deserialize a segmentation result """

    data = json.loads(text)
    params = tuple(params_from_dict(data["params"]))
    best = data["argmax_prior_class"]

    return SegmentationResult(
        labels=LabelField(data["labels"], len(params)),
        params=params,
        bound_trace=tuple(data["bound_trace"]),
        converged=bool(data["converged"]),
        argmax_prior_class=(int(best["label"]), float(best["prior"])),
        likelihood_trace=tuple(data.get("likelihood_trace", ())),
    )
