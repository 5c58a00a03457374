# -*- coding: utf-8 -*-

""" per-class Gaussian observation model """

import json
import logging
import math

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from scipy import linalg

from .const import DEFAULT_RIDGE, KMEANS_LLOYD_ITERATIONS
from .exceptions import NumericalError
from .mesh import FeatureMatrix

LOGGER = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)


class DensityMode(Enum):
    """ normalization of the Gaussian density """

    CORRECTED = "corrected"
    PAPER = "paper"


class InitMode(Enum):
    """ parameter initialization strategy """

    PAPER = "paper"
    KMEANS = "kmeans"


class CovarianceUpdate(Enum):
    """ M-step covariance policy """

    FULL = "full"
    FIXED_IDENTITY = "identity"


@dataclass(frozen=True)
class ModelConfig:
    """ observation model settings """

    n_classes: int
    density_mode: DensityMode = DensityMode.CORRECTED
    init_mode: InitMode = InitMode.KMEANS
    covariance_update: CovarianceUpdate = CovarianceUpdate.FULL
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self) -> None:
        if self.n_classes < 1:
            raise ValueError(f"n_classes must be at least 1, got {self.n_classes}")
        if not self.ridge > 0:
            raise ValueError(f"ridge must be positive, got {self.ridge}")
        object.__setattr__(self, "density_mode", DensityMode(self.density_mode))
        object.__setattr__(self, "init_mode", InitMode(self.init_mode))
        object.__setattr__(
            self, "covariance_update", CovarianceUpdate(self.covariance_update)
        )


def _frozen(values: Sequence, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=float, ndmin=ndim)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ClassParams:
    """ mean, covariance and prior of one class; the covariance must factorize """

    mean: np.ndarray
    covariance: np.ndarray
    prior: float
    ridge: float = field(default=DEFAULT_RIDGE, compare=False)
    _factors: Dict[float, np.ndarray] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        mean = _frozen(self.mean, 1)
        covariance = _frozen(self.covariance, 2)

        if mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {mean.shape}")
        if covariance.shape != (len(mean), len(mean)):
            raise ValueError(
                f"covariance shape {covariance.shape} does not match "
                f"mean dimension {len(mean)}"
            )
        if not np.all(np.isfinite(covariance)) or not np.all(np.isfinite(mean)):
            raise ValueError("class parameters must be finite")
        if not np.allclose(covariance, covariance.T, rtol=1e-10, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if not 0 <= self.prior <= 1:
            raise ValueError(f"prior must lie in [0, 1], got {self.prior}")
        if not self.ridge > 0:
            raise ValueError(f"ridge must be positive, got {self.ridge}")

        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", covariance)
        object.__setattr__(self, "prior", float(self.prior))
        object.__setattr__(self, "ridge", float(self.ridge))

        self.cholesky()

    @property
    def dim(self) -> int:
        """ feature dimension """
        return len(self.mean)

    def cholesky(self, ridge: Optional[float] = None) -> np.ndarray:
        """ lower Cholesky factor of the covariance, ridge-regularized if needed """

        ridge = self.ridge if ridge is None else float(ridge)
        factor = self._factors.get(ridge)

        if factor is None:
            factor = _factorize(self.covariance, ridge)
            self._factors[ridge] = factor

        return factor


def _factorize(covariance: np.ndarray, ridge: float) -> np.ndarray:
    try:
        factor = linalg.cholesky(covariance, lower=True)

    except linalg.LinAlgError:
        LOGGER.debug("covariance not positive-definite, adding ridge %g", ridge)
        try:
            factor = linalg.cholesky(
                covariance + ridge_term(covariance, ridge), lower=True
            )
        except linalg.LinAlgError as exc:
            raise NumericalError(
                "covariance is not positive-definite even after ridge "
                f"regularization: {covariance.tolist()}"
            ) from exc

    factor.setflags(write=False)
    return factor


def ridge_term(covariance: np.ndarray, ridge: float) -> np.ndarray:
    """ ridge * (trace / d) * I, or ridge * I for a zero covariance """
    dim = covariance.shape[0]
    scale = float(np.trace(covariance)) / dim
    return ridge * (scale if scale > 0 else 1.0) * np.eye(dim)


def _normalizer(dim: int, mode: DensityMode) -> float:
    # PAPER keeps the one-dimensional constant whatever the dimension
    if DensityMode(mode) is DensityMode.PAPER:
        return 0.5 * LOG_2PI
    return 0.5 * dim * LOG_2PI


def _log_gaussian(
    rows: np.ndarray, params: ClassParams, mode: DensityMode, ridge: Optional[float],
) -> np.ndarray:
    factor = params.cholesky(ridge)
    solved = linalg.solve_triangular(factor, (rows - params.mean).T, lower=True)
    mahalanobis = np.sum(solved ** 2, axis=0)
    half_log_det = np.sum(np.log(np.diag(factor)))
    return -_normalizer(params.dim, mode) - half_log_det - 0.5 * mahalanobis


def log_density(
    x: Sequence[float],
    params: ClassParams,
    mode: DensityMode = DensityMode.CORRECTED,
    ridge: Optional[float] = None,
) -> float:
    """ log of the Gaussian density of x under the class parameters """

    row = np.asarray(x, dtype=float).reshape(1, -1)

    if row.shape[1] != params.dim:
        raise ValueError(
            f"feature dimension {row.shape[1]} does not match class dimension "
            f"{params.dim}"
        )

    return float(_log_gaussian(row, params, mode, ridge)[0])


def log_densities(
    features: FeatureMatrix,
    params: Sequence[ClassParams],
    mode: DensityMode = DensityMode.CORRECTED,
    ridge: Optional[float] = None,
) -> np.ndarray:
    """ (sites x classes) log densities, by default with each class's own ridge """

    for j, par in enumerate(params):
        if par.dim != features.dim:
            raise ValueError(
                f"class {j} has dimension {par.dim}, features have {features.dim}"
            )

    return np.column_stack(
        [_log_gaussian(features.rows, par, mode, ridge) for par in params]
    )


def log_priors(params: Sequence[ClassParams]) -> np.ndarray:
    """ log prior per class, -inf where the prior is zero """
    priors = np.array([par.prior for par in params], dtype=float)
    result = np.full(len(priors), -np.inf)
    np.log(priors, out=result, where=priors > 0)
    return result


def kmeans_plus_plus(
    points: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """ k-means++ seeding: each new center drawn proportional to squared distance """

    n_samples = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    min_squared = np.full(n_samples, np.inf)
    centers[0] = points[rng.integers(n_samples)]

    for i in range(1, k):
        squared = np.sum((points - centers[i - 1]) ** 2, axis=1)
        min_squared = np.minimum(min_squared, squared)
        total = min_squared.sum()
        index = (
            rng.choice(n_samples, p=min_squared / total)
            if total > 0
            else rng.integers(n_samples)
        )
        centers[i] = points[index]

    return centers


def _assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    squared = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    return np.argmin(squared, axis=1)


def lloyd(
    points: np.ndarray, centers: np.ndarray, iterations: int = KMEANS_LLOYD_ITERATIONS,
) -> Tuple[np.ndarray, np.ndarray]:
    """ Lloyd iterations; a center whose cluster empties stays where it is """

    centers = np.array(centers, dtype=float)

    for iteration in range(iterations):
        assignment = _assign(points, centers)
        updated = centers.copy()
        for j in range(len(centers)):
            members = assignment == j
            if members.any():
                updated[j] = points[members].mean(axis=0)
        if np.array_equal(updated, centers):
            LOGGER.debug("Lloyd converged after %d iterations", iteration)
            break
        centers = updated

    return centers, _assign(points, centers)


def _paper_init(
    features: FeatureMatrix, config: ModelConfig
) -> Tuple[List[ClassParams], np.ndarray]:
    n_classes = config.n_classes
    params = [
        ClassParams(
            mean=np.full(features.dim, 2.0 * j),
            covariance=np.eye(features.dim),
            prior=1.0 / n_classes,
            ridge=config.ridge,
        )
        for j in range(n_classes)
    ]
    return params, np.zeros((len(features), n_classes))


def _kmeans_init(
    features: FeatureMatrix, config: ModelConfig, seed: int
) -> Tuple[List[ClassParams], np.ndarray]:
    points = features.rows
    rng = np.random.default_rng(seed)
    seeds = kmeans_plus_plus(points, config.n_classes, rng)
    centers, assignment = lloyd(points, seeds)

    params = []
    for j, center in enumerate(centers):
        members = points[assignment == j]
        variance = (
            np.diag(members.var(axis=0))
            if len(members)
            else np.zeros((features.dim, features.dim))
        )
        params.append(
            ClassParams(
                mean=center,
                covariance=variance + ridge_term(variance, config.ridge),
                prior=len(members) / len(points),
                ridge=config.ridge,
            )
        )

    responsibilities = np.zeros((len(points), config.n_classes))
    responsibilities[np.arange(len(points)), assignment] = 1.0

    return params, responsibilities


def init_params(
    features: FeatureMatrix, config: ModelConfig, seed: int = 0,
) -> Tuple[List[ClassParams], np.ndarray]:
    """ initial class parameters and responsibilities """

    if config.n_classes > len(features):
        raise ValueError(
            f"cannot fit {config.n_classes} classes to {len(features)} sites"
        )

    if config.init_mode is InitMode.PAPER:
        params, responsibilities = _paper_init(features, config)
    else:
        params, responsibilities = _kmeans_init(features, config, seed)

    LOGGER.debug(
        "initialized %d classes (%s): priors %s",
        config.n_classes,
        config.init_mode.value,
        [round(p.prior, 6) for p in params],
    )

    return params, responsibilities


def params_to_dict(params: Sequence[ClassParams]) -> dict:
    """ JSON-ready mapping of means, covariances and priors """
    return {
        "means": [par.mean.tolist() for par in params],
        "covariances": [par.covariance.tolist() for par in params],
        "priors": [par.prior for par in params],
    }


def params_from_dict(data: dict, ridge: float = DEFAULT_RIDGE) -> List[ClassParams]:
    """ class parameters from the JSON mapping, each checked to factorize """

    means, covariances, priors = data["means"], data["covariances"], data["priors"]

    if not len(means) == len(covariances) == len(priors):
        raise ValueError(
            f"inconsistent class counts: {len(means)} means, "
            f"{len(covariances)} covariances, {len(priors)} priors"
        )

    return [
        ClassParams(mean=mean, covariance=cov, prior=prior, ridge=ridge)
        for mean, cov, prior in zip(means, covariances, priors)
    ]


def params_to_json(params: Sequence[ClassParams]) -> str:
    """ serialize class parameters """
    return json.dumps(params_to_dict(params))


def params_from_json(text: str, ridge: float = DEFAULT_RIDGE) -> List[ClassParams]:
    """ deserialize class parameters """
    return params_from_dict(json.loads(text), ridge)
