# -*- coding: utf-8 -*-

""" Gaussian class model: densities, initialization, serialization """

import json
import math

import numpy as np
import pytest

from hypothesis import given, settings
from hypothesis import strategies as st

from hmrf_mesh.exceptions import NumericalError
from hmrf_mesh.mesh import FeatureMatrix
from hmrf_mesh.model import (
    ClassParams,
    CovarianceUpdate,
    DensityMode,
    InitMode,
    ModelConfig,
    init_params,
    kmeans_plus_plus,
    lloyd,
    log_densities,
    log_density,
    params_from_json,
    params_to_json,
    ridge_term,
)

LOG_2PI = math.log(2 * math.pi)

reals = st.floats(min_value=-20, max_value=20, allow_nan=False)


def _unit(dim: int, mean=None) -> ClassParams:
    return ClassParams(
        mean=np.zeros(dim) if mean is None else mean, covariance=np.eye(dim), prior=1.0
    )


def _planted_clusters(seed: int = 0, size: int = 30) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.vstack(
        (
            rng.normal(0.0, 0.1, size=(size, 3)),
            rng.normal(10.0, 0.1, size=(size, 3)),
        )
    )


def test_log_density_values():
    assert log_density([0, 0], _unit(2)) == pytest.approx(-LOG_2PI, abs=1e-12)
    assert log_density([0, 0], _unit(2)) == pytest.approx(-1.837877, abs=1e-6)
    assert log_density([2], _unit(1)) == pytest.approx(-2.918939, abs=1e-6)
    assert log_density([0, 0], _unit(2), DensityMode.PAPER) == pytest.approx(
        -0.918939, abs=1e-6
    )


def test_log_density_full_covariance():
    covariance = np.array([[2.0, 0.5], [0.5, 1.0]])
    params = ClassParams(mean=[1.0, -1.0], covariance=covariance, prior=1.0)
    x = np.array([0.3, 0.4])
    diff = x - params.mean
    expected = (
        -LOG_2PI
        - 0.5 * math.log(np.linalg.det(covariance))
        - 0.5 * diff @ np.linalg.solve(covariance, diff)
    )
    assert log_density(x, params) == pytest.approx(expected, abs=1e-12)


def test_log_density_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        log_density([0, 0, 0], _unit(2))
    with pytest.raises(ValueError, match="dimension"):
        log_densities(FeatureMatrix(np.zeros((4, 3))), [_unit(2)])


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=4), st.lists(reals, min_size=8, max_size=8))
def test_modes_differ_by_constant(dim, values):
    x = np.array(values[:dim])
    params = ClassParams(
        mean=values[4 : 4 + dim], covariance=np.eye(dim) * 2, prior=1.0
    )
    gap = log_density(x, params, DensityMode.PAPER) - log_density(x, params)
    assert gap == pytest.approx((dim - 1) / 2 * LOG_2PI, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(reals, min_size=6, max_size=6))
def test_log_density_translation_invariance(values):
    x, shift = np.array(values[:3]), np.array(values[3:])
    covariance = np.array([[1.5, 0.2, 0.0], [0.2, 1.0, 0.1], [0.0, 0.1, 0.7]])
    params = ClassParams(mean=[0.5, -0.5, 1.0], covariance=covariance, prior=1.0)
    moved = ClassParams(mean=params.mean + shift, covariance=covariance, prior=1.0)
    assert log_density(x + shift, moved) == pytest.approx(
        log_density(x, params), rel=1e-9, abs=1e-9
    )


@pytest.mark.parametrize(
    "mean, covariance",
    [
        ([0.5], [[0.8]]),
        ([0.0, 1.0], [[1.0, 0.3], [0.3, 0.5]]),
    ],
)
def test_density_integrates_to_one(mean, covariance):
    params = ClassParams(mean=mean, covariance=covariance, prior=1.0)
    dim = params.dim
    grid = np.linspace(-8, 8, 401 if dim == 1 else 201)
    step = grid[1] - grid[0]
    points = np.stack(np.meshgrid(*[grid] * dim, indexing="ij"), axis=-1)
    points = points.reshape(-1, dim)
    densities = np.exp(log_densities(FeatureMatrix(points), [params])[:, 0])
    assert densities.sum() * step ** dim == pytest.approx(1.0, rel=0.01)


def test_not_positive_definite():
    with pytest.raises(NumericalError, match="positive-definite"):
        ClassParams(mean=[0, 0], covariance=[[1, 2], [2, 1]], prior=1.0)

    text = '{"means": [[0, 0]], "covariances": [[[1, 2], [2, 1]]], "priors": [1]}'
    with pytest.raises(NumericalError, match="positive-definite"):
        params_from_json(text)

    # a ridge of 2 * trace / d lifts the -1 eigenvalue above zero
    params = ClassParams(mean=[0, 0], covariance=[[1, 2], [2, 1]], prior=1.0, ridge=2)
    assert math.isfinite(log_density([0, 0], params))

    with pytest.raises(ValueError, match="ridge"):
        ClassParams(mean=[0], covariance=[[1]], prior=1.0, ridge=0)


def test_singular_covariance_gets_ridge():
    params = ClassParams(mean=[0, 0], covariance=np.zeros((2, 2)), prior=1.0)
    assert math.isfinite(log_density([0, 0], params))
    assert params.cholesky()[0, 0] == pytest.approx(1e-3)
    np.testing.assert_allclose(ridge_term(np.zeros((2, 2)), 1e-6), 1e-6 * np.eye(2))
    np.testing.assert_allclose(
        ridge_term(np.diag([2.0, 4.0]), 1e-6), 3e-6 * np.eye(2)
    )


def test_ridge_argument_is_not_shadowed_by_cache():
    params = ClassParams(mean=[0.0], covariance=[[0.0]], prior=1.0)
    features = FeatureMatrix([[0.0], [1.0]])

    small = log_densities(features, [params])[:, 0]
    large = log_densities(features, [params], ridge=1.0)[:, 0]
    np.testing.assert_allclose(large, [-0.5 * LOG_2PI, -0.5 * LOG_2PI - 0.5])
    np.testing.assert_allclose(
        log_densities(features, [params])[:, 0], small, rtol=0, atol=0
    )
    assert small[1] < -1e5

    fresh = ClassParams(mean=[0.0], covariance=[[0.0]], prior=1.0, ridge=1.0)
    np.testing.assert_allclose(log_densities(features, [fresh])[:, 0], large)


def test_class_params_validation():
    with pytest.raises(ValueError, match="prior"):
        ClassParams(mean=[0], covariance=[[1]], prior=1.5)
    with pytest.raises(ValueError, match="symmetric"):
        ClassParams(mean=[0, 0], covariance=[[1, 0.5], [0, 1]], prior=0.5)
    with pytest.raises(ValueError, match="shape"):
        ClassParams(mean=[0, 0], covariance=[[1]], prior=0.5)
    with pytest.raises(ValueError, match="finite"):
        ClassParams(mean=[np.nan], covariance=[[1]], prior=0.5)


def test_model_config():
    config = ModelConfig(
        n_classes=3,
        density_mode="paper",
        init_mode="paper",
        covariance_update="identity",
    )
    assert config.density_mode is DensityMode.PAPER
    assert config.init_mode is InitMode.PAPER
    assert config.covariance_update is CovarianceUpdate.FIXED_IDENTITY

    with pytest.raises(ValueError):
        ModelConfig(n_classes=0)
    with pytest.raises(ValueError):
        ModelConfig(n_classes=2, ridge=0)
    with pytest.raises(ValueError):
        ModelConfig(n_classes=2, density_mode="exact")


def test_ladder_init():
    features = FeatureMatrix(np.random.default_rng(3).normal(size=(10, 3)))
    params, responsibilities = init_params(
        features, ModelConfig(n_classes=4, init_mode=InitMode.PAPER)
    )

    assert len(params) == 4
    assert [par.prior for par in params] == [0.25] * 4
    np.testing.assert_array_equal(params[2].mean, [4.0, 4.0, 4.0])
    for j, par in enumerate(params):
        np.testing.assert_array_equal(par.mean, np.full(3, 2.0 * j))
        np.testing.assert_array_equal(par.covariance, np.eye(3))
    assert responsibilities.shape == (10, 4)
    assert not responsibilities.any()


def test_kmeans_init_finds_planted_centroids():
    points = _planted_clusters()
    features = FeatureMatrix(points)
    params, responsibilities = init_params(features, ModelConfig(n_classes=2), seed=5)

    means = sorted((par.mean for par in params), key=lambda mean: mean[0])
    np.testing.assert_allclose(means[0], points[:30].mean(axis=0), atol=1e-6)
    np.testing.assert_allclose(means[1], points[30:].mean(axis=0), atol=1e-6)
    assert sorted(par.prior for par in params) == [0.5, 0.5]
    np.testing.assert_array_equal(responsibilities.sum(axis=1), np.ones(60))
    for par in params:
        assert np.count_nonzero(par.covariance - np.diag(np.diag(par.covariance))) == 0


def test_init_is_deterministic():
    features = FeatureMatrix(np.random.default_rng(1).normal(size=(40, 2)))
    config = ModelConfig(n_classes=3)
    first, resp_1 = init_params(features, config, seed=11)
    second, resp_2 = init_params(features, config, seed=11)
    assert params_to_json(first) == params_to_json(second)
    np.testing.assert_array_equal(resp_1, resp_2)


def test_init_too_many_classes():
    with pytest.raises(ValueError, match="3 classes to 2 sites"):
        init_params(FeatureMatrix(np.zeros((2, 3))), ModelConfig(n_classes=3))


def test_kmeans_plus_plus_identical_points():
    points = np.ones((5, 2))
    centers = kmeans_plus_plus(points, 3, np.random.default_rng(0))
    np.testing.assert_array_equal(centers, np.ones((3, 2)))


def test_lloyd_keeps_empty_center():
    points = np.array([[0.0], [1.0], [10.0], [11.0]])
    centers, assignment = lloyd(points, np.array([[0.0], [10.0], [100.0]]))
    np.testing.assert_allclose(centers[:, 0], [0.5, 10.5, 100.0])
    assert assignment.tolist() == [0, 0, 1, 1]


def test_params_json():
    params = [
        ClassParams(mean=[0.0, 1.0], covariance=np.eye(2), prior=0.25),
        ClassParams(mean=[2.0, 3.0], covariance=[[2.0, 0.1], [0.1, 1.0]], prior=0.75),
    ]
    text = params_to_json(params)
    assert list(json.loads(text)) == ["means", "covariances", "priors"]

    restored = params_from_json(text)
    assert [par.prior for par in restored] == [0.25, 0.75]
    np.testing.assert_array_equal(restored[1].covariance, params[1].covariance)

    with pytest.raises(ValueError, match="inconsistent"):
        params_from_json('{"means": [[0]], "covariances": [], "priors": [1]}')
