# -*- coding: utf-8 -*-

""" end-to-end properties of the segmentation pipeline """

import math

import numpy as np
import pytest

from hmrf_mesh import __main__ as cli
from hmrf_mesh.const import EXIT_OK, PALETTE
from hmrf_mesh.em import RunConfig, e_step, iter_states, log_likelihood, lower_bound
from hmrf_mesh.hmrf import LabelField, brute_force_map, map_labels, potts_energy
from hmrf_mesh.mesh import (
    AdjacencyGraph,
    FeatureMatrix,
    build_adjacency,
    parse_ply,
    write_ply_colored,
)
from hmrf_mesh.model import (
    ClassParams,
    CovarianceUpdate,
    DensityMode,
    InitMode,
    ModelConfig,
    log_densities,
)
from hmrf_mesh.synthbench import SynthKind, SynthSpec, benchmark

NOISE_LEVELS = (0.8, 1.0, 1.3, 1.6, 2.0)
COUPLINGS = (0.0, 0.5, 1.0, 2.0)


def _random_params(rng: np.random.Generator, dim: int, n_classes: int):
    priors = rng.dirichlet(np.ones(n_classes))
    priors /= priors.sum()
    params = []
    for prior in priors:
        factor = rng.normal(size=(dim, dim))
        covariance = factor @ factor.T + 0.1 * np.eye(dim)
        params.append(
            ClassParams(
                mean=rng.normal(scale=2.0, size=dim),
                covariance=0.5 * (covariance + covariance.T),
                prior=prior,
            )
        )
    return params


def _random_graph(rng: np.random.Generator, sites: int) -> AdjacencyGraph:
    pairs = [
        (i, j) for i in range(sites) for j in range(i + 1, sites) if rng.random() < 0.35
    ]
    return AdjacencyGraph.from_pairs(sites, pairs)


def test_bound_never_decreases_without_coupling():
    centers = np.array([[0.0, 0.0, 0.0], [4.0, 0.0, 1.0], [0.0, 4.0, -1.0]])
    graph = AdjacencyGraph.from_pairs(500, [])

    for seed in range(20):
        rng = np.random.default_rng(seed)
        assignment = rng.integers(3, size=500)
        points = centers[assignment] + rng.normal(scale=1.2, size=(500, 3))
        config = RunConfig(
            model=ModelConfig(3), max_iterations=100, tolerance=1e-10, seed=seed
        )

        states = list(iter_states(FeatureMatrix(points), graph, config))
        trace = states[-1].bound_trace

        assert len(trace) >= 2
        assert all(math.isfinite(bound) for bound in trace)
        for before, after in zip(trace, trace[1:]):
            assert after >= before - 1e-9


def test_bound_is_below_likelihood():
    for draw in range(50):
        rng = np.random.default_rng(1000 + draw)
        sites = int(rng.integers(3, 21))
        dim = int(rng.integers(1, 4))
        n_classes = int(rng.integers(1, 4))
        features = FeatureMatrix(rng.normal(scale=2.0, size=(sites, dim)))
        params = _random_params(rng, dim, n_classes)

        likelihood = log_likelihood(features, params)

        arbitrary = rng.dirichlet(np.ones(n_classes), size=sites)
        assert lower_bound(features, arbitrary, params) <= likelihood + 1e-10

        posterior = e_step(features, params)
        assert abs(lower_bound(features, posterior, params) - likelihood) <= 1e-10


def test_icm_against_exhaustive_search():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        sites = int(rng.integers(1, 11))
        n_classes = int(rng.integers(1, 4))
        graph = _random_graph(rng, sites)
        unaries = rng.random((sites, n_classes))
        initial = LabelField(rng.integers(n_classes, size=sites), n_classes)

        for beta in (0.0, float(rng.uniform(0.05, 1.5))):
            labels = map_labels(initial, graph, unaries, beta, max_sweeps=20)
            energy = potts_energy(labels, graph, unaries, beta).total
            best, best_energy = brute_force_map(graph, unaries, beta)

            assert best_energy <= energy + 1e-12

            if beta == 0 and all(
                len(set(row.tolist())) == n_classes for row in unaries
            ):
                assert labels == best == LabelField.argmin(unaries)
                assert best_energy == pytest.approx(energy, abs=1e-12)


def test_literal_initialization_and_densities():
    rng = np.random.default_rng(4)
    features = FeatureMatrix(rng.uniform(0, 3, size=(10, 2)))
    graph = AdjacencyGraph.from_pairs(10, [])
    config = RunConfig(
        model=ModelConfig(
            n_classes=4,
            density_mode=DensityMode.PAPER,
            init_mode=InitMode.PAPER,
            covariance_update=CovarianceUpdate.FIXED_IDENTITY,
        ),
        max_iterations=3,
    )

    states = iter_states(features, graph, config)
    initial = next(states)

    assert initial.iteration == 0
    assert not initial.responsibilities.any()
    assert initial.responsibilities.shape == (10, 4)
    for j, par in enumerate(initial.params):
        assert par.prior == 0.25
        np.testing.assert_array_equal(par.mean, [2.0 * j, 2.0 * j])
        np.testing.assert_array_equal(par.covariance, np.eye(2))

    expected = np.empty((10, 4))
    for i, row in enumerate(features.rows):
        for j, par in enumerate(initial.params):
            diff = row - par.mean
            quadratic = diff @ np.linalg.inv(par.covariance) @ diff
            expected[i, j] = (
                np.linalg.det(par.covariance) ** -0.5
                * math.exp(-0.5 * quadratic)
                / math.sqrt(2 * math.pi)
            )

    densities = np.exp(log_densities(features, initial.params, DensityMode.PAPER))
    np.testing.assert_allclose(densities, expected, rtol=1e-12, atol=0)

    first = next(states)
    weighted = 0.25 * expected
    np.testing.assert_allclose(
        first.responsibilities,
        weighted / weighted.sum(axis=1, keepdims=True),
        rtol=1e-12,
        atol=1e-300,
    )
    for par in first.params:
        np.testing.assert_array_equal(par.covariance, np.eye(2))


@pytest.mark.slow
def test_coupling_improves_accuracy_and_smoothness():
    config = RunConfig(model=ModelConfig(2))

    for noise in NOISE_LEVELS:
        spec = SynthSpec(SynthKind.TWO_LOBES, 12, 2, noise_sigma=noise)
        rows = benchmark(spec, COUPLINGS, range(20), config)
        if 0.6 <= rows[0].accuracy <= 0.9:
            break
    else:
        pytest.fail(f"no noise level in {NOISE_LEVELS} puts beta=0 in [0.6, 0.9]")

    plain, *coupled = rows
    assert [row.beta for row in rows] == list(COUPLINGS)
    assert all(row.runs == 20 for row in rows)

    for row in coupled:
        assert row.boundary_smoothness >= plain.boundary_smoothness, row.beta

    unit = coupled[1]
    assert unit.accuracy > plain.accuracy
    assert unit.boundary_smoothness > plain.boundary_smoothness


def test_parser_fixtures(cube, tetrahedron):
    cube_graph = build_adjacency(cube)
    assert (cube.vertex_count, cube.face_count) == (8, 12)
    assert len(cube_graph.neighbor_pairs) == 18
    # closed genus-0 surface: V - E + F = 2 with E = 3F / 2
    assert cube.vertex_count - len(cube_graph.neighbor_pairs) + cube.face_count == 2

    assert tetrahedron.face_count == 4
    assert len(build_adjacency(tetrahedron).neighbor_pairs) == 6

    labels = [j % 2 for j in range(cube.face_count)]
    parsed = parse_ply(write_ply_colored(cube, labels, dict(enumerate(PALETTE))))
    np.testing.assert_array_equal(parsed.faces, cube.faces)


@pytest.mark.slow
def test_pipeline_is_deterministic(tmp_path):
    outputs = []

    for attempt in ("first", "second"):
        folder = tmp_path / attempt
        folder.mkdir()

        def path(name, folder=folder):
            return str(folder / name)

        synth = ["synth", "--kind", "two_lobes", "--resolution", "10"]
        synth += ["--noise", "0.7", "--seed", "11", "--mesh", path("synth.ply")]
        synth += ["--features", path("features.csv"), "--truth", path("truth.csv")]
        assert cli.main(synth) == EXIT_OK

        segment = ["segment", "--input", path("synth.ply"), "--classes", "2"]
        segment += ["--feature-file", path("features.csv"), "--beta", "1"]
        segment += ["--seed", "11", "--output", path("result.json")]
        segment += ["--ply", path("labeled.ply"), "--labels", path("labels.csv")]
        assert cli.main(segment) == EXIT_OK

        evaluate = ["eval", "--predicted", path("labels.csv")]
        evaluate += ["--truth", path("truth.csv"), "--mesh", path("synth.ply")]
        evaluate += ["--output", path("metrics.json")]
        assert cli.main(evaluate) == EXIT_OK

        outputs.append(
            {child.name: child.read_bytes() for child in sorted(folder.iterdir())}
        )

    assert len(outputs[0]) == 7
    assert outputs[0] == outputs[1]
