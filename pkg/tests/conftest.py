# -*- coding: utf-8 -*-

""" shared fixtures """

import os

import pytest

from hmrf_mesh.mesh import AdjacencyGraph, TriangleMesh, read_mesh

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")


@pytest.fixture
def cube_path() -> str:
    return os.path.join(FIXTURES, "cube.obj")


@pytest.fixture
def tetrahedron_path() -> str:
    return os.path.join(FIXTURES, "tetrahedron.ply")


@pytest.fixture
def cube(cube_path) -> TriangleMesh:
    return read_mesh(cube_path)


@pytest.fixture
def tetrahedron(tetrahedron_path) -> TriangleMesh:
    return read_mesh(tetrahedron_path)


@pytest.fixture
def ring6() -> AdjacencyGraph:
    return AdjacencyGraph.from_pairs(6, [(i, (i + 1) % 6) for i in range(6)])
