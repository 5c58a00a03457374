# -*- coding: utf-8 -*-

""" triangle meshes: OBJ/PLY parsing, face adjacency and per-face features """

import logging
import os

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .const import PLY_PRECISION, RGB
from .exceptions import MeshError, MeshParseError
from .utils import cyclic_window, format_float, parse_float, parse_int

LOGGER = logging.getLogger(__name__)

Pair = Tuple[int, int]
PathLike = Union[str, "os.PathLike[str]"]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """ vertices and triangular faces """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self) -> None:
        vertices = np.array(self.vertices, dtype=float).reshape(-1, 3)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)

        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")

        if faces.size:
            if faces.min() < 0 or faces.max() >= len(vertices):
                bad = int(np.flatnonzero((faces < 0) | (faces >= len(vertices)))[0])
                raise MeshError(
                    f"face {bad // 3} references vertex {int(faces.flat[bad])}, "
                    f"but there are only {len(vertices)} vertices"
                )
            degenerate = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 0] == faces[:, 2])
            )
            if degenerate.any():
                bad = int(np.flatnonzero(degenerate)[0])
                raise MeshError(
                    f"face {bad} {tuple(faces[bad].tolist())} repeats a vertex index"
                )

        object.__setattr__(self, "vertices", _readonly(vertices))
        object.__setattr__(self, "faces", _readonly(faces))

    @property
    def vertex_count(self) -> int:
        """ number of vertices """
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        """ number of faces """
        return len(self.faces)

    def translated(self, offset: Sequence[float]) -> "TriangleMesh":
        """ copy of this mesh moved by offset """
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=float), self.faces)

    def transformed(
        self, rotation: np.ndarray, offset: Sequence[float] = (0.0, 0.0, 0.0),
    ) -> "TriangleMesh":
        """ copy of this mesh under the rigid motion x -> R x + t """
        vertices = self.vertices @ np.asarray(rotation, dtype=float).T
        return TriangleMesh(vertices + np.asarray(offset, dtype=float), self.faces)

    def __str__(self) -> str:
        return f"TriangleMesh({self.vertex_count} vertices, {self.face_count} faces)"


@dataclass(frozen=True)
class AdjacencyGraph:
    """ sites (faces) and their neighborhood system (shared edges) """

    site_count: int
    neighbor_pairs: FrozenSet[Pair]
    neighbors_of: Tuple[Tuple[int, ...], ...] = field(repr=False)
    pairs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pairs = np.array(sorted(self.neighbor_pairs), dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "pairs", _readonly(pairs))

        assert len(self.neighbors_of) == self.site_count

    @classmethod
    def from_pairs(
        cls, site_count: int, pairs: Iterable[Sequence[int]]
    ) -> "AdjacencyGraph":
        """ site graph from an explicit list of unordered neighbor pairs """

        if site_count < 0:
            raise ValueError(f"site_count must be non-negative, got {site_count}")

        normalized = set()
        for pair in pairs:
            i, j = (int(k) for k in pair)
            if i == j:
                raise ValueError(f"site {i} cannot neighbor itself")
            if not (0 <= i < site_count and 0 <= j < site_count):
                raise ValueError(f"pair {(i, j)} out of range for {site_count} sites")
            normalized.add((min(i, j), max(i, j)))

        neighbors: List[List[int]] = [[] for _ in range(site_count)]
        for i, j in normalized:
            neighbors[i].append(j)
            neighbors[j].append(i)

        return cls(
            site_count=site_count,
            neighbor_pairs=frozenset(normalized),
            neighbors_of=tuple(tuple(sorted(n)) for n in neighbors),
        )

    @property
    def degrees(self) -> np.ndarray:
        """ number of neighbors per site """
        return np.array([len(n) for n in self.neighbors_of], dtype=np.int64)

    def __len__(self) -> int:
        return self.site_count


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """ one feature vector per site """

    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=float)
        if rows.ndim == 1:
            rows = rows.reshape(-1, 1)
        if rows.ndim != 2:
            raise ValueError(f"features must be a 2D array, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            bad = int(np.flatnonzero(~np.isfinite(rows).all(axis=1))[0])
            raise ValueError(f"features of site {bad} are not finite")
        object.__setattr__(self, "rows", _readonly(rows))

    @property
    def dim(self) -> int:
        """ feature dimension """
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]


class FeatureMode(Enum):
    """ which per-face features to extract """

    CENTROID = "centroid"
    CENTROID_NORMAL = "centroid-normal"


def _fan(indices: Sequence[int]) -> Iterator[Tuple[int, int, int]]:
    first = indices[0]
    for second, third in zip(indices[1:-1], indices[2:]):
        yield first, second, third


def _check_face(face: Tuple[int, int, int], line: Optional[int]) -> None:
    if len(set(face)) < 3:
        raise MeshParseError(f"face {face} repeats a vertex index", line)


def _build_mesh(
    vertices: List[Tuple[float, float, float]],
    faces: List[Tuple[int, int, int]],
    kind: str,
) -> TriangleMesh:
    if not faces:
        raise MeshParseError(f"{kind}: no faces")
    mesh = TriangleMesh(np.array(vertices, dtype=float), np.array(faces))
    LOGGER.debug("parsed %s mesh: %s", kind, mesh)
    return mesh


def _obj_index(token: str, vertex_count: int, line: int) -> int:
    index = parse_int(token.split("/", 1)[0])

    if index is None or index == 0:
        raise MeshParseError(f"invalid vertex reference <{token}>", line)

    resolved = index - 1 if index > 0 else vertex_count + index

    if not 0 <= resolved < vertex_count:
        raise MeshParseError(
            f"vertex reference {index} out of range ({vertex_count} vertices so far)",
            line,
        )

    return resolved


def parse_obj(text: str) -> TriangleMesh:
    """ parse an ASCII Wavefront OBJ document (v and f records) """

    vertices: List[Tuple[float, float, float]] = []
    faces: List[Tuple[int, int, int]] = []

    for number, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()

        if not tokens:
            continue

        record, values = tokens[0], tokens[1:]

        if record == "v":
            coords = [parse_float(v) for v in values[:3]]
            if len(coords) < 3 or any(c is None for c in coords):
                raise MeshParseError(
                    f"vertex record needs 3 numeric coordinates: <{raw.strip()}>",
                    number,
                )
            vertices.append((coords[0], coords[1], coords[2]))  # type: ignore

        elif record == "f":
            if len(values) < 3:
                raise MeshParseError(
                    f"face record needs at least 3 vertices, got {len(values)}", number
                )
            indices = [_obj_index(v, len(vertices), number) for v in values]
            for face in _fan(indices):
                _check_face(face, number)
                faces.append(face)

        else:
            LOGGER.debug("line %d: skipping OBJ record <%s>", number, record)

    return _build_mesh(vertices, faces, "OBJ")


@dataclass
class _PlyElement:
    name: str
    count: int
    properties: List[Tuple[str, bool]] = field(default_factory=list)  # name, is list
    header_line: int = 0


def _parse_ply_header(lines: List[str]) -> Tuple[List[_PlyElement], int]:
    if not lines or lines[0].strip() != "ply":
        raise MeshParseError("missing <ply> magic", 1)

    elements: List[_PlyElement] = []

    for number, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()

        if not tokens:
            continue

        keyword = tokens[0]

        if keyword == "format":
            if len(tokens) < 2:
                raise MeshParseError("incomplete format line", number)
            if tokens[1] != "ascii":
                raise MeshParseError(
                    f"unsupported PLY format <{tokens[1]}>: "
                    "binary PLY is not supported, convert to ascii",
                    number,
                )

        elif keyword in ("comment", "obj_info"):
            continue

        elif keyword == "element":
            count = parse_int(tokens[2]) if len(tokens) == 3 else None
            if count is None or count < 0:
                raise MeshParseError(f"malformed element line <{raw.strip()}>", number)
            elements.append(_PlyElement(tokens[1], count, header_line=number))

        elif keyword == "property":
            if not elements:
                raise MeshParseError("property before any element", number)
            is_list = len(tokens) == 5 and tokens[1] == "list"
            if not is_list and len(tokens) != 3:
                raise MeshParseError(f"malformed property line <{raw.strip()}>", number)
            elements[-1].properties.append((tokens[-1], is_list))

        elif keyword == "end_header":
            return elements, number

        else:
            raise MeshParseError(f"unknown header keyword <{keyword}>", number)

    raise MeshParseError("missing end_header", len(lines))


def _parse_ply_row(
    tokens: List[str], element: _PlyElement, number: int,
) -> Dict[str, List[str]]:
    row: Dict[str, List[str]] = {}
    pos = 0

    for name, is_list in element.properties:
        if is_list:
            size = parse_int(tokens[pos]) if pos < len(tokens) else None
            if size is None or size < 0:
                raise MeshParseError(f"invalid list length for <{name}>", number)
            row[name] = tokens[pos + 1 : pos + 1 + size]
            pos += 1 + size
            if len(row[name]) < size:
                raise MeshParseError(f"list <{name}> is truncated", number)
        else:
            if pos >= len(tokens):
                raise MeshParseError(f"missing value for <{name}>", number)
            row[name] = tokens[pos : pos + 1]
            pos += 1

    if pos != len(tokens):
        raise MeshParseError(
            f"{element.name} row has {len(tokens)} values, expected {pos}", number
        )

    return row


def parse_ply(text: str) -> TriangleMesh:
    """ parse an ASCII PLY document with vertex and face elements """

    lines = text.splitlines()
    elements, header_end = _parse_ply_header(lines)
    names = [element.name for element in elements]

    if "vertex" not in names or "face" not in names:
        raise MeshParseError("PLY needs both vertex and face elements", header_end)

    body = [
        (number, raw.split())
        for number, raw in enumerate(lines[header_end:], start=header_end + 1)
        if raw.strip()
    ]
    declared = sum(element.count for element in elements)

    if len(body) != declared:
        raise MeshParseError(
            f"header declares {declared} data rows "
            f"({', '.join(f'{e.count} {e.name}' for e in elements)}), "
            f"body has {len(body)}",
            len(lines),
        )

    vertex_total = next(e.count for e in elements if e.name == "vertex")
    vertices: List[Tuple[float, float, float]] = []
    faces: List[Tuple[int, int, int]] = []
    rows = iter(body)

    for element in elements:
        for _ in range(element.count):
            number, tokens = next(rows)
            row = _parse_ply_row(tokens, element, number)

            if element.name == "vertex":
                coords = [parse_float(row.get(axis, [None])[0]) for axis in "xyz"]
                if any(c is None for c in coords):
                    raise MeshParseError("vertex needs numeric x, y and z", number)
                vertices.append((coords[0], coords[1], coords[2]))  # type: ignore

            elif element.name == "face":
                refs = row.get("vertex_indices", row.get("vertex_index"))
                if refs is None:
                    raise MeshParseError("face element has no vertex_indices", number)
                if len(refs) < 3:
                    raise MeshParseError(
                        f"face needs at least 3 vertices, got {len(refs)}", number
                    )
                indices = [parse_int(ref) for ref in refs]
                if any(i is None for i in indices):
                    raise MeshParseError("non-integer vertex index", number)
                for face in _fan(indices):  # type: ignore
                    if not all(0 <= i < vertex_total for i in face):
                        raise MeshParseError(
                            f"face {face} references a vertex out of range", number
                        )
                    _check_face(face, number)
                    faces.append(face)

    return _build_mesh(vertices, faces, "PLY")


def read_mesh(path: PathLike) -> TriangleMesh:
    """ read an OBJ or PLY file, chosen by extension or content """

    with open(path, "r", encoding="ascii", errors="replace") as file:
        text = file.read()

    ext = os.path.splitext(os.fspath(path))[1].lower()

    if ext == ".ply" or (ext != ".obj" and text.lstrip().startswith("ply")):
        return parse_ply(text)

    return parse_obj(text)


def write_ply_colored(
    mesh: TriangleMesh, labels: Sequence[int], palette: Mapping[int, RGB],
) -> str:
    """ ASCII PLY of the mesh with one RGB color per face, taken from its label """

    labels = [int(label) for label in labels]

    if len(labels) != mesh.face_count:
        raise ValueError(
            f"got {len(labels)} labels for a mesh with {mesh.face_count} faces"
        )

    missing = sorted(set(labels) - set(palette))
    if missing:
        raise ValueError(f"no palette entry for label(s) {missing}")

    header = (
        "ply",
        "format ascii 1.0",
        "comment written by hmrf-mesh",
        f"element vertex {mesh.vertex_count}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {mesh.face_count}",
        "property list uchar int vertex_indices",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    )
    vertex_lines = (
        " ".join(format_float(c, PLY_PRECISION) for c in vertex)
        for vertex in mesh.vertices.tolist()
    )
    face_lines = (
        "3 {} {} {} {} {} {}".format(*face, *palette[label])
        for face, label in zip(mesh.faces.tolist(), labels)
    )

    return "\n".join((*header, *vertex_lines, *face_lines)) + "\n"


def build_adjacency(mesh: TriangleMesh) -> AdjacencyGraph:
    """ face adjacency: two faces are neighbors iff they share an edge """

    edges: Dict[Pair, List[int]] = defaultdict(list)

    for site, face in enumerate(mesh.faces.tolist()):
        for vert_1, vert_2 in cyclic_window(face):
            edges[(min(vert_1, vert_2), max(vert_1, vert_2))].append(site)

    pairs = set()

    for edge, sites in edges.items():
        if len(sites) > 2:
            raise MeshError(
                f"non-manifold edge {edge} is shared by {len(sites)} faces: {sites}"
            )
        if len(sites) == 2:
            pair = (min(sites), max(sites))
            if pair in pairs:
                raise MeshError(f"faces {pair} share more than one edge")
            pairs.add(pair)

    graph = AdjacencyGraph.from_pairs(mesh.face_count, pairs)

    LOGGER.debug(
        "adjacency: %d sites, %d edges, %d neighbor pairs",
        graph.site_count,
        len(edges),
        len(graph.neighbor_pairs),
    )

    return graph


def _corners(mesh: TriangleMesh) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    tris = mesh.vertices[mesh.faces]
    return tris[:, 0], tris[:, 1], tris[:, 2]


def face_areas(mesh: TriangleMesh) -> np.ndarray:
    """ area of each face """
    first, second, third = _corners(mesh)
    return 0.5 * np.linalg.norm(np.cross(second - first, third - first), axis=1)


def face_normals(mesh: TriangleMesh) -> np.ndarray:
    """ unit normal of each face (right-hand rule over its vertex order) """

    first, second, third = _corners(mesh)
    edge_1 = second - first
    edge_2 = third - first
    cross = np.cross(edge_1, edge_2)
    norms = np.linalg.norm(cross, axis=1)
    scale = np.linalg.norm(edge_1, axis=1) * np.linalg.norm(edge_2, axis=1)
    degenerate = norms <= np.finfo(float).eps * scale

    if degenerate.any():
        bad = int(np.flatnonzero(degenerate)[0])
        raise MeshError(
            f"face {bad} {tuple(mesh.faces[bad].tolist())} has zero area, "
            "so its normal is undefined"
        )

    return cross / norms[:, None]


def face_features(
    mesh: TriangleMesh, config: FeatureMode = FeatureMode.CENTROID,
) -> FeatureMatrix:
    """ centroid of each face, optionally followed by its unit normal """

    config = FeatureMode(config)
    centroids = mesh.vertices[mesh.faces].mean(axis=1)

    if config is FeatureMode.CENTROID:
        return FeatureMatrix(centroids)

    return FeatureMatrix(np.hstack((centroids, face_normals(mesh))))
