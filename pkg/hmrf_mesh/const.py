# -*- coding: utf-8 -*-

""" constants """

from typing import Dict, Tuple

RGB = Tuple[int, int, int]

COLORS: Dict[str, RGB] = {
    "blue": (31, 119, 180),
    "red": (214, 39, 40),
    "green": (44, 160, 44),
    "black": (30, 30, 30),
    "white": (235, 235, 235),
    "magenta": (227, 119, 194),
    "cyan": (23, 190, 207),
    "yellow": (219, 219, 41),
    "orange": (255, 127, 14),
    "purple": (148, 103, 189),
    "brown": (140, 86, 75),
    "grey": (127, 127, 127),
}
PALETTE: Tuple[RGB, ...] = tuple(COLORS.values())

DEFAULT_RIDGE = 1e-6
DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_ITERATIONS = 100
DEFAULT_ICM_SWEEPS = 10
KMEANS_LLOYD_ITERATIONS = 10
EMPTY_CLASS_MASS = 1e-12
PRIOR_SUM_TOLERANCE = 1e-9

BRUTE_FORCE_LIMIT = 10 ** 6
BRUTE_FORCE_CHUNK = 1 << 16
MAX_EXACT_PERMUTATION_CLASSES = 8

PLY_PRECISION = 9

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4
