# -*- coding: utf-8 -*-

""" util functions """

import math

from itertools import tee
from typing import Any, Iterable, Optional, Tuple, TypeVar

Typed = TypeVar("Typed")


def window(iterable: Iterable[Typed], size: int = 2) -> Iterable[Tuple[Typed, ...]]:
    """ sliding window of an iterator """

    iterables = tee(iterable, size)

    for num, itb in enumerate(iterables):
        for _ in range(num):
            next(itb, None)

    return zip(*iterables)


def cyclic_window(
    items: Iterable[Typed], size: int = 2
) -> Iterable[Tuple[Typed, ...]]:
    """ sliding window that wraps around, e.g. the edges of a polygon """
    items = tuple(items)
    return window(items + items[: size - 1], size)


def parse_int(string: Any, base: int = 10) -> Optional[int]:
    """ safely convert an object to int if possible, else return None """

    if isinstance(string, int) and not isinstance(string, bool):
        return string

    try:
        return int(string, base=base)

    except Exception:
        pass

    return None


def parse_float(string: Any) -> Optional[float]:
    """ safely convert an object to a finite float if possible, else return None """

    try:
        value = float(string)

    except Exception:
        return None

    return value if math.isfinite(value) else None


def format_float(value: float, precision: int) -> str:
    """ compact decimal representation with the given significant digits """
    text = f"{value:.{precision}g}"
    return "0" if text == "-0" else text
