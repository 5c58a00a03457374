# -*- coding: utf-8 -*-

""" exceptions """

from typing import Optional


class MeshError(ValueError):
    """ invalid mesh content """


class MeshParseError(MeshError):
    """ malformed mesh file, with the offending line if known """

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.message = message
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class NumericalError(ArithmeticError):
    """ numerical breakdown during estimation """
