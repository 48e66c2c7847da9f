"""Compile small arithmetic expressions into vectorised numpy callables.

The accepted language is what a config file needs to describe a field:
``+ - * / ^``, parentheses, numeric literals (``2pi`` means ``2*pi``),
the constants ``pi`` and ``e``, coordinates ``x1 .. xn``, user constants,
and the functions listed in :data:`FUNCTIONS`.

Expressions are parsed with :mod:`ast` and checked against a whitelist
before being compiled, so nothing but arithmetic can run.
"""

from __future__ import annotations

import ast
import math
import re
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError

FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "arctan": np.arctan,
}

CONSTANTS: dict[str, float] = {"pi": math.pi, "e": math.e}

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)

# a number glued to a name or "(" is an implicit product: 2pi, 3x1, 2(x1+1)
# (the lookaheads stop a backtracked match from splitting 3e-1 into 3*e-1)
_IMPLICIT_MUL = re.compile(r"(?<![A-Za-z_\d.])(\d+\.?\d*(?:[eE][+-]?\d+)?)(?![\d.])(?![eE][+-]?\d)\s*(?=[A-Za-z_(])")
_COORD = re.compile(r"^x([1-9]\d*)$")


def normalize(text: str) -> str:
    """Rewrite ``^`` to ``**`` and make implicit products explicit."""
    text = text.strip().replace("^", "**")
    return _IMPLICIT_MUL.sub(r"\1*", text)


class Expression:
    """A compiled expression; call it on an array of points of shape ``(..., dim)``."""

    def __init__(self, text: str, dim: int, constants: Mapping[str, float] | None = None):
        self.text = str(text).strip()
        self.dim = dim
        consts = dict(CONSTANTS)
        consts.update(constants or {})
        source = normalize(self.text)
        if not source:
            raise ConfigError("empty expression")
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.text!r}: {exc.msg}") from None

        coords: set[int] = set()
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED_NODES):
                raise ConfigError(f"unsupported syntax {type(node).__name__} in {self.text!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ConfigError(f"non-numeric literal in {self.text!r}")
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                    raise ConfigError(f"unknown function in {self.text!r}")
                if len(node.args) != 1 or node.keywords:
                    raise ConfigError(f"functions take exactly one argument: {self.text!r}")
            if isinstance(node, ast.Name):
                name = node.id
                if name in FUNCTIONS:
                    continue
                m = _COORD.match(name)
                if m:
                    k = int(m.group(1))
                    if k > dim:
                        raise ConfigError(f"coordinate {name} exceeds dimension {dim} in {self.text!r}")
                    coords.add(k)
                elif name not in consts:
                    raise ConfigError(f"unknown name {name!r} in {self.text!r}")

        self.coords = frozenset(coords)
        self._code = compile(tree, f"<expr {self.text}>", "eval")
        self._namespace = {"__builtins__": {}, **FUNCTIONS, **consts}
        self.is_constant = not coords
        self._constant_value = None
        if self.is_constant:
            self._constant_value = float(eval(self._code, dict(self._namespace)))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return np.full(x.shape[:-1], self._constant_value)
        ns = dict(self._namespace)
        for k in self.coords:
            ns[f"x{k}"] = x[..., k - 1]
        with np.errstate(all="ignore"):
            out = eval(self._code, ns)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"


def evaluate_constant(text: str, constants: Mapping[str, float] | None = None) -> float:
    """Evaluate an expression that must not depend on coordinates."""
    ex = Expression(text, dim=0, constants=constants)
    if not ex.is_constant:
        raise ConfigError(f"expression {text!r} must be a constant")
    return ex._constant_value
