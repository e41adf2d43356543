"""A small arithmetic expression language for scenario files.

Grammar: numbers, declared variables, ``+ - * /``, ``^`` (power, also
``**``), unary minus, parentheses, calls to ``sin cos tan exp log sqrt``
and the constants ``pi`` and ``e``.  Expressions are parsed once into a
checked Python AST and compiled to a ``jax.numpy`` callable.
"""

from __future__ import annotations

import ast
import math
from typing import Callable, Sequence

import jax.numpy as jnp

from .errors import EulerClassError

__all__ = ["ExpressionError", "Expression", "compile_expression", "FUNCTIONS", "CONSTANTS"]

FUNCTIONS = {
    "sin": jnp.sin,
    "cos": jnp.cos,
    "tan": jnp.tan,
    "exp": jnp.exp,
    "log": jnp.log,
    "sqrt": jnp.sqrt,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINARY = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


class ExpressionError(EulerClassError, ValueError):
    """Malformed or disallowed expression text."""


class Expression:
    """A parsed expression over named variables.

    Calling it with a point ``x`` (indexable, one entry per variable)
    evaluates it with :mod:`jax.numpy`, so it can be traced and
    differentiated.
    """

    def __init__(self, text: str, variables: Sequence[str], where: str = "expression"):
        if isinstance(text, bool) or not isinstance(text, (str, int, float)):
            raise ExpressionError(f"{where}: expected an expression string or number, got {type(text).__name__}")
        self.text = str(text)
        self.variables = tuple(variables)
        self.where = where
        source = self.text.replace("^", "**")
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"{where}: cannot parse {self.text!r} ({exc.msg})") from None
        self._check(tree.body)
        self._code = compile(tree, f"<{where}>", "eval")

    def _check(self, node) -> None:
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"{self.where}: literal {node.value!r} is not a number")
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in CONSTANTS:
                known = ", ".join(self.variables + tuple(CONSTANTS))
                raise ExpressionError(f"{self.where}: unknown name {node.id!r} in {self.text!r} (known: {known})")
        elif isinstance(node, ast.BinOp):
            if not isinstance(node.op, _BINARY):
                raise ExpressionError(f"{self.where}: operator {type(node.op).__name__} not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, _UNARY):
                raise ExpressionError(f"{self.where}: operator {type(node.op).__name__} not allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExpressionError(f"{self.where}: unknown function in {self.text!r} "
                                      f"(allowed: {', '.join(FUNCTIONS)})")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{self.where}: {node.func.id} takes exactly one argument")
            self._check(node.args[0])
        else:
            raise ExpressionError(f"{self.where}: unsupported syntax in {self.text!r}")

    def __call__(self, x):
        env = dict(CONSTANTS)
        env.update(FUNCTIONS)
        for k, name in enumerate(self.variables):
            env[name] = x[k]
        return jnp.asarray(eval(self._code, {"__builtins__": {}}, env), dtype=float)

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"


def compile_expression(text, variables: Sequence[str], where: str = "expression") -> Callable:
    return Expression(text, variables, where)
