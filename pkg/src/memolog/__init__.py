"""memolog: a tabled logic-programming engine with or-parallel execution."""

from .builtins import ArithError
from .engine import EngineConfig, Machine, Solution, solve
from .errors import EngineError, ResourceLimitError, TabledPruneError
from .parser import ParseError, Program, parse_program, parse_query
from .table import TableError, TableSpace
from .terms import Var, deref, term_to_str, undo_to, unify, variant_key

__all__ = [
    "ArithError", "EngineConfig", "EngineError", "Machine", "ParseError",
    "Program", "ResourceLimitError", "Solution", "TableError", "TableSpace",
    "TabledPruneError", "Var", "deref", "parse_program", "parse_query",
    "solve", "term_to_str", "undo_to", "unify", "variant_key",
]
