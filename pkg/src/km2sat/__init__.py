"""Satisfiability for multi-modal K_m (ALC concepts) through propositional encoding."""

from .encoder import EncodeOptions, EncodeResult, encode, option_matrix
from .formula import (
    FALSE, TRUE, And, Atom, Box, Dia, Formula, Not, Or, depth, parse, preprocess, to_bnf,
    to_nnf, to_text,
)
from .satsolver import CnfFormula, read_dimacs, solve, write_dimacs

__version__ = "0.1.0"
