"""Benchmark generators: Halpern-Moses branching formulas and random box-CNF.

Randomness comes from numpy's PCG64 bit generator.  A 64-bit seed fully
determines an instance; suites derive per-instance seeds with
``SeedSequence([base, point, sample])`` so instances can be produced in any
order or in parallel.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .formula import And, Atom, Box, Dia, Implies, Not, Or, box_power


@dataclass(frozen=True)
class BranchParams:
    h: int

    def __post_init__(self):
        if self.h < 1:
            raise ValueError("h must be >= 1")


def _d(h, i):
    return Atom(i + 1)


def _p(h, i):
    return Atom(h + 2 + i)


def branch_body(h: int):
    """depth & determined & branching, the formula repeated under every box power."""
    D = lambda i: _d(h, i)  # noqa: E731
    P = lambda i: _p(h, i)  # noqa: E731
    depth = [Implies(D(i), D(i - 1)) for i in range(1, h + 2)]
    determined = [
        Implies(D(i), And(
            Implies(P(i), Box(1, Implies(D(i), P(i)))),
            Implies(Not(P(i)), Box(1, Implies(D(i), Not(P(i))))),
        ))
        for i in range(1, h + 1)
    ]
    branching = [
        Implies(And(D(i), Not(D(i + 1))), And(
            Dia(1, And(D(i + 1), Not(D(i + 2)), P(i + 1))),
            Dia(1, And(D(i + 1), Not(D(i + 2)), Not(P(i + 1)))),
        ))
        for i in range(h)
    ]
    return And(And(*depth), And(*determined), And(*branching))


def gen_branch_n(params) -> "Formula":  # noqa: F821
    h = params.h if isinstance(params, BranchParams) else BranchParams(params).h
    body = branch_body(h)
    levels = [box_power(1, i, body) for i in range(h + 1)]
    return And(_d(h, 0), Not(_d(h, 1)), And(*levels))


def gen_branch_p(params):
    h = params.h if isinstance(params, BranchParams) else BranchParams(params).h
    return And(gen_branch_n(h), box_power(1, h, _p(h, h // 3 + 1)))


@dataclass(frozen=True)
class RandomCnfParams:
    d: int = 1
    L: int = 10
    k: int = 3
    N: int = 3
    m: int = 1
    p: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.d < 0 or self.L < 1 or self.k < 1 or self.N < 1 or self.m < 1:
            raise ValueError(f"invalid random CNF parameters: {self}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must be a 64-bit unsigned value")

    def as_dict(self):
        return asdict(self)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(base: int, *path: int) -> int:
    """A 64-bit seed for instance ``path`` below ``base``."""
    ss = np.random.SeedSequence([base, *path])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def propositional_count(rng, k: int, p: float) -> int:
    """Number of Boolean literals in a clause above the last level.

    floor(pk) or ceil(pk), with the ceiling chosen with probability
    pk - floor(pk) so that the mean is exactly pk.
    """
    pk = p * k
    lo = math.floor(pk)
    frac = pk - lo
    if frac > 0 and rng.random() < frac:
        return min(lo + 1, k)
    return lo


def random_clause(rng, params: RandomCnfParams, level: int = 0):
    """One clause at modal level ``level``; returns (formula, #propositional literals)."""
    k, N = params.k, params.N
    n_prop = k if level >= params.d else propositional_count(rng, k, params.p)
    if n_prop > N:
        raise ValueError(f"cannot pick {n_prop} distinct atoms out of N={N}")
    lits = []
    if n_prop:
        atoms = rng.choice(N, size=n_prop, replace=False)
        signs = rng.random(n_prop) < 0.5
        for a, neg in zip(atoms.tolist(), signs.tolist()):
            lit = Atom(a + 1)
            lits.append(Not(lit) if neg else lit)
    seen = set(lits)
    for _ in range(k - n_prop):
        while True:
            r = int(rng.integers(1, params.m + 1))
            neg = bool(rng.random() < 0.5)
            body, _ = random_clause(rng, params, level + 1)
            lit = Box(r, body)
            lit = Not(lit) if neg else lit
            if lit not in seen and Not(lit) not in seen:
                break
        seen.add(lit)
        lits.append(lit)
    return Or(*lits), n_prop


def gen_random_boxcnf(params: RandomCnfParams):
    rng = make_rng(params.seed)
    return And(*[random_clause(rng, params, 0)[0] for _ in range(params.L)])
