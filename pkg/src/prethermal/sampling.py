"""Seeded random operators for audits and property tests."""
from __future__ import annotations

import numpy as np

from .pauli_algebra import ExtensiveOperator, NumberOperator


def chain_intervals(n_sites: int, max_len: int) -> list[tuple]:
    return [
        tuple((x,) for x in range(start, start + k))
        for k in range(1, max_len + 1)
        for start in range(n_sites - k + 1)
    ]


def random_operator(
    rng: np.random.Generator,
    n_sites: int = 6,
    max_support: int = 3,
    n_terms: int | None = None,
    self_adjoint: bool = True,
    norm_scale: float = 1.0,
) -> ExtensiveOperator:
    """Random sum of dense terms on chain intervals of length <= max_support."""
    pool = chain_intervals(n_sites, max_support)
    if n_terms is None:
        n_terms = int(rng.integers(1, 6))
    picks = rng.choice(len(pool), size=min(n_terms, len(pool)), replace=False)
    terms = {}
    for i in sorted(picks):
        support = pool[i]
        dim = 2 ** len(support)
        m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        if self_adjoint:
            m = (m + m.conj().T) / 2
        m *= norm_scale / np.linalg.norm(m, 2)
        terms[support] = m
    out = ExtensiveOperator()
    for support, m in terms.items():
        out = out + ExtensiveOperator.from_matrix(support, m)
    return out


def random_number_operator(rng: np.random.Generator, n_sites: int = 6, bound: int = 2) -> NumberOperator:
    """Integer on-site diagonals drawn from [-bound, bound]; at least one site non-degenerate."""
    entries = {}
    for x in range(n_sites):
        a, b = (int(v) for v in rng.integers(-bound, bound + 1, size=2))
        entries[(x,)] = (a, b)
    if all(a == b for a, b in entries.values()):
        entries[(0,)] = (1, -1)
    return NumberOperator(entries)
