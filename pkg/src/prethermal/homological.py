"""Homological equation  -i[G, N] + A = B  with  [B, N] = 0.

Every ladder string is an eigenoperator of ad_N, ``[s, N] = m s`` with an
integer m fixed by the letters, so the equation is solved string by string:
the m = 0 part is resonant and goes to B, the rest is inverted,
``G = sum_{m != 0} (-i/m) A_m``. This is the Fourier-mode form of the
angle average over the periodic flow of N.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels
from .pauli_algebra import ExtensiveOperator, LocalTerm, NumberOperator


@dataclass(frozen=True)
class AdEigenComponent:
    m: int
    component: LocalTerm


def ad_n_decompose(term: LocalTerm, N: NumberOperator) -> list[AdEigenComponent]:
    """Split a local term into ad_N eigencomponents, one per distinct m."""
    m = N.ladder_m(term.support)
    out = []
    for value in np.unique(m[term.coeffs != 0]):
        part = np.where(m == value, term.coeffs, 0)
        out.append(AdEigenComponent(int(value), LocalTerm(term.support, part)))
    return out


def max_frequency(A: ExtensiveOperator, N: NumberOperator) -> int:
    best = 0
    for support, coeffs in A.items():
        m = N.ladder_m(support)[coeffs != 0]
        if m.size:
            best = max(best, int(np.abs(m).max()))
    return best


def solve_homological(A: ExtensiveOperator, N: NumberOperator) -> tuple[ExtensiveOperator, ExtensiveOperator]:
    """Return (G, B) solving -i[G, N] + A = B, [B, N] = 0, support by support."""
    g_terms, b_terms = {}, {}
    for support, coeffs in A.items():
        m = N.ladder_m(support)
        resonant = m == 0
        b_terms[support] = np.where(resonant, coeffs, 0)
        safe = np.where(resonant, 1, m)
        g_terms[support] = np.where(resonant, 0, coeffs * (-1j / safe))
    return ExtensiveOperator(g_terms), ExtensiveOperator(b_terms)


def average_over_flow(A: ExtensiveOperator, N: NumberOperator, M: int) -> ExtensiveOperator:
    """Resonant part of A as the M-node average of e^{-iNθ} A e^{iNθ}.

    Independent cross-check of ``solve_homological(...)[1]``: builds the
    flow with dense matrix exponentials on each support. The discrete
    average is exact once M exceeds 2 * max|m| + 1.
    """
    m_max = max_frequency(A, N)
    if M <= 2 * m_max + 1:
        raise ValueError(f"M={M} nodes is too few; need M > {2 * m_max + 1} for max |m| = {m_max}")
    terms = {}
    for support, coeffs in A.items():
        k = len(support)
        a = _kernels.ladder_to_matrix(coeffs, k)
        n_s = np.diag(N.diagonal(support).astype(np.complex128))
        acc = np.zeros_like(a)
        for j in range(M):
            u = scipy.linalg.expm(-1j * (2 * np.pi * j / M) * n_s)
            acc += u @ a @ u.conj().T
        terms[support] = _kernels.matrix_to_ladder(acc / M, k)
    return ExtensiveOperator(terms)
