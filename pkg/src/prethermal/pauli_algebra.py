"""Extensive local operators on a finite lattice as collections of ladder strings.

An operator is a map ``support -> local term``. A support is a sorted tuple of
sites (each site a tuple of integer coordinates) and a local term stores the
coefficients of every ladder string on that support in a dense vector of
length ``4**|S|``, letters ordered ``I, +, -, Z`` with the first site of the
support as the most significant base-4 digit. Strings whose letters are
identity on some sites of the support still belong to that support; the
support key, not the string, decides how the term enters the kappa-norm.

Conventions
-----------
* on-site basis: spin up is index 0, ``Z = diag(1, -1)``,
  ``+ = |0><1|``, ``- = |1><0|``;
* dense matrices are site-major: the first site is the most significant bit.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from . import _kernels

Site = tuple[int, ...]
Support = tuple[Site, ...]

LETTERS = ("I", "+", "-", "Z")
_LETTER_CODE = {ch: i for i, ch in enumerate(LETTERS)}
# adjoint swaps + and -
_ADJ_PERM = np.array([0, 2, 1, 3])

# coefficient vectors are dense (4**|S| entries), which caps the support size
MAX_DENSE_SUPPORT = 12


class CapacityError(RuntimeError):
    """A support or lattice is too large for exact dense treatment."""


def as_site(x) -> Site:
    if isinstance(x, (int, np.integer)):
        return (int(x),)
    return tuple(int(c) for c in x)


def as_support(sites: Iterable) -> Support:
    return tuple(sorted({as_site(s) for s in sites}))


# ---------------------------------------------------------------------------
# atomic strings


@dataclass(frozen=True)
class LadderString:
    """Product of on-site ladder/Z letters with a complex coefficient.

    ``letters`` maps sites to one of ``'+'``, ``'-'``, ``'Z'``; identity is
    implicit on every other site.
    """

    letters: tuple[tuple[Site, str], ...]
    coeff: complex = 1.0

    def __post_init__(self):
        items = tuple(sorted((as_site(s), ch) for s, ch in self.letters))
        sites = [s for s, _ in items]
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site in ladder string: {sites}")
        for _, ch in items:
            if ch not in ("+", "-", "Z"):
                raise ValueError(f"ladder letter must be '+', '-' or 'Z', got {ch!r}")
        object.__setattr__(self, "letters", items)
        object.__setattr__(self, "coeff", complex(self.coeff))

    @classmethod
    def parse(cls, text: str, coeff: complex = 1.0) -> "LadderString":
        """``'+0 -1 Z3'`` style constructor for one-dimensional sites."""
        letters = []
        for tok in text.split():
            letters.append(((int(tok[1:]),), tok[0]))
        return cls(tuple(letters), coeff)

    @property
    def support(self) -> Support:
        return tuple(s for s, _ in self.letters)

    def adjoint(self) -> "LadderString":
        swap = {"+": "-", "-": "+", "Z": "Z"}
        return LadderString(tuple((s, swap[ch]) for s, ch in self.letters), self.coeff.conjugate())

    def ad_eigenvalue(self, number_op: "NumberOperator") -> int:
        """Integer m with ``[string, N] = m * string``."""
        m = 0
        for s, ch in self.letters:
            up, down = number_op.entries[s]
            if ch == "+":
                m += down - up
            elif ch == "-":
                m += up - down
        return m


@dataclass(frozen=True)
class LocalTerm:
    """One support together with its ladder-coefficient vector."""

    support: Support
    coeffs: np.ndarray

    @property
    def size(self) -> int:
        return len(self.support)

    def matrix(self) -> np.ndarray:
        return _kernels.ladder_to_matrix(self.coeffs, self.size)

    def strings(self) -> Iterator[LadderString]:
        for code in np.flatnonzero(self.coeffs):
            yield LadderString(_decode(int(code), self.support), complex(self.coeffs[code]))

    def op_norm(self) -> float:
        return _op_norm(self.matrix())

    def is_self_adjoint(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(_adjoint_coeffs(self.coeffs, self.size), self.coeffs, atol=atol, rtol=0))


def _decode(code: int, support: Support) -> tuple[tuple[Site, str], ...]:
    k = len(support)
    out = []
    for j in range(k):
        digit = (code >> (2 * (k - 1 - j))) & 3
        if digit:
            out.append((support[j], LETTERS[digit]))
    return tuple(out)


def _encode(letters: Mapping[Site, str], support: Support) -> int:
    code = 0
    for s in support:
        code = (code << 2) | _LETTER_CODE[letters.get(s, "I")]
    return code


def _adjoint_coeffs(coeffs: np.ndarray, k: int) -> np.ndarray:
    t = np.conj(coeffs).reshape((4,) * k) if k else np.conj(coeffs)
    for axis in range(k):
        t = np.take(t, _ADJ_PERM, axis=axis)
    return np.ascontiguousarray(t).reshape(4**k)


def _op_norm(mat: np.ndarray) -> float:
    if mat.shape[0] == 1:
        return float(abs(mat[0, 0]))
    return float(np.linalg.norm(mat, 2))


def _pad_coeffs(coeffs: np.ndarray, support: Support, target: Support) -> np.ndarray:
    """Re-express a term on a larger support (identity on the new sites)."""
    if support == target:
        return coeffs
    k = len(target)
    out = np.zeros(4**k, dtype=np.complex128)
    pos = [target.index(s) for s in support]
    codes = np.arange(4 ** len(support), dtype=np.int64)
    new = np.zeros_like(codes)
    for j, p in enumerate(pos):
        digit = (codes >> (2 * (len(support) - 1 - j))) & 3
        new |= digit << (2 * (k - 1 - p))
    out[new] = coeffs
    return out


# ---------------------------------------------------------------------------
# extensive operators


class ExtensiveOperator:
    """Sum of local terms keyed by support.

    Instances are treated as immutable: arithmetic returns new operators and
    the coefficient arrays are flagged read-only.
    """

    __slots__ = ("_terms", "_mats", "_norms")

    def __init__(self, terms: Mapping[Support, np.ndarray] | None = None):
        clean: dict[Support, np.ndarray] = {}
        for support, coeffs in (terms or {}).items():
            support = tuple(as_site(s) for s in support)
            if len(support) > MAX_DENSE_SUPPORT:
                raise CapacityError(f"support of size {len(support)} exceeds {MAX_DENSE_SUPPORT}")
            if list(support) != sorted(set(support)):
                raise ValueError(f"support must be sorted and duplicate-free: {support}")
            arr = np.array(coeffs, dtype=np.complex128).reshape(-1)
            if arr.size != 4 ** len(support):
                raise ValueError(f"coefficient vector of length {arr.size} does not fit support {support}")
            if not arr.any():
                continue
            arr.setflags(write=False)
            clean[support] = arr
        self._terms = dict(sorted(clean.items()))
        self._mats: dict[Support, np.ndarray] = {}
        self._norms: dict[Support, float] = {}

    # construction -------------------------------------------------------

    @classmethod
    def zero(cls) -> "ExtensiveOperator":
        return cls()

    @classmethod
    def identity(cls) -> "ExtensiveOperator":
        return cls({(): np.ones(1)})

    @classmethod
    def from_strings(cls, strings: Iterable[LadderString], support: Iterable | None = None) -> "ExtensiveOperator":
        """Collect strings; each goes to ``support`` if given, else to its own sites."""
        fixed = as_support(support) if support is not None else None
        acc: dict[Support, np.ndarray] = {}
        for st in strings:
            key = fixed if fixed is not None else st.support
            if len(key) > MAX_DENSE_SUPPORT:
                raise CapacityError(f"support of size {len(key)} exceeds {MAX_DENSE_SUPPORT}")
            if not set(st.support) <= set(key):
                raise ValueError(f"string on {st.support} does not fit support {key}")
            vec = acc.setdefault(key, np.zeros(4 ** len(key), dtype=np.complex128))
            vec[_encode(dict(st.letters), key)] += st.coeff
        return cls(acc)

    @classmethod
    def from_matrix(cls, support: Iterable, mat: np.ndarray) -> "ExtensiveOperator":
        support = as_support(support)
        return cls({support: _kernels.matrix_to_ladder(np.asarray(mat, dtype=np.complex128), len(support))})

    # access ---------------------------------------------------------------

    @property
    def supports(self) -> list[Support]:
        return list(self._terms)

    def coeffs(self, support: Support) -> np.ndarray:
        return self._terms[support]

    def items(self):
        return self._terms.items()

    def terms(self) -> Iterator[LocalTerm]:
        for support, coeffs in self._terms.items():
            yield LocalTerm(support, coeffs)

    def strings(self) -> Iterator[tuple[Support, LadderString]]:
        for term in self.terms():
            for st in term.strings():
                yield term.support, st

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def n_strings(self) -> int:
        return sum(int(np.count_nonzero(c)) for c in self._terms.values())

    def max_support(self) -> int:
        return max((len(s) for s in self._terms), default=0)

    def sites(self) -> list[Site]:
        return sorted({s for sup in self._terms for s in sup})

    def block(self, support: Support) -> np.ndarray:
        """Dense matrix of the term on ``support`` (cached)."""
        mat = self._mats.get(support)
        if mat is None:
            if len(support) > MAX_DENSE_SUPPORT:
                raise CapacityError(
                    f"support of size {len(support)} exceeds the dense limit {MAX_DENSE_SUPPORT}; "
                    "tighten TruncationPolicy.support_cap"
                )
            mat = _kernels.ladder_to_matrix(self._terms[support], len(support))
            mat.setflags(write=False)
            self._mats[support] = mat
        return mat

    def term_norm(self, support: Support) -> float:
        val = self._norms.get(support)
        if val is None:
            val = _op_norm(self.block(support))
            self._norms[support] = val
        return val

    def term_norms(self) -> dict[Support, float]:
        return {s: self.term_norm(s) for s in self._terms}

    # arithmetic -------------------------------------------------------------

    def __add__(self, other: "ExtensiveOperator") -> "ExtensiveOperator":
        return add(self, other)

    def __sub__(self, other: "ExtensiveOperator") -> "ExtensiveOperator":
        return add(self, scale(-1.0, other))

    def __neg__(self) -> "ExtensiveOperator":
        return scale(-1.0, self)

    def __mul__(self, c) -> "ExtensiveOperator":
        if isinstance(c, ExtensiveOperator):
            return multiply(self, c)
        return scale(c, self)

    def __rmul__(self, c) -> "ExtensiveOperator":
        return scale(c, self)

    def adjoint(self) -> "ExtensiveOperator":
        return adjoint(self)

    def is_self_adjoint(self, atol: float = 1e-12) -> bool:
        return all(LocalTerm(s, c).is_self_adjoint(atol) for s, c in self._terms.items())

    def allclose(self, other: "ExtensiveOperator", atol: float = 1e-12) -> bool:
        """Term-by-term comparison (same support keys up to negligible terms)."""
        for support in set(self._terms) | set(other._terms):
            a = self._terms.get(support)
            b = other._terms.get(support)
            a = np.zeros(4 ** len(support)) if a is None else a
            b = np.zeros(4 ** len(support)) if b is None else b
            if not np.allclose(a, b, atol=atol, rtol=0):
                return False
        return True

    def __repr__(self) -> str:
        return f"ExtensiveOperator({len(self._terms)} terms, {self.n_strings()} strings, max |S|={self.max_support()})"


def pauli(spec: Mapping | str, coeff: complex = 1.0, support: Iterable | None = None) -> ExtensiveOperator:
    """Operator for a Pauli product such as ``{0: 'X', 1: 'Y'}`` or ``'X0 Y1'``.

    X and Y are expanded into ladder strings (X = + + -, Y = -i(+ - -)).
    """
    if isinstance(spec, str):
        spec = {int(tok[1:]): tok[0] for tok in spec.split()}
    factors = {
        "I": [((), 1.0)],
        "X": [("+", 1.0), ("-", 1.0)],
        "Y": [("+", -1j), ("-", 1j)],
        "Z": [("Z", 1.0)],
    }
    strings = [((), complex(coeff))]
    for site, ch in sorted((as_site(s), ch.upper()) for s, ch in spec.items()):
        new = []
        for letters, c in strings:
            for letter, f in factors[ch]:
                extra = ((site, letter),) if letter else ()
                new.append((letters + extra, c * f))
        strings = new
    key = as_support(support) if support is not None else as_support(spec)
    return ExtensiveOperator.from_strings((LadderString(l, c) for l, c in strings), support=key)


# ---------------------------------------------------------------------------
# number operators


@dataclass(frozen=True)
class NumberOperator:
    """Diagonal on-site operator with integer spectrum, N = sum_x N_x.

    ``entries[x] = (n_up, n_down)`` are the eigenvalues of ``N_x`` on the two
    basis states of site ``x``.
    """

    entries: Mapping[Site, tuple[int, int]]

    def __post_init__(self):
        clean = {}
        for s, pair in self.entries.items():
            a, b = pair
            if int(a) != a or int(b) != b:
                raise ValueError(f"number operator entries must be integers, got {pair} at {s}")
            clean[as_site(s)] = (int(a), int(b))
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    @classmethod
    def uniform(cls, sites: Iterable, pair: tuple[int, int] = (1, -1)) -> "NumberOperator":
        return cls({as_site(s): pair for s in sites})

    @property
    def sites(self) -> list[Site]:
        return list(self.entries)

    def diagonal(self, support: Support) -> np.ndarray:
        """Eigenvalues of N restricted to ``support`` in site-major order."""
        diag = np.zeros(1, dtype=np.int64)
        for s in support:
            pair = np.array(self.entries[s], dtype=np.int64)
            diag = (diag[:, None] + pair[None, :]).reshape(-1)
        return diag

    def ladder_m(self, support: Support) -> np.ndarray:
        """ad_N eigenvalue of every ladder string on ``support``."""
        m = np.zeros(1, dtype=np.int64)
        for s in support:
            a, b = self.entries[s]
            per = np.array([0, b - a, a - b, 0], dtype=np.int64)
            m = (m[:, None] + per[None, :]).reshape(-1)
        return m

    def to_operator(self) -> ExtensiveOperator:
        terms = {}
        for s, (a, b) in self.entries.items():
            terms[(s,)] = np.array([(a + b) / 2, 0, 0, (a - b) / 2], dtype=np.complex128)
        return ExtensiveOperator(terms)


# ---------------------------------------------------------------------------
# algebra


def add(A: ExtensiveOperator, B: ExtensiveOperator) -> ExtensiveOperator:
    terms = dict(A._terms)
    for s, c in B._terms.items():
        terms[s] = terms[s] + c if s in terms else c
    return ExtensiveOperator(terms)


def scale(c, A: ExtensiveOperator) -> ExtensiveOperator:
    c = complex(c)
    if c == 0:
        return ExtensiveOperator()
    return ExtensiveOperator({s: v * c for s, v in A._terms.items()})


def adjoint(A: ExtensiveOperator) -> ExtensiveOperator:
    return ExtensiveOperator({s: _adjoint_coeffs(v, len(s)) for s, v in A._terms.items()})


def _union(s1: Support, s2: Support) -> Support:
    return tuple(sorted(set(s1) | set(s2)))


def _pair_product(A: ExtensiveOperator, s1: Support, B: ExtensiveOperator, s2: Support, union: Support, sign: int):
    # the smaller block acts as a tensor contraction on its own sites
    n = len(union)
    p1 = tuple(union.index(s) for s in s1)
    p2 = tuple(union.index(s) for s in s2)
    if len(s1) <= len(s2):
        a, b = A.block(s1), _kernels.embed(B.block(s2), p2, n)
        ab = _kernels.apply_left(a, p1, b, n)
        return ab if sign == 0 else ab - _kernels.apply_right(a, p1, b, n)
    a, b = _kernels.embed(A.block(s1), p1, n), B.block(s2)
    ab = _kernels.apply_right(b, p2, a, n)
    return ab if sign == 0 else ab - _kernels.apply_left(b, p2, a, n)


def _from_blocks(blocks: Mapping[Support, np.ndarray]) -> ExtensiveOperator:
    terms = {s: _kernels.matrix_to_ladder(m, len(s)) for s, m in blocks.items()}
    return ExtensiveOperator(terms)


def multiply(A: ExtensiveOperator, B: ExtensiveOperator) -> ExtensiveOperator:
    """Operator product AB; every pair of terms contributes on the union of supports."""
    blocks: dict[Support, np.ndarray] = {}
    for s1 in A._terms:
        for s2 in B._terms:
            u = _union(s1, s2)
            if len(u) > MAX_DENSE_SUPPORT:
                raise CapacityError(f"product support of size {len(u)} exceeds {MAX_DENSE_SUPPORT}")
            prod = _pair_product(A, s1, B, s2, u, 0)
            if u in blocks:
                blocks[u] += prod
            else:
                blocks[u] = prod
    return _from_blocks(blocks)


def _site_index(A: ExtensiveOperator) -> dict[Site, list[Support]]:
    index: dict[Site, list[Support]] = defaultdict(list)
    for s in A._terms:
        for x in s:
            index[x].append(s)
    return index


def commutator_capped(
    A: ExtensiveOperator, B: ExtensiveOperator, max_support: int | None = None
) -> tuple[ExtensiveOperator, dict[Support, float]]:
    """[A, B] = AB - BA, skipping pairs whose union exceeds ``max_support``.

    Returns the commutator and, for every skipped union support, the bound
    ``sum 2 ||A_S1|| ||B_S2||`` on what was not computed.
    """
    index = _site_index(B)
    blocks: dict[Support, np.ndarray] = {}
    skipped: dict[Support, float] = defaultdict(float)
    for s1 in A._terms:
        partners = sorted({s2 for x in s1 for s2 in index.get(x, ())})
        for s2 in partners:
            u = _union(s1, s2)
            if max_support is not None and len(u) > max_support:
                skipped[u] += 2.0 * A.term_norm(s1) * B.term_norm(s2)
                continue
            if len(u) > MAX_DENSE_SUPPORT:
                raise CapacityError(
                    f"commutator support of size {len(u)} exceeds {MAX_DENSE_SUPPORT}; "
                    "tighten TruncationPolicy.support_cap"
                )
            comm = _pair_product(A, s1, B, s2, u, 1)
            if u in blocks:
                blocks[u] += comm
            else:
                blocks[u] = comm
    return _from_blocks(blocks), dict(skipped)


def commutator(A: ExtensiveOperator, B: ExtensiveOperator) -> ExtensiveOperator:
    return commutator_capped(A, B)[0]


def profile_kappa_norm(profile: Mapping[Support, float], kappa: float) -> float:
    """sup_x sum_{S containing x} w_S e^{kappa |S|} for a support -> weight map."""
    per_site: dict[Site, float] = defaultdict(float)
    for s, w in profile.items():
        weight = w * math.exp(kappa * len(s))
        for x in s:
            per_site[x] += weight
    return max(per_site.values(), default=0.0)


def kappa_norm(A: ExtensiveOperator, kappa: float) -> float:
    """sup over sites x of sum_{S ∋ x} ||A_S||_op e^{kappa |S|}."""
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    for s in A._terms:
        if len(s) > MAX_DENSE_SUPPORT:
            raise CapacityError(
                f"support of size {len(s)} exceeds the dense-norm limit {MAX_DENSE_SUPPORT}; "
                "tighten TruncationPolicy.support_cap"
            )
    return profile_kappa_norm(A.term_norms(), kappa)


# ---------------------------------------------------------------------------
# truncation and error bookkeeping


@dataclass(frozen=True)
class TruncationPolicy:
    """Support cap, relative coefficient floor and series tolerance."""

    support_cap: int = 8
    coeff_floor: float = 1e-14
    series_tol: float = 1e-13
    max_order: int = 60

    def __post_init__(self):
        if self.support_cap < 1:
            raise ValueError("support_cap must be at least 1")
        if self.support_cap > MAX_DENSE_SUPPORT:
            raise ValueError(f"support_cap above {MAX_DENSE_SUPPORT} cannot be normed exactly")
        if self.coeff_floor < 0:
            raise ValueError("coeff_floor must be >= 0")
        if not self.series_tol > 0:
            raise ValueError("series_tol must be > 0")

    def check_input(self, A: ExtensiveOperator) -> None:
        if A.max_support() > self.support_cap:
            raise ValueError(
                f"support_cap={self.support_cap} is below the largest input support {A.max_support()}"
            )


@dataclass
class LedgerEntry:
    step: str
    kind: str
    kappa: float
    kappa_norm: float
    op_bound: float


@dataclass
class ErrorLedger:
    """Certified record of everything dropped by truncation or series cut-off.

    ``op_bound`` entries bound the operator norm of the error they describe;
    ``kappa_norm`` entries are the kappa-norm of the dropped piece at the
    kappa in force when it was dropped.
    """

    n_sites: int
    entries: list[LedgerEntry] = field(default_factory=list)
    certified: bool = True

    def record(self, step: str, kind: str, kappa: float, kappa_norm_value: float, op_bound: float) -> None:
        if kappa_norm_value < 0 or op_bound < 0:
            raise ValueError("ledger increments must be non-negative")
        if kappa_norm_value == 0 and op_bound == 0:
            return
        self.entries.append(LedgerEntry(step, kind, float(kappa), float(kappa_norm_value), float(op_bound)))

    def mark(self) -> int:
        return len(self.entries)

    def kappa_norm_since(self, mark: int) -> float:
        return math.fsum(e.kappa_norm for e in self.entries[mark:])

    def op_bound_since(self, mark: int) -> float:
        return math.fsum(e.op_bound for e in self.entries[mark:])

    @property
    def total_kappa_norm(self) -> float:
        return self.kappa_norm_since(0)

    @property
    def total_op_bound(self) -> float:
        return self.op_bound_since(0)

    def to_dict(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "certified": self.certified,
            "total_kappa_norm": self.total_kappa_norm,
            "total_op_bound": self.total_op_bound,
            "entries": [vars(e) for e in self.entries],
        }


def split_dropped(
    A: ExtensiveOperator, policy: TruncationPolicy, threshold: float
) -> tuple[ExtensiveOperator, ExtensiveOperator]:
    """(kept, dropped) with ``kept + dropped == A`` exactly."""
    kept: dict[Support, np.ndarray] = {}
    dropped: dict[Support, np.ndarray] = {}
    for s, c in A._terms.items():
        if len(s) > policy.support_cap:
            dropped[s] = c
            continue
        small = np.abs(c) < threshold
        if small.any():
            dropped[s] = np.where(small, c, 0)
            kept[s] = np.where(small, 0, c)
        else:
            kept[s] = c
    return ExtensiveOperator(kept), ExtensiveOperator(dropped)


def dropped_op_bound(D: ExtensiveOperator) -> float:
    """Operator-norm bound sum_S ||D_S||; the ledger's certified unit.

    Terms too large for a dense norm are bounded by the l1 norm of their
    coefficients (every ladder string has unit norm).
    """
    total = []
    for s, c in D.items():
        if len(s) > MAX_DENSE_SUPPORT:
            total.append(float(np.abs(c).sum()))
        else:
            total.append(D.term_norm(s))
    return math.fsum(total)


def _dropped_kappa_norm(D: ExtensiveOperator, kappa: float) -> float:
    profile = {}
    for s, c in D.items():
        profile[s] = float(np.abs(c).sum()) if len(s) > MAX_DENSE_SUPPORT else D.term_norm(s)
    return profile_kappa_norm(profile, kappa)


def truncate(
    A: ExtensiveOperator,
    policy: TruncationPolicy,
    kappa: float,
    ledger: ErrorLedger,
    *,
    scale: float = 1.0,
    step: str = "truncate",
    weight: float = 1.0,
) -> ExtensiveOperator:
    """Drop supports above the cap and strings below ``coeff_floor * scale``.

    Every dropped piece is charged to ``ledger`` multiplied by ``weight``
    (callers that truncate an intermediate quantity pass the factor by which
    it enters the final result).
    """
    kept, dropped = split_dropped(A, policy, policy.coeff_floor * scale)
    if dropped.is_zero:
        return A
    ledger.record(
        step,
        "truncation",
        kappa,
        weight * _dropped_kappa_norm(dropped, kappa),
        weight * dropped_op_bound(dropped),
    )
    return kept
