"""Exact-diagonalisation harness for chains of at most 12 sites.

Basis: site-major tensor product, first site most significant, spin up is
index 0 on every site (so Z = diag(1, -1)). Evolution uses the full
Hermitian eigendecomposition, so there is no integrator error.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .pauli_algebra import CapacityError, ExtensiveOperator, LocalTerm, Site

MAX_DENSE_SITES = 12


@dataclass(frozen=True)
class DenseOperator:
    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def n_sites(self) -> int:
        return int(round(math.log2(self.dim)))

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        return hermitian_defect(self.entries) <= atol

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def hermitian_defect(mat: np.ndarray) -> float:
    return float(np.abs(mat - mat.conj().T).max()) if mat.size else 0.0


def _as_matrix(A) -> np.ndarray:
    return A.entries if isinstance(A, DenseOperator) else np.asarray(A)


def _site_positions(sites: list[Site] | int) -> dict[Site, int]:
    if isinstance(sites, int):
        sites = [(x,) for x in range(sites)]
    if any(len(s) != 1 for s in sites):
        raise CapacityError("dense verification supports one-dimensional chains only")
    if len(sites) > MAX_DENSE_SITES:
        raise CapacityError(f"{len(sites)} sites exceed the dense limit of {MAX_DENSE_SITES}")
    return {s: i for i, s in enumerate(sorted(sites))}


def densify(A: ExtensiveOperator, sites: list[Site] | int) -> DenseOperator:
    """Dense matrix of A on the given chain (an int means sites 0 .. n-1)."""
    pos = _site_positions(sites)
    n = len(pos)
    missing = [s for s in A.sites() if s not in pos]
    if missing:
        raise ValueError(f"operator acts on sites outside the chain: {missing[:3]}")
    out = np.zeros((2**n, 2**n), dtype=np.complex128)
    for support in A.supports:
        block = A.block(support)
        if not support:
            out += block[0, 0] * np.eye(2**n)
            continue
        _kernels.scatter_add(out, block, tuple(pos[s] for s in support), n)
    return DenseOperator(out)


def local_dense(term: LocalTerm, sites: list[Site] | int) -> DenseOperator:
    return densify(ExtensiveOperator({term.support: term.coeffs}), sites)


def operator_norm(mat) -> float:
    """Largest singular value; Hermitian input goes through eigvalsh."""
    m = _as_matrix(mat)
    if m.size == 0:
        return 0.0
    if hermitian_defect(m) <= 1e-13 * max(1.0, float(np.abs(m).max())):
        return float(np.abs(np.linalg.eigvalsh(m)).max())
    return float(np.linalg.norm(m, 2))


def power_iteration_norm(mat, tol: float = 1e-10, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest singular value by power iteration on M^† M (fallback route)."""
    m = _as_matrix(mat)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.shape[1]) + 1j * rng.standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = m.conj().T @ (m @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0:
            return 0.0
        v = w / norm_w
        new = math.sqrt(norm_w)
        if abs(new - sigma) <= tol * max(new, 1.0):
            return new
        sigma = new
    return sigma


class Propagator:
    """U(t) = e^{-iHt} from one eigendecomposition of H."""

    def __init__(self, H, atol: float = 1e-10):
        h = _as_matrix(H)
        if hermitian_defect(h) > atol:
            raise ValueError(f"Hamiltonian is not Hermitian (defect {hermitian_defect(h):.3g})")
        self.energies, self.vectors = np.linalg.eigh((h + h.conj().T) / 2)

    def unitary(self, t: float) -> np.ndarray:
        phases = np.exp(-1j * self.energies * t)
        return (self.vectors * phases) @ self.vectors.conj().T

    def heisenberg(self, A, t: float) -> np.ndarray:
        """e^{iHt} A e^{-iHt}, computed in the eigenbasis."""
        a = self.vectors.conj().T @ _as_matrix(A) @ self.vectors
        ph = np.exp(1j * self.energies * t)
        return self.vectors @ (ph[:, None] * a * ph.conj()[None, :]) @ self.vectors.conj().T

    def evolve(self, psi: np.ndarray, t: float) -> np.ndarray:
        c = self.vectors.conj().T @ psi
        return self.vectors @ (np.exp(-1j * self.energies * t) * c)

    def unitarity_defect(self, t: float) -> float:
        u = self.unitary(t)
        return float(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max())


@dataclass(frozen=True)
class DriftCurve:
    times: tuple[float, ...]
    values: tuple[float, ...]
    bound_values: tuple[float | None, ...]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if any(v < 0 for v in self.values):
            raise ValueError("drift values must be non-negative")
        if not (len(self.times) == len(self.values) == len(self.bound_values)):
            raise ValueError("times, values and bounds must have equal length")

    def within_bound(self, slack: float = 0.0) -> bool:
        return all(b is None or v <= b + slack for v, b in zip(self.values, self.bound_values))

    def to_csv(self) -> str:
        return curve_csv(self.times, self.values, self.bound_values)


def _check_times(times) -> np.ndarray:
    t = np.asarray(list(times), dtype=float)
    if t.size == 0:
        raise ValueError("time grid is empty")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    return t


def geometric_times(t0: float, t_max: float, include_zero: bool = False) -> list[float]:
    """t0 * 2^k up to t_max, with t_max itself appended if it is not hit."""
    if not 0 < t0 <= t_max:
        raise ValueError("need 0 < t0 <= t_max")
    out = [0.0] if include_zero else []
    t = t0
    while t < t_max * (1 - 1e-12):
        out.append(t)
        t *= 2
    out.append(float(t_max))
    return out


def heisenberg_drift(A, H, times, bound=None, per_site: bool = True) -> DriftCurve:
    """||e^{iHt} A e^{-iHt} - A||_op, divided by the site count when ``per_site``.

    ``bound`` is an optional callable t -> theory value (or None).
    """
    t = _check_times(times)
    a = _as_matrix(A)
    prop = Propagator(H)
    n = int(round(math.log2(a.shape[0])))
    div = n if per_site else 1
    values = tuple(operator_norm(prop.heisenberg(a, x) - a) / div for x in t)
    bounds = tuple(bound(x) if bound else None for x in t)
    return DriftCurve(tuple(float(x) for x in t), values, bounds)


def effective_dynamics_error(O, H, H_eff, times, bound=None) -> DriftCurve:
    """||e^{iHt} O e^{-iHt} - e^{iH_eff t} O e^{-iH_eff t}||_op."""
    t = _check_times(times)
    o = _as_matrix(O)
    p_true, p_eff = Propagator(H), Propagator(H_eff)
    values = tuple(operator_norm(p_true.heisenberg(o, x) - p_eff.heisenberg(o, x)) for x in t)
    bounds = tuple(bound(x) if bound else None for x in t)
    return DriftCurve(tuple(float(x) for x in t), values, bounds)


def spectrum_integerness(A) -> float:
    """max over eigenvalues of the distance to the nearest integer."""
    a = _as_matrix(A)
    if hermitian_defect(a) > 1e-10:
        raise ValueError("spectrum_integerness needs a Hermitian matrix")
    ev = np.linalg.eigvalsh((a + a.conj().T) / 2)
    return float(np.abs(ev - np.round(ev)).max())


def expectation_trace(state: np.ndarray, A, H, times) -> tuple[np.ndarray, np.ndarray]:
    """(times, <psi(t)|A|psi(t)>) with psi(t) = e^{-iHt} psi."""
    psi = np.asarray(state, dtype=np.complex128)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError(f"state is not normalised (norm {np.linalg.norm(psi):.12g})")
    t = _check_times(times)
    a = _as_matrix(A)
    prop = Propagator(H)
    vals = np.empty(t.size)
    for i, x in enumerate(t):
        phi = prop.evolve(psi, x)
        vals[i] = float(np.real(np.vdot(phi, a @ phi)))
    return t, vals


def product_state(bits: str) -> np.ndarray:
    """Computational basis state; '0' is spin up."""
    idx = int(bits, 2) if bits else 0
    psi = np.zeros(2 ** len(bits), dtype=np.complex128)
    psi[idx] = 1.0
    return psi


def all_up(n_sites: int) -> np.ndarray:
    return product_state("0" * n_sites)


def neel(n_sites: int) -> np.ndarray:
    return product_state("".join("01"[i % 2] for i in range(n_sites)))


def random_state(n_sites: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(2**n_sites) + 1j * rng.standard_normal(2**n_sites)
    return v / np.linalg.norm(v)


def band_width(values: np.ndarray) -> float:
    v = np.asarray(values)
    return float(v.max() - v.min())


def curve_csv(times, values, bounds) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "value", "bound"])
    for t, v, b in zip(times, values, bounds):
        w.writerow([f"{t:.17g}", f"{v:.17g}", "" if b is None else f"{b:.17g}"])
    return buf.getvalue()


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:12]
