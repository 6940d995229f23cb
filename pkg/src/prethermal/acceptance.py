"""The nine acceptance criteria as callable checks.

Each ``criterion_k`` returns a :class:`CriterionResult`; the test gate and
the ``verify --full`` command both use these functions. Runs shared between
criteria are cached per process.
"""
from __future__ import annotations

import functools
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from . import serialization
from .conjugation import conjugate, lemma1_bound, lemma2_estimates
from .dense_verify import (
    all_up,
    band_width,
    densify,
    effective_dynamics_error,
    expectation_trace,
    geometric_times,
    heisenberg_drift,
    operator_norm,
    random_state,
    spectrum_integerness,
)
from .homological import average_over_flow, max_frequency, solve_homological
from .models import ising
from .normal_form import NormalFormParams, NormalFormResult, compute_eps0, run
from .pauli_algebra import (
    ErrorLedger,
    ExtensiveOperator,
    TruncationPolicy,
    commutator,
    kappa_norm,
    pauli,
    scale,
)
from .sampling import random_number_operator, random_operator

KAPPA = 1.0
SEED = 20240611


def roundoff(norm: float) -> float:
    """Allowance for floating-point error in dense linear algebra at these sizes."""
    return 1e-13 * (1.0 + norm)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number} [{tag}] {self.title} ({self.seconds:.1f}s)"


def _timed(number: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs) -> CriterionResult:
            t0 = time.perf_counter()
            passed, details = fn(*args, **kwargs)
            return CriterionResult(number, title, bool(passed), details, time.perf_counter() - t0)

        return inner

    return wrap


# ---------------------------------------------------------------------------
# shared corpora and runs


@functools.lru_cache(maxsize=None)
def homological_corpus(n: int = 200, n_sites: int = 6, seed: int = SEED):
    rng = np.random.default_rng(seed)
    return [(random_operator(rng, n_sites, 3), random_number_operator(rng, n_sites)) for _ in range(n)]


@functools.lru_cache(maxsize=None)
def reference_run(n_sites: int = 6, divisor: int = 3, kappa: float = KAPPA) -> NormalFormResult:
    """Ising chain at ε = ε₀ / divisor, ε₀ from the measured ||P||_κ."""
    model = ising(n_sites)
    normP = kappa_norm(model.P, kappa)
    params = NormalFormParams.build(kappa, compute_eps0(normP) / divisor, normP)
    return run(model.number, model.P, params, n_sites=n_sites)


@functools.lru_cache(maxsize=None)
def research_run(n_sites: int = 8, eps: float = 0.05, n_star: int = 3, kappa: float = KAPPA) -> NormalFormResult:
    model = ising(n_sites)
    normP = kappa_norm(model.P, kappa)
    params = NormalFormParams.build(kappa, eps, normP, n_star=n_star)
    return run(model.number, model.P, params, n_sites=n_sites)


@functools.lru_cache(maxsize=None)
def _dense_ising(n_sites: int, eps: float):
    model = ising(n_sites)
    return densify(model.N, n_sites).entries, densify(model.hamiltonian(eps), n_sites).entries


# ---------------------------------------------------------------------------
# criteria


@_timed(1, "homological identity and generator / resonant-part norm bounds")
def criterion_1(kappa: float = KAPPA):
    worst_residual, worst_B, worst_G = 0.0, 0.0, 0.0
    ok = True
    for A, N in homological_corpus():
        G, B = solve_homological(A, N)
        Nd = densify(N.to_operator(), 6).entries
        Gd, Ad, Bd = (densify(X, 6).entries for X in (G, A, B))
        residual = operator_norm(-1j * (Gd @ Nd - Nd @ Gd) + Ad - Bd)
        nA = kappa_norm(A, kappa)
        tol = 1e-10 * (1 + operator_norm(Ad))
        rB, rG = kappa_norm(B, kappa) / nA, kappa_norm(G, kappa) / nA
        worst_residual = max(worst_residual, residual / tol)
        worst_B, worst_G = max(worst_B, rB), max(worst_G, rG / (2 * math.pi))
        ok &= residual <= tol and rB <= 1.0 and rG <= 2 * math.pi
    return ok, {
        "max_residual_over_tol": worst_residual,
        "max_normB_over_normA": worst_B,
        "max_normG_over_2pi_normA": worst_G,
    }


@_timed(2, "flow average agrees with closed-form resonant part")
def criterion_2(kappa: float = KAPPA):
    worst = 0.0
    for A, N in homological_corpus():
        _, B = solve_homological(A, N)
        avg = average_over_flow(A, N, 2 * max_frequency(A, N) + 3)
        worst = max(worst, kappa_norm(avg - B, kappa))
    return worst <= 1e-12, {"max_kappa_norm_difference": worst}


def _conjugation_pieces_measured(G: ExtensiveOperator, B: ExtensiveOperator, kappa: float, delta: float):
    """κ-norms of e^A B e^{-A} (A = -iG), its first difference and second remainder.

    The conjugation is summed to convergence without truncation and checked
    against the dense matrix exponential before its κ-norms are trusted.
    """
    policy = TruncationPolicy(support_cap=6, coeff_floor=0.0, series_tol=1e-15, max_order=80)
    conj, _ = conjugate(G, B, kappa, delta, policy, ErrorLedger(6), eta_max=0.5)
    Gd, Bd = densify(G, 6).entries, densify(B, 6).entries
    U = scipy.linalg.expm(-1j * Gd)
    oracle_gap = operator_norm(densify(conj, 6).entries - U @ Bd @ U.conj().T)
    first = conj - B
    second = first - scale(-1j, commutator(G, B))
    return (
        kappa_norm(conj, kappa),
        kappa_norm(first, kappa),
        kappa_norm(second, kappa),
        oracle_gap,
    )


@_timed(3, "nested-commutator and conjugation estimate audits")
def criterion_3(kappa: float = 0.5, delta: float = 0.5, n_pairs: int = 100):
    rng = np.random.default_rng(SEED + 3)
    outer = kappa + delta
    l1_ok, l2_ok, audited = True, True, 0
    worst_l1, worst_l2, worst_gap = 0.0, 0.0, 0.0
    for i in range(n_pairs):
        A = random_operator(rng, 6, 3)
        B = random_operator(rng, 6, 3)
        nA, nB = kappa_norm(A, outer), kappa_norm(B, outer)
        X = B
        for j in range(0, 6):
            if j:
                X = commutator(A, X)
            ratio = kappa_norm(X, kappa) / lemma1_bound(j, kappa, delta, nA, nB)
            worst_l1 = max(worst_l1, ratio)
            l1_ok &= ratio <= 1.0
        # every other pair is rescaled into the contraction regime
        if i % 2 == 0:
            target = float(rng.uniform(0.05, 0.5))
            G = scale(target * delta / (4 * math.exp(-kappa) * nA), A)
            rhs = lemma2_estimates(G, B, kappa, delta, 0.5)
            lhs = _conjugation_pieces_measured(G, B, kappa, delta)
            worst_gap = max(worst_gap, lhs[3])
            for measured, bound in zip(lhs[:3], rhs):
                if bound > 0:
                    worst_l2 = max(worst_l2, measured / bound)
                l2_ok &= measured <= bound * (1 + 1e-12) + 1e-14
            l2_ok &= lhs[3] <= roundoff(operator_norm(densify(B, 6).entries))
            audited += 1
    return l1_ok and l2_ok, {
        "max_nested_commutator_ratio": worst_l1,
        "max_conjugation_estimate_ratio": worst_l2,
        "conjugation_pairs_audited": audited,
        "max_dense_oracle_gap": worst_gap,
    }


def step_fidelity(result: NormalFormResult, n_sites: int) -> list[dict]:
    """Dense audit of every step against the matrix-exponential conjugation."""
    model = ising(n_sites)
    Nd = densify(model.N, n_sites).entries
    rows = []
    for rec in result.records:
        H_in = Nd + densify(rec.Z_in + rec.P_in, n_sites).entries
        H_out = Nd + densify(rec.Z_out + rec.P_out, n_sites).entries
        V = scipy.linalg.expm(1j * densify(rec.G, n_sites).entries)
        gap = operator_norm(H_out - V.conj().T @ H_in @ V)
        allowed = n_sites * sum(r.tail_bound for r in rec.reports) + rec.ledger_op_increment
        slack = roundoff(operator_norm(H_in))
        rows.append({"n": rec.n, "gap": gap, "allowed": allowed, "roundoff": slack, "passed": gap <= allowed + slack})
    return rows


@_timed(4, "step fidelity against dense conjugation")
def criterion_4():
    result = reference_run()
    rows = step_fidelity(result, 6)
    checks_ok = all(c.passed for c in result.bound_checks)
    zn_ok = all(c.commutator_ZN <= 1e-12 for c in result.bound_checks)
    return all(r["passed"] for r in rows) and checks_ok and zn_ok, {
        "n_star": result.params.n_star,
        "steps": rows,
        "bound_checks_pass": checks_ok,
        "max_commutator_ZN": max((c.commutator_ZN for c in result.bound_checks), default=0.0),
    }


def structural_checks(result: NormalFormResult, n_sites: int, kappa: float) -> dict:
    """Integer spectrum, closeness to N, and [𝒩, 𝒵] on the dense chain."""
    model = ising(n_sites)
    Nd = densify(model.N, n_sites).entries
    dN = densify(result.dressed_N, n_sites).entries
    dZ = densify(result.dressed_Z, n_sites).entries
    ledger = result.ledger.total_op_bound
    hermitian = np.abs(dN - dN.conj().T).max() <= 1e-10
    integer_gap = spectrum_integerness(dN) if hermitian else math.inf
    closeness = operator_norm(dN - Nd) / n_sites
    closeness_bound = result.constants.C1 * result.params.eps * kappa_norm(model.N, kappa)
    comm = operator_norm(dN @ dZ - dZ @ dN)
    r = roundoff(operator_norm(Nd))
    return {
        "integer_gap": integer_gap,
        "integer_allowed": ledger + r,
        "integer_pass": integer_gap <= ledger + r,
        "closeness": closeness,
        "closeness_bound": closeness_bound,
        "closeness_pass": closeness <= closeness_bound + (ledger + r) / n_sites,
        "commutator": comm,
        "commutator_allowed": 2 * ledger + r,
        "commutator_pass": comm <= 2 * ledger + r,
    }


@_timed(5, "structural items: integer spectrum, closeness, commutativity")
def criterion_5():
    s = structural_checks(reference_run(), 6, KAPPA)
    return s["integer_pass"] and s["closeness_pass"] and s["commutator_pass"], s


def drift_checks(result: NormalFormResult, n_sites: int, times) -> dict:
    model = ising(n_sites)
    p, c = result.params, result.constants
    _, H = _dense_ising(n_sites, p.eps)
    decay = p.eps * math.exp(-p.eps0 / p.eps)
    nN = kappa_norm(model.N, 0.75 * p.kappa)
    dN = densify(result.dressed_N, n_sites).entries
    dZ = densify(result.dressed_Z, n_sites).entries
    curve_N = heisenberg_drift(dN, H, times, bound=lambda t: c.C2 * nN * abs(t) * decay)
    curve_Z = heisenberg_drift(dZ, H, times, bound=lambda t: c.C3 * abs(t) * p.eps * decay)
    slack_N = 2 * result.ledger.total_op_bound / n_sites + roundoff(operator_norm(dN)) / n_sites
    slack_Z = 2 * result.ledger.total_op_bound / n_sites + roundoff(operator_norm(dZ)) / n_sites
    alt = [c.drift_alt_prefactor * decay * t / n_sites for t in curve_N.times]
    return {
        "curve_N": curve_N,
        "curve_Z": curve_Z,
        "N_pass": curve_N.within_bound(slack_N),
        "Z_pass": curve_Z.within_bound(slack_Z),
        "alt_N_pass": all(v <= b + slack_N for v, b in zip(curve_N.values, alt)),
        "max_N_ratio": max(v / b for v, b in zip(curve_N.values, curve_N.bound_values)),
        "max_Z_ratio": max(v / b for v, b in zip(curve_Z.values, curve_Z.bound_values)),
    }


@_timed(6, "drift bounds for the dressed operators")
def criterion_6():
    d = drift_checks(reference_run(), 6, geometric_times(0.1, 100.0))
    out = {k: v for k, v in d.items() if not k.startswith("curve")}
    return d["N_pass"] and d["Z_pass"], out


def dominance_check(result: NormalFormResult, n_sites: int, times) -> dict:
    Nd, H = _dense_ising(n_sites, result.params.eps)
    dN = densify(result.dressed_N, n_sites).entries
    bare = heisenberg_drift(Nd, H, times)
    dressed = heisenberg_drift(dN, H, times)
    allowance = roundoff(operator_norm(Nd)) / n_sites  # both curves vanish at t = 0
    return {
        "bare": bare,
        "dressed": dressed,
        "pass": all(d <= b + allowance for d, b in zip(dressed.values, bare.values)),
        "max_bare": max(bare.values),
        "max_dressed": max(dressed.values),
    }


def plateau_band(n_sites: int, eps: float, state: np.ndarray, t_max: float = 100.0, samples: int = 401) -> float:
    Nd, H = _dense_ising(n_sites, eps)
    _, values = expectation_trace(state, Nd, H, np.linspace(0.0, t_max, samples))
    return band_width(values)


@_timed(7, "research mode: dressed drift below bare drift; plateau band linear in eps")
def criterion_7():
    dom = dominance_check(research_run(8, 0.05, 3), 8, np.linspace(0.0, 50.0, 101))
    w1 = plateau_band(8, 0.05, all_up(8))
    w2 = plateau_band(8, 0.10, all_up(8))
    ratio = w2 / w1
    # diagnostics only: a larger chain, and a generic state where the band is first order in eps
    wide = plateau_band(10, 0.10, all_up(10)) / plateau_band(10, 0.05, all_up(10))
    rand = plateau_band(8, 0.10, random_state(8, SEED)) / plateau_band(8, 0.05, random_state(8, SEED))
    return dom["pass"] and 1.3 <= ratio <= 2.7, {
        "dominance_pass": dom["pass"],
        "max_bare_drift": dom["max_bare"],
        "max_dressed_drift": dom["max_dressed"],
        "band_all_up": [w1, w2],
        "band_ratio_all_up": ratio,
        "band_ratio_pass": 1.3 <= ratio <= 2.7,
        "band_ratio_all_up_L10": wide,
        "band_ratio_random_state": rand,
    }

EARLY_PLATEAU_T = 10.0


def effective_error_curve(result: NormalFormResult, n_sites: int, times):
    p = result.params
    _, H = _dense_ising(n_sites, p.eps)
    H_eff = densify(result.dressed_N + result.dressed_Z, n_sites).entries
    O = densify(pauli({((n_sites - 1) // 2,): "Z"}), n_sites).entries
    window = math.exp(p.eps0 / (2 * p.eps))
    c4 = result.constants.C4 * p.eps
    return effective_dynamics_error(O, H, H_eff, times, bound=lambda t: c4 if t <= window else None), window


def plateau_summary(curve, window: float) -> dict:
    t = np.asarray(curve.times)
    v = np.asarray(curve.values)
    early = float(v[t <= EARLY_PLATEAU_T].max())
    in_window = v[t <= window]
    return {
        "early_plateau": early,
        "window": window,
        "max_in_window": float(in_window.max()) if in_window.size else 0.0,
        "max_overall": float(v.max()),
        "stays_below": bool(in_window.size == 0 or in_window.max() <= early),
    }


@_timed(8, "effective dynamics error: plateau and linear scaling in eps")
def criterion_8():
    times = geometric_times(0.01, 100.0)
    research = {}
    for eps in (0.05, 0.025):
        curve, window = effective_error_curve(research_run(8, eps, 3), 8, times)
        research[eps] = plateau_summary(curve, window)
    ratio = research[0.05]["early_plateau"] / research[0.025]["early_plateau"]
    reference = {}
    for divisor in (3, 6):
        curve, window = effective_error_curve(reference_run(6, divisor), 6, times)
        reference[divisor] = plateau_summary(curve, window)
    below = all(s["stays_below"] for s in research.values())
    return below and 1.4 <= ratio <= 2.6, {
        "research_L8": {str(k): v for k, v in research.items()},
        "plateau_ratio": ratio,
        "ratio_pass": 1.4 <= ratio <= 2.6,
        "stays_below_pass": below,
        "reference_L6": {f"eps0/{k}": v for k, v in reference.items()},
    }


def _run_bytes(result: NormalFormResult) -> bytes:
    from .normal_form import bound_checks_csv

    parts = [serialization.dumps(op) for op in (result.dressed_N, result.dressed_Z, result.Z_final, result.P_final)]
    parts += [serialization.dumps(g) for g in result.generators]
    parts.append(bound_checks_csv(result.bound_checks))
    return "\x00".join(parts).encode()


@_timed(9, "determinism and exact serialization round-trip")
def criterion_9():
    from . import cli

    model = ising(6)
    normP = kappa_norm(model.P, KAPPA)
    params = NormalFormParams.build(KAPPA, compute_eps0(normP) / 3, normP)
    first = _run_bytes(run(model.number, model.P, params))
    second = _run_bytes(run(model.number, model.P, params))
    deterministic = first == second

    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for name in ("a", "b"):
            out = Path(tmp) / name
            code = cli.main(["normal-form", "--output-dir", str(out), "--quiet"])
            outs.append((code, {p.name: p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}))
        cli_identical = outs[0][0] == outs[1][0] == 0 and outs[0][1] == outs[1][1]

    rng = np.random.default_rng(SEED + 9)
    ops = [random_operator(rng, 6, 3, self_adjoint=bool(i % 2)) for i in range(50)]
    ref = reference_run()
    ops += [ref.dressed_N, ref.dressed_Z, ref.Z_final, ref.P_final, *ref.generators]
    round_trip = True
    for op in ops:
        text = serialization.dumps(op)
        back = serialization.loads(text)
        round_trip &= serialization.dumps(back) == text and back.allclose(op, atol=0.0)
    return deterministic and cli_identical and round_trip, {
        "engine_deterministic": deterministic,
        "cli_byte_identical": cli_identical,
        "round_trip_exact": round_trip,
        "operators_checked": len(ops),
    }


ALL = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9)
