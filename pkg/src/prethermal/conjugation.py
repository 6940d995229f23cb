"""Conjugation e^{-iG} A e^{iG} as a truncated commutator series.

    e^{-iG} A e^{iG} = sum_j (-i)^j / j!  ad_G^j A,      ad_G X = [G, X]

The series order J is the smallest one whose certified tail, summed from
the iterated-commutator bound

    ||ad_G^j A||_κ <= (j/e)^j (4 e^{-κ} ||G||_{κ+δ} / δ)^j ||A||_{κ+δ},

falls below ``series_tol * ||A||_{κ+δ}``. The ratio
``4 e^{-κ} ||G||_{κ+δ} / δ`` must stay below ``eta_max``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .pauli_algebra import (
    ErrorLedger,
    ExtensiveOperator,
    TruncationPolicy,
    add,
    commutator,
    commutator_capped,
    dropped_op_bound,
    kappa_norm,
    profile_kappa_norm,
    scale,
    split_dropped,
)


class ContractionError(RuntimeError):
    """The generator is too large for a certified series at this δ."""

    def __init__(self, ratio: float, eta_max: float, where: str = ""):
        self.ratio = ratio
        self.eta_max = eta_max
        self.where = where
        msg = f"contraction ratio {ratio:.6g} exceeds eta_max={eta_max:g}"
        if where:
            msg += f" ({where})"
        super().__init__(msg + "; shrink eps or enlarge delta")


@dataclass(frozen=True)
class ConjugationReport:
    series_order_used: int
    tail_bound: float
    ratio: float
    certified: bool = True


def contraction_ratio(norm_G: float, kappa: float, delta: float) -> float:
    return 4.0 * math.exp(-kappa) * norm_G / delta


def lemma1_bound(j: int, kappa: float, delta: float, normA: float, normB: float) -> float:
    """(j/e)^j (4 e^{-κ})^j / δ^j ||A||^j ||B||, norms taken at κ + δ."""
    if j < 0 or delta <= 0:
        raise ValueError("need j >= 0 and delta > 0")
    if j == 0:
        return float(normB)
    if normA == 0 or normB == 0:
        return 0.0
    log_val = j * math.log(j / math.e) + j * math.log(contraction_ratio(normA, kappa, delta)) + math.log(normB)
    return math.exp(log_val)


def lemma2_estimates(
    G: ExtensiveOperator, B: ExtensiveOperator, kappa: float, delta: float, eta: float
) -> tuple[float, float, float]:
    """Right-hand sides of the three conjugation estimates, for A = -iG.

    Returns ``(||B||/(1-η), C_η e^{-κ} ||G|| ||B|| / δ, C_η e^{-κ} ||G|| ||[G,B]|| / δ)``
    with ``C_η = 4 / (1 - η)`` and all norms at κ + δ.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    outer = kappa + delta
    nG = kappa_norm(G, outer)
    ratio = contraction_ratio(nG, kappa, delta)
    if ratio > eta:
        raise ValueError(f"hypothesis violated: 4e^-κ||G||/δ = {ratio:.6g} > η = {eta}")
    nB = kappa_norm(B, outer)
    c_eta = 4.0 / (1.0 - eta)
    pref = c_eta * math.exp(-kappa) / delta * nG
    return nB / (1.0 - eta), pref * nB, pref * kappa_norm(commutator(G, B), outer)


def _log_abs_weight_exp(j: int) -> float:
    return -math.lgamma(j + 1)


def certified_tail(ratio: float, norm_x: float, J: int, log_weight: Callable[[int], float]) -> float:
    """sum_{j > J} |w_j| (j/e)^j ratio^j ||X||, summed numerically.

    Requires ratio < 1 and |w_{j+1}| <= |w_j| / (j + 1), which makes the
    terms fall at least geometrically with factor ``ratio``; the remainder
    after the last explicit term is closed with that geometric bound.
    """
    if norm_x == 0 or ratio == 0:
        return 0.0
    if ratio >= 1:
        return math.inf
    total = 0.0
    j = J + 1
    log_r = math.log(ratio)
    while True:
        log_t = log_weight(j) + (j * math.log(j / math.e) if j else 0.0) + j * log_r
        t = math.exp(log_t) * norm_x
        total += t
        if t <= 1e-18 * total or t < 1e-300:
            return total + t * ratio / (1.0 - ratio)
        j += 1


def series_order(
    ratio: float, norm_x: float, tol: float, start: int, log_weight: Callable[[int], float], max_order: int
) -> int:
    """Smallest J >= start - 1 with certified tail <= tol."""
    J = start - 1
    while certified_tail(ratio, norm_x, J, log_weight) > tol:
        J += 1
        if J > max_order:
            raise RuntimeError(f"series tolerance {tol:g} needs more than max_order={max_order} terms")
    return J


def generator_op_bound(G: ExtensiveOperator) -> float:
    return math.fsum(G.term_norms().values())


def adjoint_series(
    G: ExtensiveOperator,
    X: ExtensiveOperator,
    *,
    weight: Callable[[int], complex],
    log_abs_weight: Callable[[int], float],
    start: int,
    kappa_target: float,
    delta: float,
    policy: TruncationPolicy,
    ledger: ErrorLedger,
    eta_max: float | None,
    scale_ref: float | None = None,
    step: str = "series",
) -> tuple[ExtensiveOperator, ConjugationReport]:
    """sum_{j >= start} w_j ad_G^j X, cut at the certified order.

    Each iterated commutator is truncated (support cap, coefficient floor)
    before the next one is formed. A piece D dropped at order j contributes
    at most ``|w_j| e^{2||G||_op} ||D||`` to the final operator norm; that is
    what the ledger is charged. With ``eta_max=None`` a ratio >= 1 is allowed
    and the order is chosen from the computed terms instead (uncertified).
    """
    outer = kappa_target + delta
    norm_G = kappa_norm(G, outer)
    norm_X = kappa_norm(X, outer)
    ratio = contraction_ratio(norm_G, kappa_target, delta)
    if eta_max is not None and ratio > eta_max:
        raise ContractionError(ratio, eta_max, step)
    if G.is_zero or X.is_zero:
        result = scale(weight(0), X) if start == 0 else ExtensiveOperator()
        return result, ConjugationReport(0, 0.0, ratio)

    tol = policy.series_tol * norm_X
    certified = ratio < 1
    if certified:
        J = series_order(ratio, norm_X, tol, start, log_abs_weight, policy.max_order)
        tail = certified_tail(ratio, norm_X, J, log_abs_weight)
    else:
        J = policy.max_order
        tail = math.inf

    ref = norm_X if scale_ref is None else scale_ref
    growth = math.exp(2.0 * generator_op_bound(G))
    n_sites = ledger.n_sites
    total = ExtensiveOperator()
    term = X
    used = start - 1
    small_run = 0
    last_size = 0.0
    for j in range(0, J + 1):
        if j > 0:
            term, skipped = commutator_capped(G, term, policy.support_cap)
            w_abs = math.exp(log_abs_weight(j))
            if skipped:
                ledger.record(
                    step,
                    "support",
                    kappa_target,
                    w_abs * profile_kappa_norm(skipped, kappa_target),
                    w_abs * growth * math.fsum(skipped.values()),
                )
            threshold = policy.coeff_floor * ref / w_abs
            term, dropped = split_dropped(term, policy, threshold)
            if not dropped.is_zero:
                ledger.record(
                    step,
                    "truncation",
                    kappa_target,
                    w_abs * kappa_norm(dropped, kappa_target),
                    w_abs * growth * dropped_op_bound(dropped),
                )
        if j >= start:
            total = add(total, scale(weight(j), term))
            used = j
        if term.is_zero:
            break
        if not certified and j >= start:
            size = math.exp(log_abs_weight(j)) * kappa_norm(term, kappa_target)
            last_size = size
            small_run = small_run + 1 if size <= tol else 0
            if small_run >= 2:
                break
    else:
        if not certified:
            raise RuntimeError(f"{step}: uncertified series did not settle within max_order={policy.max_order}")

    if certified and tail > 0:
        ledger.record(step, "tail", kappa_target, tail, n_sites * tail)
    elif not certified:
        # no certificate exists above ratio 1; log the last computed term as an estimate
        tail = last_size
        ledger.certified = False
        ledger.record(step, "tail-uncertified", kappa_target, last_size, n_sites * last_size)
    return total, ConjugationReport(used if used >= 0 else 0, tail, ratio, certified)


def _exp_weight(j: int) -> complex:
    return (-1j) ** j / math.factorial(j)


def conjugate(
    G: ExtensiveOperator,
    A: ExtensiveOperator,
    kappa_target: float,
    delta: float,
    policy: TruncationPolicy,
    ledger: ErrorLedger,
    *,
    eta_max: float | None = 0.5,
    scale_ref: float | None = None,
    step: str = "conjugate",
) -> tuple[ExtensiveOperator, ConjugationReport]:
    """e^{-iG} A e^{iG} to the policy's series tolerance."""
    return adjoint_series(
        G,
        A,
        weight=_exp_weight,
        log_abs_weight=_log_abs_weight_exp,
        start=0,
        kappa_target=kappa_target,
        delta=delta,
        policy=policy,
        ledger=ledger,
        eta_max=eta_max,
        scale_ref=scale_ref,
        step=step,
    )


def conjugate_minus_identity(
    G: ExtensiveOperator,
    A: ExtensiveOperator,
    kappa_target: float,
    delta: float,
    policy: TruncationPolicy,
    ledger: ErrorLedger,
    *,
    eta_max: float | None = 0.5,
    scale_ref: float | None = None,
    step: str = "conjugate",
) -> tuple[ExtensiveOperator, ConjugationReport]:
    """e^{-iG} A e^{iG} - A, summed from the first commutator on."""
    return adjoint_series(
        G,
        A,
        weight=_exp_weight,
        log_abs_weight=_log_abs_weight_exp,
        start=1,
        kappa_target=kappa_target,
        delta=delta,
        policy=policy,
        ledger=ledger,
        eta_max=eta_max,
        scale_ref=scale_ref,
        step=step,
    )


def second_order_remainder(
    G: ExtensiveOperator,
    W: ExtensiveOperator,
    kappa_target: float,
    delta: float,
    policy: TruncationPolicy,
    ledger: ErrorLedger,
    *,
    eta_max: float | None = 0.5,
    scale_ref: float | None = None,
    step: str = "remainder",
) -> tuple[ExtensiveOperator, ConjugationReport]:
    """sum_{r >= 1} (-i)^{r+1}/(r+1)!  ad_G^r W.

    With W = [G, N] this equals e^{-iG} N e^{iG} - N + i[G, N] without ever
    forming a commutator with N.
    """
    return adjoint_series(
        G,
        W,
        weight=lambda r: (-1j) ** (r + 1) / math.factorial(r + 1),
        log_abs_weight=lambda r: -math.lgamma(r + 2),
        start=1,
        kappa_target=kappa_target,
        delta=delta,
        policy=policy,
        ledger=ledger,
        eta_max=eta_max,
        scale_ref=scale_ref,
        step=step,
    )
