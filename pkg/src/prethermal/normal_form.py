"""Iterative normal form  H = N + εP  ->  N + Z^(n) + P^(n).

Each step solves the homological equation for the current remainder,
conjugates by e^{-iG}, and pushes the non-resonant part one order down.
The κ-schedule shrinks by an absolute ``δκ`` per step; the backward
dressing pass continues the same schedule from κ_{n*} down to κ/2.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

from .conjugation import (
    ConjugationReport,
    ContractionError,
    conjugate,
    conjugate_minus_identity,
    contraction_ratio,
    second_order_remainder,
)
from .homological import solve_homological
from .pauli_algebra import (
    ErrorLedger,
    ExtensiveOperator,
    NumberOperator,
    TruncationPolicy,
    add,
    commutator,
    kappa_norm,
    scale,
    truncate,
)

E = math.e
E_RATIO = E / (E - 1.0)
ROUNDING = 1e-12

BOUND_CHECK_COLUMNS = (
    "n",
    "norm_P_measured",
    "norm_P_bound",
    "norm_Z_measured",
    "norm_Z_bound",
    "norm_G_measured",
    "norm_G_bound",
    "ledger_increment",
    "contraction_ratio",
)


class ResearchModeRequired(ValueError):
    """ε is not below ε₀ and no explicit n_star was given."""


class StepError(RuntimeError):
    """A failure inside step ``n`` of the iteration."""

    def __init__(self, n: int, cause: Exception):
        self.n = n
        self.cause = cause
        super().__init__(f"step {n}: {cause}")


def compute_eps0(normP_kappa: float) -> float:
    """(e - 1) / (64 π (3(e - 1) + e²) ||P||_κ)."""
    if not normP_kappa > 0:
        raise ValueError("||P||_κ must be positive")
    return (E - 1.0) / (64.0 * math.pi * (3.0 * (E - 1.0) + E * E) * normP_kappa)


def default_n_star(eps0: float, eps: float) -> int:
    """floor(ε₀/ε), guarded against ratios like 2.9999999999999996."""
    ratio = eps0 / eps
    n = math.floor(ratio)
    if ratio - n > 1.0 - 1e-9:
        n += 1
    return n


@dataclass(frozen=True)
class NormalFormParams:
    kappa: float
    eps: float
    eps0: float
    n_star: int
    delta: float
    policy: TruncationPolicy
    research_mode: bool = False
    C_LR: float = 1.0
    rho: float | None = None

    @classmethod
    def build(
        cls,
        kappa: float,
        eps: float,
        normP_kappa: float,
        *,
        n_star: int | None = None,
        eps0: float | None = None,
        policy: TruncationPolicy | None = None,
        C_LR: float = 1.0,
        rho: float | None = None,
    ) -> "NormalFormParams":
        """Fill ε₀, n_star and δ from the closed forms; validate."""
        if not kappa > 0:
            raise ValueError("kappa must be positive")
        if not eps > 0:
            raise ValueError("eps must be positive")
        formula = compute_eps0(normP_kappa)
        if eps0 is None:
            eps0 = formula
        elif eps0 > formula * (1 + 1e-12):
            raise ValueError(f"eps0 override {eps0:g} exceeds the closed-form value {formula:g}")
        research = n_star is not None
        if not research:
            if eps >= eps0:
                raise ResearchModeRequired(
                    f"research-mode required: eps={eps:g} is not below eps0={eps0:g}; pass an explicit n_star"
                )
            n_star = default_n_star(eps0, eps)
        if n_star < 0:
            raise ValueError("n_star must be >= 0")
        delta = 1.0 / (4 * n_star) if n_star else 0.25
        return cls(
            kappa=kappa,
            eps=eps,
            eps0=eps0,
            n_star=n_star,
            delta=delta,
            policy=policy or TruncationPolicy(),
            research_mode=research,
            C_LR=C_LR,
            rho=rho,
        )

    @property
    def step_size(self) -> float:
        """Absolute κ decrement between consecutive schedule entries."""
        return self.delta * self.kappa

    @property
    def kappa_schedule(self) -> list[float]:
        return [self.kappa * (1.0 - self.delta * n) for n in range(2 * self.n_star + 1)]

    def kappa_at(self, n: int) -> float:
        return self.kappa * (1.0 - self.delta * n)

    @property
    def eta_max(self) -> float | None:
        return None if self.research_mode else 0.5


@dataclass
class BoundCheck:
    n: int
    norm_P_measured: float
    norm_P_bound: float
    norm_Z_measured: float
    norm_Z_bound: float
    norm_G_measured: float
    norm_G_bound: float
    ledger_increment: float
    contraction_ratio: float
    commutator_ZN: float = 0.0

    @property
    def passed(self) -> bool:
        return (
            self.norm_P_measured <= self.norm_P_bound
            and self.norm_Z_measured <= self.norm_Z_bound
            and self.norm_G_measured <= self.norm_G_bound
        )

    def row(self) -> list:
        return [getattr(self, c) for c in BOUND_CHECK_COLUMNS]


def bound_checks_csv(checks: list[BoundCheck]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BOUND_CHECK_COLUMNS)
    for c in checks:
        w.writerow([c.n] + [f"{x:.17g}" for x in c.row()[1:]])
    return buf.getvalue()


@dataclass
class StepRecord:
    """What one step did, kept for the dense audit."""

    n: int
    Z_in: ExtensiveOperator
    P_in: ExtensiveOperator
    G: ExtensiveOperator
    Z_tilde: ExtensiveOperator
    Z_out: ExtensiveOperator
    P_out: ExtensiveOperator
    reports: tuple[ConjugationReport, ...]
    ledger_op_increment: float
    ledger_kappa_increment: float


@dataclass
class NormalFormState:
    n: int
    Z: ExtensiveOperator
    P: ExtensiveOperator
    generators: list[ExtensiveOperator]
    ledger: ErrorLedger
    bound_checks: list[BoundCheck] = field(default_factory=list)
    records: list[StepRecord] = field(default_factory=list)

    @classmethod
    def initial(cls, P: ExtensiveOperator, params: NormalFormParams, n_sites: int) -> "NormalFormState":
        return cls(0, ExtensiveOperator(), scale(params.eps, P), [], ErrorLedger(n_sites))


def step(
    state: NormalFormState, N: NumberOperator, params: NormalFormParams, normP_kappa: float
) -> NormalFormState:
    """One iteration: returns the state with index n + 1 (``state`` is not mutated)."""
    n = state.n
    if n >= params.n_star:
        raise ValueError(f"step index {n} is already at n_star={params.n_star}")
    k_n = params.kappa_at(n)
    k_next = params.kappa_at(n + 1)
    dk = params.step_size
    policy = params.policy
    ledger = state.ledger
    mark = ledger.mark()
    floor_scale = params.eps * normP_kappa

    G, Z_tilde = solve_homological(state.P, N)
    W = scale(1j, Z_tilde - state.P)  # [G, N] from the homological identity
    kw = dict(eta_max=params.eta_max, scale_ref=floor_scale)
    try:
        r1, rep1 = second_order_remainder(G, W, k_next, dk, policy, ledger, step=f"step{n}:N", **kw)
        r2, rep2 = conjugate_minus_identity(G, state.P, k_next, dk, policy, ledger, step=f"step{n}:P", **kw)
        r3, rep3 = conjugate_minus_identity(G, state.Z, k_next, dk, policy, ledger, step=f"step{n}:Z", **kw)
    except ContractionError as exc:
        raise StepError(n, exc) from exc
    P_next = add(add(r1, r2), r3)
    P_next = truncate(P_next, policy, k_next, ledger, scale=floor_scale, step=f"step{n}:P")
    Z_next = add(state.Z, Z_tilde)

    slack = 2.0 * ledger.total_kappa_norm
    rnd = 1.0 + ROUNDING  # some inequalities are equalities for nearest-neighbour P
    norm_G = kappa_norm(G, k_n)
    check = BoundCheck(
        n=n,
        norm_P_measured=kappa_norm(P_next, k_next),
        norm_P_bound=rnd * params.eps * math.exp(-(n + 1)) * normP_kappa + slack,
        norm_Z_measured=kappa_norm(Z_next, k_n),
        norm_Z_bound=rnd * params.eps * math.fsum(math.exp(-j) for j in range(n + 1)) * normP_kappa + slack,
        norm_G_measured=norm_G,
        norm_G_bound=rnd * 2 * math.pi * params.eps * math.exp(-n) * normP_kappa + slack,
        ledger_increment=ledger.kappa_norm_since(mark),
        contraction_ratio=contraction_ratio(kappa_norm(G, k_next + dk), k_next, dk),
        commutator_ZN=kappa_norm(commutator(Z_next, N.to_operator()), k_n),
    )
    record = StepRecord(
        n, state.Z, state.P, G, Z_tilde, Z_next, P_next, (rep1, rep2, rep3), ledger.op_bound_since(mark), ledger.kappa_norm_since(mark)
    )
    return NormalFormState(
        n + 1,
        Z_next,
        P_next,
        state.generators + [G],
        ledger,
        state.bound_checks + [check],
        state.records + [record],
    )


def dress(
    A: ExtensiveOperator,
    generators: list[ExtensiveOperator],
    direction: str,
    params: NormalFormParams,
    ledger: ErrorLedger,
    *,
    label: str = "dress",
) -> ExtensiveOperator:
    """Y* A Y (``"backward"``) or Y A Y* (``"forward"``).

    Y = e^{-iG^(n*-1)} ... e^{-iG^(0)}. The backward pass starts at κ_{n*}
    and ends at κ_{2n*} = κ/2; the forward pass runs from κ down to 3κ/4.
    """
    n = len(generators)
    dk = params.step_size
    eta = params.eta_max
    kw = dict(eta_max=eta, scale_ref=kappa_norm(A, params.kappa_at(n)) if n else None)
    if direction == "backward":
        for i in range(n):
            g = generators[n - 1 - i]
            try:
                A, _ = conjugate(-g, A, params.kappa_at(n + i + 1), dk, params.policy, ledger,
                                 step=f"{label}:factor{n - 1 - i}", **kw)
            except ContractionError as exc:
                raise StepError(n - 1 - i, exc) from exc
    elif direction == "forward":
        for i, g in enumerate(generators):
            try:
                A, _ = conjugate(g, A, params.kappa_at(i + 1), dk, params.policy, ledger,
                                 step=f"{label}:factor{i}", **kw)
            except ContractionError as exc:
                raise StepError(i, exc) from exc
    else:
        raise ValueError("direction must be 'forward' or 'backward'")
    return A


@dataclass(frozen=True)
class TheoryConstants:
    eps0: float
    C1: float
    C2: float
    C3: float
    C4: float
    C_eta: float
    K: float
    Q: float
    C_LR: float
    rho: float
    drift_alt_prefactor: float

    def as_dict(self) -> dict:
        return dict(vars(self))


def theory_constants(
    kappa: float,
    normP: float,
    *,
    eps: float = 0.0,
    eps0: float | None = None,
    C_LR: float = 1.0,
    rho: float | None = None,
    eta: float = 0.5,
    normN: float | None = None,
    support_size: int = 1,
    d: int = 1,
    n_sites: int = 1,
    normN_zero: float = 1.0,
) -> TheoryConstants:
    """Closed-form constants at κ for a perturbation of κ-norm ``normP``.

    ``normN`` defaults to e^κ (one on-site Z per site); ⟨x⟩ is read as 1 + |x|.
    ``drift_alt_prefactor`` is 2e|Λ| ||N||_0 ||P||_κ, the prefactor of the
    alternative drift bound ``prefactor * ε e^{-ε₀/ε} |t|``.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if eps0 is None:
        eps0 = compute_eps0(normP)
    if rho is None:
        rho = kappa / 2
    if normN is None:
        normN = math.exp(kappa)
    c_eta = 4.0 / (1.0 - eta)
    C1 = 256 * math.pi * E_RATIO * math.exp(-kappa / 4) / kappa * normP
    C2 = 16.0 * normP / (3.0 * kappa)
    C3 = 16.0 / (3.0 * kappa) * E_RATIO * normP**2
    bracket = 1.0 + abs(normN + eps * E_RATIO * normP)
    C4 = 8 * math.pi * E_RATIO * normP * support_size + 2 ** (d + 1) * C_LR * bracket**d * E * normP
    K = 8 * math.pi * 8.0 * math.exp(-rho) / kappa * normP  # C_{1/2} = 8
    Q = 32 * math.pi * math.exp(-0.75 * kappa) * normP * eps0
    return TheoryConstants(
        eps0=eps0,
        C1=C1,
        C2=C2,
        C3=C3,
        C4=C4,
        C_eta=c_eta,
        K=K,
        Q=Q,
        C_LR=C_LR,
        rho=rho,
        drift_alt_prefactor=2 * E * n_sites * normN_zero * normP,
    )


@dataclass
class NormalFormResult:
    params: NormalFormParams
    normP_kappa: float
    Z_final: ExtensiveOperator
    P_final: ExtensiveOperator
    generators: list[ExtensiveOperator]
    dressed_N: ExtensiveOperator
    dressed_Z: ExtensiveOperator
    ledger: ErrorLedger
    constants: TheoryConstants
    bound_checks: list[BoundCheck]
    records: list[StepRecord]
    dress_checks: dict

    @property
    def bounds_pass(self) -> bool:
        return all(c.passed for c in self.bound_checks)


def run(
    N: NumberOperator,
    P: ExtensiveOperator,
    params: NormalFormParams,
    *,
    n_sites: int | None = None,
    normP_kappa: float | None = None,
) -> NormalFormResult:
    """All n_star steps, then the dressed 𝒩 = Y*NY and 𝒵 = Y*Z^(n*)Y."""
    params.policy.check_input(P)
    if not P.is_self_adjoint():
        raise ValueError("P must be self-adjoint")
    if normP_kappa is None:
        normP_kappa = kappa_norm(P, params.kappa)
    if n_sites is None:
        n_sites = len(set(N.sites) | set(P.sites()))
    state = NormalFormState.initial(P, params, n_sites)
    for _ in range(params.n_star):
        state = step(state, N, params, normP_kappa)

    ledger = state.ledger
    N_op = N.to_operator()
    dressed_N = dress(N_op, state.generators, "backward", params, ledger, label="dress:N")
    dressed_Z = dress(state.Z, state.generators, "backward", params, ledger, label="dress:Z")
    quarter, half = params.kappa_at(params.n_star), params.kappa / 2
    dress_checks = {}
    for name, before, after in (("N", N_op, dressed_N), ("Z", state.Z, dressed_Z)):
        lhs = kappa_norm(after, half)
        rhs = 4.0 * kappa_norm(before, 0.75 * params.kappa if params.n_star else quarter)
        dress_checks[name] = {"lhs": lhs, "rhs": rhs, "passed": lhs <= rhs + 2 * ledger.total_kappa_norm}

    constants = theory_constants(
        params.kappa,
        normP_kappa,
        eps=params.eps,
        eps0=params.eps0,
        C_LR=params.C_LR,
        rho=params.rho,
        normN=kappa_norm(N_op, params.kappa),
        n_sites=n_sites,
    )
    return NormalFormResult(
        params=params,
        normP_kappa=normP_kappa,
        Z_final=state.Z,
        P_final=state.P,
        generators=state.generators,
        dressed_N=dressed_N,
        dressed_Z=dressed_Z,
        ledger=ledger,
        constants=constants,
        bound_checks=state.bound_checks,
        records=state.records,
        dress_checks=dress_checks,
    )


def with_policy(params: NormalFormParams, **changes) -> NormalFormParams:
    return replace(params, policy=replace(params.policy, **changes))
