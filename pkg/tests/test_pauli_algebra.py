import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prethermal.dense_verify import densify, operator_norm
from prethermal.pauli_algebra import (
    CapacityError,
    ErrorLedger,
    ExtensiveOperator,
    LadderString,
    NumberOperator,
    TruncationPolicy,
    add,
    commutator,
    commutator_capped,
    dropped_op_bound,
    kappa_norm,
    multiply,
    pauli,
    scale,
    truncate,
)
from prethermal.sampling import random_number_operator, random_operator

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def dense(A, n=6):
    return densify(A, n).entries


def test_single_site_paulis_have_standard_matrices():
    for name, mat in (("X", X), ("Y", Y), ("Z", Z)):
        assert np.allclose(pauli({0: name}).block(((0,),)), mat)


def test_pauli_product_identities():
    assert commutator(pauli("X0"), pauli("Z0")).allclose(pauli("Y0", -2j))
    assert multiply(pauli("X0"), pauli("Z0")).allclose(pauli("Y0", -1j))
    assert commutator(pauli("X0 X1"), pauli("Z1")).allclose(pauli("X0 Y1", -2j))
    # Z Z = 1 lives on the support of its factors
    zz = multiply(pauli("Z0"), pauli("Z0"))
    assert np.allclose(zz.block(((0,),)), np.eye(2))


def test_ladder_string_parse_and_adjoint():
    s = LadderString.parse("+0 -1 Z3", 2j)
    assert s.support == ((0,), (1,), (3,))
    adj = s.adjoint()
    assert dict(adj.letters) == {(0,): "-", (1,): "+", (3,): "Z"}
    assert adj.coeff == -2j
    with pytest.raises(ValueError):
        LadderString((((0,), "+"), ((0,), "-")))
    with pytest.raises(ValueError):
        LadderString((((0,), "X"),))


def test_ad_eigenvalue_matches_dense_commutator():
    N = NumberOperator({(0,): (2, -1), (1,): (0, 1)})
    for text in ("+0", "-0", "Z0", "+0 -1", "-0 -1", "+0 Z1"):
        s = LadderString.parse(text)
        op = ExtensiveOperator.from_strings([s], support=[0, 1])
        Nd, sd = dense(N.to_operator(), 2), dense(op, 2)
        assert np.allclose(sd @ Nd - Nd @ sd, s.ad_eigenvalue(N) * sd)


def test_number_operator_validation_and_diagonal():
    with pytest.raises(ValueError):
        NumberOperator({(0,): (0.5, 1)})
    N = NumberOperator({(0,): (3, 0), (1,): (1, -2)})
    # first site most significant
    assert list(N.diagonal(((0,), (1,)))) == [4, 1, 1, -2]
    assert np.allclose(np.diag(dense(N.to_operator(), 2)), [4, 1, 1, -2])


def test_kappa_norm_examples():
    assert kappa_norm(pauli("X0 X1"), 1.0) == pytest.approx(math.e**2)
    assert kappa_norm(ExtensiveOperator(), 1.0) == 0.0
    chain = add(pauli("X0 X1"), pauli("X1 X2"))
    # the middle site sees both bonds
    assert kappa_norm(chain, 0.5) == pytest.approx(2 * math.e)


def test_capacity_error_for_huge_support():
    with pytest.raises(CapacityError):
        pauli({x: "Z" for x in range(13)})


def test_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(support_cap=0)
    with pytest.raises(ValueError):
        TruncationPolicy(support_cap=13)
    with pytest.raises(ValueError):
        TruncationPolicy(series_tol=0.0)
    with pytest.raises(ValueError):
        TruncationPolicy(support_cap=2).check_input(pauli("Z0 Z1 Z2"))


@given(seeds)
def test_commutator_is_faithful(seed):
    rng = np.random.default_rng(seed)
    A = random_operator(rng, 6, 3, self_adjoint=False)
    B = random_operator(rng, 6, 3, self_adjoint=False)
    a, b = dense(A), dense(B)
    assert np.allclose(dense(commutator(A, B)), a @ b - b @ a, atol=1e-12)
    assert np.allclose(dense(multiply(A, B)), a @ b, atol=1e-12)
    assert np.allclose(dense(add(A, scale(2j, B))), a + 2j * b, atol=1e-12)
    assert np.allclose(dense(A.adjoint()), a.conj().T, atol=1e-12)


@given(seeds, st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_kappa_norm_is_monotone_in_kappa(seed, k1, k2):
    A = random_operator(np.random.default_rng(seed), 6, 3)
    lo, hi = sorted((k1, k2))
    assert kappa_norm(A, lo) <= kappa_norm(A, hi) * (1 + 1e-12)


@given(seeds)
def test_kappa_norm_controls_operator_norm(seed):
    # ||A||_op <= sum_S ||A_S|| <= |Λ| ||A||_0
    A = random_operator(np.random.default_rng(seed), 6, 3)
    assert operator_norm(dense(A)) <= 6 * kappa_norm(A, 0.0) * (1 + 1e-12)


@given(seeds)
def test_random_operators_are_self_adjoint(seed):
    A = random_operator(np.random.default_rng(seed), 6, 3)
    assert A.is_self_adjoint()
    d = dense(A)
    assert np.allclose(d, d.conj().T)


@given(seeds, st.integers(1, 3))
def test_support_cap_skips_are_bounded(seed, cap):
    rng = np.random.default_rng(seed)
    A = random_operator(rng, 6, 3, self_adjoint=False)
    B = random_operator(rng, 6, 3, self_adjoint=False)
    full = commutator(A, B)
    kept, skipped = commutator_capped(A, B, cap)
    missing = dense(full) - dense(kept)
    assert operator_norm(missing) <= math.fsum(skipped.values()) * (1 + 1e-12) + 1e-12
    assert all(len(s) <= cap for s in kept.supports)


@given(seeds, st.sampled_from([1e-3, 1e-1, 1.0]))
def test_truncation_ledger_is_sound(seed, floor):
    A = random_operator(np.random.default_rng(seed), 6, 3, self_adjoint=False)
    policy = TruncationPolicy(support_cap=2, coeff_floor=floor)
    ledger = ErrorLedger(6)
    kept = truncate(A, policy, 0.5, ledger)
    gap = operator_norm(dense(A) - dense(kept))
    assert gap <= ledger.total_op_bound * (1 + 1e-12) + 1e-14
    assert kappa_norm(A - kept, 0.5) <= ledger.total_kappa_norm * (1 + 1e-12) + 1e-14
    assert all(len(s) <= 2 for s in kept.supports)


def test_truncate_without_drops_returns_same_object():
    A = pauli("X0 X1")
    ledger = ErrorLedger(2)
    assert truncate(A, TruncationPolicy(), 1.0, ledger) is A
    assert ledger.entries == []


def test_ledger_rejects_negative_entries():
    with pytest.raises(ValueError):
        ErrorLedger(2).record("x", "truncation", 1.0, -1.0, 0.0)


def test_dropped_op_bound_is_sum_of_term_norms():
    D = add(pauli("X0", 0.5), pauli("Z1 Z2", 0.25))
    assert dropped_op_bound(D) == pytest.approx(0.75)


@given(seeds)
def test_random_number_operator_has_integer_spectrum(seed):
    N = random_number_operator(np.random.default_rng(seed), 4)
    ev = np.linalg.eigvalsh(dense(N.to_operator(), 4))
    assert np.allclose(ev, np.round(ev))
