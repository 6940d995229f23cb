import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from prethermal.conjugation import (
    ContractionError,
    certified_tail,
    conjugate,
    conjugate_minus_identity,
    contraction_ratio,
    lemma1_bound,
    lemma2_estimates,
    second_order_remainder,
    series_order,
)
from prethermal.dense_verify import densify, operator_norm
from prethermal.pauli_algebra import (
    ErrorLedger,
    ExtensiveOperator,
    TruncationPolicy,
    commutator,
    kappa_norm,
    pauli,
    scale,
)
from prethermal.sampling import random_operator

seeds = st.integers(min_value=0, max_value=2**32 - 1)
POLICY = TruncationPolicy(support_cap=6)


def dense(A, n=6):
    return densify(A, n).entries


def small_generator(rng, kappa, delta, ratio):
    G = random_operator(rng, 6, 2)
    return scale(ratio * delta / (4 * math.exp(-kappa) * kappa_norm(G, kappa + delta)), G)


def test_zero_generator_is_identity_map():
    A = pauli("X0 X1")
    out, rep = conjugate(ExtensiveOperator(), A, 1.0, 0.5, POLICY, ErrorLedger(2))
    assert out.allclose(A)
    assert rep.series_order_used == 0 and rep.tail_bound == 0.0


def test_quarter_turn_about_y_maps_z_to_x():
    # research-size ratio; allowed uncertified
    ledger = ErrorLedger(1)
    out, rep = conjugate(pauli("Y0", math.pi / 4), pauli("Z0"), 0.0, 1.0, POLICY, ledger, eta_max=None)
    assert np.allclose(out.block(((0,),)), [[0, 1], [1, 0]], atol=1e-12)
    assert not rep.certified and not ledger.certified


@given(st.floats(-0.04, 0.04))
def test_small_y_rotation_is_certified(theta):
    out, rep = conjugate(pauli("Y0", theta), pauli("Z0"), 0.0, 1.0, POLICY, ErrorLedger(1))
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    assert rep.certified and rep.ratio < 0.5
    assert np.allclose(out.block(((0,),)), [[c, s], [s, -c]], atol=1e-12)


def test_contraction_violation_reports_ratio():
    with pytest.raises(ContractionError) as info:
        conjugate(pauli("Y0", 1.0), pauli("Z0"), 0.0, 1.0, POLICY, ErrorLedger(1))
    assert info.value.ratio == pytest.approx(4 * math.e)


def test_nested_commutator_bound_examples():
    assert lemma1_bound(0, 0.3, 0.2, 5.0, 7.0) == 7.0
    assert lemma1_bound(1, 0.0, 1.0, 1.0, 1.0) == pytest.approx(4 / math.e)
    assert lemma1_bound(3, 0.5, 0.25, 0.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        lemma1_bound(-1, 0.0, 1.0, 1.0, 1.0)


def test_conjugation_estimates_constants_and_zero_generator():
    B = pauli("X0 X1")
    bounds = lemma2_estimates(ExtensiveOperator(), B, 0.5, 0.5, 0.5)
    assert bounds[0] == pytest.approx(2 * kappa_norm(B, 1.0))
    assert bounds[1] == 0.0 and bounds[2] == 0.0
    # C_{1/2} = 8 enters as 8 e^{-κ} ||G|| ||B|| / δ
    G = pauli("Z0", 0.01)
    b = lemma2_estimates(G, B, 0.5, 0.5, 0.5)
    assert b[1] == pytest.approx(8 * math.exp(-0.5) / 0.5 * kappa_norm(G, 1.0) * kappa_norm(B, 1.0))
    with pytest.raises(ValueError):
        lemma2_estimates(pauli("Z0", 10.0), B, 0.5, 0.5, 0.5)


def test_certified_tail_sums_the_bound_terms():
    ratio, J = 0.3, 4
    direct = math.fsum(
        math.exp(-math.lgamma(j + 1) + j * (math.log(j) - 1) + j * math.log(ratio)) for j in range(J + 1, 400)
    )
    assert certified_tail(ratio, 1.0, J, lambda j: -math.lgamma(j + 1)) == pytest.approx(direct, rel=1e-10)


@given(st.floats(0.01, 0.5), st.floats(1e-14, 1e-4))
def test_tighter_tolerance_never_lowers_order(ratio, tol):
    w = lambda j: -math.lgamma(j + 1)
    assert series_order(ratio, 1.0, tol / 10, 0, w, 200) >= series_order(ratio, 1.0, tol, 0, w, 200)


@given(seeds, st.floats(0.05, 0.45))
def test_conjugation_matches_matrix_exponential(seed, ratio):
    rng = np.random.default_rng(seed)
    kappa, delta = 0.5, 0.5
    G = small_generator(rng, kappa, delta, ratio)
    A = random_operator(rng, 6, 3)
    ledger = ErrorLedger(6)
    out, rep = conjugate(G, A, kappa, delta, TruncationPolicy(support_cap=4, coeff_floor=1e-10), ledger)
    U = scipy.linalg.expm(-1j * dense(G))
    gap = operator_norm(dense(out) - U @ dense(A) @ U.conj().T)
    assert rep.certified and rep.ratio <= 0.5
    assert gap <= 6 * rep.tail_bound + ledger.total_op_bound + 1e-12


@given(seeds)
def test_conjugation_preserves_spectrum(seed):
    rng = np.random.default_rng(seed)
    G = small_generator(rng, 0.5, 0.5, 0.4)
    A = random_operator(rng, 6, 3)
    ledger = ErrorLedger(6)
    out, rep = conjugate(G, A, 0.5, 0.5, POLICY, ledger)
    ev_in = np.linalg.eigvalsh(dense(A))
    ev_out = np.linalg.eigvalsh(dense(out))
    assert np.abs(ev_in - ev_out).max() <= 6 * rep.tail_bound + ledger.total_op_bound + 1e-12


@given(seeds)
def test_adjoint_equivariance(seed):
    rng = np.random.default_rng(seed)
    G = small_generator(rng, 0.5, 0.5, 0.3)
    A = random_operator(rng, 6, 3, self_adjoint=False)
    one, _ = conjugate(G, A.adjoint(), 0.5, 0.5, POLICY, ErrorLedger(6))
    two, _ = conjugate(G, A, 0.5, 0.5, POLICY, ErrorLedger(6))
    assert one.allclose(two.adjoint(), atol=1e-12)


@given(seeds)
def test_series_pieces_add_up(seed):
    rng = np.random.default_rng(seed)
    G = small_generator(rng, 0.5, 0.5, 0.3)
    A = random_operator(rng, 6, 3)
    full, _ = conjugate(G, A, 0.5, 0.5, POLICY, ErrorLedger(6))
    diff, _ = conjugate_minus_identity(G, A, 0.5, 0.5, POLICY, ErrorLedger(6))
    assert (full - A).allclose(diff, atol=1e-12)


@given(seeds)
def test_second_order_remainder_matches_conjugated_n(seed):
    rng = np.random.default_rng(seed)
    G = small_generator(rng, 0.5, 0.5, 0.3)
    N = random_operator(rng, 6, 1)
    W = commutator(G, N)
    rem, _ = second_order_remainder(G, W, 0.5, 0.5, POLICY, ErrorLedger(6))
    U = scipy.linalg.expm(-1j * dense(G))
    Nd, Gd = dense(N), dense(G)
    expected = U @ Nd @ U.conj().T - Nd + 1j * (Gd @ Nd - Nd @ Gd)
    assert operator_norm(dense(rem) - expected) <= 1e-11


@given(seeds)
def test_nested_commutator_bound_holds_on_random_pairs(seed):
    rng = np.random.default_rng(seed)
    A, B = random_operator(rng, 6, 3), random_operator(rng, 6, 3)
    kappa, delta = 0.3, 0.4
    nA, nB = kappa_norm(A, kappa + delta), kappa_norm(B, kappa + delta)
    X = B
    for j in range(1, 5):
        X = commutator(A, X)
        assert kappa_norm(X, kappa) <= lemma1_bound(j, kappa, delta, nA, nB)


def test_contraction_ratio_formula():
    assert contraction_ratio(1.0, 0.0, 4.0) == 1.0
