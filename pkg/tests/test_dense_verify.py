import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prethermal.dense_verify import (
    DenseOperator,
    DriftCurve,
    Propagator,
    all_up,
    band_width,
    config_hash,
    curve_csv,
    densify,
    effective_dynamics_error,
    expectation_trace,
    geometric_times,
    heisenberg_drift,
    neel,
    operator_norm,
    power_iteration_norm,
    product_state,
    random_state,
    spectrum_integerness,
)
from prethermal.models import ising
from prethermal.normal_form import NormalFormParams, compute_eps0, run, with_policy
from prethermal.pauli_algebra import CapacityError, ExtensiveOperator, NumberOperator, commutator, kappa_norm, pauli
from prethermal.sampling import random_operator

seeds = st.integers(min_value=0, max_value=2**32 - 1)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2)


def test_identity_densifies_to_identity():
    ident = ExtensiveOperator.from_matrix((), np.eye(1))
    assert np.allclose(densify(ident, 3).entries, np.eye(8))


def test_z0_on_two_sites():
    assert np.allclose(densify(pauli("Z0"), 2).entries, np.diag([1, 1, -1, -1]))


def test_site_major_ordering():
    m = densify(pauli("X0 Z2"), 3).entries
    assert np.allclose(m, np.kron(np.kron(X, I2), Z))


def test_number_operator_on_three_sites():
    N = NumberOperator.uniform(range(3)).to_operator()
    m = densify(N, 3).entries
    assert np.allclose(m, np.diag(np.diag(m)))
    assert sorted(np.diag(m).real) == [-3, -1, -1, -1, 1, 1, 1, 3]


def test_capacity_and_foreign_sites():
    with pytest.raises(CapacityError):
        densify(pauli("Z0"), 13)
    with pytest.raises(CapacityError):
        densify(pauli({(0, 0): "Z"}), [(0, 0), (0, 1)])
    with pytest.raises(ValueError):
        densify(pauli("Z5"), 3)


@given(seeds)
def test_densify_is_faithful(seed):
    rng = np.random.default_rng(seed)
    A = random_operator(rng, 6, 3, self_adjoint=False)
    B = random_operator(rng, 6, 3, self_adjoint=False)
    a, b = densify(A, 6).entries, densify(B, 6).entries
    assert np.allclose(densify(A + B, 6).entries, a + b, atol=1e-12)
    assert np.abs(densify(commutator(A, B), 6).entries - (a @ b - b @ a)).max() <= 1e-12 * (1 + np.abs(a).max() * np.abs(b).max()) * 64


@given(seeds)
def test_power_iteration_agrees_with_svd(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    assert power_iteration_norm(m, tol=1e-13) == pytest.approx(np.linalg.norm(m, 2), rel=1e-6)
    h = m + m.conj().T
    assert operator_norm(h) == pytest.approx(np.linalg.norm(h, 2), rel=1e-12)
    assert power_iteration_norm(np.zeros((4, 4))) == 0.0


def test_propagator_unitary_and_conserves_energy():
    H = densify(ising(5).hamiltonian(0.3), 5).entries
    prop = Propagator(H)
    for t in (0.0, 0.7, 13.0):
        assert prop.unitarity_defect(t) <= 1e-12
        assert np.allclose(prop.heisenberg(H, t), H, atol=1e-11)
    with pytest.raises(ValueError):
        Propagator(np.array([[0, 1], [0, 0]], dtype=complex))


def test_commuting_observable_has_zero_drift():
    model = ising(5)
    H = densify(model.N, 5).entries
    curve = heisenberg_drift(densify(pauli("Z2"), 5), H, [0.0, 1.0, 10.0])
    assert max(curve.values) <= 1e-13


def test_bare_number_drifts_under_ising():
    model = ising(6)
    curve = heisenberg_drift(densify(model.N, 6), densify(model.hamiltonian(0.05), 6), [1.0, 5.0])
    assert min(curve.values) > 0


def test_effective_error_vanishes_when_equal():
    H = densify(ising(5).hamiltonian(0.1), 5)
    curve = effective_dynamics_error(densify(pauli("Z2"), 5), H, H, [0.0, 1.0, 100.0], bound=lambda t: 0.0)
    assert max(curve.values) <= 1e-12
    assert curve.within_bound(1e-12)


def test_integerness():
    N = densify(ising(4).N, 4)
    assert spectrum_integerness(N) <= 1e-12
    assert spectrum_integerness(np.diag([0.25, 1.0])) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        spectrum_integerness(np.array([[0, 1], [0, 0]]))


def test_coarse_truncation_stays_within_ledger():
    model = ising(6)
    normP = kappa_norm(model.P, 1.0)
    params = NormalFormParams.build(1.0, compute_eps0(normP) / 3, normP)
    fine = run(model.number, model.P, params)
    coarse_params = with_policy(params, support_cap=2)
    coarse = run(model.number, model.P, coarse_params)
    d_fine = spectrum_integerness(densify(fine.dressed_N, 6))
    d_coarse = spectrum_integerness(densify(coarse.dressed_N, 6))
    assert d_coarse > d_fine
    assert d_coarse <= coarse.ledger.total_op_bound


def test_eigenstate_expectation_is_constant():
    H = densify(ising(4).hamiltonian(0.2), 4).entries
    _, vecs = np.linalg.eigh(H)
    _, vals = expectation_trace(vecs[:, 3], densify(ising(4).N, 4), H, [0.0, 1.0, 50.0])
    assert band_width(vals) <= 1e-11
    with pytest.raises(ValueError, match="normalised"):
        expectation_trace(2 * vecs[:, 3], H, H, [0.0])


def test_states():
    assert all_up(3)[0] == 1
    assert neel(4)[int("0101", 2)] == 1
    assert np.allclose(product_state("10"), [0, 0, 1, 0])
    assert np.linalg.norm(random_state(5, 1)) == pytest.approx(1.0)
    assert np.allclose(random_state(5, 1), random_state(5, 1))
    up = densify(ising(3).N, 3).entries @ all_up(3)
    assert np.allclose(up, 3 * all_up(3))


def test_time_grids():
    assert geometric_times(0.1, 1.0) == pytest.approx([0.1, 0.2, 0.4, 0.8, 1.0])
    assert geometric_times(1.0, 4.0, include_zero=True) == [0.0, 1.0, 2.0, 4.0]
    with pytest.raises(ValueError):
        geometric_times(0.0, 1.0)
    with pytest.raises(ValueError, match="empty"):
        heisenberg_drift(np.eye(2), np.eye(2), [])
    with pytest.raises(ValueError):
        heisenberg_drift(np.eye(2), np.eye(2), [1.0, 0.5])


def test_drift_curve_validation_and_csv():
    with pytest.raises(ValueError):
        DriftCurve((0.0, 1.0), (0.1,), (None, None))
    with pytest.raises(ValueError):
        DriftCurve((0.0,), (-1.0,), (None,))
    c = DriftCurve((0.0, 1.0), (0.0, 0.5), (None, 0.25))
    assert not c.within_bound() and c.within_bound(0.3)
    lines = c.to_csv().splitlines()
    assert lines[0] == "t,value,bound"
    assert lines[1].endswith(",")
    assert curve_csv([1.0], [2.0], [3.0]).splitlines()[1] == "1,2,3"


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert len(config_hash({})) == 12
    assert isinstance(DenseOperator(np.eye(2)).entries, np.ndarray)
