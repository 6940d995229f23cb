import numpy as np
import pytest

from prethermal import _kernels

PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
MINUS = PLUS.T.copy()
Z = np.diag([1.0, -1.0]).astype(complex)
ONE = np.eye(2, dtype=complex)
LETTER_MATS = [ONE, PLUS, MINUS, Z]


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


@pytest.mark.parametrize("k", [1, 2, 3])
def test_ladder_basis_matches_kronecker_products(k):
    # every basis string, built by explicit tensor products
    for code in range(4**k):
        digits = [(code >> (2 * (k - 1 - j))) & 3 for j in range(k)]
        coeffs = np.zeros(4**k, dtype=complex)
        coeffs[code] = 1
        assert np.allclose(_kernels.ladder_to_matrix(coeffs, k), kron_all([LETTER_MATS[d] for d in digits]))


@pytest.mark.parametrize("k", [1, 3, 5])
def test_matrix_ladder_round_trip(rng, k):
    m = rng.standard_normal((2**k, 2**k)) + 1j * rng.standard_normal((2**k, 2**k))
    back = _kernels.ladder_to_matrix(_kernels.matrix_to_ladder(m, k), k)
    assert np.allclose(back, m, atol=1e-13)


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("k", [1, 4, 6])
def test_backends_agree_on_site_transform(rng, k):
    vec = rng.standard_normal(4**k) + 1j * rng.standard_normal(4**k)
    for T in (_kernels.LETTER_TO_ELEM, _kernels.ELEM_TO_LETTER):
        a = _kernels._site_transform_numpy(vec, T, k)
        b = _kernels._site_transform_numba(vec, T, k)
        assert np.allclose(a, b, atol=1e-14)


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("pos,n", [((0,), 3), ((1, 3), 5), ((0, 2, 4), 6)])
def test_backends_agree_on_scatter(rng, pos, n):
    k = len(pos)
    block = rng.standard_normal((2**k, 2**k)) + 1j * rng.standard_normal((2**k, 2**k))
    spread, base = _kernels.index_maps(pos, n)
    a = np.zeros((2**n, 2**n), dtype=complex)
    b = np.zeros((2**n, 2**n), dtype=complex)
    _kernels._scatter_add_numpy(a, block, spread, base)
    _kernels._scatter_add_numba(b, block, spread, base)
    assert np.array_equal(a, b)


def test_embed_matches_kron_with_site_permutation(rng):
    block = rng.standard_normal((4, 4)) + 0j
    # block on positions (0, 2) of 3 sites: conjugate kron(block, 1) by the swap of sites 1 and 2
    direct = np.kron(block, ONE)
    perm = np.zeros((8, 8))
    for i in range(8):
        b0, b1, b2 = (i >> 2) & 1, (i >> 1) & 1, i & 1
        perm[(b0 << 2) | (b2 << 1) | b1, i] = 1
    assert np.allclose(_kernels.embed(block, (0, 2), 3), perm @ direct @ perm.T)


def test_apply_left_and_right_match_dense_product(rng):
    n = 5
    block = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    mat = rng.standard_normal((2**n, 2**n)) + 0j
    big = _kernels.embed(block, (1, 4), n)
    assert np.allclose(_kernels.apply_left(block, (1, 4), mat, n), big @ mat)
    assert np.allclose(_kernels.apply_right(block, (1, 4), mat, n), mat @ big)


def test_backend_flag_is_valid():
    assert _kernels.BACKEND in ("numba", "numpy")
