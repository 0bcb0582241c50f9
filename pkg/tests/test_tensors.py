import numpy as np

from rouleaux import tensors


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3, 4):
        packed = rng.normal(size=n + 1)
        assert np.allclose(tensors.pack(tensors.unpack(packed)), packed)


def test_symmetrize_idempotent_and_fixes_symmetric():
    rng = np.random.default_rng(1)
    for n in (2, 3, 4):
        T = rng.normal(size=(2,) * n)
        S = tensors.symmetrize(T)
        assert np.allclose(tensors.symmetrize(S), S)
        P = tensors.unpack(rng.normal(size=n + 1))
        assert np.allclose(tensors.symmetrize(P), P)


def test_multiplicities_and_norm():
    assert tensors.multiplicities(3).tolist() == [1, 3, 3, 1]
    assert tensors.multiplicities(4).tolist() == [1, 4, 6, 4, 1]
    v = np.array([1.0, 2.0])
    packed = tensors.outer_power(v, 3)
    full = np.multiply.outer(np.multiply.outer(v, v), v)
    assert np.allclose(tensors.frobenius(packed), np.sqrt(np.sum(full**2)))


def test_outer_power_matches_moments():
    v = np.array([2.0, 3.0])
    assert tensors.outer_power(v, 2).tolist() == [4.0, 6.0, 9.0]
    # m3_{112} = x^2 y
    assert tensors.outer_power(v, 3)[1] == 12.0


def test_theta_basis_expansion():
    rng = np.random.default_rng(2)
    theta = np.array([2.0, 1.0])
    basis = tensors.theta_basis(theta, 3)
    coords = rng.normal(size=4)
    packed = sum(c * b for c, b in zip(coords, basis))
    back = tensors.expand_in_basis(packed, basis)
    assert np.allclose(back, coords, atol=1e-12)
