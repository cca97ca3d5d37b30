import numpy as np
import pytest
from scipy.linalg import expm

from spinsense import spin_algebra as sa


def test_spin1_commutators():
    sx, sy, sz = sa.spin1_components()
    assert np.abs(sx @ sy - sy @ sx - 1j * sz).max() < 1e-12
    assert np.abs(sy @ sz - sz @ sy - 1j * sx).max() < 1e-12
    assert np.abs(sz @ sx - sx @ sz - 1j * sy).max() < 1e-12


def test_sz_is_diagonal_basis():
    _, _, sz = sa.spin1_components()
    assert np.allclose(sz, np.diag([1.0, 0.0, -1.0]))


def test_sx_on_m0_is_symmetric_combination():
    sx, _, _ = sa.spin1_components()
    m0 = np.array([0.0, 1.0, 0.0])
    expected = np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0)
    assert np.allclose(sx @ m0, expected, atol=1e-14)


def test_each_component_has_spin1_spectrum():
    for s in sa.spin1_components():
        assert np.allclose(np.linalg.eigvalsh(s), [-1.0, 0.0, 1.0], atol=1e-12)


def test_direction_must_be_unit():
    with pytest.raises(ValueError):
        sa.Direction(1.0, 1.0, 0.0)
    d = sa.Direction.from_array([3.0, 4.0, 0.0], normalize=True)
    assert abs(d.x - 0.6) < 1e-15 and abs(d.y - 0.8) < 1e-15


def test_spin_along_axes():
    assert np.allclose(sa.spin_along(sa.Z_AXIS), sa.SZ)
    assert np.allclose(sa.spin_along(sa.X_AXIS), sa.SX)


def test_spin_along_diagonal_direction_spectrum():
    d = sa.Direction.from_array([1.0, 1.0, 1.0], normalize=True)
    vals = np.linalg.eigvalsh(sa.spin_along(d))
    assert np.allclose(vals, [-1.0, 0.0, 1.0], atol=1e-12)


def test_spin_along_random_directions_hermitian_spectrum():
    rng = np.random.default_rng(11)
    for _ in range(25):
        d = sa.random_direction(rng)
        s = sa.spin_along(d)
        assert np.abs(s - s.conj().T).max() < 1e-12
        assert np.allclose(np.linalg.eigvalsh(s), [-1.0, 0.0, 1.0], atol=1e-10)


def test_pi_rotation_x_flips_m0_sign():
    m0 = np.array([0.0, 1.0, 0.0], dtype=complex)
    out = sa.pi_rotation(sa.X_AXIS) @ m0
    assert np.allclose(out, -m0, atol=1e-12)


def test_pi_rotation_z_phases():
    assert np.allclose(sa.pi_rotation(sa.Z_AXIS), np.diag([-1.0, 1.0, -1.0]), atol=1e-12)


def test_pi_rotation_squares_to_identity_and_matches_expm():
    rng = np.random.default_rng(3)
    for _ in range(10):
        d = sa.random_direction(rng)
        u = sa.pi_rotation(d)
        assert np.abs(u @ u - np.eye(3)).max() < 1e-10
        # independent oracle: scipy matrix exponential
        ref = expm(1j * np.pi * sa.spin_along(d))
        assert np.abs(u - ref).max() < 1e-10


def test_pi_rotation_conjugation_fixes_own_axis_and_flips_transverse():
    rng = np.random.default_rng(8)
    for _ in range(10):
        d = sa.random_direction(rng)
        v = sa.orthogonal_direction(d)
        u = sa.pi_rotation(d)
        sd = sa.spin_along(d)
        sv = sa.spin_along(v)
        assert np.abs(u @ sd @ u.conj().T - sd).max() < 1e-10
        assert np.abs(u @ sv @ u.conj().T + sv).max() < 1e-10


def test_orthogonal_direction_conventions():
    assert sa.orthogonal_direction(sa.Z_AXIS) == sa.Direction(1.0, 0.0, 0.0)
    v = sa.orthogonal_direction(sa.X_AXIS)
    assert abs(v.dot(sa.X_AXIS)) < 1e-12


def test_orthogonal_direction_properties():
    rng = np.random.default_rng(5)
    for _ in range(50):
        d = sa.random_direction(rng)
        v = sa.orthogonal_direction(d)
        assert abs(v.dot(v) - 1.0) < 1e-12
        assert abs(v.dot(d)) < 1e-12
        # deterministic
        assert sa.orthogonal_direction(d) == v


def test_embed_site_shapes_and_identity():
    op = sa.embed_site(sa.SZ, 1, 2)
    assert op.shape == (9, 9)
    assert np.allclose(op.toarray(), np.kron(sa.SZ, np.eye(3)))
    ident = sa.embed_site(sa.S1_IDENTITY, 2, 3)
    assert np.allclose(ident.toarray(), np.eye(27))


def test_embed_site_traceless_factor():
    op = sa.embed_site(sa.SX, 2, 3)
    assert op.shape == (27, 27)
    assert abs(op.diagonal().sum()) < 1e-12


def test_embed_site_range_errors():
    with pytest.raises(ValueError):
        sa.embed_site(sa.SZ, 0, 2)
    with pytest.raises(ValueError):
        sa.embed_site(sa.SZ, 3, 2)


def test_embedded_operators_on_distinct_sites_commute():
    a = sa.embed_site(sa.SX, 1, 3)
    b = sa.embed_site(sa.SY, 3, 3)
    comm = (a @ b - b @ a).toarray()
    assert np.abs(comm).max() == 0.0


def test_apply_identity_and_eigenvector():
    rng = np.random.default_rng(0)
    s = sa.random_state(2, rng)
    ident = sa.embed_site(sa.S1_IDENTITY, 1, 2)
    assert np.allclose(sa.apply(ident, s), s)
    up = sa.basis_state([1, 0])
    sz1 = sa.embed_site(sa.SZ, 1, 2)
    assert np.allclose(sa.apply(sz1, up), up)


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError):
        sa.apply(sa.embed_site(sa.SZ, 1, 2), np.zeros(27))


def test_hermitian_expectation_is_real():
    rng = np.random.default_rng(14)
    n = 3
    m = rng.standard_normal((27, 27)) + 1j * rng.standard_normal((27, 27))
    h = (m + m.conj().T) / 2
    s = sa.random_state(n, rng)
    val = np.vdot(s, h @ s)
    assert abs(val.imag) < 1e-12


def test_apply_site_operator_matches_embedding():
    rng = np.random.default_rng(21)
    for n, site in ((3, 1), (3, 2), (3, 3), (4, 2)):
        s = sa.random_state(n, rng)
        fast = sa.apply_site_operator(s, sa.SY, site, n)
        slow = sa.embed_site(sa.SY, site, n) @ s
        assert np.abs(fast - slow).max() < 1e-13


def test_apply_bond_operator_matches_embedding():
    rng = np.random.default_rng(22)
    op9 = np.kron(sa.SX, sa.SX) + np.kron(sa.SZ, sa.SZ)
    for n, site in ((3, 1), (3, 2), (4, 2)):
        s = sa.random_state(n, rng)
        fast = sa.apply_bond_operator(s, op9, site, n)
        slow = sa.embed_bond(op9, site, n) @ s
        assert np.abs(fast - slow).max() < 1e-13


def test_basis_state_ordering():
    # site 1 is the most significant trit, local order (m=+1, 0, -1)
    v = sa.basis_state([1, -1])
    assert v[2] == 1.0 and np.count_nonzero(v) == 1
