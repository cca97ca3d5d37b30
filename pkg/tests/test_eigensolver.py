import numpy as np
import pytest

from spinsense import spin_algebra as sa
from spinsense import chain_model as cm
from spinsense import eigensolver as es


def total_spin_casimir(n):
    dim = 3**n
    c = None
    for axis in (sa.X_AXIS, sa.Y_AXIS, sa.Z_AXIS):
        gen = sa.embed_site(sa.spin_along(axis), 1, n)
        for j in range(2, n + 1):
            gen = gen + sa.embed_site(sa.spin_along(axis), j, n)
        c = gen @ gen if c is None else c + gen @ gen
    return c


def test_two_site_lowest_four():
    h = cm.heisenberg(1, 2, 1.0)
    sl = es.lowest_eigenpairs(h, 4, tol=1e-10, seed=0)
    assert np.allclose(sl.eigenvalues, [-2.0, -1.0, -1.0, -1.0], atol=1e-9)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_krylov_matches_dense_oracle(n):
    h = cm.heisenberg(1, n, 1.0)
    dense = np.sort(np.linalg.eigvalsh(h.toarray()))
    sl = es.lowest_eigenpairs(h, 6, tol=1e-9, seed=1)
    assert np.allclose(sl.eigenvalues, dense[:6], atol=1e-8)
    assert sl.residual_norms.max() < 1e-8
    gram = sl.eigenvectors.conj().T @ sl.eigenvectors
    assert np.abs(gram - np.eye(6)).max() < 1e-8


def test_spectral_shift():
    h = cm.heisenberg(1, 3, 1.0)
    shift = 2.5
    shifted = h + shift * np.eye(27)
    a = es.lowest_eigenpairs(h, 5, tol=1e-10, seed=4)
    b = es.lowest_eigenpairs(shifted, 5, tol=1e-10, seed=4)
    assert np.allclose(b.eigenvalues - a.eigenvalues, shift, atol=1e-8)


def test_deterministic_given_seed():
    h = cm.heisenberg(1, 4, 1.0)
    a = es.lowest_eigenpairs(h, 6, tol=1e-9, seed=12)
    b = es.lowest_eigenpairs(h, 6, tol=1e-9, seed=12)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)


def test_count_bounds():
    h = cm.heisenberg(1, 2, 1.0)
    with pytest.raises(ValueError):
        es.lowest_eigenpairs(h, 13)
    with pytest.raises(ValueError):
        es.lowest_eigenpairs(h, 0)


def test_convergence_error_carries_residuals():
    h = cm.heisenberg(1, 4, 1.0)
    with pytest.raises(es.ConvergenceError) as err:
        es.lowest_eigenpairs(h, 6, tol=1e-14, max_subspace=4, max_restarts=2)
    assert err.value.residual_norms is not None


def test_ground_space_quartet_small_chain():
    h = cm.heisenberg(1, 4, 1.0)
    rep = es.ground_space(h, seed=0)
    dense = np.sort(np.linalg.eigvalsh(h.toarray()))
    assert np.allclose(rep.quartet_energies, dense[:4], atol=1e-8)
    assert rep.splitting < rep.gap
    assert rep.quartet_states.shape[1] == 4


def test_ground_space_ambiguous_for_two_sites():
    h = cm.heisenberg(1, 2, 1.0)
    with pytest.raises(es.AmbiguousQuartetError):
        es.ground_space(h, seed=0)


def test_quartet_casimir_structure():
    # singlet plus triplet of the total spin inside the quartet
    n = 4
    h = cm.heisenberg(1, n, 1.0)
    rep = es.ground_space(h, seed=0)
    casimir = total_spin_casimir(n)
    vals = sorted(
        float(np.real(np.vdot(rep.quartet_states[:, i], casimir @ rep.quartet_states[:, i])))
        for i in range(4)
    )
    assert abs(vals[0] - 0.0) < 1e-6
    for v in vals[1:]:
        assert abs(v - 2.0) < 1e-6


def test_splitting_shrinks_with_length():
    splittings = []
    for n in (4, 6):
        rep = es.ground_space(cm.heisenberg(1, n, 1.0), seed=0)
        splittings.append(rep.splitting)
    assert splittings[1] < splittings[0]


def test_expectation_values():
    rng = np.random.default_rng(9)
    n = 3
    ident = sa.embed_site(sa.S1_IDENTITY, 1, n)
    s = sa.random_state(n, rng)
    assert abs(es.expectation(ident, s) - 1.0) < 1e-12

    up_first = sa.basis_state([1, 0, -1])
    sz1 = sa.embed_site(sa.SZ, 1, n)
    assert abs(es.expectation(sz1, up_first) - 1.0) < 1e-12

    h = cm.heisenberg(1, 4, 1.0)
    rep = es.ground_space(h, seed=0)
    gs = rep.quartet_states[:, 0]
    dense0 = np.linalg.eigvalsh(h.toarray())[0]
    assert abs(es.expectation(h, gs) - dense0) < 1e-8


def test_expectation_dimension_check():
    h = cm.heisenberg(1, 3, 1.0)
    with pytest.raises(ValueError):
        es.expectation(h, np.zeros(9))
