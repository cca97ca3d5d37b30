import numpy as np
import pytest

from spinsense import spin_algebra as sa
from spinsense import chain_model as cm
from spinsense import eigensolver as es
from spinsense import edge_logic as el


@pytest.fixture(scope="module")
def chain6():
    n = 6
    rep = es.ground_space(cm.heisenberg(1, n, 1.0), seed=0)
    doublet = el.right_edge_doublet(rep.quartet_states, n)
    frame = el.logical_frame(doublet, sa.Z_AXIS, 1, n)
    return n, rep, doublet, frame


def test_string_single_site_z():
    op = el.string_operator(sa.Z_AXIS, 1, 1)
    assert np.allclose(op.to_sparse().toarray(), np.diag([-1.0, 1.0, -1.0]), atol=1e-12)


def test_string_squares_to_identity():
    rng = np.random.default_rng(1)
    d = sa.random_direction(rng)
    op = el.string_operator(d, 1, 4)
    for _ in range(5):
        v = sa.random_state(4, rng)
        assert np.linalg.norm(op.apply(op.apply(v)) - v) < 1e-10


def test_string_apply_matches_sparse():
    rng = np.random.default_rng(2)
    d = sa.random_direction(rng)
    op = el.string_operator(d, 2, 4)
    mat = op.to_sparse()
    v = sa.random_state(4, rng)
    assert np.linalg.norm(op.apply(v) - mat @ v) < 1e-12


def test_string_commutes_with_heisenberg():
    rng = np.random.default_rng(3)
    n = 5
    h = cm.heisenberg(1, n, 1.0)
    for d in (sa.X_AXIS, sa.Z_AXIS, sa.random_direction(rng)):
        op = el.string_operator(d, 1, n)
        for _ in range(5):
            v = sa.random_state(n, rng)
            comm = h @ op.apply(v) - op.apply(h @ v)
            assert np.linalg.norm(comm) < 1e-10


def test_measurement_born_rule_product_state():
    # site 2 in (|+1> + |-1>)/sqrt2: outcomes +1 and -1 each at probability 1/2
    local = np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0)
    state = sa.product_state([np.array([0.0, 1.0, 0.0]), local])
    out = el.measure_site_spin(state, sa.Z_AXIS, 2, 2, forced_outcome=+1)
    assert abs(out.probability - 0.5) < 1e-12
    with pytest.raises(el.ImpossibleOutcomeError):
        el.measure_site_spin(state, sa.Z_AXIS, 2, 2, forced_outcome=0)


def test_project_right_edge_eigenstate():
    state = sa.basis_state([0, 0, 1])  # site 3 in m=+1
    out = el.project_right_edge(state, 3, outcome_m=+1)
    assert abs(out.probability - 1.0) < 1e-12
    assert np.allclose(out.post_state, state)


def test_project_right_edge_impossible():
    state = sa.basis_state([0, 0, 1])
    with pytest.raises(el.ImpossibleOutcomeError):
        el.project_right_edge(state, 3, outcome_m=-1)


def test_measurement_probabilities_sum_to_one():
    rng = np.random.default_rng(7)
    state = sa.random_state(3, rng)
    total = 0.0
    for m in (+1, 0, -1):
        try:
            total += el.measure_site_spin(state, sa.Y_AXIS, 2, 3, forced_outcome=m).probability
        except el.ImpossibleOutcomeError:
            pass
    assert abs(total - 1.0) < 1e-10


def test_sampled_outcomes_match_born_frequencies():
    rng = np.random.default_rng(11)
    state = sa.random_state(2, rng)
    probs = {
        m: el.measure_site_spin(state, sa.Z_AXIS, 1, 2, forced_outcome=m).probability
        for m in (+1, 0, -1)
    }
    shots = 4000
    counts = {m: 0 for m in (+1, 0, -1)}
    for _ in range(shots):
        out = el.measure_site_spin(state, sa.Z_AXIS, 1, 2, rng=rng)
        counts[out.m] += 1
    for m in (+1, 0, -1):
        sigma = np.sqrt(max(probs[m] * (1 - probs[m]), 1e-12) / shots)
        assert abs(counts[m] / shots - probs[m]) < 4.0 * sigma + 1e-3


def test_toy_logical_frame_exact():
    # exact 2-dim toy: string restriction diag(+1, -1), transverse spin off-diagonal
    zero = sa.basis_state([0])  # single site m=0: pi rotation about z gives +1
    one = sa.basis_state([1])  # m=+1: eigenvalue -1
    basis = np.column_stack([zero, one])
    frame = el.logical_frame(basis, sa.Z_AXIS, 1, 1)
    assert abs(abs(np.vdot(frame.zero_state, zero)) - 1.0) < 1e-12
    assert abs(abs(np.vdot(frame.one_state, one)) - 1.0) < 1e-12
    m = frame.string_restriction
    assert np.allclose(np.diag(m).real, [1.0, -1.0], atol=1e-12)


def test_frame_orthonormal_and_in_ground_space(chain6):
    n, rep, doublet, frame = chain6
    assert abs(np.vdot(frame.zero_state, frame.one_state)) < 1e-8
    proj = rep.quartet_states @ (rep.quartet_states.conj().T @ frame.zero_state)
    assert np.linalg.norm(proj - frame.zero_state) < 1e-6


def test_frame_string_restriction_involution(chain6):
    n, rep, doublet, frame = chain6
    w = np.diag(frame.string_restriction).real
    assert abs(abs(w[0]) - 1.0) < 0.05
    assert abs(abs(w[1]) - 1.0) < 0.05
    assert w[0] > 0 > w[1]


def test_frame_covariant_under_perp_choice(chain6):
    # rotating the perpendicular reference about the frame axis changes the
    # states only by phase
    n, rep, doublet, frame = chain6
    alt_perp = sa.Direction.from_array(
        np.cos(0.7) * frame.perp_dir.as_array()
        + np.sin(0.7) * np.cross(frame.field_dir.as_array(), frame.perp_dir.as_array()),
        normalize=True,
    )
    alt = el.logical_frame(doublet, sa.Z_AXIS, 1, n, perp=alt_perp)
    assert abs(abs(np.vdot(alt.zero_state, frame.zero_state)) - 1.0) < 1e-6
    assert abs(abs(np.vdot(alt.one_state, frame.one_state)) - 1.0) < 1e-6


def test_frame_extraction_error_for_degenerate_axis(chain6):
    # the y-axis string compresses to nearly zero on a z-conditioned doublet
    n, rep, doublet, frame = chain6
    with pytest.raises(el.FrameExtractionError):
        el.logical_frame(doublet, sa.Y_AXIS, 1, n)


def test_bloch_vector_of_frame_states(chain6):
    n, rep, doublet, frame = chain6
    v, leak = el.bloch_vector(frame.zero_state, frame)
    assert np.allclose(v, [0.0, 0.0, 1.0], atol=1e-10)
    assert leak < 1e-10
    plus = (frame.zero_state + frame.one_state) / np.sqrt(2.0)
    v, leak = el.bloch_vector(plus, frame)
    assert np.allclose(v, [1.0, 0.0, 0.0], atol=1e-10)


def test_bloch_vector_norm_bound(chain6):
    n, rep, doublet, frame = chain6
    rng = np.random.default_rng(5)
    for _ in range(10):
        c = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        c /= np.linalg.norm(c)
        state = c[0] * frame.zero_state + c[1] * frame.one_state
        v, _ = el.bloch_vector(state, frame)
        assert np.linalg.norm(v) <= 1.0 + 1e-10


def test_bloch_vector_leakage_error(chain6):
    n, rep, doublet, frame = chain6
    rng = np.random.default_rng(6)
    junk = sa.random_state(n, rng)
    with pytest.raises(el.NotAQubitStateError):
        el.bloch_vector(junk, frame)


def test_rotate_frame_axes_are_consistent(chain6):
    n, rep, doublet, frame = chain6
    xframe = el.rotate_frame(frame, sa.X_AXIS)
    axes = xframe.axes()
    # right-handed orthonormal triad with z along the new direction
    assert np.allclose(axes[2], sa.X_AXIS.as_array(), atol=1e-12)
    assert abs(np.linalg.det(axes) - 1.0) < 1e-10
    # the plus state of the x frame has Bloch +x in that frame
    plus = (xframe.zero_state + xframe.one_state) / np.sqrt(2.0)
    v, _ = el.bloch_vector(plus, xframe)
    assert np.allclose(v, [1.0, 0.0, 0.0], atol=1e-10)


def test_right_edge_conditioning_gives_definite_bloch_sign(chain6):
    # conditioning the ground state on a right-edge up outcome lands on the
    # logical zero, reproducibly
    n, rep, doublet, frame = chain6
    gs0 = rep.quartet_states[:, 0]
    proj = doublet @ (doublet.conj().T @ gs0)
    proj /= np.linalg.norm(proj)
    v, leak = el.bloch_vector(proj, frame)
    assert v[2] > 0.9
    assert leak < 1e-8


def test_restricted_strings_anticommute_with_transverse_reference():
    # the emergent qubit algebra: i * (string restriction) squares to -1 and
    # anticommutes with the transverse phase reference, residual shrinking
    # with chain length
    residuals = []
    for n in (6, 8):
        rep = es.ground_space(cm.heisenberg(1, n, 1.0), seed=0)
        doublet = el.right_edge_doublet(rep.quartet_states, n)
        frame = el.logical_frame(doublet, sa.Z_AXIS, 1, n)
        m = 1j * frame.string_restriction
        sq_residual = np.linalg.norm(m @ m + np.eye(2), 2)
        residuals.append(max(sq_residual, frame.phase_convention_residual))
    assert residuals[1] < 0.05
    assert residuals[1] <= residuals[0] + 1e-9
