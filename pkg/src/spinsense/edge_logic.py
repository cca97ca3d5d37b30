"""String operators and the logical edge-mode qubit of a Haldane chain.

A string operator is the site-by-site product of single-site pi rotations
exp(i pi S^d_j) over a contiguous range.  For spin 1 each factor equals
1 - 2 (S^d)^2, so the whole string is simultaneously Hermitian, unitary and
an involution; it is applied factorwise to chain states instead of being
materialized (a generic-axis string is a dense 3^n x 3^n matrix).

The logical frame realizes the edge-mode qubit: on a two-dimensional
protected subspace the string along the frame axis compresses to a traceless
Hermitian near-involution whose eigenvectors define |0> and |1>.  The
relative phase of |1> is fixed against the boundary-site spin component
along the perpendicular axis, which stays well conditioned on subspaces
produced by right-edge measurements (the perpendicular full-range string
compresses to zero there, because its factor on the measured site maps the
post-measurement sector to an orthogonal one).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import sparse

from .eigensolver import GroundSpaceReport
from .spin_algebra import (
    Direction,
    apply_site_operator,
    embed_site,
    orthogonal_direction,
    pi_rotation,
    spin_along,
)

# Labeling of the frame basis: |0> is the eigenvector of the frame-axis
# string restriction with eigenvalue of this sign.  Fixed once against the
# unperturbed chain, where the right-edge m=+1 conditioned ground state
# lands on the +1 eigenvector.
FRAME_EIGENVALUE_SIGN = +1.0

# The boundary-site spin anti-tracks the logical Bloch vector (the frame-z
# zero state carries negative <S^z_k>), so the transverse phase reference
# uses the same negative correlation sign to keep the frame right-handed.
BOUNDARY_SPIN_SIGN = -1.0


class FrameExtractionError(RuntimeError):
    """The candidate subspace does not carry a protected qubit."""


class ImpossibleOutcomeError(RuntimeError):
    """A forced measurement outcome has (numerically) zero probability."""


class NotAQubitStateError(RuntimeError):
    """State leakage outside the logical subspace is too large to report."""


@dataclass(frozen=True)
class StringOperator:
    """Product of single-site pi rotations along `direction` over sites k..last."""

    direction: Direction
    first_site: int
    last_site: int
    n_sites: int
    site_factor: np.ndarray  # 3x3, exp(i pi S^d)

    def apply(self, state: np.ndarray) -> np.ndarray:
        out = state
        for j in range(self.first_site, self.last_site + 1):
            out = apply_site_operator(out, self.site_factor, j, self.n_sites)
        return out

    def restrict(self, basis: np.ndarray) -> np.ndarray:
        """Compression B_dag . Sigma . B onto the span of the given columns."""
        m = basis.shape[1]
        out = np.zeros((m, m), dtype=complex)
        for b in range(m):
            sv = self.apply(basis[:, b])
            for a in range(m):
                out[a, b] = np.vdot(basis[:, a], sv)
        return out

    def to_sparse(self) -> sparse.csr_matrix:
        """Materialized matrix; meant for small-n oracle checks only."""
        op = sparse.identity(3**self.n_sites, dtype=complex, format="csr")
        for j in range(self.first_site, self.last_site + 1):
            op = op @ embed_site(self.site_factor, j, self.n_sites)
        return op.tocsr()


def string_operator(d: Direction, k: int, n: int) -> StringOperator:
    """The conserved string of pi rotations along d over sites k..n."""
    if not 1 <= k <= n:
        raise ValueError(f"invalid string range {k}..{n}")
    return StringOperator(d, k, n, n, pi_rotation(d))


@dataclass
class MeasurementOutcome:
    """Projective single-site spin measurement result."""

    m: int
    probability: float
    post_state: np.ndarray


def _site_projectors(axis: Direction) -> dict:
    """Projectors onto the m = +1, 0, -1 eigenstates of S^axis."""
    w, u = np.linalg.eigh(spin_along(axis))
    # eigh returns ascending eigenvalues (-1, 0, +1)
    return {
        +1: np.outer(u[:, 2], u[:, 2].conj()),
        0: np.outer(u[:, 1], u[:, 1].conj()),
        -1: np.outer(u[:, 0], u[:, 0].conj()),
    }


def measure_site_spin(
    state: np.ndarray,
    axis: Direction,
    site: int,
    n: int,
    rng: Optional[np.random.Generator] = None,
    forced_outcome: Optional[int] = None,
) -> MeasurementOutcome:
    """Projective measurement of S^axis on one site.

    Either an rng samples the outcome from the Born rule or a forced outcome
    conditions on it; forcing an outcome of (numerically) zero probability
    raises ImpossibleOutcomeError.
    """
    projs = _site_projectors(axis)
    probs = {}
    posts = {}
    for m, p3 in projs.items():
        post = apply_site_operator(state, p3, site, n)
        prob = float(np.real(np.vdot(post, post)))
        probs[m] = prob
        posts[m] = post
    total = sum(probs.values())
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"state not normalized, projector probabilities sum to {total}")
    if forced_outcome is not None:
        if forced_outcome not in (-1, 0, 1):
            raise ValueError(f"invalid outcome {forced_outcome}")
        m = forced_outcome
        if probs[m] < 1e-12:
            raise ImpossibleOutcomeError(f"outcome m={m} has probability {probs[m]:.3e}")
    else:
        if rng is None:
            raise ValueError("need an rng when no outcome is forced")
        r = rng.random() * total
        m = 1
        acc = 0.0
        for cand in (+1, 0, -1):
            acc += probs[cand]
            if r <= acc:
                m = cand
                break
        else:
            m = -1
    post = posts[m] / np.sqrt(probs[m])
    return MeasurementOutcome(m=m, probability=probs[m], post_state=post)


def project_right_edge(
    state: np.ndarray,
    n: int,
    outcome_m: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> MeasurementOutcome:
    """Projective S^z measurement on the last site of the chain.

    Forced-outcome mode (outcome_m given) conditions on that result, which is
    how a deterministic logical-zero initialization is reproduced.
    """
    from .spin_algebra import Z_AXIS

    return measure_site_spin(state, Z_AXIS, n, n, rng=rng, forced_outcome=outcome_m)


def measure_edge_qubit(
    state: np.ndarray,
    axis: Direction,
    boundary_site: int,
    n: int,
    rng: Optional[np.random.Generator] = None,
    forced_outcome: Optional[int] = None,
) -> MeasurementOutcome:
    """Measure S^axis on an adiabatically decoupled boundary spin.

    Outcomes m = +1 or -1 read the edge qubit in the +axis / -axis basis;
    m = 0 does not read the qubit but rotates it by pi about `axis`, and the
    protocol retries on the next boundary spin.
    """
    return measure_site_spin(state, axis, boundary_site, n, rng=rng, forced_outcome=forced_outcome)


@dataclass
class LogicalFrame:
    """Orthonormal logical pair spanning the protected edge-mode qubit.

    zero_state and one_state live on the full chain space the input subspace
    was expressed in.  field_dir is the frame (Bloch z) axis, perp_dir the
    Bloch x axis.  phase_convention_residual measures how far the string
    restriction is from a traceless involution anticommuting with the
    transverse phase reference.
    """

    zero_state: np.ndarray
    one_state: np.ndarray
    field_dir: Direction
    perp_dir: Direction
    first_site: int
    n_sites: int
    phase_convention_residual: float
    string_restriction: np.ndarray
    perp_string_restriction: np.ndarray

    def axes(self) -> np.ndarray:
        """Lab vectors of the frame's Bloch axes, as rows (x, y, z)."""
        z = self.field_dir.as_array()
        x = self.perp_dir.as_array()
        return np.array([x, np.cross(z, x), z])

    def lab_to_frame(self, v: np.ndarray) -> np.ndarray:
        """Frame coordinates of a lab-frame Bloch vector."""
        return self.axes() @ np.asarray(v, dtype=float)

    def spinor_state(self, bloch: np.ndarray) -> np.ndarray:
        """Chain state with the given Bloch vector (in frame coordinates)."""
        v = np.asarray(bloch, dtype=float)
        nrm = np.linalg.norm(v)
        if nrm > 1.0 + 1e-9:
            raise ValueError("Bloch vector must have norm <= 1 for a pure preparation")
        theta = np.arccos(np.clip(v[2] / max(nrm, 1e-300), -1.0, 1.0))
        phi = np.arctan2(v[1], v[0])
        a = np.cos(theta / 2.0)
        b = np.exp(1j * phi) * np.sin(theta / 2.0)
        return a * self.zero_state + b * self.one_state


def right_edge_doublet(
    quartet_states: np.ndarray,
    n: int,
    axis: Optional[Direction] = None,
    m: int = +1,
) -> np.ndarray:
    """Two-dimensional protected subspace conditioned on a right-edge outcome.

    Diagonalizes the restriction of the site-n projector |m><m| (along the
    given axis, default z) inside the quartet and keeps the two dominant
    directions.  The result stays exactly inside the ground space, which is
    what a measurement of the right edge mode (rather than of the bare end
    site) produces.
    """
    from .spin_algebra import Z_AXIS

    axis = axis or Z_AXIS
    p3 = _site_projectors(axis)[m]
    cols = quartet_states
    pq = np.column_stack(
        [apply_site_operator(cols[:, i], p3, n, n) for i in range(cols.shape[1])]
    )
    r = cols.conj().T @ pq
    r = (r + r.conj().T) / 2.0
    w, u = np.linalg.eigh(r)
    doublet = cols @ u[:, -2:]
    # re-orthonormalize against rounding
    q, _ = np.linalg.qr(doublet)
    return q


def logical_frame(
    space: Union[np.ndarray, GroundSpaceReport],
    d: Direction,
    k: int,
    n: int,
    perp: Optional[Direction] = None,
    unitarity_tol: float = 0.25,
) -> LogicalFrame:
    """Extract the logical qubit frame along d from a protected 2-dim subspace.

    The string along d over sites k..n is compressed to 2x2, which must be
    close to a traceless Hermitian involution (its two eigenvalues close to
    +1 and -1); the eigenvectors are labeled |0> and |1> by eigenvalue sign.
    The relative phase of |1> is then fixed through the boundary-site spin
    component along the perpendicular axis.
    """
    if isinstance(space, GroundSpaceReport):
        basis = right_edge_doublet(space.quartet_states, n)
    else:
        basis = np.asarray(space)
    if basis.ndim != 2 or basis.shape[1] != 2:
        raise ValueError("the input subspace must have exactly two columns")
    g = basis.conj().T @ basis
    if np.abs(g - np.eye(2)).max() > 1e-8:
        raise ValueError("the input subspace basis must be orthonormal")

    sigma_d = string_operator(d, k, n)
    m_d = sigma_d.restrict(basis)
    herm_dev = np.abs(m_d - m_d.conj().T).max()
    m_h = (m_d + m_d.conj().T) / 2.0
    w, u = np.linalg.eigh(m_h)
    unitarity = float(max(abs(w[0] ** 2 - 1.0), abs(w[1] ** 2 - 1.0), herm_dev))
    if unitarity > unitarity_tol:
        raise FrameExtractionError(
            f"string restriction along ({d.x:.3f},{d.y:.3f},{d.z:.3f}) is not close "
            f"to an involution (deviation {unitarity:.3g}); the subspace is not a "
            "protected qubit for this axis"
        )
    idx_zero = int(np.argmax(FRAME_EIGENVALUE_SIGN * w))
    idx_one = 1 - idx_zero
    zero = basis @ u[:, idx_zero]
    one = basis @ u[:, idx_one]

    perp = perp if perp is not None else orthogonal_direction(d)
    s_perp3 = spin_along(perp)
    c = np.vdot(zero, apply_site_operator(one, s_perp3, k, n))
    if abs(c) < 1e-9:
        raise FrameExtractionError(
            "transverse phase reference vanishes on this subspace; cannot fix "
            "the relative phase of |1>"
        )
    one = one * (BOUNDARY_SPIN_SIGN * abs(c) / c)

    new_basis = np.column_stack([zero, one])
    perp_matrix = string_operator(perp, k, n).restrict(new_basis)
    # transverse spin compression in the final basis, for the residual report
    p_mat = np.array(
        [
            [np.vdot(zero, apply_site_operator(zero, s_perp3, k, n)), np.vdot(zero, apply_site_operator(one, s_perp3, k, n))],
            [np.vdot(one, apply_site_operator(zero, s_perp3, k, n)), np.vdot(one, apply_site_operator(one, s_perp3, k, n))],
        ]
    )
    p_traceless = p_mat - np.trace(p_mat) / 2.0 * np.eye(2)
    p_scale = np.linalg.norm(p_traceless, 2)
    m_final = np.diag(w[[idx_zero, idx_one]]).astype(complex)
    anti = np.linalg.norm(m_final @ p_traceless + p_traceless @ m_final, 2)
    residual = float(max(unitarity, anti / (2.0 * p_scale) if p_scale > 0 else np.inf))

    return LogicalFrame(
        zero_state=zero,
        one_state=one,
        field_dir=d,
        perp_dir=perp,
        first_site=k,
        n_sites=n,
        phase_convention_residual=residual,
        string_restriction=m_final,
        perp_string_restriction=perp_matrix,
    )


def rotate_frame(frame: LogicalFrame, new_d: Direction) -> LogicalFrame:
    """Frame for a different axis, built by the exact spinor rotation.

    The logical states transform covariantly under rotations, so the frame
    along any axis follows from one well-conditioned frame by elementary
    SU(2) algebra instead of re-extracting against a string whose restriction
    may be degenerate on the given subspace.
    """
    z_old = frame.field_dir.as_array()
    x_old = frame.perp_dir.as_array()
    y_old = np.cross(z_old, x_old)
    target = new_d.as_array()
    # coordinates of the new axis in the old frame
    vz = np.array([target @ x_old, target @ y_old, target @ z_old])
    theta = np.arccos(np.clip(vz[2], -1.0, 1.0))
    phi = float(np.arctan2(vz[1], vz[0])) if theta > 1e-12 else 0.0
    a = np.cos(theta / 2.0)
    b = np.sin(theta / 2.0)
    zero_new = a * frame.zero_state + np.exp(1j * phi) * b * frame.one_state
    one_new = -np.exp(-1j * phi) * b * frame.zero_state + a * frame.one_state
    # lab vector of the rotated Bloch x axis
    rot_axis_lab = np.cross(z_old, target)
    s = np.linalg.norm(rot_axis_lab)
    if s < 1e-12:
        # identity or antipodal: the spinor above is a rotation about old-y
        perp_new_lab = x_old if vz[2] > 0 else -x_old
    else:
        ax = rot_axis_lab / s
        c = vz[2]
        # Rodrigues rotation of the old x axis by the same rotation
        perp_new_lab = x_old * c + np.cross(ax, x_old) * s + ax * (ax @ x_old) * (1.0 - c)
    perp_new = Direction.from_array(perp_new_lab, normalize=True)
    return LogicalFrame(
        zero_state=zero_new,
        one_state=one_new,
        field_dir=new_d,
        perp_dir=perp_new,
        first_site=frame.first_site,
        n_sites=frame.n_sites,
        phase_convention_residual=frame.phase_convention_residual,
        string_restriction=frame.string_restriction,
        perp_string_restriction=frame.perp_string_restriction,
    )


def bloch_vector(
    state: np.ndarray, frame: LogicalFrame, max_leakage: float = 0.5
) -> tuple[np.ndarray, float]:
    """Bloch components of a chain state projected into the logical pair.

    Returns (vector, leakage); leakage is the population outside
    span{|0>, |1>}.  Raises NotAQubitStateError when leakage > max_leakage.
    """
    a = np.vdot(frame.zero_state, state)
    b = np.vdot(frame.one_state, state)
    p = float(abs(a) ** 2 + abs(b) ** 2)
    norm2 = float(np.real(np.vdot(state, state)))
    leakage = 1.0 - p / norm2
    if leakage > max_leakage:
        raise NotAQubitStateError(f"leakage {leakage:.3f} exceeds {max_leakage}")
    x = 2.0 * np.real(np.conj(a) * b) / p
    y = 2.0 * np.imag(np.conj(a) * b) / p
    z = (abs(a) ** 2 - abs(b) ** 2) / p
    return np.array([x, y, z]), leakage


def bloch_from_density(rho: np.ndarray, frame: LogicalFrame, max_leakage: float = 0.5):
    """Bloch components of a density matrix on the frame's own chain space."""
    zero, one = frame.zero_state, frame.one_state
    p00 = float(np.real(np.vdot(zero, rho @ zero)))
    p11 = float(np.real(np.vdot(one, rho @ one)))
    c01 = complex(np.vdot(zero, rho @ one))
    p = p00 + p11
    leakage = 1.0 - p
    if leakage > max_leakage:
        raise NotAQubitStateError(f"leakage {leakage:.3f} exceeds {max_leakage}")
    x = 2.0 * np.real(c01) / p
    y = -2.0 * np.imag(c01) / p
    z = (p00 - p11) / p
    return np.array([x, y, z]), leakage
