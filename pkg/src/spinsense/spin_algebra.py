"""Spin-1 operator primitives on open chains.

The local basis is ordered (m=+1, m=0, m=-1) on every site, and a chain of
n sites uses the lexicographic tensor layout with site 1 as the most
significant trit.  Chain-sized operators are scipy.sparse CSR matrices,
states are flat complex vectors of length 3**n.

    Sx = (1/sqrt2) [[0,1,0],[1,0,1],[0,1,0]]
    Sy = (1/sqrt2) [[0,-i,0],[i,0,-i],[0,i,0]]
    Sz = diag(1, 0, -1)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

_SQRT2_INV = 1.0 / np.sqrt(2.0)

SX = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) * _SQRT2_INV
SY = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) * _SQRT2_INV
SZ = np.array([[1, 0, 0], [0, 0, 0], [0, 0, -1]], dtype=complex)
S1_IDENTITY = np.eye(3, dtype=complex)

UNIT_NORM_TOL = 1e-12


@dataclass(frozen=True)
class Direction:
    """Unit 3-vector used for field axes, measurement axes and frame axes."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm_sq = self.x * self.x + self.y * self.y + self.z * self.z
        if abs(norm_sq - 1.0) > 3.0 * UNIT_NORM_TOL:
            raise ValueError(f"direction must be a unit vector, got |d|^2 = {norm_sq!r}")

    @classmethod
    def from_array(cls, v, normalize: bool = False) -> "Direction":
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape != (3,):
            raise ValueError("a direction needs exactly three components")
        if normalize:
            n = np.linalg.norm(v)
            if n < 1e-300:
                raise ValueError("cannot normalize a zero vector into a direction")
            v = v / n
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def dot(self, other: "Direction") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z


X_AXIS = Direction(1.0, 0.0, 0.0)
Y_AXIS = Direction(0.0, 1.0, 0.0)
Z_AXIS = Direction(0.0, 0.0, 1.0)


def spin1_components() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return copies of the single-site matrices (Sx, Sy, Sz)."""
    return SX.copy(), SY.copy(), SZ.copy()


def spin_along(d: Direction) -> np.ndarray:
    """Spin component along the unit vector d; Hermitian with spectrum {+1, 0, -1}."""
    if not isinstance(d, Direction):
        raise ValueError("spin_along expects a Direction (unit vector)")
    return d.x * SX + d.y * SY + d.z * SZ


def expm_i_hermitian(h: np.ndarray, angle: float = 1.0) -> np.ndarray:
    """exp(1j * angle * h) for Hermitian h, by exact spectral decomposition."""
    w, u = np.linalg.eigh(h)
    return (u * np.exp(1j * angle * w)) @ u.conj().T


def pi_rotation(d: Direction) -> np.ndarray:
    """Single-site rotation by pi about d, exp(i pi S^d).

    For spin 1 this equals 1 - 2 (S^d)^2, so it is unitary and Hermitian at
    the same time and squares to the identity.
    """
    return expm_i_hermitian(spin_along(d), np.pi)


def orthogonal_direction(d: Direction) -> Direction:
    """A deterministic unit vector orthogonal to d.

    Away from the poles this is the normalized d x z_hat; for |d.z| >= 0.9
    the convention switches to the normalized y_hat x d, so that z_hat maps
    to x_hat.  Same input always yields the same output.
    """
    v = d.as_array()
    if abs(d.z) < 0.9:
        w = np.cross(v, np.array([0.0, 0.0, 1.0]))
    else:
        w = np.cross(np.array([0.0, 1.0, 0.0]), v)
    return Direction.from_array(w, normalize=True)


def embed_site(op: np.ndarray, site: int, n: int) -> sparse.csr_matrix:
    """Embed a single-site operator at `site` (1-based) into the n-site chain."""
    if not 1 <= site <= n:
        raise ValueError(f"site {site} out of range 1..{n}")
    left = sparse.identity(3 ** (site - 1), dtype=complex, format="csr")
    right = sparse.identity(3 ** (n - site), dtype=complex, format="csr")
    return sparse.kron(sparse.kron(left, sparse.csr_matrix(op)), right, format="csr")


def embed_bond(op9: np.ndarray, site: int, n: int) -> sparse.csr_matrix:
    """Embed a two-site operator on the bond (site, site+1) of an n-site chain."""
    if not 1 <= site <= n - 1:
        raise ValueError(f"bond ({site},{site + 1}) out of range for n={n}")
    left = sparse.identity(3 ** (site - 1), dtype=complex, format="csr")
    right = sparse.identity(3 ** (n - site - 1), dtype=complex, format="csr")
    return sparse.kron(sparse.kron(left, sparse.csr_matrix(op9)), right, format="csr")


def apply(op, state: np.ndarray) -> np.ndarray:
    """Matrix-vector product with a dimension check; result is not renormalized."""
    if op.shape[1] != state.shape[0]:
        raise ValueError(f"operator dim {op.shape[1]} does not match state dim {state.shape[0]}")
    return op @ state


def apply_site_operator(state: np.ndarray, op3: np.ndarray, site: int, n: int) -> np.ndarray:
    """Apply a 3x3 operator to one site of a chain state, without the big matrix."""
    psi = state.reshape(3 ** (site - 1), 3, 3 ** (n - site))
    out = np.einsum("ab,ibj->iaj", op3, psi)
    return out.reshape(state.shape)


def apply_bond_operator(state: np.ndarray, op9: np.ndarray, site: int, n: int) -> np.ndarray:
    """Apply a 9x9 operator to the sites (site, site+1) of a chain state."""
    psi = state.reshape(3 ** (site - 1), 9, 3 ** (n - site - 1))
    out = np.einsum("ab,ibj->iaj", op9, psi)
    return out.reshape(state.shape)


def site_count(state: np.ndarray) -> int:
    """Number of sites of a chain state vector, with a power-of-3 check."""
    dim = state.shape[0]
    n = int(round(np.log(dim) / np.log(3.0)))
    if 3**n != dim:
        raise ValueError(f"state dimension {dim} is not a power of 3")
    return n


def normalize_state(state: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(state)
    if nrm < 1e-300:
        raise ValueError("cannot normalize a zero state")
    return state / nrm


def product_state(local_states) -> np.ndarray:
    """Tensor product of per-site 3-vectors, normalized."""
    psi = np.asarray(local_states[0], dtype=complex)
    for loc in local_states[1:]:
        psi = np.kron(psi, np.asarray(loc, dtype=complex))
    return normalize_state(psi)


def basis_state(ms) -> np.ndarray:
    """Product basis state |m_1, m_2, ...> with each m in {+1, 0, -1}."""
    index = 0
    for m in ms:
        if m not in (1, 0, -1):
            raise ValueError(f"invalid spin-1 magnetic number {m}")
        index = 3 * index + (1 - m)
    psi = np.zeros(3 ** len(ms), dtype=complex)
    psi[index] = 1.0
    return psi


def random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3**n) + 1j * rng.standard_normal(3**n)
    return normalize_state(v)


def random_direction(rng: np.random.Generator) -> Direction:
    """Isotropically distributed unit vector."""
    while True:
        v = rng.standard_normal(3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return Direction.from_array(v / n)
