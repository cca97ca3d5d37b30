"""Hamiltonian assembly for open spin-1 chains with a ramped boundary coupling.

The building blocks are the antiferromagnetic Heisenberg bulk, the quadratic
local field coupling J_f (S^d)^2 on the boundary site, additive single-site
perturbations gamma * sum_j O_j, and the time-interpolated gate Hamiltonian

    H_k,n(t) = f(t) J_f (S^d_k)^2 + g(t) J S_k.S_{k+1} + H_{k+1,n} + H'

with monotone ramps f (field on) and g (boundary bond off).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .spin_algebra import (
    SX,
    SY,
    SZ,
    Direction,
    embed_bond,
    embed_site,
    spin_along,
)

# Two-site Heisenberg block S.S on a 9-dimensional bond factor.
HEISENBERG_BOND = np.kron(SX, SX) + np.kron(SY, SY) + np.kron(SZ, SZ)

PERTURBATION_LABELS = ("Sx", "Sy", "Sz", "Sx2", "Sy2", "Sz2", "Sd2")


@dataclass(frozen=True)
class CouplingConstants:
    """Energy scales of the chain: Heisenberg J, field J_f, perturbation gamma."""

    J: float
    J_f: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError(f"J must be positive, got {self.J}")
        if self.J_f < 0:
            raise ValueError(f"J_f must be nonnegative, got {self.J_f}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")


@dataclass(frozen=True)
class PerturbationSpec:
    """Additive perturbation gamma * sum_j O_j over a contiguous site range.

    operator_label picks the single-site operator O from PERTURBATION_LABELS;
    the label "Sd2" means (S^d)^2 for the given direction.
    """

    operator_label: str
    gamma: float
    first_site: int
    last_site: int
    direction: Optional[Direction] = None

    def __post_init__(self):
        if self.operator_label not in PERTURBATION_LABELS:
            raise ValueError(
                f"unknown perturbation label {self.operator_label!r}, "
                f"expected one of {PERTURBATION_LABELS}"
            )
        if self.operator_label == "Sd2" and self.direction is None:
            raise ValueError("perturbation label 'Sd2' needs a direction")
        if self.gamma < 0:
            raise ValueError("perturbation strength must be nonnegative")
        if self.first_site < 1 or self.last_site < self.first_site:
            raise ValueError(f"bad site range {self.first_site}..{self.last_site}")

    def site_matrix(self) -> np.ndarray:
        """The bare single-site 3x3 operator O (without the gamma factor)."""
        if self.operator_label == "Sx":
            return SX.copy()
        if self.operator_label == "Sy":
            return SY.copy()
        if self.operator_label == "Sz":
            return SZ.copy()
        if self.operator_label == "Sx2":
            return SX @ SX
        if self.operator_label == "Sy2":
            return SY @ SY
        if self.operator_label == "Sz2":
            return SZ @ SZ
        s = spin_along(self.direction)
        return s @ s

    def sites(self) -> range:
        return range(self.first_site, self.last_site + 1)


def heisenberg(k: int, n: int, J: float) -> sparse.csr_matrix:
    """Open-boundary Heisenberg Hamiltonian J sum_{j=k}^{n-1} S_j.S_{j+1}.

    The operator acts on the full n-site space; sites below k are untouched.
    """
    if k >= n:
        raise ValueError(f"need at least two coupled sites, got k={k}, n={n}")
    if k < 1:
        raise ValueError(f"site index k={k} out of range")
    dim = 3**n
    h = sparse.csr_matrix((dim, dim), dtype=complex)
    for j in range(k, n):
        h = h + J * embed_bond(HEISENBERG_BOND, j, n)
    return h.tocsr()


def local_field(site: int, d: Direction, J_f: float, n: int) -> sparse.csr_matrix:
    """Quadratic field coupling J_f (S^d_site)^2, embedded in the n-site space."""
    if J_f < 0:
        raise ValueError("J_f must be nonnegative")
    s = spin_along(d)
    return (J_f * embed_site(s @ s, site, n)).tocsr()


def perturbation(spec: PerturbationSpec, n: int) -> sparse.csr_matrix:
    """gamma * sum over the site range of the labeled single-site operator."""
    if spec.last_site > n:
        raise ValueError(f"site range {spec.first_site}..{spec.last_site} exceeds n={n}")
    dim = 3**n
    h = sparse.csr_matrix((dim, dim), dtype=complex)
    op3 = spec.site_matrix()
    for j in spec.sites():
        h = h + embed_site(op3, j, n)
    return (spec.gamma * h).tocsr()


def _linear_up(total_time: float) -> Callable[[float], float]:
    return lambda t: t / total_time


def _linear_down(total_time: float) -> Callable[[float], float]:
    return lambda t: 1.0 - t / total_time


def _zero_ramp(t: float) -> float:
    return 0.0


@dataclass(frozen=True)
class GateSchedule:
    """Time course of the boundary gate: total time, Trotter step, ramps.

    field_ramp (f) turns the local field on, bond_ramp (g) turns the boundary
    bond off.  With field_dir None the schedule describes bare decoupling and
    f is identically zero.
    """

    total_time: float
    dt: float
    field_dir: Optional[Direction]
    boundary_site: int = 1
    field_ramp: Callable[[float], float] = None  # type: ignore[assignment]
    bond_ramp: Callable[[float], float] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.total_time <= 0 or self.dt <= 0:
            raise ValueError("total_time and dt must be positive")
        steps = self.total_time / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"total_time/dt = {steps} is not an integer step count")
        if self.boundary_site < 1:
            raise ValueError("boundary_site must be >= 1")
        if self.field_ramp is None:
            ramp = _zero_ramp if self.field_dir is None else _linear_up(self.total_time)
            object.__setattr__(self, "field_ramp", ramp)
        if self.bond_ramp is None:
            object.__setattr__(self, "bond_ramp", _linear_down(self.total_time))
        self._validate_ramps()

    def _validate_ramps(self):
        T = self.total_time
        grid = np.linspace(0.0, T, 41)
        f = np.array([self.field_ramp(t) for t in grid])
        g = np.array([self.bond_ramp(t) for t in grid])
        if np.any(np.diff(f) < -1e-12) or np.any(np.diff(g) > 1e-12):
            raise ValueError("field ramp must be nondecreasing and bond ramp nonincreasing")
        if abs(g[0] - 1.0) > 1e-12 or abs(g[-1]) > 1e-12:
            raise ValueError("bond ramp must run from exactly 1 to exactly 0")
        if self.field_dir is not None:
            if abs(f[0]) > 1e-12 or abs(f[-1] - 1.0) > 1e-12:
                raise ValueError("field ramp must run from exactly 0 to exactly 1")
        elif np.any(np.abs(f) > 1e-12):
            raise ValueError("a schedule without a field direction needs f == 0")

    @property
    def step_count(self) -> int:
        return int(round(self.total_time / self.dt))

    @classmethod
    def linear(
        cls, total_time: float, dt: float, field_dir: Direction, boundary_site: int = 1
    ) -> "GateSchedule":
        """The default gate schedule f(t) = t/T, g(t) = 1 - t/T."""
        return cls(total_time, dt, field_dir, boundary_site)

    @classmethod
    def decoupling(cls, total_time: float, dt: float, boundary_site: int = 1) -> "GateSchedule":
        """Bond ramp-off with no local field, used for edge readout."""
        return cls(total_time, dt, None, boundary_site)


class GateHamiltonianParts:
    """Static sparse pieces of the gate Hamiltonian.

    Time dependence enters only through the two ramp scalars, so the three
    fixed parts are assembled once and combined per query.
    """

    def __init__(
        self,
        sched: GateSchedule,
        couplings: CouplingConstants,
        n: int,
        pert: Optional[PerturbationSpec] = None,
    ):
        k = sched.boundary_site
        if k >= n:
            raise ValueError(f"boundary site {k} needs a right neighbour in an n={n} chain")
        self.schedule = sched
        self.couplings = couplings
        self.n_sites = n
        dim = 3**n
        if sched.field_dir is not None:
            s = spin_along(sched.field_dir)
            self.field_part = embed_site(s @ s, k, n)
        else:
            self.field_part = sparse.csr_matrix((dim, dim), dtype=complex)
        self.bond_part = embed_bond(HEISENBERG_BOND, k, n)
        static = sparse.csr_matrix((dim, dim), dtype=complex)
        if k + 1 < n:
            static = static + heisenberg(k + 1, n, couplings.J)
        if pert is not None:
            static = static + perturbation(pert, n)
        self.static_part = static.tocsr()

    def at(self, t: float) -> sparse.csr_matrix:
        sched = self.schedule
        if t < -1e-12 or t > sched.total_time + 1e-12:
            raise ValueError(f"time {t} outside the schedule 0..{sched.total_time}")
        c = self.couplings
        h = (
            sched.field_ramp(t) * c.J_f * self.field_part
            + sched.bond_ramp(t) * c.J * self.bond_part
            + self.static_part
        )
        return h.tocsr()


def gate_hamiltonian(
    t: float,
    sched: GateSchedule,
    couplings: CouplingConstants,
    n: int,
    pert: Optional[PerturbationSpec] = None,
) -> sparse.csr_matrix:
    """Snapshot of the ramped gate Hamiltonian at time t.

    For repeated evaluation over a ramp use GateHamiltonianParts directly and
    call .at(t); the sparse pieces are then assembled only once.
    """
    return GateHamiltonianParts(sched, couplings, n, pert).at(t)
