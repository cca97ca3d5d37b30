"""Low-lying spectra of sparse Hermitian chain operators.

Single-vector Lanczos with full reorthogonalization against the whole Krylov
basis and against previously converged eigenvectors.  Exactly degenerate
multiplets (the triplet inside the Haldane quartet, rotational multiplets of
the excited bands) are recovered by deflation restarts: whenever a run
converges or exhausts an invariant subspace, its converged Ritz pairs are
locked and a fresh seeded start vector orthogonal to everything locked is
drawn.  Restarts stop once the smallest eigenvalue still reachable lies
above the requested window, which guarantees that the returned pairs are
the lowest ones including multiplicity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

_BREAKDOWN_FACTOR = 1e-13


class ConvergenceError(RuntimeError):
    """Raised when the iteration budget runs out; carries the best residuals."""

    def __init__(self, message: str, residual_norms: Optional[np.ndarray] = None):
        super().__init__(message)
        self.residual_norms = residual_norms


class AmbiguousQuartetError(RuntimeError):
    """Raised when the four lowest levels are not separated from the rest."""


@dataclass
class SpectrumSlice:
    """Ascending eigenvalues with orthonormal eigenvectors and residuals."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # column i pairs with eigenvalues[i]
    residual_norms: np.ndarray


@dataclass
class GroundSpaceReport:
    """The quasi-degenerate quartet, its internal splitting and the gap above."""

    quartet_energies: np.ndarray
    splitting: float
    gap: float
    quartet_states: np.ndarray  # dim x 4, orthonormal
    levels: SpectrumSlice


def _project_out(v: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Remove the components of v along the given orthonormal rows (twice)."""
    for _ in range(2):
        if rows.shape[0]:
            v = v - rows.T @ (rows.conj() @ v)
    return v


def _lanczos_run(h, start: np.ndarray, locked: np.ndarray, need: int, tol: float, max_subspace: int):
    """One full-reorthogonalized Lanczos sweep in the deflated space.

    Returns (pairs, exhausted, ritz_floor).  pairs is a list of
    (value, vector, residual) with true residual below a few tol; exhausted
    flags an invariant-subspace breakdown (the deflated Krylov space was
    fully explored); ritz_floor is the smallest Ritz value whose in-iteration
    residual estimate converged, usable as a bound on the remaining spectrum
    even when the reconstructed vector narrowly misses the harvest cut.
    """
    dim = start.shape[0]
    max_m = min(max_subspace, dim)
    basis = np.empty((max_m, dim), dtype=complex)
    alphas: list[float] = []
    betas: list[float] = []

    v = _project_out(start.astype(complex), locked)
    nrm = np.linalg.norm(v)
    if nrm < 1e-12:
        return [], True, None
    v = v / nrm
    basis[0] = v
    scale = 0.0
    exhausted = False
    m = 0
    for m in range(1, max_m + 1):
        w = np.asarray(h @ basis[m - 1]).reshape(-1)
        alpha = float(np.real(np.vdot(basis[m - 1], w)))
        alphas.append(alpha)
        scale = max(scale, abs(alpha), betas[-1] if betas else 0.0)
        w = w - alpha * basis[m - 1]
        if m > 1:
            w = w - betas[-1] * basis[m - 2]
        w = _project_out(w, locked)
        w = _project_out(w, basis[:m])
        beta = float(np.linalg.norm(w))

        vals, vecs = eigh_tridiagonal(np.asarray(alphas), np.asarray(betas))
        bottom = vecs[-1, :]
        resid_est = beta * np.abs(bottom)
        want = min(need, m)
        if beta <= _BREAKDOWN_FACTOR * max(scale, 1.0):
            exhausted = True
            break
        if np.all(resid_est[:want] < 0.2 * tol) and m >= need:
            break
        if m == max_m:
            break
        betas.append(beta)
        basis[m] = w / beta

    vals, vecs = eigh_tridiagonal(np.asarray(alphas), np.asarray(betas))
    bottom_resid = (beta if not exhausted else 0.0) * np.abs(vecs[-1, :])
    ritz_floor = None
    for i in range(len(vals)):
        if bottom_resid[i] < tol:
            ritz_floor = float(vals[i])
            break
    # lock candidates in spectral order, at most `need` of them; locking more
    # only compounds deflation error across restarts
    pairs = []
    for i in range(len(vals)):
        if len(pairs) >= need:
            break
        if bottom_resid[i] >= tol:
            continue
        y = np.asarray(basis[:m].T @ vecs[:, i]).reshape(-1)
        y = _project_out(y, locked)
        ynorm = np.linalg.norm(y)
        if ynorm < 1e-8:
            continue
        y = y / ynorm
        resid = float(np.linalg.norm(np.asarray(h @ y).reshape(-1) - vals[i] * y))
        # reconstruction loses a little accuracy against the in-iteration
        # estimate, so accept within a small multiple of tol
        if resid < 5.0 * tol:
            pairs.append((float(vals[i]), y, resid))
    return pairs, exhausted, ritz_floor


def lowest_eigenpairs(
    h,
    count: int,
    tol: float = 1e-9,
    seed: int = 0,
    max_subspace: int = 260,
    max_restarts: int = 60,
) -> SpectrumSlice:
    """The `count` lowest eigenpairs of a sparse Hermitian operator.

    Deterministic for a fixed seed of the start-vector generator.  Raises
    ConvergenceError with the best residuals if the restart budget runs out.
    """
    dim = h.shape[0]
    if count < 1 or count > 12:
        raise ValueError("count must be between 1 and 12")
    if count > dim:
        raise ValueError(f"cannot ask for {count} eigenpairs of a dim-{dim} operator")
    if tol <= 0:
        raise ValueError("tol must be positive")

    rng = np.random.default_rng(seed)
    locked_vals: list[float] = []
    locked_vecs: list[np.ndarray] = []
    locked_res: list[float] = []

    def locked_rows() -> np.ndarray:
        if not locked_vecs:
            return np.empty((0, dim), dtype=complex)
        return np.array(locked_vecs)

    def lock(pairs):
        for val, vec, resid in pairs:
            locked_vals.append(val)
            locked_vecs.append(vec)
            locked_res.append(resid)

    restarts = 0
    while restarts < max_restarts:
        restarts += 1
        start = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        if len(locked_vals) >= count:
            order = np.argsort(locked_vals)
            kth = locked_vals[order[count - 1]]
            pairs, exhausted, ritz_floor = _lanczos_run(h, start, locked_rows(), 1, tol, max_subspace)
            lock(pairs)
            if not pairs and not exhausted and ritz_floor is None:
                raise ConvergenceError(
                    "probe run failed to converge the smallest remaining eigenvalue",
                    np.asarray(locked_res),
                )
            if exhausted and not pairs and ritz_floor is None:
                break  # deflated space is empty: everything is locked
            floor = ritz_floor if ritz_floor is not None else min(p[0] for p in pairs)
            if floor >= kth - max(10.0 * tol, 1e-10 * (1.0 + abs(kth))):
                break
        else:
            need = count - len(locked_vals)
            pairs, exhausted, _ = _lanczos_run(h, start, locked_rows(), need, tol, max_subspace)
            if not pairs and not exhausted:
                raise ConvergenceError(
                    f"Lanczos failed to converge within {max_subspace} iterations",
                    np.asarray(locked_res),
                )
            lock(pairs)

    if len(locked_vals) < count:
        raise ConvergenceError(
            f"only {len(locked_vals)} of {count} eigenpairs converged "
            f"after {restarts} restarts",
            np.asarray(locked_res),
        )

    order = np.argsort(locked_vals)[:count]
    values = np.array([locked_vals[i] for i in order])
    vectors = np.column_stack([locked_vecs[i] for i in order])
    residuals = np.array(
        [float(np.linalg.norm(np.asarray(h @ vectors[:, i]).reshape(-1) - values[i] * vectors[:, i])) for i in range(count)]
    )
    if np.any(residuals > tol * 10.0):
        raise ConvergenceError("final residual check failed", residuals)
    return SpectrumSlice(values, vectors, residuals)


def ground_space(h, seed: int = 0, tol: float = 1e-9) -> GroundSpaceReport:
    """Identify the four-fold quasi-degenerate ground space of a Haldane chain.

    The quartet is located by the largest spectral break among the lowest six
    levels; an AmbiguousQuartetError is raised when the break does not sit
    above the fourth level or the internal splitting is not well below the gap.
    """
    levels = lowest_eigenpairs(h, 6, tol=tol, seed=seed)
    e = levels.eigenvalues
    breaks = np.diff(e)
    if int(np.argmax(breaks)) != 3:
        raise AmbiguousQuartetError(
            f"largest spectral break is not above the fourth level: levels={e.tolist()}"
        )
    splitting = float(e[3] - e[0])
    gap = float(e[4] - e[3])
    scale = max(abs(float(e[0])), 1.0)
    if splitting >= gap / 2.0 - 1e-9 * scale:
        raise AmbiguousQuartetError(
            f"quartet splitting {splitting:.6g} is not small against the gap {gap:.6g}"
        )
    return GroundSpaceReport(
        quartet_energies=e[:4].copy(),
        splitting=splitting,
        gap=gap,
        quartet_states=levels.eigenvectors[:, :4].copy(),
        levels=levels,
    )


def expectation(h, state: np.ndarray) -> float:
    """Real expectation value <state| h |state>."""
    if h.shape[1] != state.shape[0]:
        raise ValueError(f"operator dim {h.shape[1]} does not match state dim {state.shape[0]}")
    val = np.vdot(state, h @ state)
    return float(np.real(val))
