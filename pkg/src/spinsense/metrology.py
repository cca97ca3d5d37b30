"""Estimation layer: the pi-rotation channel, adaptive tomography, direction
and strength estimation.

The forward model of one sensing shot is a reflection of the probe Bloch
vector about the unknown field axis followed by a projective readout along a
chosen basis.  The abstract sampler draws outcomes straight from that model;
the full-chain sampler drives the entire chain pipeline (preparation in the
logical frame, ramped gate, boundary decoupling, projective readout with the
m=0 retry) and exposes the same counting interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .spin_algebra import Direction, orthogonal_direction, random_direction

MASK64 = (1 << 64) - 1


def mix_seed(root: int, index: int) -> int:
    """Derive a child seed from a root seed and a cell index (splitmix64)."""
    x = (root + 0x9E3779B97F4A7C15 * (index + 1)) & MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & MASK64
    x ^= x >> 31
    return x


class DegenerateGeometryError(RuntimeError):
    """The probe and its reflection are antipodal; the axis is underdetermined."""


class RankDeficientError(RuntimeError):
    """The two-background reconstruction system is rank deficient."""


def reflect_bloch(psi0: np.ndarray, axis: Direction) -> np.ndarray:
    """Pi rotation of a Bloch vector about the given axis: 2(a.v)a - v."""
    v = np.asarray(psi0, dtype=float)
    a = axis.as_array()
    return 2.0 * float(a @ v) * a - v


def axis_from_pair(psi0: np.ndarray, psi1: np.ndarray) -> tuple[Direction, float]:
    """Rotation axis (up to sign) from a probe state and its reflection.

    Returns the normalized bisector and the conditioning number |psi0 + psi1|;
    a conditioning below 1e-6 raises DegenerateGeometryError, since an
    antipodal pair only constrains the axis to the plane orthogonal to psi0.
    """
    b = np.asarray(psi0, dtype=float) + np.asarray(psi1, dtype=float)
    conditioning = float(np.linalg.norm(b))
    if conditioning < 1e-6:
        raise DegenerateGeometryError(
            f"psi1 is antipodal to psi0 (|psi0+psi1| = {conditioning:.2e})"
        )
    return Direction.from_array(b / conditioning), conditioning


def canonicalize_axis(d: Direction, tol: float = 1e-12) -> Direction:
    """Resolve the sign ambiguity: nonnegative z, then nonnegative x, then y."""
    v = d.as_array()
    if v[2] < -tol:
        v = -v
    elif abs(v[2]) <= tol:
        if v[0] < -tol:
            v = -v
        elif abs(v[0]) <= tol and v[1] < 0:
            v = -v
    return Direction.from_array(v)


def axis_angle(a: Direction, b: Direction) -> float:
    """Acute angle between two axes (lines, not arrows), in radians."""
    c = abs(a.dot(b))
    return float(np.arccos(min(1.0, c)))


class AbstractSampler:
    """Outcome counts drawn from the ideal reflection channel."""

    mode = "abstract"

    def __init__(self, true_axis: Direction):
        self.true_axis = true_axis

    def counts(
        self, psi0: np.ndarray, basis: Direction, shots: int, rng: np.random.Generator
    ) -> tuple[int, int]:
        reflected = reflect_bloch(psi0, self.true_axis)
        p = 0.5 * (1.0 + float(np.clip(basis.as_array() @ reflected, -1.0, 1.0)))
        n_plus = int(rng.binomial(shots, p))
        return n_plus, shots - n_plus


class FullChainSampler:
    """Tomographic shot sampler driving the whole chain pipeline.

    One shot prepares the edge qubit of an n-site chain in the requested
    Bloch state (a superposition in the logical frame), runs the ramped
    sensing gate with the field along the true axis, and reads the
    transported qubit along the requested basis.  Gate and readout
    evolutions are linear maps, so they are applied once to the two logical
    basis states and every shot is assembled from cached branch amplitudes.

    Two readout flavours:

    - "frame" (default): Born sampling of the evolved tail against the
      reference-corrected logical frame.  The weight outside the logical
      doublet is the m=0 no-read event; a retry redraws conditionally.
    - "boundary": the hardware-faithful ladder.  The new boundary spin is
      adiabatically decoupled without a field and measured projectively;
      an m=0 outcome rotates the remaining qubit by pi about the basis and
      the protocol retries on the next spin.  Echo holds and a calibration
      rotation (fit against known preparations, the calibration an
      experimenter performs with known fields) remove the deterministic
      transport twist; the remaining contrast loss is physical, because
      total-spin conservation keeps the freed spin unpolarized in the
      singlet sector and the readout rides on cross-sector coherence.
    """

    mode = "full-chain"

    def __init__(
        self,
        true_axis: Direction,
        n: int = 8,
        J: float = 1.0,
        J_f: float = 1.0,
        gate_time: float = 10.0,
        gate_dt: float = 0.01,
        readout: str = "frame",
        readout_time: float = 10.0,
        readout_dt: float = 0.02,
        max_retries: int = 2,
        order: int = 2,
        solver_seed: int = 0,
        calibrate: bool = True,
    ):
        from . import edge_logic as el
        from . import eigensolver as es
        from . import evolution as ev
        from .chain_model import CouplingConstants, GateSchedule, heisenberg
        from .spin_algebra import Z_AXIS

        if n < 6:
            raise ValueError("the full-chain sampler needs at least 6 sites")
        if readout not in ("frame", "boundary"):
            raise ValueError("readout must be 'frame' or 'boundary'")
        self.true_axis = true_axis
        self.n = n
        self.readout_mode = readout
        self._ev = ev
        self._el = el
        self._couplings = CouplingConstants(J, J_f)
        self._readout = (readout_time, readout_dt)
        self._order = order
        self.max_retries = int(min(max_retries, n - 6))

        rep = es.ground_space(heisenberg(1, n, J), seed=solver_seed)
        doublet = el.right_edge_doublet(rep.quartet_states, n)
        self.prep_frame = el.logical_frame(doublet, Z_AXIS, 1, n)

        sched = GateSchedule.linear(gate_time, gate_dt, true_axis, 1)
        gate0 = ev.trotter_evolve(self.prep_frame.zero_state, sched, self._couplings, order=order)
        gate1 = ev.trotter_evolve(self.prep_frame.one_state, sched, self._couplings, order=order)
        self._gate_pair = (gate0.final_state, gate1.final_state)

        self.calibration = np.eye(3)
        self.contrast = 1.0
        self.outcome_flip = False
        self.readout_wait = (0.0, 0.0)
        self._gram_cache: dict = {}
        self._branch_cache: dict = {}

        if readout == "frame":
            flow = ev.adiabatic_flow(n, J, J_f, gate_time, true_axis, solver_seed=solver_seed)
            self._readout_frame = ev.reference_corrected_tail_frame(flow, self.prep_frame)
            self._frame_gram_cache: dict = {}
        else:
            b0 = ev.run_decoupling(
                self._gate_pair[0], 2, n, self._couplings, readout_time, readout_dt, order
            ).final_state
            b1 = ev.run_decoupling(
                self._gate_pair[1], 2, n, self._couplings, readout_time, readout_dt, order
            ).final_state
            self._level0 = (b0, b1)
            if calibrate:
                self._tune_readout_wait()
                self._calibrate()

    def _spinor(self, psi0: np.ndarray) -> tuple[complex, complex]:
        v = np.asarray(psi0, dtype=float)
        nrm = np.linalg.norm(v)
        if nrm > 1.0 + 1e-9:
            raise ValueError("Bloch vector norm must be <= 1")
        theta = np.arccos(np.clip(v[2] / max(nrm, 1e-300), -1.0, 1.0))
        phi = float(np.arctan2(v[1], v[0]))
        return np.cos(theta / 2.0), np.exp(1j * phi) * np.sin(theta / 2.0)

    def _projectors(self, basis: Direction):
        from .edge_logic import _site_projectors

        return _site_projectors(basis)

    def _basis_key(self, basis: Direction):
        return tuple(np.round(basis.as_array(), 9))

    def _branches(self, basis: Direction, level: int):
        """Unnormalized branch state pair after `level` failed readouts."""
        if level == 0:
            return self._level0
        key = (self._basis_key(basis), level)
        if key in self._branch_cache:
            return self._branch_cache[key]
        from .spin_algebra import apply_site_operator

        prev0, prev1 = self._branches(basis, level - 1)
        site = 1 + level  # the spin measured at the previous level
        p0 = self._projectors(basis)[0]
        states = []
        for prev in (prev0, prev1):
            projected = apply_site_operator(prev, p0, site, self.n)
            w = np.linalg.norm(projected)
            if w < 1e-15:
                states.append(np.zeros_like(projected))
                continue
            # the evolution renormalizes, so carry the branch weight explicitly
            res = self._ev.trotter_evolve(
                projected / w,
                self._decoupling_schedule(site + 1),
                self._couplings,
                order=self._order,
            )
            tau_field, tau_free = self.readout_wait
            evolved = self._wait(res.final_state, site + 1, tau_free, with_field=False)
            evolved = self._wait(evolved, site + 1, tau_field, with_field=True)
            states.append(evolved * w)
        pair = (states[0], states[1])
        self._branch_cache[key] = pair
        return pair

    def _decoupling_schedule(self, boundary_site: int):
        from .chain_model import GateSchedule

        rt, rdt = self._readout
        return GateSchedule.decoupling(rt, rdt, boundary_site)

    def _grams(self, basis: Direction, level: int):
        """2x2 Gram matrices of the three outcome projectors at a level."""
        key = (self._basis_key(basis), level)
        if key in self._gram_cache:
            return self._gram_cache[key]
        from .spin_algebra import apply_site_operator

        b0, b1 = self._branches(basis, level)
        site = 2 + level
        projs = self._projectors(basis)
        grams = {}
        for m, p3 in projs.items():
            pb0 = apply_site_operator(b0, p3, site, self.n)
            pb1 = apply_site_operator(b1, p3, site, self.n)
            grams[m] = np.array(
                [
                    [np.vdot(pb0, pb0), np.vdot(pb0, pb1)],
                    [np.vdot(pb1, pb0), np.vdot(pb1, pb1)],
                ]
            )
        self._gram_cache[key] = grams
        return grams

    def _level_probabilities(self, alpha: complex, beta: complex, basis: Direction, level: int):
        grams = self._grams(basis, level)
        coef = np.array([alpha, beta])
        probs = {}
        for m, g in grams.items():
            probs[m] = max(float(np.real(coef.conj() @ g @ coef)), 0.0)
        return probs

    def _wait(
        self,
        state: np.ndarray,
        first_site: int,
        tau: float,
        with_field: bool = False,
        dt: float = 0.05,
    ) -> np.ndarray:
        """Hold under the static chain on sites first_site..n.

        With `with_field` the quadratic field coupling (S^a)^2 acts on every
        held site as well, which is the canonical extended-field coupling.
        The two hold flavours advance the two deterministic intra-ground-
        space phase differences at independent rates, so a tuned pair of
        holds refocuses the transport dephasing of the gate and readout
        ramps (a spin-echo the instrument performs by simply waiting).
        """
        from .chain_model import HEISENBERG_BOND
        from .spin_algebra import apply_bond_operator, apply_site_operator, spin_along

        steps = int(round(tau / dt))
        if steps == 0:
            return state
        from .evolution import _expm_factor

        bonds = list(range(first_site, self.n))
        even = bonds[0::2]
        odd = bonds[1::2]
        u_half = _expm_factor(self._couplings.J * HEISENBERG_BOND, 0.5 * dt)
        u_site = None
        if with_field:
            s3 = spin_along(self.true_axis)
            u_site = _expm_factor(self._couplings.J_f * (s3 @ s3), dt)
        psi = state
        for _ in range(steps):
            for j in even:
                psi = apply_bond_operator(psi, u_half, j, self.n)
            for j in odd:
                psi = apply_bond_operator(psi, u_half, j, self.n)
            if u_site is not None:
                for j in range(first_site, self.n + 1):
                    psi = apply_site_operator(psi, u_site, j, self.n)
            for j in odd:
                psi = apply_bond_operator(psi, u_half, j, self.n)
            for j in even:
                psi = apply_bond_operator(psi, u_half, j, self.n)
        return psi

    def _fit_map(self):
        """Least-squares Bloch-to-readout map on cardinal preparations."""
        from .spin_algebra import X_AXIS, Y_AXIS, Z_AXIS

        preps = [
            np.array([0.0, 0.0, 1.0]),
            np.array([0.0, 0.0, -1.0]),
            np.array([1.0, 0.0, 0.0]),
            np.array([-1.0, 0.0, 0.0]),
            np.array([0.0, 1.0, 0.0]),
            np.array([0.0, -1.0, 0.0]),
        ]
        bases = (X_AXIS, Y_AXIS, Z_AXIS)
        targets = []
        measured = []
        for r in preps:
            alpha, beta = self._spinor(r)
            q = np.zeros(3)
            for i, basis in enumerate(bases):
                probs = self._level_probabilities(alpha, beta, basis, 0)
                denom = probs[+1] + probs[-1]
                q[i] = (probs[+1] - probs[-1]) / denom if denom > 0 else 0.0
            targets.append(reflect_bloch(r, self.true_axis))
            measured.append(q)
        t = np.array(targets).T
        q = np.array(measured).T
        return q @ t.T @ np.linalg.inv(t @ t.T)

    def _contrast_of(self, pair) -> float:
        self._level0 = pair
        self._gram_cache.clear()
        m = self._fit_map()
        return float(np.mean(np.abs(np.linalg.svd(m, compute_uv=False))))

    def _scan_hold(self, base_pair, with_field: bool, tau_max: float, step: float):
        """Incremental contrast scan along one hold duration."""
        cur = base_pair
        best_tau, best_c, best_pair = 0.0, self._contrast_of(cur), cur
        tau = 0.0
        while tau < tau_max - 1e-9:
            tau += step
            cur = tuple(self._wait(s, 2, step, with_field=with_field) for s in cur)
            c = self._contrast_of(cur)
            if c > best_c:
                best_tau, best_c, best_pair = tau, c, cur
        return best_tau, best_c, best_pair

    def _tune_readout_wait(self, tau_max: float = 24.0, step: float = 0.5):
        """Pick the post-ramp holds that maximize the readout contrast.

        First the field-free hold (refocusing the singlet-triplet phase of
        the readout ramp), then a field-on hold on top of it (refocusing the
        axis-anisotropic phase picked up during the gate ramp).
        """
        raw = self._level0
        tau_free, _, pair_free = self._scan_hold(raw, with_field=False, tau_max=tau_max, step=step)
        tau_field, best, pair_best = self._scan_hold(
            pair_free, with_field=True, tau_max=tau_max, step=step
        )
        self.readout_wait = (tau_field, tau_free)
        self._level0 = pair_best
        self._gram_cache.clear()
        self._branch_cache.clear()

    def _calibrate(self):
        """Fit the effective Bloch-to-readout map on cardinal preparations.

        The boundary-spin outcome anti-tracks the logical state, so the
        fitted linear map is improper; its overall sign becomes the outcome
        flip and the polar rotation of the rest is the deterministic
        transport twist.  Requested bases are rotated by the twist before
        the physical measurement; the symmetric part (readout contrast) is
        reported but not corrected.
        """
        m = self._fit_map()
        self.outcome_flip = bool(np.linalg.det(m) < 0)
        m_eff = -m if self.outcome_flip else m
        u, s, vt = np.linalg.svd(m_eff)
        rot = u @ vt
        if np.linalg.det(rot) < 0:
            raise RuntimeError(
                "calibration found a non-orientable readout map; the chain "
                "transport is too degraded to define a readout frame"
            )
        self.calibration = rot
        self.contrast = float(np.mean(s))

    def _frame_grams(self, basis: Direction):
        """Gram matrices of the tail-frame readout projectors for one basis.

        The +-1 outcomes project the tail onto the corrected-frame states
        along +-basis; the remainder (leakage outside the logical doublet)
        is the no-read m=0 channel that triggers a retry.
        """
        key = self._basis_key(basis)
        if key in self._frame_gram_cache:
            return self._frame_gram_cache[key]
        fr = self._readout_frame
        v_frame = fr.lab_to_frame(basis.as_array())
        plus = fr.spinor_state(v_frame)
        minus = fr.spinor_state(-v_frame)
        grams = {}
        tail_dim = 3 ** (self.n - 1)
        for m, vec in ((+1, plus), (-1, minus)):
            amp = [
                np.asarray(w).reshape(3, tail_dim) @ vec.conj() for w in self._gate_pair
            ]
            g = np.array(
                [
                    [np.vdot(amp[0], amp[0]), np.vdot(amp[0], amp[1])],
                    [np.vdot(amp[1], amp[0]), np.vdot(amp[1], amp[1])],
                ]
            )
            grams[m] = g
        self._frame_gram_cache[key] = grams
        return grams

    def outcome_statistics(self, psi0: np.ndarray, basis: Direction):
        """Per-level conditional outcome probabilities for one shot.

        In frame mode there is a single level: the +-1 weights are the Born
        probabilities of the corrected-frame states along the basis and the
        m=0 weight is the leakage outside the logical doublet (the no-read
        event; a retry redraws conditionally).  In boundary mode the levels
        walk the physical decouple-measure-retry ladder with the calibrated
        basis.
        """
        alpha, beta = self._spinor(psi0)
        if self.readout_mode == "frame":
            grams = self._frame_grams(basis)
            coef = np.array([alpha, beta])
            p_plus = max(float(np.real(coef.conj() @ grams[+1] @ coef)), 0.0)
            p_minus = max(float(np.real(coef.conj() @ grams[-1] @ coef)), 0.0)
            p_zero = max(1.0 - p_plus - p_minus, 0.0)
            return [{+1: p_plus, 0: p_zero, -1: p_minus}]
        basis_phys = Direction.from_array(self.calibration @ basis.as_array(), normalize=True)
        levels = []
        for level in range(self.max_retries + 1):
            probs = self._level_probabilities(alpha, beta, basis_phys, level)
            total = probs[+1] + probs[0] + probs[-1]
            if total <= 0:
                break
            if self.outcome_flip:
                probs = {+1: probs[-1], 0: probs[0], -1: probs[+1]}
            levels.append({m: probs[m] / total for m in (+1, 0, -1)})
        return levels

    def counts(
        self, psi0: np.ndarray, basis: Direction, shots: int, rng: np.random.Generator
    ) -> tuple[int, int]:
        levels = self.outcome_statistics(psi0, basis)
        n_plus = 0
        n_minus = 0
        pending = shots
        for cond in levels:
            if pending == 0:
                break
            drawn = rng.multinomial(pending, [cond[+1], cond[0], cond[-1]])
            n_plus += int(drawn[0])
            n_minus += int(drawn[2])
            pending = int(drawn[1])
        if pending:
            # retries exhausted: the pi rotation about the measurement axis
            # preserves the +-1 ratio, so draw from the last conditional
            cond = levels[-1]
            p = cond[+1] / (cond[+1] + cond[-1])
            extra = int(rng.binomial(pending, p))
            n_plus += extra
            n_minus += pending - extra
        return n_plus, n_minus


def sample_edge_readout(
    true_axis: Direction,
    psi0: np.ndarray,
    basis: Direction,
    rng: np.random.Generator,
    mode: str = "abstract",
    chain_sampler=None,
) -> int:
    """One +-1 readout of the reflected probe along the given basis."""
    if mode == "abstract":
        sampler = AbstractSampler(true_axis)
    elif mode == "full-chain":
        if chain_sampler is None:
            raise ValueError("full-chain mode needs a prepared FullChainSampler")
        sampler = chain_sampler
    else:
        raise ValueError(f"unknown mode {mode!r}")
    n_plus, _ = sampler.counts(psi0, basis, 1, rng)
    return +1 if n_plus else -1


def _ml_bloch(count_list: list[tuple[np.ndarray, int, int]]) -> np.ndarray:
    """Constrained maximum-likelihood Bloch vector from basis counts.

    count_list holds (basis_vector, n_plus, n_minus) triples.  The estimate
    maximizes the binomial likelihood over the closed unit ball.
    """
    bases = np.array([c[0] for c in count_list], dtype=float)
    n_plus = np.array([c[1] for c in count_list], dtype=float)
    n_minus = np.array([c[2] for c in count_list], dtype=float)

    # weighted linear inversion as the starting point
    totals = n_plus + n_minus
    ok = totals > 0
    means = np.zeros(len(totals))
    means[ok] = (n_plus[ok] - n_minus[ok]) / totals[ok]
    x0, *_ = np.linalg.lstsq(bases[ok] * np.sqrt(totals[ok])[:, None],
                             means[ok] * np.sqrt(totals[ok]), rcond=None)
    nrm = np.linalg.norm(x0)
    if nrm > 0.999:
        x0 = x0 * (0.999 / nrm)

    eps = 1e-9

    def neg_loglik(r):
        proj = np.clip(bases @ r, -1.0 + eps, 1.0 - eps)
        return -float(np.sum(n_plus * np.log1p(proj) + n_minus * np.log1p(-proj)))

    def grad(r):
        proj = np.clip(bases @ r, -1.0 + eps, 1.0 - eps)
        coef = n_plus / (1.0 + proj) - n_minus / (1.0 - proj)
        return -(bases.T @ coef)

    res = minimize(
        neg_loglik,
        x0,
        jac=grad,
        method="SLSQP",
        constraints=[{"type": "ineq", "fun": lambda r: 1.0 - r @ r, "jac": lambda r: -2.0 * r}],
        options={"maxiter": 200, "ftol": 1e-12},
    )
    r = res.x if res.success else x0
    nrm = np.linalg.norm(r)
    if nrm > 1.0:
        r = r / nrm
    return r


def _split_shots(total: int, ways: int) -> list[int]:
    base = total // ways
    out = [base] * ways
    for i in range(total - base * ways):
        out[i] += 1
    return out


@dataclass
class TomographyEstimate:
    bloch: np.ndarray
    crude: np.ndarray
    counts: list


def adaptive_tomography(
    N: int,
    sampler_counts: Callable[[Direction, int, np.random.Generator], tuple[int, int]],
    rng: np.random.Generator,
) -> TomographyEstimate:
    """Two-phase single-adaptive-step tomography of an unknown qubit state.

    Phase one spends N/2 shots on the three laboratory axes for a crude
    estimate; phase two measures along a triad adapted to it (one basis
    aligned, two orthogonal).  The final estimate is the ball-constrained
    maximum-likelihood Bloch vector over all counts, whose mean infidelity
    to a pure state scales as 1/N.
    """
    from .spin_algebra import X_AXIS, Y_AXIS, Z_AXIS

    if N < 6:
        raise ValueError("adaptive tomography needs at least 6 samples")
    n1 = N // 2
    counts: list[tuple[np.ndarray, int, int]] = []
    for basis, shots in zip((X_AXIS, Y_AXIS, Z_AXIS), _split_shots(n1, 3)):
        np_, nm = sampler_counts(basis, shots, rng)
        counts.append((basis.as_array(), np_, nm))
    crude = _ml_bloch(counts)

    if np.linalg.norm(crude) > 1e-6:
        u1 = Direction.from_array(crude, normalize=True)
    else:
        u1 = Z_AXIS
    u2 = orthogonal_direction(u1)
    u3 = Direction.from_array(np.cross(u1.as_array(), u2.as_array()), normalize=True)
    for basis, shots in zip((u1, u2, u3), _split_shots(N - n1, 3)):
        np_, nm = sampler_counts(basis, shots, rng)
        counts.append((basis.as_array(), np_, nm))
    return TomographyEstimate(bloch=_ml_bloch(counts), crude=crude, counts=counts)


@dataclass
class EstimationRecord:
    """One direction-estimation trial."""

    sample_count: int
    axis_estimate: Direction
    angular_error: Optional[float]
    seed: int
    mode: str
    conditioning: float
    reoriented: bool = False
    degenerate: bool = False


# conditioning threshold above which the reflection barely moves the probe
# (probe nearly on the axis); the adaptive step then re-orients to right
# angles with the estimated axis for maximum action of the rotation
HIGH_CONDITIONING = 1.90


def _estimate_axis_one_trial(
    N: int,
    sampler,
    psi0: np.ndarray,
    rng: np.random.Generator,
) -> tuple[Direction, float, bool, bool]:
    """Two-phase axis estimation with the adaptive re-orientation fallback."""
    from .spin_algebra import X_AXIS, Y_AXIS, Z_AXIS

    n1 = N // 2
    counts1: list[tuple[np.ndarray, int, int]] = []
    for basis, shots in zip((X_AXIS, Y_AXIS, Z_AXIS), _split_shots(n1, 3)):
        np_, nm = sampler.counts(psi0, basis, shots, rng)
        counts1.append((basis.as_array(), np_, nm))
    crude = _ml_bloch(counts1)

    b_crude = psi0 + crude
    conditioning = float(np.linalg.norm(b_crude))
    if conditioning > 1e-9:
        axis_guess = Direction.from_array(b_crude, normalize=True)
    else:
        axis_guess = orthogonal_direction(Direction.from_array(psi0, normalize=True))
        conditioning = 0.0

    reoriented = conditioning > HIGH_CONDITIONING or conditioning < 1e-6
    probe2 = orthogonal_direction(axis_guess).as_array() if reoriented else psi0

    pred = reflect_bloch(probe2, axis_guess)
    u1 = Direction.from_array(pred, normalize=True)
    u2 = orthogonal_direction(u1)
    u3 = Direction.from_array(np.cross(u1.as_array(), u2.as_array()), normalize=True)
    counts2: list[tuple[np.ndarray, int, int]] = []
    for basis, shots in zip((u1, u2, u3), _split_shots(N - n1, 3)):
        np_, nm = sampler.counts(probe2, basis, shots, rng)
        counts2.append((basis.as_array(), np_, nm))

    degenerate = False
    if reoriented:
        # right-angle geometry: the bisector of (probe2, reflection) is nearly
        # degenerate by design, but its component along the axis estimate
        # measures the tilt of the true axis toward the probe; the orthogonal
        # tilt component is invisible here and keeps its phase-one value
        est2 = _ml_bloch(counts2)
        b2 = probe2 + est2
        tilt = 0.5 * float(b2 @ axis_guess.as_array())
        refined = axis_guess.as_array() + tilt * probe2
        axis = Direction.from_array(refined, normalize=True)
    else:
        est2 = _ml_bloch(counts1 + counts2)
        try:
            axis, cond2 = axis_from_pair(probe2, est2)
            conditioning = min(conditioning, cond2)
        except DegenerateGeometryError:
            # antipodal reflection: the data only fixes the plane orthogonal
            # to the probe, so keep that component of the crude guess
            degenerate = True
            g = axis_guess.as_array()
            g_perp = g - (g @ probe2) * probe2
            if np.linalg.norm(g_perp) > 1e-9:
                axis = Direction.from_array(g_perp, normalize=True)
            else:
                axis = orthogonal_direction(Direction.from_array(probe2, normalize=True))
    return axis, conditioning, reoriented, degenerate


def direction_experiment(
    N: int,
    trials: int,
    seed: int = 0,
    true_axis: Optional[Direction] = None,
    psi0: Optional[np.ndarray] = None,
    mode: str = "abstract",
    chain_sampler_factory: Optional[Callable[[Direction], object]] = None,
) -> list[EstimationRecord]:
    """Repeated axis estimation from N-shot tomography of the reflected probe.

    With true_axis None (the default) each trial draws an isotropic axis,
    matching the regime of an unknown field direction; the recorded angular
    error is measured against that trial's axis.  Per-trial seeds derive
    from the root seed by the splitmix scheme, so trials are reproducible
    and order independent.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    psi0 = np.array([0.0, 0.0, 1.0]) if psi0 is None else np.asarray(psi0, dtype=float)
    records = []
    for t in range(trials):
        trial_rng = np.random.default_rng(mix_seed(seed, t))
        axis_t = true_axis if true_axis is not None else random_direction(trial_rng)
        if mode == "abstract":
            sampler = AbstractSampler(axis_t)
        elif mode == "full-chain":
            if chain_sampler_factory is None:
                raise ValueError("full-chain mode needs a chain sampler factory")
            sampler = chain_sampler_factory(axis_t)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        axis, conditioning, reoriented, degenerate = _estimate_axis_one_trial(
            N, sampler, psi0, trial_rng
        )
        axis = canonicalize_axis(axis)
        records.append(
            EstimationRecord(
                sample_count=N,
                axis_estimate=axis,
                angular_error=axis_angle(axis, axis_t),
                seed=mix_seed(seed, t),
                mode=mode,
                conditioning=conditioning,
                reoriented=reoriented,
                degenerate=degenerate,
            )
        )
    return records


def total_field_direction(
    E_f: float, m_f: Direction, E_b: float, m_b: Direction
) -> Direction:
    """Direction of the vector sum of the unknown field and the background."""
    if E_f < 0 or E_b < 0:
        raise ValueError("field strengths must be nonnegative")
    total = E_b * m_b.as_array() + E_f * m_f.as_array()
    nrm = np.linalg.norm(total)
    if nrm < 1e-12:
        raise ValueError("total field vanishes; direction undefined")
    return Direction.from_array(total / nrm)


@dataclass
class FieldReconstruction:
    """Unknown-field strength and direction recovered from two backgrounds."""

    E_f: float
    m_f: Direction
    residual: float
    total_magnitudes: tuple[float, float]
    warnings: tuple[str, ...] = ()


def reconstruct_field(
    obs1: Direction,
    obs2: Direction,
    bg1: tuple[float, Direction],
    bg2: tuple[float, Direction],
    strength_ratio_floor: float = 10.0,
) -> FieldReconstruction:
    """Solve for the unknown field from two total-axis observations.

    Each round i satisfies t_i * obs_i = E_b,i * m_b,i + w with w = E_f m_f;
    the observed axes are sign-resolved toward their background (valid when
    the background dominates) and the five unknowns (t_1, t_2, w) come from
    linear least squares on the six equations.
    """
    e1, d1 = bg1
    e2, d2 = bg2
    if e1 <= 0 or e2 <= 0:
        raise ValueError("background strengths must be positive")
    if abs(d1.dot(d2)) > 1.0 - 1e-9 and abs(e1 - e2) < 1e-12 * max(e1, e2):
        raise RankDeficientError("the two background fields must differ")

    o1 = obs1.as_array()
    o2 = obs2.as_array()
    if o1 @ d1.as_array() < 0:
        o1 = -o1
    if o2 @ d2.as_array() < 0:
        o2 = -o2

    a = np.zeros((6, 5))
    rhs = np.zeros(6)
    a[0:3, 0] = o1
    a[0:3, 2:5] = -np.eye(3)
    rhs[0:3] = e1 * d1.as_array()
    a[3:6, 1] = o2
    a[3:6, 2:5] = -np.eye(3)
    rhs[3:6] = e2 * d2.as_array()

    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        raise RankDeficientError(
            f"reconstruction system is rank deficient (condition {sv[0] / max(sv[-1], 1e-300):.2e})"
        )
    x, res, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    residual = float(np.linalg.norm(a @ x - rhs))
    t1, t2 = float(x[0]), float(x[1])
    w = x[2:5]
    e_f = float(np.linalg.norm(w))

    warnings = []
    ratio = min(e1, e2) / max(e_f, 1e-300)
    if ratio < strength_ratio_floor:
        warnings.append(
            f"background only {ratio:.1f}x stronger than the recovered field; "
            "sign resolution of the observed axes may be unreliable"
        )
    if t1 <= 0 or t2 <= 0:
        warnings.append("a recovered total-field magnitude is nonpositive")
    if e_f > 1e-12:
        m_f = Direction.from_array(w / e_f)
    else:
        m_f = Direction(0.0, 0.0, 1.0)
        warnings.append("recovered field strength is numerically zero; direction defaulted")
    return FieldReconstruction(
        E_f=e_f,
        m_f=m_f,
        residual=residual,
        total_magnitudes=(t1, t2),
        warnings=tuple(warnings),
    )


@dataclass
class ReconstructionRecord:
    sample_count: int
    E_f_estimate: float
    m_f_estimate: Direction
    angular_error: float
    relative_strength_error: float
    residual: float
    seed: int
    warnings: tuple[str, ...]


def reconstruction_experiment(
    E_f: float,
    m_f: Direction,
    bg1: tuple[float, Direction],
    bg2: tuple[float, Direction],
    N: int,
    trials: int,
    seed: int = 0,
    noiseless: bool = False,
) -> list[ReconstructionRecord]:
    """Two-round background-field scheme with sampled (or exact) observations.

    Per round the total-field axis is estimated with the standard two-phase
    protocol using a probe at forty-five degrees to the known background,
    which keeps the bisector geometry well conditioned.
    """
    records = []
    for t in range(trials):
        trial_rng = np.random.default_rng(mix_seed(seed, t))
        observations = []
        for e_b, d_b in (bg1, bg2):
            truth = total_field_direction(E_f, m_f, e_b, d_b)
            if noiseless:
                observations.append(truth)
                continue
            probe = d_b.as_array() + orthogonal_direction(d_b).as_array()
            probe = probe / np.linalg.norm(probe)
            sampler = AbstractSampler(truth)
            axis, _, _, _ = _estimate_axis_one_trial(N, sampler, probe, trial_rng)
            observations.append(axis)
        rec = reconstruct_field(observations[0], observations[1], bg1, bg2)
        records.append(
            ReconstructionRecord(
                sample_count=N,
                E_f_estimate=rec.E_f,
                m_f_estimate=rec.m_f,
                angular_error=axis_angle(rec.m_f, m_f),
                relative_strength_error=abs(rec.E_f - E_f) / max(E_f, 1e-300),
                residual=rec.residual,
                seed=mix_seed(seed, t),
                warnings=rec.warnings,
            )
        )
    return records
