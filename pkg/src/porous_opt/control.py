"""Objective, reduced gradient, projection, and the active-set outer loop.

The discrete objective uses right-endpoint time quadrature (matching the
backward-Euler state discretization), so node 0 carries zero weight; the
same weights define the duality pairing used in gradient checks.  The
per-node activity value

    v^n = -(1/alpha0) * int_Omega [ f(C^n) r0 C*^n - (r0 - r1) P*^n ] dx

classifies each control node: lower-active when v < 0, upper-active when
v > qhat, inactive otherwise (ties inactive), and the update writes 0, qhat,
or v accordingly -- identical to clamping v into [0, qhat] nodewise.  The
outer loop stops when two successive classifications coincide and the
control has stopped moving (tolerance ``q_tol``), or at ``kmax`` sweeps;
hitting the cap returns a flagged result rather than raising.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import SEL, AssemblyWorkspace
from .errors import ConfigError
from .fespaces import P1_MASS
from .solver import Problem, Trajectory, run_adjoint, run_forward


def time_weights(n_steps, dt):
    """Right-endpoint quadrature weights on the fine grid (node 0 gets 0)."""
    w = np.full(n_steps + 1, dt)
    w[0] = 0.0
    return w


def objective(traj: Trajectory, wells, mesh) -> tuple:
    """Discrete objective J and its (state, control-cost) parts."""
    N = traj.fine_times.size - 1
    dt = traj.fine_times[1] - traj.fine_times[0]
    wts = time_weights(N, dt)
    state_term = 0.0
    for n in range(1, N + 1):
        wv = wells.w(traj.fine_times[n])
        if wv == 0.0:
            continue
        c2 = float(
            np.einsum("t,ti,ij,tj->", mesh.tri_area, traj.C[n], P1_MASS, traj.C[n])
        )
        state_term += 0.5 * wts[n] * wv * c2
    control_term = 0.5 * wells.alpha0 * float(np.sum(wts * traj.q**2))
    return state_term + control_term, state_term, control_term


def _coarse_index(n, substeps):
    """Coarse interval owner of fine node n (right-endpoint convention)."""
    if n == 0:
        return 0
    return (n + substeps - 1) // substeps


def gradient_without_penalty(traj: Trajectory, wells, model,
                             ws: AssemblyWorkspace) -> np.ndarray:
    """Per-node integrals g_wo^n = int f(C^n) r0 C*^n - (r0 - r1) P*^n dx."""
    if not traj.has_costate:
        raise ConfigError("adjoint sweep missing: run_adjoint first")
    mesh = ws.mesh
    N = traj.fine_times.size - 1
    substeps = (N) // (traj.coarse_times.size - 1)
    inj = wells.injection_tris
    prod = wells.production_tris
    area = mesh.tri_area

    out = np.empty(N + 1)
    for n in range(N + 1):
        csub = np.einsum("tcqj,tj->tcq", ws.sub_lam[inj], traj.C[n][inj])
        cssub = np.einsum("tcqj,tj->tcq", ws.sub_lam[inj], traj.Cstar[n][inj])
        fterm = float(
            np.einsum("tcq,tcq->", ws.sub_w[inj], model.f(csub) * cssub)
        ) / wells.sigma0
        m = _coarse_index(n, substeps)
        pstar = traj.Pstar[m]
        pterm = (
            float(pstar[inj] @ area[inj]) / wells.sigma0
            - float(pstar[prod] @ area[prod]) / wells.sigma1
        )
        out[n] = fterm - pterm
    return out


def reduced_gradient_density(traj: Trajectory, wells, model,
                             ws: AssemblyWorkspace) -> np.ndarray:
    """Nodewise reduced gradient g^n = g_wo^n + alpha0 q^n."""
    return gradient_without_penalty(traj, wells, model, ws) + wells.alpha0 * traj.q


def project_control(g_without_penalty, alpha0, qhat) -> np.ndarray:
    """Pointwise projection q = clamp(-g_wo / alpha0, 0, qhat)."""
    if alpha0 <= 0.0:
        raise ConfigError("alpha0 must be > 0 for the projection formula")
    return np.clip(-np.asarray(g_without_penalty) / alpha0, 0.0, qhat)


@dataclass
class ActiveSetState:
    """Classification of the control nodes at one outer iteration."""

    lower: np.ndarray   # bool, unconstrained value < 0
    upper: np.ndarray   # bool, unconstrained value > qhat
    k: int = 0

    @property
    def inactive(self):
        return ~(self.lower | self.upper)

    def counts(self):
        return int(self.lower.sum()), int(self.upper.sum()), int(self.inactive.sum())

    def same_sets(self, other) -> bool:
        return bool(
            np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )


def classify_active_sets(values, qhat, k=0) -> ActiveSetState:
    """Classify nodes by the unconstrained activity values (ties inactive)."""
    v = np.asarray(values, dtype=float)
    return ActiveSetState(lower=v < 0.0, upper=v > qhat, k=k)


def update_control(state: ActiveSetState, values, qhat) -> np.ndarray:
    """Active-set update: 0 on lower, qhat on upper, the value elsewhere."""
    v = np.asarray(values, dtype=float)
    return np.where(state.lower, 0.0, np.where(state.upper, qhat, v))


@dataclass
class OptimizeResult:
    q: np.ndarray
    trajectory: Trajectory
    history: list
    converged: bool
    iterations: int
    projected_gradient_residual: float
    active_sets: Optional[ActiveSetState] = None
    history_columns: tuple = (
        "k", "J", "n_lower", "n_upper", "dq_norm"
    )


def optimize(problem: Problem, q0=None) -> OptimizeResult:
    """Active-set iteration on the box-constrained injection control.

    Each sweep solves the full state system forward and the costate system
    backward at the current control, classifies every time node by its
    activity value, and projects.  On return the trajectory and residual
    are recomputed at the final control so all reported quantities are
    mutually consistent.
    """
    wells = problem.wells
    q = problem.q_initial() if q0 is None else np.asarray(q0, dtype=float).copy()
    history = []
    prev_state = None
    converged = False
    iterations = 0

    for k in range(problem.rc.kmax):
        traj = run_forward(problem, q)
        run_adjoint(problem, traj)
        J, _, _ = objective(traj, wells, problem.mesh)
        gwo = gradient_without_penalty(traj, wells, problem.model, problem.ws)
        values = -gwo / wells.alpha0
        state_k = classify_active_sets(values, wells.qhat, k=k)
        q_new = update_control(state_k, values, wells.qhat)
        dq = float(np.max(np.abs(q_new - q)))
        nl, nu, _ = state_k.counts()
        history.append({"k": k, "J": J, "n_lower": nl, "n_upper": nu, "dq_norm": dq})
        iterations = k + 1
        q = q_new
        if prev_state is not None and state_k.same_sets(prev_state) and dq <= problem.rc.q_tol:
            converged = True
            break
        prev_state = state_k

    final = run_forward(problem, q)
    run_adjoint(problem, final)
    g = reduced_gradient_density(final, wells, problem.model, problem.ws)
    residual = float(
        np.max(np.abs(q - np.clip(q - g, 0.0, wells.qhat)))
    )
    return OptimizeResult(
        q=q,
        trajectory=final,
        history=history,
        converged=converged,
        iterations=iterations,
        projected_gradient_residual=residual,
        active_sets=prev_state if prev_state is not None else None,
    )
