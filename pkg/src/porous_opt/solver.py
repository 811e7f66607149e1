"""Linear solves and the two-grid time-splitting sweeps.

The Darcy saddle systems (state and costate share the velocity matrix at a
given coarse time) are solved by sparse LU with the zero-mean pressure
constraint appended as a Lagrange multiplier row/column; factorizations are
cached per coarse step and reused by the costate solve.  The saturation
equation is advanced by backward Euler on the fine grid with coefficients
lagged to the previous fine level, and the costate saturation is marched
backward with the eta mass matrix as the system matrix, everything else
lagged to the departure level.

Velocities are interpolated in time between the two grids: at coarse nodes
the node value is used; inside a coarse interval the state velocity is the
linear extrapolation through the two most recent coarse values, and the
costate velocity the time-mirrored extrapolation through the two next
coarse values (each sweep only ever consumes values it has already
computed).
"""

import time as _time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    AssemblyWorkspace,
    assemble_darcy,
    assemble_darcy_costate_rhs,
    assemble_diamond_vector_load,
    assemble_dual_scalar_load,
    assemble_saturation_costate,
    assemble_saturation_state,
    eta_mass_matrix,
    well_source_vector,
)
from .errors import CompatibilityError, PorousOptError, SolverError
from .fespaces import P0Field, P1DGField, RT0Field
from .mesh import PrimalMesh, build_barycentric_dual, build_diamond_dual
from .model import CoefficientModel, RunConfig, WellModel
from .quadrature import QuadratureRule


@dataclass
class SaddleSolveReport:
    """Diagnostics of one Darcy saddle solve."""

    residual: float
    mass_residual: float
    reused_factorization: bool
    wall_time: float


class DarcySaddle:
    """Factorized saddle system [[A, -B^T, 0], [B, 0, a], [0, a^T, 0]].

    The trailing row/column carries the element-area vector enforcing the
    zero-mean pressure; the multiplier also absorbs (and reports) any
    right-hand-side incompatibility.
    """

    def __init__(self, A, B, mesh: PrimalMesh, tol=1e-10):
        self.mesh = mesh
        self.tol = tol
        n_int = A.shape[0]
        n_t = B.shape[0]
        a = sp.csr_matrix(mesh.tri_area.reshape(n_t, 1))
        K = sp.bmat([[A, -B.T, None], [B, None, a], [None, a.T, None]], format="csc")
        self.n_int = n_int
        self.n_t = n_t
        self.K = K
        try:
            self.lu = spla.splu(K)
        except RuntimeError as exc:  # pragma: no cover - singular input
            raise SolverError(f"Darcy saddle factorization failed: {exc}") from exc

    def solve(self, rhs_u, rhs_p, reused=False):
        t0 = _time.perf_counter()
        rhs = np.concatenate([rhs_u, rhs_p, [0.0]])
        x = self.lu.solve(rhs)
        norm = np.linalg.norm(rhs)
        res = np.linalg.norm(self.K @ x - rhs) / (norm if norm > 0 else 1.0)
        for _ in range(2):
            if np.isfinite(res) and res <= self.tol:
                break
            x = x + self.lu.solve(rhs - self.K @ x)
            res = np.linalg.norm(self.K @ x - rhs) / (norm if norm > 0 else 1.0)
        if not np.isfinite(res) or res > self.tol:
            raise SolverError(f"Darcy solve residual {res:.3e} exceeds {self.tol:.1e}")
        u_int = x[: self.n_int]
        p = x[self.n_int : self.n_int + self.n_t]
        mass_res = np.linalg.norm(rhs_p - np.asarray(self.K[self.n_int:-1, : self.n_int] @ u_int).ravel())
        mass_res /= max(np.linalg.norm(rhs_p), 1.0)
        return u_int, p, SaddleSolveReport(
            residual=float(res),
            mass_residual=float(mass_res),
            reused_factorization=reused,
            wall_time=_time.perf_counter() - t0,
        )


def _expand_velocity(mesh, ws, u_int):
    vals = np.zeros(mesh.num_edges)
    vals[ws.ie] = u_int
    return vals


def solve_darcy_state(A, B, F, mesh, ws, *, tol=1e-10, saddle=None, rhs_u=None):
    """Solve the state Darcy saddle system for (velocity, pressure).

    ``F`` must satisfy the zero-sum compatibility of the pure-Neumann
    problem.  Pass a prebuilt :class:`DarcySaddle` to reuse a factorization.
    """
    scale = max(float(np.abs(F).max(initial=0.0)), 1.0)
    if abs(F.sum()) > 1e-10 * scale:
        raise CompatibilityError(
            f"incompatible Darcy source: sum(F) = {F.sum():.3e}"
        )
    reused = saddle is not None
    if saddle is None:
        saddle = DarcySaddle(A, B, mesh, tol)
    ru = np.zeros(A.shape[0]) if rhs_u is None else rhs_u
    u_int, p, report = saddle.solve(ru, F, reused=reused)
    U = RT0Field(mesh, _expand_velocity(mesh, ws, u_int))
    P = P0Field(mesh, p, zero_mean=True)
    return U, P, report, saddle


def solve_darcy_costate(A, B, Fstar, mesh, ws, *, tol=1e-10, saddle=None):
    """Solve the costate Darcy system: velocity load, divergence-free."""
    reused = saddle is not None
    if saddle is None:
        saddle = DarcySaddle(A, B, mesh, tol)
    u_int, p, report = saddle.solve(Fstar, np.zeros(saddle.n_t), reused=reused)
    U = RT0Field(mesh, _expand_velocity(mesh, ws, u_int))
    P = P0Field(mesh, p, zero_mean=True)
    return U, P, report, saddle


def interpolate_velocity(times, fields, t, direction="state"):
    """Velocity coefficients at time ``t`` from coarse-grid snapshots.

    ``times`` is the coarse grid (length M+1) and ``fields`` the matching
    coefficient array (M+1, n_e).  Grid nodes return the stored value; for
    interior times the state direction extrapolates linearly through the two
    preceding snapshots (constant on the first interval) and the costate
    direction through the two following snapshots (constant on the last).
    """
    times = np.asarray(times, dtype=float)
    fields = np.asarray(fields, dtype=float)
    T = times[-1]
    tol = 1e-12 * max(T, 1.0)
    if t < times[0] - tol or t > T + tol:
        raise ValueError(f"time {t} outside [{times[0]}, {T}]")
    hit = np.flatnonzero(np.abs(times - t) <= tol)
    if hit.size:
        return fields[hit[0]].copy()
    m = int(np.searchsorted(times, t))  # times[m-1] < t < times[m]
    if direction == "state":
        if m == 1:
            return fields[0].copy()
        dt_prev = times[m - 1] - times[m - 2]
        s = (t - times[m - 1]) / dt_prev
        return (1.0 + s) * fields[m - 1] - s * fields[m - 2]
    if direction == "costate":
        M = times.size - 1
        if m == M:
            return fields[M].copy()
        dt_next = times[m + 1] - times[m]
        s = (times[m] - t) / dt_next
        return (1.0 + s) * fields[m] - s * fields[m + 1]
    raise ValueError(f"unknown direction {direction!r}")


def _solve_sparse(Amat, rhs, tol, what):
    try:
        lu = spla.splu(Amat.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"{what}: factorization failed: {exc}") from exc
    x = lu.solve(rhs)
    norm = np.linalg.norm(rhs)
    res = np.linalg.norm(Amat @ x - rhs) / (norm if norm > 0 else 1.0)
    for _ in range(2):
        # one or two passes of iterative refinement rescue mildly
        # ill-conditioned steps without changing well-conditioned ones
        if np.isfinite(res) and res <= tol:
            break
        x = x + lu.solve(rhs - Amat @ x)
        res = np.linalg.norm(Amat @ x - rhs) / (norm if norm > 0 else 1.0)
    if not np.isfinite(res) or res > tol:
        est = spla.onenormest(Amat) if Amat.shape[0] < 20000 else np.nan
        raise SolverError(
            f"{what}: residual {res:.3e} exceeds {tol:.1e} (1-norm ~ {est:.3e})"
        )
    return x


def step_saturation_forward(c_vec, D, E, H, G, dt, tol=1e-10):
    """One backward-Euler step of the state saturation equation."""
    lhs = (D + dt * (E + H)).tocsr()
    rhs = D @ c_vec + dt * G
    return _solve_sparse(lhs, rhs, tol, "saturation step")


def step_saturation_backward(cstar_next, D, E, H, S, R, W, Z, dt,
                             tol=1e-10, extra_load=None):
    """One backward-Euler step of the costate saturation equation.

    Solves  [D + dt (-E + H + S + R)] cstar = D cstar_next + dt (W - Z)
    (plus dt times any manufactured load): the operator acts implicitly on
    the unknown earlier-time value, mirroring the forward step, which keeps
    the backward march unconditionally stable.  Lagging the operator to the
    right-hand side instead (mass matrix alone on the left) is an explicit
    treatment of the diffusion and blows up once dt exceeds the parabolic
    CFL bound.
    """
    lhs = (D + dt * (-E + H + S + R)).tocsr()
    rhs = D @ cstar_next + dt * (W - Z)
    if extra_load is not None:
        rhs = rhs + dt * extra_load
    return _solve_sparse(lhs, rhs, tol, "costate saturation step")


@dataclass
class MMSSources:
    """Manufactured source hooks; each maps ((n,2) points, t) to values."""

    s_u: Optional[Callable] = None       # Darcy momentum, vector valued
    s_div: Optional[Callable] = None     # Darcy mass, scalar
    s_c: Optional[Callable] = None       # saturation, scalar
    s_u_star: Optional[Callable] = None  # costate momentum, vector valued
    s_c_star: Optional[Callable] = None  # costate saturation, scalar


@dataclass
class Trajectory:
    """Time-indexed discrete solution of the state (and costate) systems."""

    fine_times: np.ndarray
    coarse_times: np.ndarray
    C: np.ndarray                 # (N+1, n_t, 3)
    U: np.ndarray                 # (M+1, n_e)
    P: np.ndarray                 # (M+1, n_t)
    q: np.ndarray                 # (N+1,)
    Cstar: Optional[np.ndarray] = None
    Ustar: Optional[np.ndarray] = None
    Pstar: Optional[np.ndarray] = None
    darcy_reports: list = field(default_factory=list)
    costate_reports: list = field(default_factory=list)
    costate_div_max: float = np.nan
    saddles: dict = field(default_factory=dict, repr=False)

    def saturation(self, mesh, n) -> P1DGField:
        return P1DGField(mesh, self.C[n])

    def costate_saturation(self, mesh, n) -> P1DGField:
        return P1DGField(mesh, self.Cstar[n])

    def velocity(self, mesh, m) -> RT0Field:
        return RT0Field(mesh, self.U[m])

    def pressure(self, mesh, m) -> P0Field:
        return P0Field(mesh, self.P[m], zero_mean=True)

    @property
    def has_costate(self):
        return self.Cstar is not None


@dataclass
class Problem:
    """A fully assembled problem: meshes, model, wells, config, caches."""

    mesh: PrimalMesh
    diamond: object
    bary: object
    model: CoefficientModel
    wells: WellModel
    rc: RunConfig
    quad: QuadratureRule
    ws: AssemblyWorkspace
    xi: float
    c0_values: np.ndarray
    sources: Optional[MMSSources] = None
    _mass_lu: object = field(default=None, repr=False)
    _mass: object = field(default=None, repr=False)

    @classmethod
    def build(cls, mesh, model, wells, rc: RunConfig, sources=None, c0=None):
        quad = QuadratureRule(rc.tri_quad_degree, rc.edge_quad_degree)
        dd = build_diamond_dual(mesh)
        bd = build_barycentric_dual(mesh)
        ws = AssemblyWorkspace(mesh, dd, bd, model, quad)
        xi = rc.xi if rc.xi is not None else 10.0 * model.d_high
        c0 = rc.c0 if c0 is None else c0
        if callable(c0):
            c0_values = P1DGField.interpolate(mesh, c0).values
        else:
            c0_values = np.full((mesh.num_triangles, 3), float(c0))
        prob = cls(
            mesh=mesh,
            diamond=dd,
            bary=bd,
            model=model,
            wells=wells,
            rc=rc,
            quad=quad,
            ws=ws,
            xi=xi,
            c0_values=c0_values,
            sources=sources,
        )
        prob._mass = eta_mass_matrix(ws)
        prob._mass_lu = spla.splu(prob._mass.tocsc())
        return prob

    @property
    def mass_matrix(self):
        return self._mass

    @property
    def mass_lu(self):
        return self._mass_lu

    def q_initial(self):
        q0 = self.rc.q_init if self.rc.q_init is not None else 0.5 * self.wells.qhat
        return np.full(self.rc.n_steps + 1, float(q0))


def _assemble_p0_load(sfun, ws):
    flat = ws.sub_pts.reshape(-1, 2)
    svals = np.asarray(sfun(flat), dtype=float).reshape(ws.sub_w.shape)
    return np.einsum("tcq,tcq->t", ws.sub_w, svals)


def _darcy_at(problem, c_values, q_node, t, want_state=True, f_extra=True):
    """Assemble and solve the state Darcy system at one coarse time."""
    ws = problem.ws
    c_field = P1DGField(problem.mesh, c_values)
    A, B, F = assemble_darcy(c_field, problem.model, problem.wells, q_node, ws)
    src = problem.sources
    rhs_u = None
    if src is not None and src.s_div is not None and f_extra:
        F = F + _assemble_p0_load(lambda p: src.s_div(p, t), ws)
    if src is not None and src.s_u is not None:
        rhs_u = assemble_diamond_vector_load(lambda p: src.s_u(p, t), ws)
    U, P, report, saddle = solve_darcy_state(
        A, B, F, problem.mesh, ws, tol=problem.rc.solver_tol, rhs_u=rhs_u
    )
    return U, P, report, saddle


def run_forward(problem: Problem, q) -> Trajectory:
    """Forward sweep: alternate coarse Darcy solves and fine saturation steps.

    ``q`` is the control vector on the fine grid (length N+1), clipped
    nowhere: values must already satisfy the box constraints.
    """
    rc = problem.rc
    mesh = problem.mesh
    q = np.asarray(q, dtype=float)
    if q.shape != (rc.n_steps + 1,):
        raise PorousOptError(f"control vector must have length {rc.n_steps + 1}")
    qhat = problem.wells.qhat
    if q.min() < -1e-12 or q.max() > qhat * (1.0 + 1e-12):
        raise PorousOptError("control violates the box constraints [0, qhat]")

    fine = rc.fine_times()
    coarse = rc.coarse_times()
    K = rc.substeps
    n_t = mesh.num_triangles

    traj = Trajectory(
        fine_times=fine,
        coarse_times=coarse,
        C=np.empty((rc.n_steps + 1, n_t, 3)),
        U=np.zeros((rc.m_steps + 1, mesh.num_edges)),
        P=np.zeros((rc.m_steps + 1, n_t)),
        q=q.copy(),
    )
    traj.C[0] = problem.c0_values
    src = problem.sources

    for m in range(1, rc.m_steps + 1):
        n_prev = (m - 1) * K
        try:
            U, P, rep, saddle = _darcy_at(
                problem, traj.C[n_prev], q[n_prev], coarse[m - 1]
            )
        except SolverError as exc:
            raise SolverError(f"Darcy solve at coarse step {m - 1}: {exc}") from exc
        traj.U[m - 1] = U.values
        traj.P[m - 1] = P.values
        traj.darcy_reports.append(rep)
        traj.saddles[m - 1] = saddle

        for n in range(n_prev, m * K):
            uvals = _state_velocity(coarse, traj.U, fine[n], m)
            c_field = P1DGField(mesh, traj.C[n])
            u_field = RT0Field(mesh, uvals)
            D, E, H, G = assemble_saturation_state(
                c_field, u_field, problem.model, problem.wells, q[n + 1],
                problem.ws, problem.xi,
            )
            if src is not None and src.s_c is not None:
                G = G + assemble_dual_scalar_load(
                    lambda p: src.s_c(p, fine[n + 1]), problem.ws
                )
            try:
                cnew = step_saturation_forward(
                    traj.C[n].ravel(), D, E, H, G, rc.dt, rc.solver_tol
                )
            except SolverError as exc:
                raise SolverError(f"saturation step (m={m}, n={n}): {exc}") from exc
            traj.C[n + 1] = cnew.reshape(n_t, 3)

    U, P, rep, saddle = _darcy_at(
        problem, traj.C[rc.n_steps], q[rc.n_steps], coarse[rc.m_steps]
    )
    traj.U[rc.m_steps] = U.values
    traj.P[rc.m_steps] = P.values
    traj.darcy_reports.append(rep)
    traj.saddles[rc.m_steps] = saddle
    return traj


def _state_velocity(coarse, U, t, m):
    """Causal state-velocity value at t inside sweep interval m."""
    tol = 1e-12 * max(coarse[-1], 1.0)
    if abs(t - coarse[m - 1]) <= tol:
        return U[m - 1].copy()
    if m == 1:
        return U[0].copy()
    dt_prev = coarse[m - 1] - coarse[m - 2]
    s = (t - coarse[m - 1]) / dt_prev
    return (1.0 + s) * U[m - 1] - s * U[m - 2]


def run_adjoint(problem: Problem, traj: Trajectory) -> Trajectory:
    """Backward sweep filling the costate part of ``traj``.

    Requires a completed forward trajectory; reuses its cached Darcy
    factorizations (the costate velocity matrix at each coarse time is the
    state one).
    """
    rc = problem.rc
    mesh = problem.mesh
    ws = problem.ws
    q = traj.q
    fine = rc.fine_times()
    coarse = rc.coarse_times()
    K = rc.substeps
    n_t = mesh.num_triangles
    src = problem.sources

    traj.Cstar = np.empty_like(traj.C)
    traj.Ustar = np.zeros_like(traj.U)
    traj.Pstar = np.zeros_like(traj.P)
    traj.Cstar[rc.n_steps] = 0.0
    traj.costate_reports = []
    div_max = 0.0

    def costate_darcy(m_idx, n_idx, t):
        c_field = P1DGField(mesh, traj.C[n_idx])
        cstar_field = P1DGField(mesh, traj.Cstar[n_idx])
        Fstar = assemble_darcy_costate_rhs(c_field, cstar_field, problem.model, ws)
        if src is not None and src.s_u_star is not None:
            Fstar = Fstar + assemble_diamond_vector_load(
                lambda p: src.s_u_star(p, t), ws
            )
        saddle = traj.saddles.get(m_idx)
        if saddle is None:
            c_f = P1DGField(mesh, traj.C[n_idx])
            A, B, _ = assemble_darcy(c_f, problem.model, problem.wells, q[n_idx], ws)
            saddle = DarcySaddle(A, B, mesh, rc.solver_tol)
            traj.saddles[m_idx] = saddle
        Ustar, Pstar, rep, _ = solve_darcy_costate(
            None, None, Fstar, mesh, ws, tol=rc.solver_tol, saddle=saddle
        )
        traj.Ustar[m_idx] = Ustar.values
        traj.Pstar[m_idx] = Pstar.values
        traj.costate_reports.append(rep)
        return float(np.abs(Ustar.divergence().values).max())

    div_max = max(div_max, costate_darcy(rc.m_steps, rc.n_steps, coarse[-1]))

    for m in range(rc.m_steps, 0, -1):
        for n in range(m * K - 1, (m - 1) * K - 1, -1):
            t_dep = fine[n + 1]
            uvals = interpolate_velocity(coarse, traj.U, t_dep, "state")
            usvals = _costate_velocity(coarse, traj.Ustar, t_dep, m)
            c_field = P1DGField(mesh, traj.C[n + 1])
            u_field = RT0Field(mesh, uvals)
            us_field = RT0Field(mesh, usvals)
            D, E, H, _ = assemble_saturation_state(
                c_field, u_field, problem.model, problem.wells, q[n + 1], ws,
                problem.xi,
            )
            R, S, W, Z = assemble_saturation_costate(
                c_field, u_field, us_field, problem.model, problem.wells,
                q[n + 1], t_dep, ws,
            )
            extra = None
            if src is not None and src.s_c_star is not None:
                extra = assemble_dual_scalar_load(
                    lambda p: src.s_c_star(p, t_dep), ws
                )
            try:
                cs = step_saturation_backward(
                    traj.Cstar[n + 1].ravel(), D, E, H, S, R, W, Z,
                    rc.dt, rc.solver_tol, extra_load=extra,
                )
            except SolverError as exc:
                raise SolverError(f"costate step (m={m}, n={n}): {exc}") from exc
            traj.Cstar[n] = cs.reshape(n_t, 3)
        div_max = max(
            div_max, costate_darcy(m - 1, (m - 1) * K, coarse[m - 1])
        )

    traj.costate_div_max = div_max
    return traj


def _costate_velocity(coarse, Ustar, t, m):
    """Causal costate-velocity value at t inside backward-sweep interval m."""
    tol = 1e-12 * max(coarse[-1], 1.0)
    M = coarse.size - 1
    if abs(t - coarse[m]) <= tol:
        return Ustar[m].copy()
    if m == M:
        return Ustar[M].copy()
    dt_next = coarse[m + 1] - coarse[m]
    s = (coarse[m] - t) / dt_next
    return (1.0 + s) * Ustar[m] - s * Ustar[m + 1]
