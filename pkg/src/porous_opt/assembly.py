"""Assembly of every matrix and vector of the two discretizations.

Darcy block (diamond grid): velocity matrix A, divergence coupling B, well
load F, and the costate load F*.  Row i of A tests the momentum balance
against the full transferred basis function gamma_h(Phi_i) -- the piecewise
constant vector over *all* diamond cells meeting the support of Phi_i, not
just its own cell (testing only the own-cell value halves the discrete
pressure: the diamond area is half the edge-length times barycentre-distance
product that scales the pressure coupling).  Boundary-edge degrees of
freedom are eliminated (slip condition), so A is square on interior edges.

Saturation block (barycentric dual grid): the eta-weighted mass matrix D,
convection matrix E, diffusion matrix H = T1 + T2 + T3 + T4 (interior fan
fluxes, two consistency edge terms, and the jump penalty), source vector G,
and the costate pieces R (production reaction), S (cross-gradient), W
(terminal-weight load) and Z (velocity-product load).

Matrix index convention: row = test function, column = trial function, so a
system row collects one discrete equation and the quadratic-form identity
``A_h(psi; phi, z) == z @ H(psi) @ phi`` holds (the companion function
:func:`trilinear_form` evaluates the same form by direct edge/fan loops and
is kept as an independent cross-check path).

Nonlinear coefficients are evaluated pointwise at quadrature nodes from the
P1DG traces of the saturation argument; edge sums run over interior edges
(homogeneous-flux boundary treatment), which keeps constants in the kernel
of E and H.  Assembly is deterministic: loops run in mesh order and produce
bit-identical matrices for identical inputs.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ConfigError
from .fespaces import (
    EDGE_VERTS,
    P1DGField,
    RT0Field,
    grad_lambda,
)
from .mesh import BarycentricDualMesh, DiamondDualMesh, PrimalMesh
from .model import CoefficientModel, WellModel
from .quadrature import QuadratureRule

# eta_h selector: SEL[j, v] = average weight of local vertex v on local edge j
SEL = 0.5 * np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0]])

# local eta-weighted mass block per unit area and unit porosity
_D_LOCAL_UNIT = (
    np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 18.0
    + np.ones((3, 3)) / 27.0
)


def _basis_for_tris(mesh, tris, pts):
    """Barycentric coordinates for points grouped by arbitrary triangles.

    tris: (n,) triangle indices; pts: (n, m, 2).  Returns (n, m, 3).
    """
    g = grad_lambda(mesh)[tris]                     # (n, 3, 2)
    anchor = mesh.tri_vertices()[tris][:, [1, 2, 0], :]  # (n, 3, 2)
    return np.einsum("nje,nmje->nmj", g, pts[:, :, None, :] - anchor[:, None, :, :])


@dataclass
class AssemblyWorkspace:
    """Geometry and coefficient caches reused by every assembly call."""

    mesh: PrimalMesh
    diamond: DiamondDualMesh
    bary: BarycentricDualMesh
    model: CoefficientModel
    quad: QuadratureRule

    def __post_init__(self):
        mesh = self.mesh
        quad = self.quad
        n_t = mesh.num_triangles
        verts = mesh.tri_vertices()
        bc = mesh.barycentre

        self.gradlam = grad_lambda(mesh)

        # barycentric sub-cells (K, j) = (v_j, v_{j+1}, b_K)
        sub_pts = np.empty((n_t, 3, quad.tri_points.shape[0], 2))
        sub_w = np.empty((n_t, 3, quad.tri_points.shape[0]))
        for j in range(3):
            p, w = quad.map_to_triangles(verts[:, j], verts[:, (j + 1) % 3], bc)
            sub_pts[:, j] = p
            sub_w[:, j] = w
        self.sub_pts, self.sub_w = sub_pts, sub_w
        lam = np.einsum(
            "tje,tcqje->tcqj",
            self.gradlam,
            sub_pts[:, :, :, None, :] - verts[:, None, None, [1, 2, 0], :],
        )
        self.sub_lam = lam
        coef = mesh.tri_edge_sign * mesh.edge_length[mesh.tri_edges] / (
            2.0 * mesh.tri_area[:, None]
        )
        self.sub_rt0 = coef[:, None, None, :, None] * (
            sub_pts[:, :, :, None, :] - verts[:, None, None, [2, 0, 1], :]
        )

        # fan segments of the barycentric dual
        fp, fw = quad.map_to_segments(self.bary.seg_start, self.bary.seg_end)
        self.fan_pts, self.fan_w = fp, fw      # (n_t,3,2,ne,2), (n_t,3,2,ne)
        self.fan_lam = np.einsum(
            "tje,tcsqje->tcsqj",
            self.gradlam,
            fp[:, :, :, :, None, :] - verts[:, None, None, None, [1, 2, 0], :],
        )

        # interior edge data
        ie = mesh.interior_edges
        self.ie = ie
        self.ie_normal = mesh.edge_normal[ie]
        self.ie_h = mesh.edge_length[ie]
        self.kL = mesh.edge_tris[ie, 0]
        self.kR = mesh.edge_tris[ie, 1]
        pa = mesh.vertices[mesh.edges[ie, 0]]
        pb = mesh.vertices[mesh.edges[ie, 1]]
        self.edge_pts, self.edge_w = quad.map_to_segments(pa, pb)
        self.edge_lamL = _basis_for_tris(mesh, self.kL, self.edge_pts)
        self.edge_lamR = _basis_for_tris(mesh, self.kR, self.edge_pts)
        self.gradL = self.gradlam[self.kL]
        self.gradR = self.gradlam[self.kR]

        # eta-average selector per side: 0.5 at the local vertices of the edge
        def avg_ops(ks):
            ops = np.zeros((ie.size, 3))
            loc = np.argmax(mesh.tri_edges[ks] == ie[:, None], axis=1)
            for j in range(3):
                mask = loc == j
                ops[mask, EDGE_VERTS[j, 0]] = 0.5
                ops[mask, EDGE_VERTS[j, 1]] = 0.5
            return ops

        self.avgL = avg_ops(self.kL)
        self.avgR = avg_ops(self.kR)

        # scatter indices
        dofs = np.arange(3 * n_t).reshape(n_t, 3)
        self.el_rows = np.repeat(dofs[:, :, None], 3, axis=2)
        self.el_cols = np.repeat(dofs[:, None, :], 3, axis=1)
        self.edge_dofs = np.concatenate([dofs[self.kL], dofs[self.kR]], axis=1)

        # Darcy pair arrays: one (edge, adjacent triangle) pair per diamond
        # portion, covering boundary cells too
        int_of_edge = -np.ones(mesh.num_edges, dtype=np.int64)
        int_of_edge[ie] = np.arange(ie.size)
        self.int_of_edge = int_of_edge
        self.n_int = ie.size

        pr_edge, pr_tri = [], []
        for e in range(mesh.num_edges):
            pr_edge.append(e)
            pr_tri.append(mesh.edge_tris[e, 0])
            if mesh.edge_tris[e, 1] >= 0:
                pr_edge.append(e)
                pr_tri.append(mesh.edge_tris[e, 1])
        self.pr_edge = np.asarray(pr_edge, dtype=np.int64)
        self.pr_tri = np.asarray(pr_tri, dtype=np.int64)
        a = mesh.vertices[mesh.edges[self.pr_edge, 0]]
        b = mesh.vertices[mesh.edges[self.pr_edge, 1]]
        g = bc[self.pr_tri]
        e1 = b - a
        e2 = g - a
        x = quad.tri_points[:, 0]
        y = quad.tri_points[:, 1]
        self.pr_pts = (
            a[:, None, :] + e1[:, None, :] * x[None, :, None] + e2[:, None, :] * y[None, :, None]
        )
        jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        self.pr_w = jac[:, None] * quad.tri_weights
        self.pr_lam = _basis_for_tris(mesh, self.pr_tri, self.pr_pts)
        pair_coef = coef[self.pr_tri]
        opp = mesh.tri_vertices()[self.pr_tri][:, [2, 0, 1], :]
        self.pr_rt0 = pair_coef[:, None, :, None] * (
            self.pr_pts[:, :, None, :] - opp[:, None, :, :]
        )  # (npair, nq, 3, 2)
        self.pr_cols = int_of_edge[mesh.tri_edges[self.pr_tri]]  # (npair, 3)

        # transfer of the interior basis functions: gamma_mat[(k, comp), i]
        # is component comp of gamma_h(Phi_i) on diamond cell k, with the
        # area-weighted tangential convention
        wsum = np.zeros(mesh.num_edges)
        np.add.at(wsum, mesh.tri_edges.ravel(),
                  np.repeat(mesh.tri_area[:, None], 3, axis=1).ravel())
        rows, cols, vals = [], [], []
        mids = mesh.edge_midpoint
        for k in range(mesh.num_edges):
            for tri in mesh.edge_tris[k]:
                if tri < 0:
                    continue
                w = mesh.tri_area[tri] / wsum[k]
                for jloc in range(3):
                    i_edge = mesh.tri_edges[tri, jloc]
                    col = int_of_edge[i_edge]
                    if col < 0:
                        continue
                    val = w * coef[tri, jloc] * (
                        mids[k] - verts[tri, (jloc + 2) % 3]
                    )
                    rows.extend((2 * k, 2 * k + 1))
                    cols.extend((col, col))
                    vals.extend(val)
        self.gamma_mat = sp.coo_matrix(
            (vals, (rows, cols)), shape=(2 * mesh.num_edges, self.n_int)
        ).tocsr()

        # divergence coupling matrix B (geometry only)
        rows, cols, vals = [], [], []
        for j in range(3):
            e = mesh.tri_edges[:, j]
            keep = int_of_edge[e] >= 0
            rows.append(np.flatnonzero(keep))
            cols.append(int_of_edge[e[keep]])
            vals.append(
                (mesh.tri_edge_sign[:, j] * mesh.edge_length[e])[keep].astype(float)
            )
        self.B = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_t, self.n_int),
        ).tocsr()

        # model-dependent but field-independent caches
        self.phi_tri = np.asarray(self.model.phi(bc), dtype=float)
        self.kappa_sub = self._kappa_at(sub_pts)
        self.kappa_fan = self._kappa_at(fp)
        self.kappa_edge = self._kappa_at(self.edge_pts)
        self.kappa_pair = self._kappa_at(self.pr_pts)

        self.d_local = (
            self.phi_tri[:, None, None]
            * self.mesh.tri_area[:, None, None]
            * _D_LOCAL_UNIT
        )
        self.d_local_unit_area = self.mesh.tri_area[:, None, None] * _D_LOCAL_UNIT

    def _kappa_at(self, pts):
        flat = pts.reshape(-1, 2)
        return np.asarray(self.model.kappa(flat), dtype=float).reshape(pts.shape[:-1])

    # -- small helpers -----------------------------------------------------

    def p1_at_sub(self, field: P1DGField):
        return np.einsum("tcqj,tj->tcq", self.sub_lam, field.values)

    def p1_at_fan(self, field: P1DGField):
        return np.einsum("tcsqj,tj->tcsq", self.fan_lam, field.values)

    def p1_at_pairs(self, field: P1DGField):
        return np.einsum("nqj,nj->nq", self.pr_lam, field.values[self.pr_tri])

    def rt0_at_sub(self, field: RT0Field):
        coeffs = field.values[self.mesh.tri_edges]
        return np.einsum("tcqje,tj->tcqe", self.sub_rt0, coeffs)

    def element_matrix(self, scatter):
        """COO assembly of per-element 3x3 blocks into a (3n_t, 3n_t) CSR."""
        return sp.coo_matrix(
            (scatter.ravel(), (self.el_rows.ravel(), self.el_cols.ravel())),
            shape=(3 * self.mesh.num_triangles,) * 2,
        ).tocsr()

    def edge_matrix(self, blocks):
        """COO assembly of per-interior-edge 6x6 blocks."""
        rows = np.repeat(self.edge_dofs[:, :, None], 6, axis=2)
        cols = np.repeat(self.edge_dofs[:, None, :], 6, axis=1)
        return sp.coo_matrix(
            (blocks.ravel(), (rows.ravel(), cols.ravel())),
            shape=(3 * self.mesh.num_triangles,) * 2,
        ).tocsr()


def _require_finite(values, what):
    vals = np.asarray(values)
    if not np.isfinite(vals).all():
        bad = np.argwhere(~np.isfinite(vals))
        raise AssemblyError(f"non-finite {what} at element entry {bad[0].tolist()}")


# ---------------------------------------------------------------------------
# Darcy block
# ---------------------------------------------------------------------------

def _cellwise_vector_matrix(ent, ws):
    """Assemble per-pair vector integrals into a (2 n_e, n_int) sparse
    matrix: rows index (diamond cell, component), columns the trial dof."""
    keep = np.repeat(ws.pr_cols[:, :, None] >= 0, 2, axis=2)
    rows = (
        2 * ws.pr_edge[:, None, None]
        + np.arange(2)[None, None, :]
        + np.zeros((1, 3, 1), dtype=np.int64)
    )
    cols = np.repeat(ws.pr_cols[:, :, None], 2, axis=2)
    return sp.coo_matrix(
        (ent[keep], (rows[keep], cols[keep])),
        shape=(2 * ws.mesh.num_edges, ws.n_int),
    ).tocsr()


def assemble_darcy(c_field: P1DGField, model: CoefficientModel, wells: WellModel,
                   q: float, ws: AssemblyWorkspace):
    """Velocity matrix, divergence coupling, and well load for one time level.

    Returns (A, B, F): A is (n_int, n_int) with A[i, j] the pairing of
    alpha(C)/kappa Phi_j against gamma_h(Phi_i) summed over all diamond
    cells; B is the (n_t, n_int) divergence coupling; F the element
    integrals of (r0 - r1) q.
    """
    _require_finite(c_field.values, "saturation coefficient")
    cvals = ws.p1_at_pairs(c_field)
    avals = model.alpha(cvals) / ws.kappa_pair
    _require_finite(avals, "alpha coefficient")
    ent = np.einsum("nq,nq,nqje->nje", ws.pr_w, avals, ws.pr_rt0)
    C = _cellwise_vector_matrix(ent, ws)
    A = (ws.gamma_mat.T @ C).tocsr()
    F = well_source_vector(wells, q)
    return A, ws.B, F


def well_source_vector(wells: WellModel, q: float):
    """Element integrals of (r0 - r1) q; rows vanish off the patches and the
    total sums to zero exactly."""
    mesh = wells.mesh
    F = np.zeros(mesh.num_triangles)
    F[wells.injection_tris] += mesh.tri_area[wells.injection_tris] / wells.sigma0
    F[wells.production_tris] -= mesh.tri_area[wells.production_tris] / wells.sigma1
    return q * F


def _gamma_load(cell_integrals, ws):
    """Pair l_i = sum_k gamma_h(Phi_i)|_k . cell_integrals[k]."""
    acc = np.zeros((ws.mesh.num_edges, 2))
    np.add.at(acc, ws.pr_edge, cell_integrals)
    return ws.gamma_mat.T @ acc.ravel()


def assemble_diamond_vector_load(gfun, ws: AssemblyWorkspace):
    """Load vector l_i = (g, gamma_h Phi_i) over the diamond cells.

    ``gfun`` maps an (n, 2) point array to (n, 2) vector values.
    """
    flat = ws.pr_pts.reshape(-1, 2)
    gvals = np.asarray(gfun(flat), dtype=float).reshape(ws.pr_pts.shape)
    return _gamma_load(np.einsum("nq,nqe->ne", ws.pr_w, gvals), ws)


def assemble_darcy_costate_rhs(c_field: P1DGField, cstar_field: P1DGField,
                               model: CoefficientModel, ws: AssemblyWorkspace):
    """Costate Darcy load F*_i = -(C* b(C) grad(C), gamma_h Phi_i)."""
    _require_finite(c_field.values, "saturation coefficient")
    _require_finite(cstar_field.values, "costate saturation")
    cvals = ws.p1_at_pairs(c_field)
    csvals = ws.p1_at_pairs(cstar_field)
    gradc = c_field.gradients()[ws.pr_tri]      # (npair, 2)
    scal = model.b(cvals) * csvals              # (npair, nq)
    cell = -np.einsum("nq,nq,ne->ne", ws.pr_w, scal, gradc)
    return _gamma_load(cell, ws)


# ---------------------------------------------------------------------------
# saturation block
# ---------------------------------------------------------------------------

def eta_mass_matrix(ws: AssemblyWorkspace, with_porosity=True):
    """The (test, eta_h trial) mass matrix; porosity-weighted by default."""
    return ws.element_matrix(ws.d_local if with_porosity else ws.d_local_unit_area)


def assemble_saturation_state(c_field: P1DGField, u_field: RT0Field,
                              model: CoefficientModel, wells: WellModel,
                              q: float, ws: AssemblyWorkspace, xi: float):
    """Matrices of one saturation step: (D, E, H, G).

    D is the porosity-weighted eta mass matrix; E the convection matrix with
    coefficient b(C) U; H the diffusion matrix T1+T2+T3+T4 with coefficient
    kappa D(C) and penalty xi; G the injection source with f(C) r0 q.
    """
    if xi <= 0.0:
        raise ConfigError("penalty xi must be > 0")
    _require_finite(c_field.values, "saturation coefficient")
    _require_finite(u_field.values, "velocity coefficient")

    D = eta_mass_matrix(ws)
    csub = ws.p1_at_sub(c_field)                      # (n_t, 3, nq)
    uvals = ws.rt0_at_sub(u_field)                    # (n_t, 3, nq, 2)
    bc = model.b(csub)
    conv = np.einsum("tcq,tcq,tcqe,tle->tcl", ws.sub_w, bc, uvals, ws.gradlam)
    E = ws.element_matrix(np.einsum("cv,tcl->tvl", SEL, conv))

    H = _diffusion_matrix(c_field, model, ws, xi)

    r0 = np.zeros(ws.mesh.num_triangles)
    r0[wells.injection_tris] = 1.0 / wells.sigma0
    fsub = model.f(csub)
    gcell = np.einsum("t,tcq,tcq->tc", r0 * q, ws.sub_w, fsub)
    G = np.zeros(3 * ws.mesh.num_triangles)
    np.add.at(G, ws.el_rows[:, :, 0].ravel(),
              np.einsum("cv,tc->tv", SEL, gcell).ravel())
    return D, E, H, G


def _diffusion_matrix(c_field, model, ws, xi):
    # T1: fan fluxes against the cell's eta average
    cfan = ws.p1_at_fan(c_field)
    dfan = ws.kappa_fan * model.diffusion(cfan)        # (n_t, 3, 2, ne)
    dint = np.einsum("tcsq,tcsq->tcs", ws.fan_w, dfan)  # (n_t, 3, 2)
    nflux = np.einsum("tcs,tcse,tle->tcl", dint, ws.bary.seg_normal, ws.gradlam)
    t1 = -np.einsum("cv,tcl->tvl", SEL, nflux)
    H = ws.element_matrix(t1)

    # edge terms on interior edges
    cl = np.einsum("nqj,nj->nq", ws.edge_lamL, c_field.values[ws.kL])
    cr = np.einsum("nqj,nj->nq", ws.edge_lamR, c_field.values[ws.kR])
    dL = np.einsum("nq,nq->n", ws.edge_w, ws.kappa_edge * model.diffusion(cl))
    dR = np.einsum("nq,nq->n", ws.edge_w, ws.kappa_edge * model.diffusion(cr))
    # n . grad of each side's trial basis, weighted half (average)
    nfL = 0.5 * np.einsum("n,ne,nle->nl", dL, ws.ie_normal, ws.gradL)
    nfR = 0.5 * np.einsum("n,ne,nle->nl", dR, ws.ie_normal, ws.gradR)
    avg_jump = np.concatenate([ws.avgL, -ws.avgR], axis=1)   # (n_ie, 6)
    flux = np.concatenate([nfL, nfR], axis=1)                # (n_ie, 6)
    t2 = -np.einsum("nr,nc->nrc", avg_jump, flux)
    t3 = -np.einsum("nr,nc->nrc", flux, avg_jump)

    lam = np.concatenate([ws.edge_lamL, -ws.edge_lamR], axis=2)  # (n_ie, nq, 6)
    t4 = (xi / ws.ie_h)[:, None, None] * np.einsum(
        "nq,nqr,nqc->nrc", ws.edge_w, lam, lam
    )
    H = H + ws.edge_matrix(t2 + t3 + t4)
    return H


def assemble_saturation_costate(c_field: P1DGField, u_field: RT0Field,
                                ustar_field: RT0Field, model: CoefficientModel,
                                wells: WellModel, q: float, t: float,
                                ws: AssemblyWorkspace):
    """Costate-only matrices and loads at one time level: (R, S, W, Z).

    R is the production-patch reaction matrix with weight r1 q b(C); S the
    cross-gradient matrix with kappa D'(C) grad(C); W the terminal-weight
    load w(t) C; Z the load alpha'(C)/kappa U . U*.
    """
    _require_finite(c_field.values, "saturation coefficient")
    _require_finite(u_field.values, "velocity coefficient")
    _require_finite(ustar_field.values, "costate velocity")

    csub = ws.p1_at_sub(c_field)

    r1 = np.zeros(ws.mesh.num_triangles)
    r1[wells.production_tris] = 1.0 / wells.sigma1
    react = np.einsum(
        "t,tcq,tcq,tcqj->tcj", r1 * q, ws.sub_w, model.b(csub), ws.sub_lam
    )
    R = ws.element_matrix(np.einsum("cv,tcl->tvl", SEL, react))

    gradc = c_field.gradients()                         # (n_t, 2)
    dp = ws.kappa_sub * model.diffusion_prime(csub)
    cross = np.einsum("tcq,tcq->tc", ws.sub_w, dp)
    sflux = np.einsum("tc,te,tle->tcl", cross, gradc, ws.gradlam)
    S = ws.element_matrix(np.einsum("cv,tcl->tvl", SEL, sflux))

    wval = wells.w(t)
    wcell = wval * np.einsum("tcq,tcq->tc", ws.sub_w, csub)
    W = np.zeros(3 * ws.mesh.num_triangles)
    np.add.at(W, ws.el_rows[:, :, 0].ravel(),
              np.einsum("cv,tc->tv", SEL, wcell).ravel())

    uvals = ws.rt0_at_sub(u_field)
    usvals = ws.rt0_at_sub(ustar_field)
    ap = model.alpha_prime(csub) / ws.kappa_sub
    zcell = np.einsum("tcq,tcq,tcqe,tcqe->tc", ws.sub_w, ap, uvals, usvals)
    Z = np.zeros(3 * ws.mesh.num_triangles)
    np.add.at(Z, ws.el_rows[:, :, 0].ravel(),
              np.einsum("cv,tc->tv", SEL, zcell).ravel())
    return R, S, W, Z


def assemble_dual_scalar_load(sfun, ws: AssemblyWorkspace):
    """Load vector (s, eta_h Psi_i) for a scalar source s(x)."""
    flat = ws.sub_pts.reshape(-1, 2)
    svals = np.asarray(sfun(flat), dtype=float).reshape(ws.sub_w.shape)
    cell = np.einsum("tcq,tcq->tc", ws.sub_w, svals)
    out = np.zeros(3 * ws.mesh.num_triangles)
    np.add.at(out, ws.el_rows[:, :, 0].ravel(),
              np.einsum("cv,tc->tv", SEL, cell).ravel())
    return out


# ---------------------------------------------------------------------------
# direct trilinear-form evaluation (independent of the matrix path)
# ---------------------------------------------------------------------------

def trilinear_form(psi: P1DGField, phi: P1DGField, z: P1DGField,
                   model: CoefficientModel, xi: float,
                   bary: BarycentricDualMesh, quad: QuadratureRule) -> float:
    """Evaluate the DFVE diffusion form A_h(psi; phi, z) by direct loops.

    Four terms: interior fan fluxes of kappa D(psi) grad(phi) against the
    cell values of eta_h z; the two interior-edge consistency terms pairing
    jumps of eta-averages with mean fluxes; and the interior jump penalty
    (xi / h_e) [phi][z].  Boundary edges follow the homogeneous-flux
    treatment and do not contribute.
    """
    if xi <= 0.0:
        raise ConfigError("penalty xi must be > 0")
    mesh = bary.mesh
    grad_phi = phi.gradients()
    grad_z = z.gradients()
    eta_z = z.edge_averages()
    eta_phi = phi.edge_averages()

    def dcoef(tri, pts):
        c = np.einsum(
            "qj,j->q",
            _basis_for_tris(mesh, np.array([tri]), pts[None])[0],
            psi.values[tri],
        )
        kap = np.asarray(model.kappa(pts), dtype=float)
        return kap * model.diffusion(c)

    total = 0.0
    # T1: fans
    for k in range(mesh.num_triangles):
        for j in range(3):
            for s in range(2):
                p = bary.seg_start[k, j, s]
                qpt, qw = quad.map_to_segments(p, bary.seg_end[k, j, s])
                dval = dcoef(k, qpt)
                flux = np.dot(bary.seg_normal[k, j, s], grad_phi[k])
                total -= float(np.sum(qw * dval) * flux * eta_z[k, j])

    # edge terms
    for e in mesh.interior_edges:
        kl, kr = mesh.edge_tris[e]
        jl = int(np.argmax(mesh.tri_edges[kl] == e))
        jr = int(np.argmax(mesh.tri_edges[kr] == e))
        n = mesh.edge_normal[e]
        pa = mesh.vertices[mesh.edges[e, 0]]
        pb = mesh.vertices[mesh.edges[e, 1]]
        qpt, qw = quad.map_to_segments(pa, pb)
        dl = dcoef(kl, qpt)
        dr = dcoef(kr, qpt)
        mean_flux_phi = 0.5 * (
            np.sum(qw * dl) * np.dot(n, grad_phi[kl])
            + np.sum(qw * dr) * np.dot(n, grad_phi[kr])
        )
        mean_flux_z = 0.5 * (
            np.sum(qw * dl) * np.dot(n, grad_z[kl])
            + np.sum(qw * dr) * np.dot(n, grad_z[kr])
        )
        total -= (eta_z[kl, jl] - eta_z[kr, jr]) * mean_flux_phi
        total -= (eta_phi[kl, jl] - eta_phi[kr, jr]) * mean_flux_z

        lamL = _basis_for_tris(mesh, np.array([kl]), qpt[None])[0]
        lamR = _basis_for_tris(mesh, np.array([kr]), qpt[None])[0]
        jump_phi = lamL @ phi.values[kl] - lamR @ phi.values[kr]
        jump_z = lamL @ z.values[kl] - lamR @ z.values[kr]
        total += xi / mesh.edge_length[e] * float(np.sum(qw * jump_phi * jump_z))
    return total
