"""Discrete fields and the transfer operators between trial and test spaces.

Fields
------
* :class:`RT0Field` -- lowest-order Raviart-Thomas velocity; one coefficient
  per edge equal to the normal component at the edge midpoint with respect
  to the stored global normal.
* :class:`P0Field` -- piecewise-constant pressure, one value per triangle,
  optionally flagged zero-mean.
* :class:`P1DGField` -- discontinuous piecewise-linear saturation, three
  nodal values per triangle.
* :class:`DiamondPWConstantField` / :class:`DualPWConstantField` -- constant
  test data per diamond cell / barycentric dual cell.

Transfer operators
------------------
``gamma_h`` maps an RT0 field to a constant vector per diamond cell, the
field value at the edge midpoint.  The normal component there is single
valued; the tangential trace jumps between the two adjacent elements, and is
combined as the *area-weighted average* of the two traces.  That choice
keeps the midpoint normal value exact and makes the L2 contraction
``|gamma_h v| <= |v|`` hold sharply on every mesh: the element midpoint rule
is exact for squared RT0 fields and Jensen's inequality does the rest.

``eta_h`` maps a P1DG field to a constant per barycentric dual cell, the
average of the element-local trace over the edge contained in the cell; for
affine functions this is the trace at the edge midpoint, and the L2 norm is
preserved exactly.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import PorousOptError
from .mesh import BarycentricDualMesh, DiamondDualMesh, PrimalMesh

P1_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0

# vertex-to-edge incidence: local edge j joins local vertices j and j+1
EDGE_VERTS = np.array([[0, 1], [1, 2], [2, 0]])


def _check_same_mesh(a, b):
    if a.mesh is not b.mesh:
        raise PorousOptError("fields live on different meshes")


def grad_lambda(mesh: PrimalMesh) -> np.ndarray:
    """Gradients of the barycentric coordinates, shape (n_t, 3, 2)."""
    pts = mesh.tri_vertices()
    g = np.empty((mesh.num_triangles, 3, 2))
    twoA = 2.0 * mesh.tri_area
    for i in range(3):
        d = pts[:, (i + 2) % 3] - pts[:, (i + 1) % 3]
        g[:, i, 0] = -d[:, 1] / twoA
        g[:, i, 1] = d[:, 0] / twoA
    return g


def p1_basis_at(mesh: PrimalMesh, pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points given per element.

    pts has shape (n_t, ..., 2); the result has shape (n_t, ..., 3).
    """
    g = grad_lambda(mesh)
    verts = mesh.tri_vertices()
    extra = pts.ndim - 2
    gx = g.reshape(g.shape[0], *([1] * extra), 3, 2)
    anchor = verts[:, [1, 2, 0], :].reshape(verts.shape[0], *([1] * extra), 3, 2)
    return np.einsum("...je,...je->...j", gx, pts[..., None, :] - anchor)


def rt0_basis_at(mesh: PrimalMesh, pts: np.ndarray) -> np.ndarray:
    """Raviart-Thomas basis values at points given per element.

    Basis j is attached to local edge j and normalized to unit normal
    component (with respect to the stored global edge normal) along that
    edge.  pts has shape (n_t, ..., 2); the result (n_t, ..., 3, 2).
    """
    verts = mesh.tri_vertices()
    coef = (
        mesh.tri_edge_sign
        * mesh.edge_length[mesh.tri_edges]
        / (2.0 * mesh.tri_area[:, None])
    )  # (n_t, 3)
    extra = pts.ndim - 2
    opp = verts[:, [2, 0, 1], :].reshape(verts.shape[0], *([1] * extra), 3, 2)
    c = coef.reshape(coef.shape[0], *([1] * extra), 3, 1)
    return c * (pts[..., None, :] - opp)


@dataclass
class RT0Field:
    """Raviart-Thomas velocity field: normal flux value per edge midpoint."""

    mesh: PrimalMesh
    values: np.ndarray  # (n_e,)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.num_edges,):
            raise PorousOptError("RT0Field needs one coefficient per edge")

    @classmethod
    def interpolate(cls, mesh, vfun):
        """Edge-midpoint normal interpolation of a vector function.

        vfun maps an (n, 2) point array to an (n, 2) value array.
        """
        vals = np.einsum(
            "ij,ij->i", np.asarray(vfun(mesh.edge_midpoint)), mesh.edge_normal
        )
        return cls(mesh, vals)

    @classmethod
    def zero(cls, mesh):
        return cls(mesh, np.zeros(mesh.num_edges))

    def eval_at(self, pts):
        """Evaluate per element; pts (n_t, ..., 2) -> (n_t, ..., 2)."""
        basis = rt0_basis_at(self.mesh, pts)
        coeffs = self.values[self.mesh.tri_edges]
        extra = pts.ndim - 2
        c = coeffs.reshape(coeffs.shape[0], *([1] * extra), 3)
        return np.einsum("...j,...je->...e", c, basis)

    def element_midpoint_values(self):
        """Field values at the three edge midpoints, from inside each element."""
        mids = self.mesh.edge_midpoint[self.mesh.tri_edges]  # (n_t, 3, 2)
        return self.eval_at(mids)

    def midpoint_values(self):
        """Single-valued midpoint vectors, one per edge (area-weighted tangential)."""
        per_elem = self.element_midpoint_values()  # (n_t, 3, 2)
        mesh = self.mesh
        acc = np.zeros((mesh.num_edges, 2))
        wsum = np.zeros(mesh.num_edges)
        w = np.repeat(mesh.tri_area[:, None], 3, axis=1).ravel()
        idx = mesh.tri_edges.ravel()
        np.add.at(acc, idx, per_elem.reshape(-1, 2) * w[:, None])
        np.add.at(wsum, idx, w)
        return acc / wsum[:, None]

    def divergence(self):
        """Element-wise constant divergence: signed edge fluxes over area."""
        mesh = self.mesh
        flux = (
            mesh.tri_edge_sign
            * self.values[mesh.tri_edges]
            * mesh.edge_length[mesh.tri_edges]
        )
        return P0Field(mesh, flux.sum(axis=1) / mesh.tri_area)

    def is_in_velocity_space(self, tol=0.0):
        """True when all boundary-edge coefficients vanish (slip condition)."""
        return bool(np.all(np.abs(self.values[self.mesh.boundary_edge]) <= tol))


@dataclass
class P0Field:
    """Piecewise-constant field, one value per triangle."""

    mesh: PrimalMesh
    values: np.ndarray  # (n_t,)
    zero_mean: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.num_triangles,):
            raise PorousOptError("P0Field needs one value per triangle")

    def mean(self):
        return float(self.values @ self.mesh.tri_area) / self.mesh.domain_area

    def shifted_to_zero_mean(self):
        return P0Field(self.mesh, self.values - self.mean(), zero_mean=True)


@dataclass
class P1DGField:
    """Discontinuous piecewise-linear field: three nodal values per triangle."""

    mesh: PrimalMesh
    values: np.ndarray  # (n_t, 3)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.num_triangles, 3):
            raise PorousOptError("P1DGField needs shape (n_t, 3)")

    @classmethod
    def interpolate(cls, mesh, fun):
        """Nodal interpolation: fun maps (n, 2) points to (n,) values."""
        pts = mesh.tri_vertices().reshape(-1, 2)
        return cls(mesh, np.asarray(fun(pts)).reshape(mesh.num_triangles, 3))

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, np.full((mesh.num_triangles, 3), float(value)))

    def eval_at(self, pts):
        """Evaluate per element; pts (n_t, ..., 2) -> (n_t, ...)."""
        lam = p1_basis_at(self.mesh, pts)
        extra = pts.ndim - 2
        v = self.values.reshape(self.values.shape[0], *([1] * extra), 3)
        return np.einsum("...j,...j->...", v, lam)

    def gradients(self):
        """Element gradients, shape (n_t, 2)."""
        return np.einsum("tj,tje->te", self.values, grad_lambda(self.mesh))

    def edge_averages(self):
        """Element-local trace averages over the three local edges, (n_t, 3)."""
        return 0.5 * (self.values + self.values[:, [1, 2, 0]])


@dataclass
class DiamondPWConstantField:
    """Constant vector per diamond cell (one per primal edge)."""

    dual: DiamondDualMesh
    values: np.ndarray  # (n_e, 2)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def mesh(self):
        return self.dual.mesh


@dataclass
class DualPWConstantField:
    """Constant scalar per barycentric dual cell, indexed (triangle, local edge)."""

    dual: BarycentricDualMesh
    values: np.ndarray  # (n_t, 3)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def mesh(self):
        return self.dual.mesh


def gamma_h(v: RT0Field, dual: DiamondDualMesh) -> DiamondPWConstantField:
    """Transfer an RT0 field to the diamond test space by midpoint evaluation."""
    if dual.mesh is not v.mesh:
        raise PorousOptError("field and diamond dual live on different meshes")
    return DiamondPWConstantField(dual, v.midpoint_values())


def eta_h(z: P1DGField, dual: BarycentricDualMesh) -> DualPWConstantField:
    """Transfer a P1DG field to the dual test space by edge averaging."""
    if dual.mesh is not z.mesh:
        raise PorousOptError("field and barycentric dual live on different meshes")
    return DualPWConstantField(dual, z.edge_averages())


def rt0_divergence(v: RT0Field) -> P0Field:
    return v.divergence()


def b_form(gv: DiamondPWConstantField, w: P0Field) -> float:
    """Pressure-velocity coupling on the diamond grid.

    Evaluates the sum over diamond cells of the cell vector dotted with the
    boundary integral of ``w`` times the unit normal, signed so that the
    duality ``b_form(gamma_h(v), w) == -(div v, w)`` holds exactly for RT0
    fields with vanishing boundary flux.
    """
    if gv.mesh is not w.mesh:
        raise PorousOptError("fields live on different meshes")
    d = gv.dual
    seg = w.values[d.seg_owner][:, None] * d.seg_normal * d.seg_length[:, None]
    cell_flux = np.add.reduceat(seg, d.seg_ptr[:-1], axis=0)
    # reduceat with equal consecutive offsets would inject spurious rows;
    # every diamond cell has >= 3 segments so offsets are strictly increasing
    return float(np.einsum("ce,ce->", gv.values, cell_flux))


def l2_inner(a, b) -> float:
    """L2 inner product of two fields of the same type and mesh."""
    _check_same_mesh(a, b)
    if isinstance(a, P1DGField) and isinstance(b, P1DGField):
        return float(
            np.einsum(
                "t,ti,ij,tj->", a.mesh.tri_area, a.values, P1_MASS, b.values
            )
        )
    if isinstance(a, P0Field) and isinstance(b, P0Field):
        return float((a.values * b.values) @ a.mesh.tri_area)
    if isinstance(a, RT0Field) and isinstance(b, RT0Field):
        # edge-midpoint rule is exact for products of element-affine fields
        va = a.element_midpoint_values()
        vb = b.element_midpoint_values()
        return float(
            np.einsum("t,tje->", a.mesh.tri_area / 3.0, va * vb)
        )
    if isinstance(a, DiamondPWConstantField) and isinstance(b, DiamondPWConstantField):
        return float(np.einsum("c,ce,ce->", a.dual.cell_area, a.values, b.values))
    if isinstance(a, DualPWConstantField) and isinstance(b, DualPWConstantField):
        return float(np.einsum("tj,tj,tj->", a.dual.cell_area, a.values, b.values))
    raise PorousOptError(f"unsupported field combination {type(a)}, {type(b)}")


def l2_norm(a) -> float:
    return float(np.sqrt(max(l2_inner(a, a), 0.0)))


def mixed_inner_p1dg_dual(z: P1DGField, w: DualPWConstantField) -> float:
    """Inner product (z, w) of a P1DG field against dual-cell constants."""
    _check_same_mesh(z, w)
    # integral of the affine z over cell (K, j): area/3 of K times the value
    # at the sub-triangle centroid (v_j + v_{j+1} + b_K)/3
    mean = z.values.mean(axis=1)
    centroid_vals = (z.values + z.values[:, [1, 2, 0]] + mean[:, None]) / 3.0
    return float(np.einsum("tj,tj,tj->", w.dual.cell_area, centroid_vals, w.values))


def edge_trace_values(z: P1DGField):
    """Traces of z on each edge from both sides.

    Returns an (n_e, 2, 2) array: axis 1 is the side (0 = lower adjacent
    triangle, 1 = higher; NaN on the outer side of boundary edges), axis 2
    holds the values at the two edge endpoints in stored edge order.
    """
    mesh = z.mesh
    out = np.full((mesh.num_edges, 2, 2), np.nan)
    tri = mesh.triangles
    for j in range(3):
        e = mesh.tri_edges[:, j]
        side = np.where(mesh.tri_edge_sign[:, j] == 1, 0, 1)
        va = tri[:, EDGE_VERTS[j, 0]]
        local_first = va == mesh.edges[e, 0]
        v_first = np.where(local_first, z.values[:, EDGE_VERTS[j, 0]], z.values[:, EDGE_VERTS[j, 1]])
        v_second = np.where(local_first, z.values[:, EDGE_VERTS[j, 1]], z.values[:, EDGE_VERTS[j, 0]])
        out[e, side, 0] = v_first
        out[e, side, 1] = v_second
    return out


def broken_h1_norm(z: P1DGField) -> float:
    """DG energy norm: element H1 seminorms plus interior edge jump penalty.

    The jump sum runs over interior edges only; for the homogeneous-flux
    boundary treatment the boundary terms are absent, so globally affine
    continuous functions have zero jump part.
    """
    mesh = z.mesh
    grads = z.gradients()
    semi = float(np.einsum("t,te,te->", mesh.tri_area, grads, grads))
    traces = edge_trace_values(z)
    interior = mesh.interior_edges
    d = traces[interior, 0, :] - traces[interior, 1, :]
    # integral of the squared linear jump over the edge, divided by h_e
    jump = float(
        np.sum((d[:, 0] ** 2 + d[:, 0] * d[:, 1] + d[:, 1] ** 2) / 3.0)
    )
    return float(np.sqrt(semi + jump))


# ---------------------------------------------------------------------------
# jump / average conventions on a single edge
# ---------------------------------------------------------------------------

def scalar_jump(normal, q_minus, q_plus=None):
    """Jump of a scalar across an edge: vector valued.

    ``normal`` points from the minus side to the plus side.  Interior edges
    give (q_minus - q_plus) * normal; on a boundary edge (``q_plus`` omitted)
    the convention is q * normal.
    """
    normal = np.asarray(normal, dtype=float)
    if q_plus is None:
        return q_minus * normal
    return (q_minus - q_plus) * normal


def scalar_average(q_minus, q_plus=None):
    """Average of a scalar across an edge; single-valued on the boundary."""
    if q_plus is None:
        return q_minus
    return 0.5 * (q_minus + q_plus)


def vector_jump(normal, r_minus, r_plus=None):
    """Jump of a vector across an edge: scalar valued (normal components)."""
    normal = np.asarray(normal, dtype=float)
    if r_plus is None:
        return float(np.dot(r_minus, normal))
    return float(np.dot(r_minus, normal) - np.dot(r_plus, normal))


def vector_average(r_minus, r_plus=None):
    """Average of a vector across an edge; single-valued on the boundary."""
    r_minus = np.asarray(r_minus, dtype=float)
    if r_plus is None:
        return r_minus
    return 0.5 * (r_minus + np.asarray(r_plus, dtype=float))
