"""Primal triangulation and its two dual tessellations.

Three meshes drive the discretization:

* the primal triangulation, carrying the Raviart-Thomas / P0 / P1DG
  degrees of freedom;
* the diamond dual grid with one cell per primal edge (a quadrilateral
  joining the edge endpoints to the barycentres of the adjacent triangles,
  degenerating to a sub-triangle on the boundary), used to test the Darcy
  equations;
* the barycentric dual grid with three sub-triangles per primal element
  (barycentre joined to the vertices), used to test the saturation equation.

Degree-of-freedom ordering is the mesh construction order: triangles in
input order, edges in order of first appearance while scanning triangles
(local edge j of triangle K joins vertices ``tri[K, j]`` and
``tri[K, (j+1) % 3]``).  Edge normals are global and fixed at build time:
each unit normal points out of the lower-indexed adjacent triangle, and
outward on the boundary.  This makes every assembled matrix reproducible
bit-for-bit for a given input file.
"""

from dataclasses import dataclass

import numpy as np

from .errors import MeshConformityError, MeshStructureError

_DEGENERATE_REL_TOL = 1e-14


def _cross2(a, b):
    """z-component of the cross product of 2D vectors (broadcasting)."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _perp(v):
    """Rotate by -90 degrees: (x, y) -> (y, -x)."""
    out = np.empty_like(v)
    out[..., 0] = v[..., 1]
    out[..., 1] = -v[..., 0]
    return out


@dataclass(frozen=True)
class PrimalMesh:
    """Conforming triangulation with full edge connectivity.

    Attributes
    ----------
    vertices : (n_v, 2) float
    triangles : (n_t, 3) int, counterclockwise
    edges : (n_e, 2) int, sorted vertex pairs in construction order
    edge_tris : (n_e, 2) int, adjacent triangles; ``edge_tris[e, 0]`` is the
        lower-indexed one and ``edge_tris[e, 1]`` is -1 on the boundary
    boundary_edge : (n_e,) bool
    edge_normal : (n_e, 2) unit normal out of ``edge_tris[e, 0]``
    edge_midpoint : (n_e, 2)
    edge_length : (n_e,)
    tri_edges : (n_t, 3) global edge index of each local edge
    tri_edge_sign : (n_t, 3) +1 where the stored normal is outward of the
        triangle, else -1
    tri_area : (n_t,) strictly positive
    barycentre : (n_t, 2)
    h : max element diameter; h_tri per-element diameters
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_tris: np.ndarray
    boundary_edge: np.ndarray
    edge_normal: np.ndarray
    edge_midpoint: np.ndarray
    edge_length: np.ndarray
    tri_edges: np.ndarray
    tri_edge_sign: np.ndarray
    tri_area: np.ndarray
    barycentre: np.ndarray
    h: float
    h_tri: np.ndarray

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def interior_edges(self):
        return np.flatnonzero(~self.boundary_edge)

    @property
    def domain_area(self):
        return float(self.tri_area.sum())

    @property
    def quality_ratio(self):
        """Quasi-uniformity ratio max h_K / min h_K (reported, not enforced)."""
        return float(self.h_tri.max() / self.h_tri.min())

    def tri_vertices(self, k=None):
        """Coordinates of the triangle corners, shape (n_t, 3, 2)."""
        if k is None:
            return self.vertices[self.triangles]
        return self.vertices[self.triangles[k]]


def build_primal(vertex_list, triangle_list) -> PrimalMesh:
    """Build a :class:`PrimalMesh` from raw vertex and triangle arrays.

    Triangles with clockwise orientation are silently reordered to
    counterclockwise.  Raises :class:`MeshStructureError` for out-of-range
    indices, duplicate or degenerate triangles, and
    :class:`MeshConformityError` if an edge is shared by more than two
    triangles.
    """
    vertices = np.ascontiguousarray(vertex_list, dtype=float)
    triangles = np.ascontiguousarray(triangle_list, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshStructureError("vertex array must have shape (n, 2)")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshStructureError("triangle array must have shape (n, 3)")
    n_v = vertices.shape[0]
    if triangles.size and (triangles.min() < 0 or triangles.max() >= n_v):
        raise MeshStructureError("triangle vertex index out of range")

    pts = vertices[triangles]
    signed = 0.5 * _cross2(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
    scale = np.maximum(np.max(np.abs(pts).sum(axis=2), axis=1) ** 2, 1.0)
    degenerate = np.abs(signed) <= _DEGENERATE_REL_TOL * scale
    if degenerate.any():
        raise MeshStructureError(
            f"degenerate triangle(s) at indices {np.flatnonzero(degenerate).tolist()}"
        )
    flip = signed < 0.0
    if flip.any():
        triangles = triangles.copy()
        triangles[flip] = triangles[flip][:, [0, 2, 1]]

    keys = np.sort(triangles, axis=1)
    _, counts = np.unique(keys, axis=0, return_counts=True)
    if (counts > 1).any():
        raise MeshStructureError("duplicate triangle(s) in input")

    # edge extraction in deterministic first-appearance order
    edge_index = {}
    edges = []
    edge_tris_list = []
    n_t = triangles.shape[0]
    tri_edges = np.empty((n_t, 3), dtype=np.int64)
    for k in range(n_t):
        for j in range(3):
            a = int(triangles[k, j])
            b = int(triangles[k, (j + 1) % 3])
            key = (a, b) if a < b else (b, a)
            e = edge_index.get(key)
            if e is None:
                e = len(edges)
                edge_index[key] = e
                edges.append(key)
                edge_tris_list.append([k, -1])
            else:
                if edge_tris_list[e][1] != -1:
                    raise MeshConformityError(
                        f"edge {key} shared by more than two triangles"
                    )
                edge_tris_list[e][1] = k
            tri_edges[k, j] = e
    edges = np.asarray(edges, dtype=np.int64)
    edge_tris = np.asarray(edge_tris_list, dtype=np.int64)
    boundary_edge = edge_tris[:, 1] == -1

    area = np.abs(signed)
    barycentre = pts.mean(axis=1)

    evec = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    edge_length = np.linalg.norm(evec, axis=1)
    edge_midpoint = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    normal = _perp(evec) / edge_length[:, None]
    # orient out of the lower-index adjacent triangle
    away = edge_midpoint - barycentre[edge_tris[:, 0]]
    wrong = np.einsum("ij,ij->i", normal, away) < 0.0
    normal[wrong] *= -1.0

    tri_edge_sign = np.where(
        edge_tris[tri_edges, 0] == np.arange(n_t)[:, None], 1, -1
    ).astype(np.int64)

    edge_per_tri = edge_length[tri_edges]
    h_tri = edge_per_tri.max(axis=1)

    return PrimalMesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        edge_tris=edge_tris,
        boundary_edge=boundary_edge,
        edge_normal=normal,
        edge_midpoint=edge_midpoint,
        edge_length=edge_length,
        tri_edges=tri_edges,
        tri_edge_sign=tri_edge_sign,
        tri_area=area,
        barycentre=barycentre,
        h=float(h_tri.max()),
        h_tri=h_tri,
    )


def square_mesh(n, diagonal="right") -> PrimalMesh:
    """Uniform n-by-n criss-cross triangulation of the unit square.

    Each of the n*n cells is split along a diagonal, giving 2*n^2 triangles.
    """
    if n < 1:
        raise MeshStructureError("square_mesh requires n >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            if diagonal == "right":
                tris.append([v00, v10, v11])
                tris.append([v00, v11, v01])
            else:
                tris.append([v00, v10, v01])
                tris.append([v10, v11, v01])
    return build_primal(vertices, np.asarray(tris))


@dataclass(frozen=True)
class DiamondDualMesh:
    """Diamond dual grid: one cell per primal edge.

    Interior cells are quadrilaterals joining the edge endpoints with the
    barycentres of the two adjacent triangles; boundary cells are the
    sub-triangle joining the edge endpoints to the single adjacent
    barycentre.  Cell boundary segments are stored flat (CSR layout by
    cell) with their owning primal triangle and outward unit normal.
    """

    mesh: PrimalMesh
    cell_area: np.ndarray           # (n_e,)
    cell_polygons: list             # per cell, (k, 2) CCW vertex array
    seg_ptr: np.ndarray             # (n_e + 1,) CSR offsets into seg_* arrays
    seg_owner: np.ndarray           # (n_seg,) owning triangle
    seg_normal: np.ndarray          # (n_seg, 2) outward unit normal
    seg_length: np.ndarray          # (n_seg,)

    @property
    def num_cells(self):
        return self.cell_area.shape[0]


def build_diamond_dual(mesh: PrimalMesh) -> DiamondDualMesh:
    """Construct the diamond dual tessellation of ``mesh``."""
    n_e = mesh.num_edges
    areas = np.empty(n_e)
    polygons = []
    ptr = [0]
    owners, normals, lengths = [], [], []

    bary = mesh.barycentre
    verts = mesh.vertices

    for e in range(n_e):
        a = verts[mesh.edges[e, 0]]
        b = verts[mesh.edges[e, 1]]
        k0, k1 = mesh.edge_tris[e]
        if k1 == -1:
            poly = np.array([a, b, bary[k0]])
            own = [k0, k0, k0]
        else:
            poly = np.array([a, bary[k0], b, bary[k1]])
            own = [k0, k0, k1, k1]
        # normalize to CCW
        x, y = poly[:, 0], poly[:, 1]
        twice_area = np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))
        if twice_area < 0.0:
            poly = poly[::-1]
            own = own[::-1]
            twice_area = -twice_area
        areas[e] = 0.5 * twice_area
        polygons.append(poly)
        centroid = poly.mean(axis=0)
        m = poly.shape[0]
        for s in range(m):
            p, q = poly[s], poly[(s + 1) % m]
            t = q - p
            ln = np.linalg.norm(t)
            nrm = _perp(t) / ln
            if np.dot(nrm, 0.5 * (p + q) - centroid) < 0.0:
                nrm = -nrm
            owners.append(own[s] if twice_area >= 0 else own[s])
            normals.append(nrm)
            lengths.append(ln)
        ptr.append(len(owners))

    # fix segment ownership after possible reversal: recompute by matching
    # segment midpoints to the two adjacent triangles
    seg_owner = np.asarray(owners, dtype=np.int64)
    seg_normal = np.asarray(normals)
    seg_length = np.asarray(lengths)
    seg_ptr = np.asarray(ptr, dtype=np.int64)

    # ownership from geometry: a segment belongs to the triangle whose
    # barycentric coordinates contain its midpoint
    for e in range(n_e):
        k0, k1 = mesh.edge_tris[e]
        if k1 == -1:
            seg_owner[seg_ptr[e]:seg_ptr[e + 1]] = k0
            continue
        poly = polygons[e]
        m = poly.shape[0]
        for s in range(m):
            mid = 0.5 * (poly[s] + poly[(s + 1) % m])
            seg_owner[seg_ptr[e] + s] = k0 if _contains(mesh, k0, mid) else k1

    return DiamondDualMesh(
        mesh=mesh,
        cell_area=areas,
        cell_polygons=polygons,
        seg_ptr=seg_ptr,
        seg_owner=seg_owner,
        seg_normal=seg_normal,
        seg_length=seg_length,
    )


def _contains(mesh, k, point, tol=1e-12):
    p = mesh.tri_vertices(k)
    v0, v1, v2 = p[0], p[1], p[2]
    d = _cross2(v1 - v0, v2 - v0)
    l1 = _cross2(v1 - point, v2 - point) / d
    l2 = _cross2(v2 - point, v0 - point) / d
    l3 = 1.0 - l1 - l2
    return min(l1, l2, l3) >= -tol


@dataclass(frozen=True)
class BarycentricDualMesh:
    """Barycentric dual grid: three sub-triangles per primal element.

    Cell (K, j) is the sub-triangle (v_j, v_{j+1}, b_K); it contains local
    edge j of triangle K, which links it to the P1DG edge-average transfer.
    The two fan segments (v_{j+1}, b_K) and (b_K, v_j) carry outward unit
    normals with respect to the cell.
    """

    mesh: PrimalMesh
    cell_area: np.ndarray        # (n_t, 3): each equals |K| / 3
    edge_of_cell: np.ndarray     # (n_t, 3) global edge containing the cell
    seg_start: np.ndarray        # (n_t, 3, 2, 2) fan segment start points
    seg_end: np.ndarray          # (n_t, 3, 2, 2)
    seg_normal: np.ndarray       # (n_t, 3, 2, 2) outward unit normals
    seg_length: np.ndarray       # (n_t, 3, 2)

    @property
    def num_cells(self):
        return 3 * self.mesh.num_triangles


def build_barycentric_dual(mesh: PrimalMesh) -> BarycentricDualMesh:
    """Construct the barycentric dual tessellation of ``mesh``."""
    pts = mesh.tri_vertices()           # (n_t, 3, 2)
    bary = mesh.barycentre              # (n_t, 2)
    n_t = mesh.num_triangles

    cell_area = np.repeat(mesh.tri_area[:, None] / 3.0, 3, axis=1)

    seg_start = np.empty((n_t, 3, 2, 2))
    seg_end = np.empty((n_t, 3, 2, 2))
    for j in range(3):
        vj = pts[:, j]
        vj1 = pts[:, (j + 1) % 3]
        # traversal v_{j+1} -> b_K -> v_j walks the interior boundary of
        # cell (K, j) counterclockwise (triangles are CCW)
        seg_start[:, j, 0] = vj1
        seg_end[:, j, 0] = bary
        seg_start[:, j, 1] = bary
        seg_end[:, j, 1] = vj

    tangent = seg_end - seg_start
    seg_length = np.linalg.norm(tangent, axis=-1)
    seg_normal = _perp(tangent) / seg_length[..., None]
    # flip any normal pointing toward the cell centroid
    cell_centroid = (pts + pts[:, [1, 2, 0]] + bary[:, None, :]) / 3.0
    mid = 0.5 * (seg_start + seg_end)
    inward = (
        np.einsum("tjse,tjse->tjs", seg_normal, cell_centroid[:, :, None, :] - mid)
        > 0.0
    )
    seg_normal[inward] *= -1.0

    return BarycentricDualMesh(
        mesh=mesh,
        cell_area=cell_area,
        edge_of_cell=mesh.tri_edges.copy(),
        seg_start=seg_start,
        seg_end=seg_end,
        seg_normal=seg_normal,
        seg_length=seg_length,
    )


def read_mesh(node_path, ele_path) -> PrimalMesh:
    """Read a mesh from plain-text node/element files.

    Grammar (both files): the first non-comment line holds the entity count
    and the payload width; every following line is ``index payload...`` with
    0-based indices.  Node payload: two coordinates.  Element payload: three
    vertex indices.  Lines starting with ``#`` are comments.
    """
    nodes = _read_table(node_path, 2, float)
    elems = _read_table(ele_path, 3, int)
    return build_primal(nodes, elems.astype(np.int64))


def _read_table(path, width, dtype):
    rows = []
    count = None
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if count is None:
                count = int(parts[0])
                declared = int(parts[1])
                if declared != width:
                    raise MeshStructureError(
                        f"{path}: expected payload width {width}, got {declared}"
                    )
                continue
            if len(parts) != width + 1:
                raise MeshStructureError(f"{path}: malformed line {line!r}")
            idx = int(parts[0])
            if idx != len(rows):
                raise MeshStructureError(
                    f"{path}: entity index {idx} out of order (expected {len(rows)})"
                )
            rows.append([dtype(x) for x in parts[1:]])
    if count is None or len(rows) != count:
        raise MeshStructureError(f"{path}: declared count does not match data")
    return np.asarray(rows)


def write_mesh(mesh: PrimalMesh, node_path, ele_path):
    """Write node/element files in the grammar accepted by :func:`read_mesh`."""
    with open(node_path, "w", encoding="utf-8") as fh:
        fh.write(f"{mesh.num_vertices} 2\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i} {x:.17g} {y:.17g}\n")
    with open(ele_path, "w", encoding="utf-8") as fh:
        fh.write(f"{mesh.num_triangles} 3\n")
        for i, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{i} {a} {b} {c}\n")
