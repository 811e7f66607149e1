"""Quadrature rules on the reference triangle and reference edge.

Triangle rules live on the reference element with vertices (0,0), (1,0),
(0,1); their weights sum to the reference area 1/2.  Edge rules are Gauss
rules on [0, 1] with weights summing to 1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# Dunavant-type rules on the reference triangle, keyed by exactness degree.
_TRI_RULES = {
    1: (np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5])),
    2: (
        np.array([[2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0], [1.0 / 6.0, 1.0 / 6.0]]),
        np.array([1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]),
    ),
    4: (
        np.array(
            [
                [0.816847572980459, 0.091576213509771],
                [0.091576213509771, 0.816847572980459],
                [0.091576213509771, 0.091576213509771],
                [0.108103018168070, 0.445948490915965],
                [0.445948490915965, 0.108103018168070],
                [0.445948490915965, 0.445948490915965],
            ]
        ),
        0.5
        * np.array(
            [
                0.109951743655322,
                0.109951743655322,
                0.109951743655322,
                0.223381589678011,
                0.223381589678011,
                0.223381589678011,
            ]
        ),
    ),
    5: (
        np.array(
            [
                [1.0 / 3.0, 1.0 / 3.0],
                [0.059715871789770, 0.470142064105115],
                [0.470142064105115, 0.059715871789770],
                [0.470142064105115, 0.470142064105115],
                [0.797426985353087, 0.101286507323456],
                [0.101286507323456, 0.797426985353087],
                [0.101286507323456, 0.101286507323456],
            ]
        ),
        0.5
        * np.array(
            [
                0.225,
                0.132394152788506,
                0.132394152788506,
                0.132394152788506,
                0.125939180544827,
                0.125939180544827,
                0.125939180544827,
            ]
        ),
    ),
}


def _gauss_01(npts):
    nodes, weights = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (nodes + 1.0), 0.5 * weights


@dataclass(frozen=True)
class QuadratureRule:
    """Reference quadrature data for triangles and edges.

    Attributes
    ----------
    tri_points : (nq, 2) points on the reference triangle
    tri_weights : (nq,) weights summing to 1/2
    edge_points : (ne,) parameters on [0, 1]
    edge_weights : (ne,) weights summing to 1
    tri_degree, edge_degree : polynomial exactness degrees
    """

    tri_degree: int = 4
    edge_degree: int = 3
    tri_points: np.ndarray = field(init=False, repr=False)
    tri_weights: np.ndarray = field(init=False, repr=False)
    edge_points: np.ndarray = field(init=False, repr=False)
    edge_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.tri_degree not in _TRI_RULES:
            raise ConfigError(
                f"triangle quadrature degree {self.tri_degree} unavailable; "
                f"choose one of {sorted(_TRI_RULES)}"
            )
        if self.edge_degree < 1:
            raise ConfigError("edge quadrature degree must be >= 1")
        pts, wts = _TRI_RULES[self.tri_degree]
        npts = (self.edge_degree + 2) // 2  # n-point Gauss is exact to 2n-1
        ep, ew = _gauss_01(npts)
        object.__setattr__(self, "tri_points", pts)
        object.__setattr__(self, "tri_weights", wts)
        object.__setattr__(self, "edge_points", ep)
        object.__setattr__(self, "edge_weights", ew)

    def map_to_triangles(self, v0, v1, v2):
        """Map the reference rule onto physical triangles.

        v0, v1, v2 : (..., 2) vertex coordinate arrays (broadcast together).
        Returns (points, weights) with shapes (..., nq, 2) and (..., nq);
        weights include the Jacobian, so they sum to the triangle area.
        """
        v0 = np.asarray(v0, dtype=float)
        e1 = np.asarray(v1, dtype=float) - v0
        e2 = np.asarray(v2, dtype=float) - v0
        x = self.tri_points[..., 0]
        y = self.tri_points[..., 1]
        pts = (
            v0[..., None, :]
            + e1[..., None, :] * x[..., :, None]
            + e2[..., None, :] * y[..., :, None]
        )
        # |e1 x e2| is twice the area; reference weights sum to 1/2
        jac = np.abs(e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])
        wts = jac[..., None] * self.tri_weights
        return pts, wts

    def map_to_segments(self, p, q):
        """Map the edge rule onto physical segments.

        p, q : (..., 2) endpoint arrays.  Returns (points, weights) with
        shapes (..., ne, 2) and (..., ne); weights sum to the segment length.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        s = self.edge_points
        pts = p[..., None, :] + (q - p)[..., None, :] * s[:, None]
        length = np.linalg.norm(q - p, axis=-1)
        wts = length[..., None] * self.edge_weights
        return pts, wts
