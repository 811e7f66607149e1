"""Regenerate the unstructured unit-square mesh shipped in data/.

Boundary points stay on the square; interior grid points are jittered with
a fixed seed and triangulated by Delaunay.  Deterministic: rerunning
reproduces the committed files byte for byte.
"""

import pathlib
import sys

import numpy as np
from scipy.spatial import Delaunay

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from porous_opt.mesh import build_primal, write_mesh  # noqa: E402


def make_points(n=10, jitter=0.25, seed=20240611):
    rng = np.random.default_rng(seed)
    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    interior = (
        (pts[:, 0] > 1e-9) & (pts[:, 0] < 1 - 1e-9)
        & (pts[:, 1] > 1e-9) & (pts[:, 1] < 1 - 1e-9)
    )
    pts[interior] += rng.uniform(-jitter / n, jitter / n, size=(interior.sum(), 2))
    return pts


def main():
    pts = make_points()
    tri = Delaunay(pts)
    mesh = build_primal(pts, tri.simplices)
    out = pathlib.Path(__file__).resolve().parents[1] / "data"
    out.mkdir(exist_ok=True)
    write_mesh(mesh, out / "unstructured_square.node", out / "unstructured_square.ele")
    print(f"wrote {mesh.num_vertices} vertices, {mesh.num_triangles} triangles, "
          f"quality ratio {mesh.quality_ratio:.3f}")


if __name__ == "__main__":
    main()
