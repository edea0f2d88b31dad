"""Structured triangulations of rectangles with cell/facet connectivity."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BOUNDARY_TAGS = ("bottom", "top", "left", "right")
INTERIOR = -1


@dataclass(frozen=True, eq=False)
class TriangularMesh:
    """Immutable triangle mesh.

    Local facet ``e`` of a cell is the edge opposite its local vertex ``e``,
    i.e. it joins local vertices ``(e + 1) % 3`` and ``(e + 2) % 3``.

    Per-facet arrays have two columns, one per incident side. Column 0 is the
    "+" side, which is always the incident cell with the lower index. For
    exterior facets column 1 holds ``-1`` (cells, local index) or zeros
    (normals).
    """

    vertices: np.ndarray          # (nv, 2)
    cells: np.ndarray             # (nc, 3), counter-clockwise
    facets: np.ndarray            # (nf, 2), sorted vertex pairs
    facet_cells: np.ndarray       # (nf, 2)
    facet_local: np.ndarray       # (nf, 2)
    cell_facets: np.ndarray       # (nc, 3)
    facet_tag: np.ndarray         # (nf,), index into BOUNDARY_TAGS or INTERIOR
    cell_area: np.ndarray         # (nc,)
    facet_length: np.ndarray      # (nf,)
    facet_normal: np.ndarray      # (nf, 2, 2): side, component
    bounds: tuple[float, float, float, float] | None = None
    shape: tuple[int, int] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @property
    def h(self) -> float:
        """Largest facet length, used as the mesh size."""
        return float(self.facet_length.max())

    @property
    def interior_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] >= 0)

    @property
    def exterior_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    def facets_with_tag(self, *tags: str) -> np.ndarray:
        codes = [BOUNDARY_TAGS.index(t) for t in tags]
        return np.flatnonzero(np.isin(self.facet_tag, codes))

    def cell_points(self) -> np.ndarray:
        """Vertex coordinates per cell, shape (nc, 3, 2)."""
        return self.vertices[self.cells]

    def jacobians(self) -> np.ndarray:
        """Affine map Jacobians ``[x1 - x0, x2 - x0]`` as columns, (nc, 2, 2)."""
        if "jac" not in self._cache:
            pts = self.cell_points()
            jac = np.stack([pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0]], axis=2)
            self._cache["jac"] = jac
        return self._cache["jac"]

    def centroids(self) -> np.ndarray:
        return self.cell_points().mean(axis=1)

    def facet_midpoints(self) -> np.ndarray:
        return self.vertices[self.facets].mean(axis=1)

    def to_csv(self, directory: str | Path) -> None:
        """Write ``vertices.csv`` and ``cells.csv`` for debugging."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "vertices.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "x", "y"])
            for i, (x, y) in enumerate(self.vertices):
                w.writerow([i, f"{x:.17g}", f"{y:.17g}"])
        with open(directory / "cells.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "v0", "v1", "v2"])
            for i, c in enumerate(self.cells):
                w.writerow([i, *c.tolist()])


def from_cells(vertices, cells, bounds=None, shape=None) -> TriangularMesh:
    """Build connectivity and geometry for a triangle soup on a rectangle.

    Cells are reoriented counter-clockwise. Exterior facets are tagged by
    which side of ``bounds`` they lie on (defaults to the vertex bounding box).
    """
    vertices = np.asarray(vertices, dtype=float)
    cells = np.array(cells, dtype=np.int64)
    pts = vertices[cells]
    d1 = pts[:, 1] - pts[:, 0]
    d2 = pts[:, 2] - pts[:, 0]
    signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    flip = signed < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]
    area = np.abs(signed)
    if np.any(area <= 0):
        raise ValueError("degenerate cell with zero area")

    nc = len(cells)
    local_edges = np.stack(
        [cells[:, [(e + 1) % 3, (e + 2) % 3]] for e in range(3)], axis=1
    )  # (nc, 3, 2)
    keys = np.sort(local_edges.reshape(-1, 2), axis=1)
    facets, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    nf = len(facets)
    counts = np.bincount(inverse, minlength=nf)
    if np.any(counts > 2):
        raise ValueError("non-manifold mesh: facet shared by more than 2 cells")

    # stable sort keeps the lower cell index first on each facet
    order = np.argsort(inverse, kind="stable")
    first = np.zeros(nf + 1, dtype=np.int64)
    first[1:] = np.cumsum(counts)
    cell_of = order // 3
    local_of = order % 3
    facet_cells = np.full((nf, 2), -1, dtype=np.int64)
    facet_local = np.full((nf, 2), -1, dtype=np.int64)
    facet_cells[:, 0] = cell_of[first[:-1]]
    facet_local[:, 0] = local_of[first[:-1]]
    two = counts == 2
    facet_cells[two, 1] = cell_of[first[:-1][two] + 1]
    facet_local[two, 1] = local_of[first[:-1][two] + 1]
    cell_facets = inverse.reshape(nc, 3)

    edge = vertices[facets[:, 1]] - vertices[facets[:, 0]]
    length = np.hypot(edge[:, 0], edge[:, 1])
    unit = np.stack([edge[:, 1], -edge[:, 0]], axis=1) / length[:, None]
    mid = vertices[facets].mean(axis=1)
    cent = pts.mean(axis=1)
    normal = np.zeros((nf, 2, 2))
    for side in range(2):
        has = facet_cells[:, side] >= 0
        c = facet_cells[has, side]
        s = np.sign(np.einsum("ij,ij->i", unit[has], mid[has] - cent[c]))
        normal[has, side] = unit[has] * s[:, None]

    if bounds is None:
        bounds = (vertices[:, 0].min(), vertices[:, 0].max(),
                  vertices[:, 1].min(), vertices[:, 1].max())
    x0, x1, y0, y1 = bounds
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    tag = np.full(nf, INTERIOR, dtype=np.int64)
    ext = ~two
    checks = [
        np.abs(mid[:, 1] - y0) <= tol,
        np.abs(mid[:, 1] - y1) <= tol,
        np.abs(mid[:, 0] - x0) <= tol,
        np.abs(mid[:, 0] - x1) <= tol,
    ]
    for code, hit in enumerate(checks):
        tag[ext & hit & (tag == INTERIOR)] = code
    if np.any(ext & (tag == INTERIOR)):
        raise ValueError("exterior facet not on the bounding rectangle")

    return TriangularMesh(
        vertices=vertices, cells=cells, facets=facets,
        facet_cells=facet_cells, facet_local=facet_local,
        cell_facets=cell_facets, facet_tag=tag, cell_area=area,
        facet_length=length, facet_normal=normal,
        bounds=tuple(float(b) for b in bounds), shape=shape,
    )


def build_structured(domain=((0.0, 1.0), (0.0, 1.0)), N: int = 8) -> TriangularMesh:
    """N x N quadrilaterals on ``domain``, each cut bottom-left to top-right.

    Quadrilateral ``(i, j)`` yields cells ``2 (j N + i)`` (below the diagonal)
    and ``2 (j N + i) + 1`` (above it).
    """
    (x0, x1), (y0, y1) = domain
    if N < 1:
        raise ValueError("N must be at least 1")
    if not (x1 > x0 and y1 > y0):
        raise ValueError("rectangle must have positive width and height")
    xs = np.linspace(x0, x1, N + 1)
    ys = np.linspace(y0, y1, N + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    a = (j * (N + 1) + i).ravel()
    b = a + 1
    c = a + N + 2
    d = a + N + 1
    cells = np.empty((2 * N * N, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([a, b, c])
    cells[1::2] = np.column_stack([a, c, d])
    return from_cells(vertices, cells, bounds=(x0, x1, y0, y1), shape=(N, N))


def classify_facets(mesh: TriangularMesh) -> tuple[np.ndarray, np.ndarray]:
    """Split facet indices into (interior, exterior)."""
    return mesh.interior_facets, mesh.exterior_facets
