"""Structured conforming triangulations of the unit square.

The mesh is an n-by-n grid of squares, each split into two triangles by
the diagonal from the lower-left to the upper-right corner, so all cells
have area 1/(2n^2) and counterclockwise vertex order.

Edges carry a global orientation through their unit normal: for an
interior edge the normal points from the lower-numbered adjacent cell to
the higher-numbered one; boundary normals point out of the domain.  The
per-cell sign in ``cell_edge_signs`` converts the global normal into the
outward normal of that cell, so interior edges always get +1 from one
cell and -1 from the other.

Indices are deterministic functions of the grid position (edges are
enumerated horizontals, then verticals, then diagonals), so two builds
with the same n are bit-identical.  A ``Mesh`` is immutable after
construction and safe to share between threads.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Triangulation of the unit square with oriented edges.

    Attributes
    ----------
    n : int
        Subdivisions per side; the mesh size is h = 1/n.
    vertices : (nv, 2) float array
    edges : (ne, 2) int array
        Vertex index pairs.
    cells : (nc, 3) int array
        Vertex triples in counterclockwise order.
    cell_edges : (nc, 3) int array
        Edge indices; local edge k connects local vertices k and (k+1)%3.
    cell_edge_signs : (nc, 3) int array
        +1 where the global edge normal is outward for the cell, else -1.
    edge_normals, edge_midpoints : (ne, 2) float arrays
    edge_lengths : (ne,) float array
    boundary_edges : sorted int array of edges on the domain boundary
    cell_areas, cell_barycenters : per-cell geometry
    """

    n: int
    vertices: np.ndarray
    edges: np.ndarray
    cells: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    edge_normals: np.ndarray
    edge_lengths: np.ndarray
    edge_midpoints: np.ndarray
    boundary_edges: np.ndarray
    cell_areas: np.ndarray
    cell_barycenters: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]


def build_structured_unit_square(n: int) -> Mesh:
    """Build the uniform diagonal-split triangulation with n cells per side.

    Parameters
    ----------
    n : int
        Number of grid squares per side, n >= 1.

    Returns
    -------
    Mesh
        (n+1)^2 vertices, 3n^2 + 2n edges, 2n^2 triangles.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ValueError(f"n must be an integer, got {n!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    n = int(n)

    # Vertices: index j*(n+1) + i at (i/n, j/n).
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    vertices = np.column_stack([ii.ravel() / n, jj.ravel() / n]).astype(float)

    def vid(i, j):
        return j * (n + 1) + i

    # Edge enumeration: horizontals h(i,j)=j*n+i, then verticals, then
    # diagonals of each square.
    n_h = n * (n + 1)
    n_v = n * (n + 1)
    n_d = n * n
    ne = n_h + n_v + n_d

    def h_edge(i, j):
        return j * n + i

    def v_edge(i, j):
        return n_h + j * (n + 1) + i

    def d_edge(i, j):
        return n_h + n_v + j * n + i

    edges = np.empty((ne, 2), dtype=np.int64)
    for j in range(n + 1):
        for i in range(n):
            edges[h_edge(i, j)] = (vid(i, j), vid(i + 1, j))
    for j in range(n):
        for i in range(n + 1):
            edges[v_edge(i, j)] = (vid(i, j), vid(i, j + 1))
    for j in range(n):
        for i in range(n):
            edges[d_edge(i, j)] = (vid(i, j), vid(i + 1, j + 1))

    # Cells: square (i,j) gives the lower triangle 2*(j*n+i) and the upper
    # triangle 2*(j*n+i)+1, both counterclockwise.
    nc = 2 * n * n
    cells = np.empty((nc, 3), dtype=np.int64)
    cell_edges = np.empty((nc, 3), dtype=np.int64)
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            c = 2 * (j * n + i)
            cells[c] = (v00, v10, v11)
            cell_edges[c] = (h_edge(i, j), v_edge(i + 1, j), d_edge(i, j))
            cells[c + 1] = (v00, v11, v01)
            cell_edges[c + 1] = (d_edge(i, j), h_edge(i, j + 1), v_edge(i, j))

    # Outward normals per (cell, local edge): CCW tangent rotated by -90deg.
    pts = vertices[cells]                        # (nc, 3, 2)
    tangents = np.roll(pts, -1, axis=1) - pts    # local edge k: vertex k -> k+1
    lengths_local = np.linalg.norm(tangents, axis=2)
    outward = np.stack(
        [tangents[:, :, 1], -tangents[:, :, 0]], axis=2
    ) / lengths_local[:, :, None]

    # Global edge normal: outward normal of the lowest-numbered adjacent
    # cell (boundary edges have only one).  Signs follow.
    first_cell = np.full(ne, -1, dtype=np.int64)
    adjacency_count = np.zeros(ne, dtype=np.int64)
    for c in range(nc):
        for k in range(3):
            e = cell_edges[c, k]
            adjacency_count[e] += 1
            if first_cell[e] < 0:
                first_cell[e] = c  # cells are visited in increasing order

    edge_normals = np.empty((ne, 2))
    for c in range(nc):
        for k in range(3):
            e = cell_edges[c, k]
            if first_cell[e] == c:
                edge_normals[e] = outward[c, k]

    dots = np.einsum("ckd,ckd->ck", outward, edge_normals[cell_edges])
    cell_edge_signs = np.where(dots > 0.0, 1, -1).astype(np.int64)

    boundary_edges = np.flatnonzero(adjacency_count == 1)

    ev = vertices[edges]
    edge_midpoints = 0.5 * (ev[:, 0, :] + ev[:, 1, :])
    edge_lengths = np.linalg.norm(ev[:, 1, :] - ev[:, 0, :], axis=1)

    cross = (
        (pts[:, 1, 0] - pts[:, 0, 0]) * (pts[:, 2, 1] - pts[:, 0, 1])
        - (pts[:, 1, 1] - pts[:, 0, 1]) * (pts[:, 2, 0] - pts[:, 0, 0])
    )
    cell_areas = 0.5 * cross  # positive because cells are CCW
    cell_barycenters = pts.mean(axis=1)

    arrays = (
        vertices, edges, cells, cell_edges, cell_edge_signs, edge_normals,
        edge_lengths, edge_midpoints, boundary_edges, cell_areas,
        cell_barycenters,
    )
    for a in arrays:
        a.flags.writeable = False

    return Mesh(n, *arrays)


def cell_geometry(mesh: Mesh, cell: int):
    """Return (area, barycenter, edge data) for one cell.

    Edge data is a list of (length, midpoint, outward-normal sign) triples
    in the cell's local edge order; the sign converts the global edge
    normal into this cell's outward normal.
    """
    if not 0 <= cell < mesh.num_cells:
        raise ValueError(f"cell index {cell} out of range [0, {mesh.num_cells})")
    edges = mesh.cell_edges[cell]
    edge_data = [
        (
            float(mesh.edge_lengths[e]),
            mesh.edge_midpoints[e].copy(),
            int(mesh.cell_edge_signs[cell, k]),
        )
        for k, e in enumerate(edges)
    ]
    return float(mesh.cell_areas[cell]), mesh.cell_barycenters[cell].copy(), edge_data


def export_plaintext(mesh: Mesh, path) -> None:
    """Write vertices and cells as plain text for external plotting."""
    with open(path, "w") as fh:
        fh.write(f"# unit square triangulation, n = {mesh.n}\n")
        fh.write(f"# {mesh.num_vertices} vertices\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"# {mesh.num_cells} cells\n")
        for a, b, c in mesh.cells:
            fh.write(f"{a} {b} {c}\n")
