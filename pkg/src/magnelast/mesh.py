"""Structured tetrahedral meshes of axis-aligned boxes.

The cube [0, side]^3 is partitioned into n^3 sub-cubes and each sub-cube is
split into 6 tetrahedra sharing the main diagonal (Kuhn / Freudenthal
subdivision).  All cubes use the same diagonal direction, so the mesh is
conforming without any parity alternation.  The clamped boundary is the face
x = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(Exception):
    """Raised for degenerate or inconsistent mesh geometry."""


# The 6 Kuhn tetrahedra of the unit cube: walk from (0,0,0) to (1,1,1) along
# every axis permutation, one coordinate at a time.
_KUHN_PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


@dataclass
class TetMesh:
    """Tetrahedral partition of a box with Dirichlet-node marking.

    Attributes
    ----------
    nodes : (N, 3) float array of vertex coordinates.
    tets : (E, 4) int array of vertex indices, positively oriented.
    dirichlet_nodes : sorted int array of clamped node indices (face x = 0).
    h_max : longest edge length over all tetrahedra.
    node_weights : (N,) lumped volumes, sum of |K|/4 over incident tets.
    """

    nodes: np.ndarray
    tets: np.ndarray
    dirichlet_nodes: np.ndarray
    h_max: float
    node_weights: np.ndarray = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_tets(self) -> int:
        return self.tets.shape[0]

    @property
    def volume(self) -> float:
        return float(self.node_weights.sum())


def build_structured_cube(n: int, side: float = 1.0) -> TetMesh:
    """Mesh [0, side]^3 with 6*n^3 Kuhn tetrahedra.

    Parameters
    ----------
    n : number of sub-cube divisions per axis (>= 1).
    side : box edge length (> 0).
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    side = float(side)
    if not side > 0:
        raise ValueError(f"side must be positive, got {side}")

    m = n + 1
    grid = np.arange(m) * (side / n)
    ix, iy, iz = np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij")
    nodes = np.column_stack([grid[ix.ravel()], grid[iy.ravel()], grid[iz.ravel()]])

    def node_id(i, j, k):
        return (i * m + j) * m + k

    ci, cj, ck = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    ci, cj, ck = ci.ravel(), cj.ravel(), ck.ravel()
    corner = np.stack([ci, cj, ck], axis=1)  # (n^3, 3)

    eye = np.eye(3, dtype=int)
    tets = np.empty((6 * corner.shape[0], 4), dtype=np.int64)
    for t, perm in enumerate(_KUHN_PERMS):
        c0 = corner
        c1 = c0 + eye[perm[0]]
        c2 = c1 + eye[perm[1]]
        c3 = c2 + eye[perm[2]]
        for a, c in enumerate((c0, c1, c2, c3)):
            tets[t::6, a] = node_id(c[:, 0], c[:, 1], c[:, 2])

    tets = _fix_orientation(nodes, tets)
    vols = _tet_volumes(nodes, tets)
    if np.any(vols <= 0):
        raise MeshError("orientation fix failed: nonpositive tet volume")

    weights = np.bincount(
        tets.ravel(), weights=np.repeat(vols / 4.0, 4), minlength=nodes.shape[0]
    )

    dirichlet = np.flatnonzero(np.abs(nodes[:, 0]) <= 1e-12 * max(side, 1.0))

    mesh = TetMesh(
        nodes=nodes,
        tets=tets,
        dirichlet_nodes=np.sort(dirichlet),
        h_max=side * np.sqrt(3.0) / n,
        node_weights=weights,
    )
    for arr in (mesh.nodes, mesh.tets, mesh.dirichlet_nodes, mesh.node_weights):
        arr.flags.writeable = False
    return mesh


def _edge_matrices(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Rows of D[e] are the edge vectors v_a - v_0, a = 1..3."""
    verts = nodes[tets]  # (E, 4, 3)
    return verts[:, 1:, :] - verts[:, :1, :]


def _tet_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    return np.linalg.det(_edge_matrices(nodes, tets)) / 6.0


def _fix_orientation(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    vols = _tet_volumes(nodes, tets)
    flip = vols < 0
    if np.any(flip):
        tets = tets.copy()
        tets[flip, 2], tets[flip, 3] = tets[flip, 3].copy(), tets[flip, 2].copy()
    return tets


def p1_element_geometry(mesh: TetMesh, tet_index: int):
    """Volume and the four constant barycentric gradients of one tet.

    Returns (|K|, grads) with grads of shape (4, 3); the rows sum to zero.
    Raises MeshError when |K| < 1e-14.
    """
    vol, grads = element_geometry(mesh)
    return float(vol[tet_index]), grads[tet_index]


def element_geometry(mesh: TetMesh):
    """Volumes (E,) and barycentric gradients (E, 4, 3) for all tets."""
    D = _edge_matrices(mesh.nodes, mesh.tets)
    vols = np.linalg.det(D) / 6.0
    if np.any(vols < 1e-14):
        bad = int(np.argmin(vols))
        raise MeshError(f"degenerate tetrahedron {bad}: volume {vols[bad]:.3e}")
    Dinv = np.linalg.inv(D)  # (E, 3, 3)
    grads = np.empty((mesh.num_tets, 4, 3))
    # grad lambda_a (a = 1..3) is column a-1 of D^{-1}; grad lambda_0 closes the sum
    grads[:, 1:, :] = np.transpose(Dinv, (0, 2, 1))
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return vols, grads


def dump_mesh(mesh: TetMesh, path) -> None:
    """Plain-text mesh dump for debugging.

    Format: header "nodes N tets M", N coordinate lines, M index 4-tuples,
    then the Dirichlet node indices on one line.
    """
    with open(path, "w") as f:
        f.write(f"nodes {mesh.num_nodes} tets {mesh.num_tets}\n")
        for p in mesh.nodes:
            f.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for t in mesh.tets:
            f.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")
        f.write(" ".join(str(i) for i in mesh.dirichlet_nodes) + "\n")
