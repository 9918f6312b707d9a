"""Independent reference implementations used by the test suite.

Everything here deliberately follows a different code path from the package:
dense matrices with explicit loops, basis gradients from a coefficient solve,
quadrature instead of closed forms, Voigt-notation elasticity, and plain
Gaussian elimination for linear solves.
"""

from __future__ import annotations

import numpy as np

# degree-2 Keast rule on the reference tetrahedron (barycentric, weight 1/4)
_TET_QP = np.array([
    [0.5854101966249685, 0.1381966011250105, 0.1381966011250105, 0.1381966011250105],
    [0.1381966011250105, 0.5854101966249685, 0.1381966011250105, 0.1381966011250105],
    [0.1381966011250105, 0.1381966011250105, 0.5854101966249685, 0.1381966011250105],
    [0.1381966011250105, 0.1381966011250105, 0.1381966011250105, 0.5854101966249685],
])


def gaussian_elimination(a, b):
    """Dense direct solve by Gaussian elimination with partial pivoting."""
    a = np.array(a, float)
    b = np.array(b, float)
    n = a.shape[0]
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) < 1e-300:
            raise ZeroDivisionError("singular matrix")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        for row in range(col + 1, n):
            f = a[row, col] / a[col, col]
            a[row, col:] -= f * a[col, col:]
            b[row] -= f * b[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


def basis_coefficients(verts):
    """Coefficients (a, b, c, d) of N_i = a + b x + c y + d z for one tet,
    obtained from the 4x4 Vandermonde solve."""
    vand = np.column_stack([np.ones(4), verts])
    return np.linalg.solve(vand, np.eye(4))  # column i holds N_i coefficients


def tet_volume(verts):
    return abs(np.linalg.det(verts[1:] - verts[0])) / 6.0


def dense_scalar_stiffness(mesh):
    n = mesh.num_nodes
    k = np.zeros((n, n))
    for tet in mesh.tets:
        verts = mesh.nodes[tet]
        coeff = basis_coefficients(verts)
        grads = coeff[1:, :].T  # (4, 3)
        vol = tet_volume(verts)
        for a in range(4):
            for b in range(4):
                k[tet[a], tet[b]] += vol * grads[a] @ grads[b]
    return k


def dense_consistent_mass(mesh):
    """Mass matrix via the degree-2 quadrature rule (exact for P1 products)."""
    n = mesh.num_nodes
    m = np.zeros((n, n))
    for tet in mesh.tets:
        verts = mesh.nodes[tet]
        vol = tet_volume(verts)
        for bary in _TET_QP:
            w = vol / 4.0
            for a in range(4):
                for b in range(4):
                    m[tet[a], tet[b]] += w * bary[a] * bary[b]
    return m


def dense_lumped_weights(mesh):
    w = np.zeros(mesh.num_nodes)
    for tet in mesh.tets:
        w[tet] += tet_volume(mesh.nodes[tet]) / 4.0
    return w


def _voigt_d(mu, lam):
    d = np.zeros((6, 6))
    d[:3, :3] = lam
    d[np.arange(3), np.arange(3)] += 2 * mu
    d[3:, 3:] = mu * np.eye(3)
    return d


def dense_elastic_stiffness(mesh, mu, lam):
    """Voigt B-matrix assembly of the linear elastic form."""
    n3 = 3 * mesh.num_nodes
    k = np.zeros((n3, n3))
    d = _voigt_d(mu, lam)
    for tet in mesh.tets:
        verts = mesh.nodes[tet]
        coeff = basis_coefficients(verts)
        grads = coeff[1:, :].T
        vol = tet_volume(verts)
        b = np.zeros((6, 12))
        for a in range(4):
            gx, gy, gz = grads[a]
            b[0, 3 * a] = gx
            b[1, 3 * a + 1] = gy
            b[2, 3 * a + 2] = gz
            b[3, 3 * a] = gy
            b[3, 3 * a + 1] = gx
            b[4, 3 * a + 1] = gz
            b[4, 3 * a + 2] = gy
            b[5, 3 * a] = gz
            b[5, 3 * a + 2] = gx
        ke = vol * b.T @ d @ b
        dofs = np.concatenate([3 * t + np.arange(3) for t in tet])
        k[np.ix_(dofs, dofs)] += ke
    return k


def dense_vector_matrix(scalar):
    """Expand an (N, N) scalar form to (3N, 3N), node-major components."""
    n = scalar.shape[0]
    out = np.zeros((3 * n, 3 * n))
    for c in range(3):
        out[c::3, c::3] = scalar
    return out


def dense_skew_lumped(weights, anchor):
    """Dense block-diagonal lumped precession form."""
    n = weights.shape[0]
    s = np.zeros((3 * n, 3 * n))
    for z in range(n):
        ax, ay, az = anchor[z]
        block = np.array([[0.0, -az, ay], [az, 0.0, -ax], [-ay, ax, 0.0]])
        s[3 * z:3 * z + 3, 3 * z:3 * z + 3] = weights[z] * block
    return s


def dense_magnetostrain_load(mesh, material, m):
    """Loop implementation of the interpolated-magnetostrain load."""
    from magnelast.material import hooke, magnetostrain

    load = np.zeros((mesh.num_nodes, 3))
    s_nodal = hooke(magnetostrain(m, material.lambda100), material.mu, material.lam)
    for tet in mesh.tets:
        verts = mesh.nodes[tet]
        coeff = basis_coefficients(verts)
        grads = coeff[1:, :].T
        vol = tet_volume(verts)
        s_mean = s_nodal[tet].mean(axis=0)
        for a in range(4):
            load[tet[a]] += vol * (s_mean @ grads[a])
    return load


def dense_effective_field_load(mesh, material, u, m_dir):
    """Loop implementation of the lumped magnetoelastic field load."""
    from magnelast.material import (elastic_effective_field, hooke,
                                    magnetostrain)

    n = mesh.num_nodes
    weights = dense_lumped_weights(mesh)
    eps_sum = np.zeros((n, 3, 3))
    for tet in mesh.tets:
        verts = mesh.nodes[tet]
        coeff = basis_coefficients(verts)
        grads = coeff[1:, :].T
        vol = tet_volume(verts)
        grad_u = np.zeros((3, 3))
        for a in range(4):
            grad_u += np.outer(u[tet[a]], grads[a])
        eps = 0.5 * (grad_u + grad_u.T)
        for a in range(4):
            eps_sum[tet[a]] += vol / 4.0 * eps
    eps_avg = eps_sum / weights[:, None, None]
    load = np.zeros((n, 3))
    for z in range(n):
        sigma = hooke(eps_avg[z] - magnetostrain(m_dir[z], material.lambda100),
                      material.mu, material.lam)
        load[z] = weights[z] * elastic_effective_field(sigma, m_dir[z],
                                                       material.lambda100)
    return load


def midpoint_identity_residual(ops, material, k, prev, state, v):
    """Relative residual of the per-step magnetization energy balance.

    Testing the velocity equation with the velocity itself and eliminating
    the gradient cross term through the update m <- m + k v gives

        1/2 |grad m_new|^2 + alpha k |v|^2_L
            = 1/2 |grad m_old|^2 + k <loads, v>_L

    with the lumped norms of the assembly and the loads exactly as assembled
    (the precession form drops out by skew symmetry).
    """
    from magnelast.magnetization import (extrapolate_half, magnetization_rhs,
                                          nodal_project)

    m_old, m_new = prev.m_curr, state.m_curr
    if prev.step_index == 0:
        u_load, m_dir = prev.u_curr, prev.m_curr
    else:
        anchor = extrapolate_half(prev.m_curr, prev.m_prev)
        u_load = 1.5 * prev.u_curr - 0.5 * prev.u_prev
        m_dir = nodal_project(anchor)
    loads = magnetization_rhs(ops, material, np.zeros_like(m_old), u_load,
                              m_dir, prev.time + k / 2.0)
    grad_new = 0.5 * np.sum(m_new * (ops.stiffness @ m_new))
    grad_old = 0.5 * np.sum(m_old * (ops.stiffness @ m_old))
    damp = material.alpha * k * np.sum(ops.weights[:, None] * v * v)
    work = k * np.sum(loads * v)
    residual = grad_new + damp - grad_old - work
    scale = max(abs(grad_new), abs(grad_old), abs(damp), abs(work), 1e-30)
    return abs(residual) / scale


def cube_gauss_quadrature(fn, order=6):
    """Tensor-product Gauss-Legendre integral of fn(x, y, z) over [0, 1]^3."""
    pts, wts = np.polynomial.legendre.leggauss(order)
    pts = 0.5 * (pts + 1.0)
    wts = 0.5 * wts
    total = 0.0
    for i, x in enumerate(pts):
        for j, y in enumerate(pts):
            for kk, z in enumerate(pts):
                total += wts[i] * wts[j] * wts[kk] * fn(x, y, z)
    return total
