"""Independent brute-force integration used to cross-check assembly.

Everything here is deliberately written against a different code path
than the package: basis functions are constructed in physical
coordinates from each triangle's vertex positions, and integrals use a
tensor-product Gauss rule on the square pushed onto the triangle, so a
shared bug with the production 7-point barycentric rule is impossible.
"""

import numpy as np


def triangle_gauss_points(vertices, n=12):
    """High-order quadrature points and weights on one physical triangle.

    Maps an n x n Gauss-Legendre grid from the unit square onto the
    triangle; exact for polynomial integrands far beyond anything the
    discrete forms contain.
    """
    g, w = np.polynomial.legendre.leggauss(n)
    a = 0.5 * (g + 1.0)
    wa = 0.5 * w
    A, B = np.meshgrid(a, a, indexing="ij")
    WA, WB = np.meshgrid(wa, wa, indexing="ij")
    xi = A.ravel()
    eta = (B * (1.0 - A)).ravel()
    weights = (WA * WB * (1.0 - A)).ravel()

    v0, v1, v2 = np.asarray(vertices)
    x = v0[0] + xi * (v1[0] - v0[0]) + eta * (v2[0] - v0[0])
    y = v0[1] + xi * (v1[1] - v0[1]) + eta * (v2[1] - v0[1])
    area2 = abs(
        (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v1[1] - v0[1]) * (v2[0] - v0[0])
    )
    return x, y, weights * area2


def barycentric_functions(vertices):
    """Affine barycentric coordinates of a triangle in physical space.

    Returns ``(funcs, grads)`` where ``funcs[i](x, y)`` evaluates the
    i-th coordinate and ``grads[i]`` is its constant gradient.
    """
    v = np.asarray(vertices, dtype=float)
    M = np.column_stack([np.ones(3), v[:, 0], v[:, 1]])
    coeff = np.linalg.solve(M, np.eye(3))  # columns: (a_i, b_i, c_i)
    funcs = []
    grads = []
    for i in range(3):
        a, b, c = coeff[:, i]
        funcs.append(lambda x, y, a=a, b=b, c=c: a + b * x + c * y)
        grads.append(np.array([b, c]))
    return funcs, grads


def lagrange_basis(vertices, degree):
    """Physical-coordinate Lagrange basis callables on one triangle.

    Each entry is ``(value_fn, grad_fn)``; the local ordering is the
    three vertices followed, for degree 2, by the midpoints of edges
    (0,1), (1,2), (2,0).
    """
    lam, dlam = barycentric_functions(vertices)
    basis = []
    if degree == 1:
        for i in range(3):
            basis.append(
                (
                    lam[i],
                    lambda x, y, g=dlam[i]: np.broadcast_to(
                        g, np.shape(x) + (2,)
                    ).copy(),
                )
            )
        return basis
    for i in range(3):
        def val(x, y, f=lam[i]):
            l = f(x, y)
            return l * (2.0 * l - 1.0)

        def grad(x, y, f=lam[i], g=dlam[i]):
            l = f(x, y)
            return (4.0 * l - 1.0)[..., None] * g

        basis.append((val, grad))
    for i, j in ((0, 1), (1, 2), (2, 0)):
        def val(x, y, fi=lam[i], fj=lam[j]):
            return 4.0 * fi(x, y) * fj(x, y)

        def grad(x, y, fi=lam[i], fj=lam[j], gi=dlam[i], gj=dlam[j]):
            return 4.0 * (fj(x, y)[..., None] * gi + fi(x, y)[..., None] * gj)

        basis.append((val, grad))
    return basis


def oracle_matrix(mesh, trial_space, test_space, integrand, n_gauss=12):
    """Dense matrix of a bilinear form by per-entry quadrature.

    ``integrand(phi_j, grad_j, phi_i, grad_i, x, y)`` returns the
    pointwise integrand for trial function j and test function i.
    """
    out = np.zeros((test_space.n_dofs, trial_space.n_dofs))
    for e in range(mesh.n_triangles):
        verts = mesh.nodes[mesh.triangles[e]]
        x, y, w = triangle_gauss_points(verts, n_gauss)
        trial = lagrange_basis(verts, trial_space.degree)
        test = lagrange_basis(verts, test_space.degree)
        tdofs = trial_space.element_dofs[e]
        sdofs = test_space.element_dofs[e]
        for jl, (pj, gj) in enumerate(trial):
            for il, (pi, gi) in enumerate(test):
                val = np.sum(w * integrand(pj(x, y), gj(x, y), pi(x, y), gi(x, y), x, y))
                out[sdofs[il], tdofs[jl]] += val
    return out


def oracle_vector_field(mesh, space, coeffs):
    """Evaluator ``(x, y, e) -> (u, grad_u)`` for a component-blocked field."""
    n = space.n_dofs

    def evaluate(x, y, e):
        verts = mesh.nodes[mesh.triangles[e]]
        basis = lagrange_basis(verts, space.degree)
        dofs = space.element_dofs[e]
        u = np.zeros(np.shape(x) + (2,))
        gu = np.zeros(np.shape(x) + (2, 2))
        for c in range(2):
            comp = coeffs[c * n : (c + 1) * n]
            for il, (p, g) in enumerate(basis):
                u[..., c] += comp[dofs[il]] * p(x, y)
                gu[..., c, :] += comp[dofs[il]] * g(x, y)
        return u, gu

    return evaluate


def oracle_bstar(mesh, space, u_coeffs, v_coeffs, w_coeffs, n_gauss=12):
    """Skew convection form by an independent element loop."""
    ueval = oracle_vector_field(mesh, space, u_coeffs)
    veval = oracle_vector_field(mesh, space, v_coeffs)
    weval = oracle_vector_field(mesh, space, w_coeffs)
    total = 0.0
    for e in range(mesh.n_triangles):
        verts = mesh.nodes[mesh.triangles[e]]
        x, y, w = triangle_gauss_points(verts, n_gauss)
        uu, _ = ueval(x, y, e)
        vv, gv = veval(x, y, e)
        ww, gw = weval(x, y, e)
        adv_v = np.einsum("qd,qcd->qc", uu, gv)
        adv_w = np.einsum("qd,qcd->qc", uu, gw)
        total += 0.5 * np.sum(w * (np.einsum("qc,qc->q", adv_v, ww) - np.einsum("qc,qc->q", adv_w, vv)))
    return total
