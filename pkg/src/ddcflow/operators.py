"""Assembly of the discrete operators.

Everything is integrated with the shared degree-5 rule and accumulated
element by element in mesh order through ``scipy.sparse.coo_matrix``,
which keeps the assembled matrices reproducible across runs.  Vector
operators act on component-blocked coefficient vectors and are block
diagonal per component wherever the weak form allows it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .spaces import ScalarSpace, TaylorHoodSpace, VectorSpace

__all__ = [
    "assemble_mass",
    "assemble_stiffness",
    "assemble_divergence",
    "assemble_load",
    "assemble_convection_linearized",
    "convection_vector",
    "apply_bstar",
    "laplacian_pairing_vector",
    "CoarseGradient",
    "GradientProjector",
    "project_gradient_coarse",
    "projection_defect_norm",
]


def _scatter(values: np.ndarray, rows_dofs, cols_dofs, shape) -> sp.csr_matrix:
    """Accumulate (n_el, i, j) local blocks into a CSR matrix."""
    n_el, ni, nj = values.shape
    rows = np.repeat(rows_dofs, nj, axis=1)
    cols = np.tile(cols_dofs, (1, ni))
    mat = sp.coo_matrix(
        (values.ravel(), (rows.ravel(), cols.ravel())), shape=shape
    ).tocsr()
    mat.sort_indices()
    return mat


def _vector_block(scalar_matrix: sp.csr_matrix) -> sp.csr_matrix:
    return sp.block_diag([scalar_matrix, scalar_matrix], format="csr")


def assemble_mass(space) -> sp.csr_matrix:
    """Mass matrix M[i,j] = (phi_j, phi_i)."""
    if isinstance(space, VectorSpace):
        return _vector_block(assemble_mass(space.scalar))
    ed = space.edata
    vals = np.einsum("eq,qi,qj->eij", ed.wdet, ed.phi, ed.phi)
    n = space.n_dofs
    return _scatter(vals, ed.dofs, ed.dofs, (n, n))


def assemble_stiffness(space) -> sp.csr_matrix:
    """Stiffness matrix K[i,j] = (grad phi_j, grad phi_i)."""
    if isinstance(space, VectorSpace):
        return _vector_block(assemble_stiffness(space.scalar))
    ed = space.edata
    vals = np.einsum("eq,eqia,eqja->eij", ed.wdet, ed.grad, ed.grad)
    n = space.n_dofs
    return _scatter(vals, ed.dofs, ed.dofs, (n, n))


def assemble_divergence(th: TaylorHoodSpace) -> sp.csr_matrix:
    """Coupling matrix B[q, v] = (q, div v) of the Taylor-Hood pair."""
    ped = th.pressure.edata
    ved = th.velocity.scalar.edata
    n_u = th.velocity.scalar.n_dofs
    blocks = []
    for d in range(2):
        vals = np.einsum("eq,qi,eqj->eij", ped.wdet, ped.phi, ved.grad[:, :, :, d])
        blocks.append(
            _scatter(vals, ped.dofs, ved.dofs, (th.n_pressure, n_u))
        )
    return sp.hstack(blocks, format="csr")


def assemble_load(f, t: float, space) -> np.ndarray:
    """Load vector with entries (f(t), phi_i) for a spatial function f(x, y, t)."""
    if isinstance(space, VectorSpace):
        ed = space.scalar.edata
        f1, f2 = f(ed.x[:, :, 0], ed.x[:, :, 1], t)
        out = np.zeros(space.n_dofs)
        for d, fc in enumerate((f1, f2)):
            vals = np.einsum("eq,eq,qi->ei", ed.wdet, np.broadcast_to(fc, ed.wdet.shape), ed.phi)
            np.add.at(out, d * space.n_scalar + ed.dofs, vals)
        return out
    ed = space.edata
    fq = np.broadcast_to(f(ed.x[:, :, 0], ed.x[:, :, 1], t), ed.wdet.shape)
    vals = np.einsum("eq,eq,qi->ei", ed.wdet, fq, ed.phi)
    out = np.zeros(space.n_dofs)
    np.add.at(out, ed.dofs, vals)
    return out


def _field_at_quadrature(vspace: VectorSpace, u: np.ndarray):
    """Values (n_el, q, 2) and gradients (n_el, q, 2, 2) at quadrature points."""
    ed = vspace.scalar.edata
    n = vspace.n_scalar
    coeffs = np.stack([u[:n][ed.dofs], u[n:][ed.dofs]], axis=-1)  # (e, i, c)
    values = np.einsum("qi,eic->eqc", ed.phi, coeffs)
    grads = np.einsum("eqia,eic->eqca", ed.grad, coeffs)
    return values, grads


def assemble_convection_linearized(vspace: VectorSpace, w: np.ndarray) -> sp.csr_matrix:
    """Skew-symmetric convection operator linearized at transport field w.

    Entries realize the form (1/2)((w . grad) u, v) - (1/2)((w . grad) v, u)
    per velocity component, so x.N(w).x vanishes identically for any x.
    """
    ed = vspace.scalar.edata
    wq, _ = _field_at_quadrature(vspace, w)
    wdotgrad = np.einsum("eqa,eqja->eqj", wq, ed.grad)
    adv = np.einsum("eq,eqj,qi->eij", ed.wdet, wdotgrad, ed.phi)
    n = vspace.n_scalar
    a = _scatter(adv, ed.dofs, ed.dofs, (n, n))
    skew = 0.5 * (a - a.T.tocsr())
    return _vector_block(skew.tocsr())


def convection_vector(vspace: VectorSpace, u: np.ndarray) -> np.ndarray:
    """Vector r with r[i] = value of the skew convection form at (u, u, phi_i)."""
    ed = vspace.scalar.edata
    uq, gq = _field_at_quadrature(vspace, u)
    conv = np.einsum("eqd,eqcd->eqc", uq, gq)  # (u . grad) u
    out = np.zeros(vspace.n_dofs)
    n = vspace.n_scalar
    udotgrad = np.einsum("eqd,eqid->eqi", uq, ed.grad)  # (u . grad) phi_i
    for c in range(2):
        t1 = np.einsum("eq,eq,qi->ei", ed.wdet, conv[:, :, c], ed.phi)
        t2 = np.einsum("eq,eqi,eq->ei", ed.wdet, udotgrad, uq[:, :, c])
        np.add.at(out, c * n + ed.dofs, 0.5 * (t1 - t2))
    return out


def apply_bstar(vspace: VectorSpace, u, v, w) -> float:
    """Quadrature value of the skew-symmetrized convection trilinear form."""
    ed = vspace.scalar.edata
    uq, _ = _field_at_quadrature(vspace, u)
    vq, gv = _field_at_quadrature(vspace, v)
    wq, gw = _field_at_quadrature(vspace, w)
    advect_v = np.einsum("eqd,eqcd->eqc", uq, gv)
    advect_w = np.einsum("eqd,eqcd->eqc", uq, gw)
    first = np.einsum("eq,eqc,eqc->", ed.wdet, advect_v, wq)
    second = np.einsum("eq,eqc,eqc->", ed.wdet, advect_w, vq)
    return float(0.5 * (first - second))


# reference-coordinate Hessians of the P2 basis (constant per function)
_G = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_P2_HESSIANS = np.array(
    [4.0 * np.outer(_G[i], _G[i]) for i in range(3)]
    + [
        4.0 * (np.outer(_G[i], _G[j]) + np.outer(_G[j], _G[i]))
        for i, j in ((0, 1), (1, 2), (2, 0))
    ]
)


def laplacian_pairing_vector(vspace: VectorSpace, u: np.ndarray) -> np.ndarray:
    """Vector with entries (lap u, phi_i), using the elementwise Laplacian.

    Second derivatives of a P2 field on straight triangles are constant
    per element, so the pairing is exact.  This backs the variant of the
    correction step that pairs the time-difference term against the test
    function directly instead of gradient against gradient.
    """
    ed = vspace.scalar.edata
    n = vspace.n_scalar
    inv = ed.inv_jac
    # physical Hessian trace: sum_ab inv[a,r] H[r,s] inv[b,s] delta_ab
    lap_basis = np.einsum("era,nrs,esa->en", inv, _P2_HESSIANS, inv)
    phi_int = np.einsum("eq,qi->ei", ed.wdet, ed.phi)
    out = np.zeros(vspace.n_dofs)
    for c in range(2):
        lap_u = np.einsum("en,en->e", lap_basis, vspace.component(u, c)[ed.dofs])
        np.add.at(out, c * n + ed.dofs, lap_u[:, None] * phi_int)
    return out


@dataclass(frozen=True)
class CoarseGradient:
    """Large-scale representation of a velocity gradient tensor.

    ``components[c, d]`` holds the coefficients of d(u_c)/d(x_d) in the
    scalar large-scale space.
    """

    components: np.ndarray  # (2, 2, n_large)


class GradientProjector:
    """L2 projection of P2 velocity gradients onto a P1 large-scale space.

    The projection solves the consistent large-scale mass matrix (never
    lumped, since the subgrid dissipation term relies on the exact
    orthogonality of the projection defect).  The factorization and the
    two mixed matrices D_d[i, j] = (d(phi_j)/d(x_d), psi_i) are reused
    across time steps.
    """

    def __init__(self, vspace: VectorSpace, lspace: ScalarSpace):
        from scipy.sparse.linalg import splu

        if lspace.mesh is not vspace.mesh:
            raise ValueError("large-scale space must live on the velocity mesh")
        self.vspace = vspace
        self.lspace = lspace
        led = lspace.edata
        ved = vspace.scalar.edata
        self.mixed = []
        for d in range(2):
            vals = np.einsum("eq,qi,eqj->eij", led.wdet, led.phi, ved.grad[:, :, :, d])
            self.mixed.append(
                _scatter(vals, led.dofs, ved.dofs, (lspace.n_dofs, vspace.n_scalar))
            )
        self.mass = assemble_mass(lspace)
        self._lu = splu(self.mass.tocsc())

    def project(self, u: np.ndarray) -> CoarseGradient:
        """Project the gradient of velocity field u, checking the mass solve."""
        comps = np.empty((2, 2, self.lspace.n_dofs))
        for c in range(2):
            uc = self.vspace.component(u, c)
            for d in range(2):
                rhs = self.mixed[d] @ uc
                g = self._lu.solve(rhs)
                res = np.linalg.norm(self.mass @ g - rhs)
                if res > 1e-12 * max(1.0, np.linalg.norm(rhs)):
                    raise RuntimeError("large-scale mass solve lost accuracy")
                comps[c, d] = g
        return CoarseGradient(comps)

    def project_tensor(self, g: CoarseGradient) -> CoarseGradient:
        """Projection restricted to the large-scale space (identity map)."""
        comps = np.empty_like(g.components)
        for c in range(2):
            for d in range(2):
                comps[c, d] = self._lu.solve(self.mass @ g.components[c, d])
        return CoarseGradient(comps)

    def pairing_rhs(self, g: CoarseGradient) -> np.ndarray:
        """Velocity-space vector with entries (G, grad phi_i)."""
        n = self.vspace.n_scalar
        out = np.empty(2 * n)
        for c in range(2):
            out[c * n : (c + 1) * n] = (
                self.mixed[0].T @ g.components[c, 0]
                + self.mixed[1].T @ g.components[c, 1]
            )
        return out

    def orthogonality_residual(self, u: np.ndarray, g: CoarseGradient) -> float:
        """max_i |(grad u - G, psi_i)| over all large-scale basis functions."""
        worst = 0.0
        for c in range(2):
            uc = self.vspace.component(u, c)
            for d in range(2):
                r = self.mixed[d] @ uc - self.mass @ g.components[c, d]
                worst = max(worst, float(np.abs(r).max()))
        return worst

    def defect_norm(self, u: np.ndarray, g: CoarseGradient) -> float:
        """L2 norm of grad u minus its large-scale projection."""
        return projection_defect_norm(self.vspace, self.lspace, u, g)


def project_gradient_coarse(
    u: np.ndarray, vspace: VectorSpace, lspace: ScalarSpace
) -> CoarseGradient:
    """One-shot L2 projection of grad u onto the large-scale space."""
    return GradientProjector(vspace, lspace).project(u)


def projection_defect_norm(
    vspace: VectorSpace, lspace: ScalarSpace, u: np.ndarray, g: CoarseGradient
) -> float:
    ved = vspace.scalar.edata
    led = lspace.edata
    _, gradu = _field_at_quadrature(vspace, u)
    gq = np.einsum("qi,cdei->eqcd", led.phi, g.components[:, :, led.dofs])
    diff = gradu - gq
    return float(np.sqrt(np.einsum("eq,eqcd,eqcd->", ved.wdet, diff, diff)))
