"""Sparse direct solution of the velocity-pressure saddle systems.

Dirichlet velocity dofs are eliminated, and when the velocity is
constrained on the whole boundary the pressure is only determined up to
a constant; a Lagrange multiplier row/column then pins its mean to zero
without polluting the residual locally.  The multiplier also absorbs
the small compatibility defect of interpolated boundary data (the
discrete flux of the data need not vanish exactly), so the continuity
equation is solved in its compatible projection; the defect is reported.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

__all__ = [
    "SolverError",
    "SolverReport",
    "solve_spd",
    "SaddleSystem",
    "SaddleSolver",
    "solve_saddle",
]


class SolverError(RuntimeError):
    """A linear solve failed to meet its residual contract."""


@dataclass
class SolverReport:
    residual: float
    continuity_residual: float
    compatibility_defect: float = 0.0
    mean_pressure: float = 0.0
    factorized: bool = True
    iterations: int = 1
    wall_time: float = 0.0


def solve_spd(matrix: sp.spmatrix, rhs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Solve a symmetric positive definite sparse system directly."""
    matrix = matrix.tocsr()
    asym = abs(matrix - matrix.T).max()
    scale = abs(matrix).max()
    if asym > 1e-10 * max(scale, 1.0):
        raise SolverError("matrix is not symmetric")
    if matrix.diagonal().min() <= 0.0:
        raise SolverError("matrix has a non-positive diagonal entry")
    lu = splu(matrix.tocsc())
    x = lu.solve(rhs)
    res = np.linalg.norm(matrix @ x - rhs)
    if not np.isfinite(res) or res > tol * max(1.0, np.linalg.norm(rhs)):
        raise SolverError(f"spd solve residual {res:.3e} exceeds tolerance")
    return x


@dataclass
class SaddleSystem:
    """Blocks and constraints of one discrete saddle problem.

    The momentum block satisfies A u - B^T p = f on unconstrained rows,
    the coupling B u = g, and ``dirichlet_dofs`` carry the prescribed
    ``dirichlet_values``.  ``mean_vector`` holds the integrals of the
    pressure basis functions; the zero-mean constraint is attached only
    when ``fix_pressure_mean`` is set (full Dirichlet velocity boundary).
    """

    A: sp.spmatrix
    B: sp.spmatrix
    f: np.ndarray
    g: np.ndarray
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray
    mean_vector: np.ndarray
    fix_pressure_mean: bool = True


class SaddleSolver:
    """Reusable factorization machinery for one constraint structure.

    The Dirichlet set, coupling block and mean constraint stay fixed
    over a time integration, while the momentum block changes with the
    linearized convection.  ``factorize`` refreshes the factorization
    for a new momentum block; ``solve`` and ``solve_linear`` reuse it.
    """

    def __init__(self, B, n_u, dirichlet_dofs, mean_vector=None):
        self.n_u = n_u
        self.n_p = B.shape[0]
        self.dirichlet = np.asarray(dirichlet_dofs, dtype=np.int64)
        mask = np.ones(n_u, dtype=bool)
        mask[self.dirichlet] = False
        self.free = np.flatnonzero(mask)
        self.B = B.tocsr()
        bcsc = B.tocsc()
        self.B_f = bcsc[:, self.free].tocsr()
        self.B_c = bcsc[:, self.dirichlet].tocsr()
        self.mean_vector = mean_vector
        self.bordered = mean_vector is not None
        self._lu = None

    def factorize(self, A: sp.spmatrix) -> None:
        acsc = A.tocsc()
        a_ff = acsc[:, self.free].tocsr()[self.free].tocsr()
        self._a_fc = acsc[:, self.dirichlet].tocsr()[self.free].tocsr()
        if self.bordered:
            c = sp.csr_matrix(self.mean_vector[None, :])
            mat = sp.bmat(
                [
                    [a_ff, -self.B_f.T, None],
                    [self.B_f, None, c.T],
                    [None, c, None],
                ],
                format="csc",
            )
        else:
            mat = sp.bmat([[a_ff, -self.B_f.T], [self.B_f, None]], format="csc")
        try:
            self._lu = splu(mat)
        except RuntimeError as exc:  # singular factorization
            raise SolverError(f"saddle factorization failed: {exc}") from exc

    def solve_linear(self, r_u_free, r_p, r_mean=0.0):
        """Apply the factorized inverse to a reduced residual."""
        if self._lu is None:
            raise SolverError("factorize before solving")
        if self.bordered:
            rhs = np.concatenate([r_u_free, r_p, [r_mean]])
        else:
            rhs = np.concatenate([r_u_free, r_p])
        x = self._lu.solve(rhs)
        if not np.isfinite(x).all():
            raise SolverError("saddle solve produced non-finite values")
        nf = self.free.size
        du = x[:nf]
        dp = x[nf : nf + self.n_p]
        dlam = float(x[-1]) if self.bordered else 0.0
        return du, dp, dlam

    def solve(self, f, g, dirichlet_values):
        """Solve the current factorized system for full right-hand sides."""
        u = np.zeros(self.n_u)
        u[self.dirichlet] = dirichlet_values
        r_u = f[self.free] - self._a_fc @ dirichlet_values
        r_p = g - self.B_c @ dirichlet_values
        du, p, lam = self.solve_linear(r_u, r_p, 0.0)
        u[self.free] = du
        return u, p, lam


def solve_saddle(system: SaddleSystem, tol: float = 1e-10):
    """One-shot solve of a saddle system with residual verification.

    Returns ``(u, p, report)``.  The momentum residual is checked on the
    unconstrained rows relative to the forcing, the continuity residual
    against the compatible projection of its data, and, when the mean
    constraint is active, the mean of the pressure itself.
    """
    start = time.perf_counter()
    mean = system.mean_vector if system.fix_pressure_mean else None
    solver = SaddleSolver(system.B, system.A.shape[0], system.dirichlet_dofs, mean)
    solver.factorize(system.A)
    u, p, lam = solver.solve(system.f, system.g, system.dirichlet_values)

    r_u = (system.A @ u - system.B.T @ p - system.f)[solver.free]
    fscale = max(np.linalg.norm(system.f), 1.0)
    res_u = float(np.linalg.norm(r_u) / fscale)
    cont = system.B @ u - system.g
    defect = 0.0
    if system.fix_pressure_mean:
        cont = cont + lam * system.mean_vector
        defect = float(abs(lam) * np.linalg.norm(system.mean_vector))
    res_p = float(np.linalg.norm(cont))
    mean_p = float(system.mean_vector @ p)
    report = SolverReport(
        residual=res_u,
        continuity_residual=res_p,
        compatibility_defect=defect,
        mean_pressure=mean_p,
        wall_time=time.perf_counter() - start,
    )
    if res_u > tol or res_p > tol * (1.0 + np.linalg.norm(system.g)):
        raise SolverError(
            f"saddle residuals {res_u:.3e}/{res_p:.3e} exceed tolerance {tol:.1e}"
        )
    if system.fix_pressure_mean:
        pnorm = np.linalg.norm(p)
        cnorm = np.linalg.norm(system.mean_vector)
        if abs(mean_p) > tol * max(pnorm * cnorm, 1.0):
            raise SolverError("pressure mean constraint violated")
    return u, p, report
