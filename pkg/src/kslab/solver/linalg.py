"""Implicit solves for ``(alpha I - beta Laplacian) x = b`` on a grid."""

import numpy as np
from scipy.linalg import solve_banded

from ..exceptions import LinearSolverError
from .operators import laplacian_neumann


def _tridiagonal_bands(n, h, alpha, beta):
    c = beta / h**2
    ab = np.zeros((3, n))
    ab[0, 1:] = -c
    ab[2, :-1] = -c
    ab[1, :] = alpha + 2 * c
    ab[1, 0] = ab[1, -1] = alpha + c
    return ab


def solve_tridiagonal(grid, alpha, beta, b):
    """Direct 1-D solve (Thomas algorithm via LAPACK banded solver)."""
    ab = _tridiagonal_bands(grid.n_cells[0], grid.h[0], alpha, beta)
    return solve_banded((1, 1), ab, b)


def conjugate_gradient(grid, alpha, beta, b, x0=None, rtol=1e-12, maxiter=10_000):
    """Matrix-free CG for the SPD operator ``alpha I - beta Laplacian``.

    Starting from ``x0 = b / alpha`` keeps every residual mean-free when
    ``alpha = 1``, so the cell sum of the solution matches that of ``b`` to
    roundoff regardless of the stopping tolerance.

    Returns ``(x, iterations, relative_residual)``.
    """

    def apply(x):
        return alpha * x - beta * laplacian_neumann(x, grid)

    x = b / alpha if x0 is None else x0.copy()
    r = b - apply(x)
    bnorm = np.sqrt(np.sum(b * b))
    if bnorm == 0:
        return np.zeros_like(b), 0, 0.0
    p = r.copy()
    rr = np.sum(r * r)
    for it in range(maxiter):
        if np.sqrt(rr) <= rtol * bnorm:
            return x, it, float(np.sqrt(rr) / bnorm)
        Ap = apply(p)
        step = rr / np.sum(p * Ap)
        x += step * p
        r -= step * Ap
        rr_new = np.sum(r * r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    res = float(np.sqrt(rr) / bnorm)
    if res <= rtol:
        return x, maxiter, res
    raise LinearSolverError(f"CG did not converge: relative residual {res:.3g} after {maxiter} iterations")


def implicit_solve(grid, alpha, beta, b, rtol=1e-12):
    if grid.dim == 1:
        return solve_tridiagonal(grid, alpha, beta, b)
    return conjugate_gradient(grid, alpha, beta, b, rtol=rtol)[0]
