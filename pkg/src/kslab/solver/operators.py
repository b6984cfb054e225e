"""Finite-volume stencils under homogeneous Neumann conditions.

Interior faces along axis ``d`` are indexed by the left cell; the array
of face values along that axis has ``n_d - 1`` entries. Boundary faces
carry zero flux and are not stored.
"""

import numpy as np

from ..exceptions import DomainError
from ..model import eval_sensitivity


def _lo(axis, ndim):
    idx = [slice(None)] * ndim
    idx[axis] = slice(None, -1)
    return tuple(idx)


def _hi(axis, ndim):
    idx = [slice(None)] * ndim
    idx[axis] = slice(1, None)
    return tuple(idx)


def face_differences(f, grid):
    """Two-point gradients ``(f_R - f_L) / h`` on interior faces, one array per axis."""
    return [np.diff(f, axis=ax) / h for ax, h in enumerate(grid.h)]


def face_averages(f, grid):
    return [0.5 * (f[_lo(ax, f.ndim)] + f[_hi(ax, f.ndim)]) for ax in range(grid.dim)]


def flux_divergence(fluxes, grid):
    """Cell divergence of interior-face fluxes with zero flux through the boundary."""
    div = np.zeros(grid.shape)
    for ax, (F, h) in enumerate(zip(fluxes, grid.h)):
        div[_lo(ax, grid.dim)] += F / h
        div[_hi(ax, grid.dim)] -= F / h
    return div


def laplacian_neumann(f, grid):
    """Second-order five-point (three-point in 1-D) Laplacian with reflected ghosts."""
    return flux_divergence(face_differences(f, grid), grid)


def grad_norm_sq(f, grid):
    """Discrete ``int |grad f|^2`` from face differences."""
    return float(sum(np.sum(g * g) for g in face_differences(f, grid)) * grid.cell_volume)


def grad_inner(f, g, grid):
    """Discrete ``int grad f . grad g``."""
    return float(
        sum(np.sum(a * b) for a, b in zip(face_differences(f, grid), face_differences(g, grid)))
        * grid.cell_volume
    )


def face_velocities(v, grid, chi, sensitivity, a, k):
    """Drift ``w = chi S(v_f) (grad v)_f`` on interior faces."""
    if chi == 0:
        return [np.zeros(np.diff(v, axis=ax).shape) for ax in range(grid.dim)]
    vf = face_averages(v, grid)
    if a == 0 and any(np.any(x <= 0) for x in vf):
        raise DomainError("singular sensitivity: face average of v is not positive with a = 0")
    return [
        chi * eval_sensitivity(sensitivity, a, k, x) * g for x, g in zip(vf, face_differences(v, grid))
    ]


def upwind_fluxes(u, velocities, grid):
    """Donor-cell fluxes ``w * u_upstream``."""
    out = []
    for ax, w in enumerate(velocities):
        uL = u[_lo(ax, grid.dim)]
        uR = u[_hi(ax, grid.dim)]
        out.append(np.where(w > 0, w * uL, w * uR))
    return out


def chemotactic_flux(u, v, grid, chi, sensitivity, a, k):
    """Chemotactic face fluxes ``chi u S(v) grad v`` with upwinded ``u``."""
    return upwind_fluxes(u, face_velocities(v, grid, chi, sensitivity, a, k), grid)


def max_outflow_rate(velocities, grid):
    """Largest per-cell outflow rate ``sum_faces max(w_out, 0) / h``.

    The explicit donor-cell update stays nonnegative iff ``dt`` times this
    rate is at most one.
    """
    rate = np.zeros(grid.shape)
    for ax, (w, h) in enumerate(zip(velocities, grid.h)):
        rate[_lo(ax, grid.dim)] += np.maximum(w, 0.0) / h
        rate[_hi(ax, grid.dim)] += np.maximum(-w, 0.0) / h
    return float(rate.max())
