"""Uniform cell-centred grids on intervals and rectangles."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..exceptions import DomainError


@dataclass(frozen=True)
class Grid:
    """Structured cell grid over ``[0, L_1] x ... x [0, L_d]``, d in {1, 2}.

    Fields living on the grid are plain float64 arrays of shape
    :attr:`shape` (row-major, axis 0 first).
    """

    n_cells: tuple
    lengths: tuple

    def __post_init__(self):
        n_cells = tuple(int(n) for n in np.atleast_1d(self.n_cells))
        lengths = tuple(float(L) for L in np.atleast_1d(self.lengths))
        if len(n_cells) not in (1, 2) or len(lengths) != len(n_cells):
            raise DomainError(f"need 1 or 2 axes with matching lengths, got {n_cells} / {lengths}")
        if min(n_cells) < 4:
            raise DomainError(f"at least 4 cells per axis required, got {n_cells}")
        if min(lengths) <= 0 or not np.all(np.isfinite(lengths)):
            raise DomainError(f"domain lengths must be positive, got {lengths}")
        object.__setattr__(self, "n_cells", n_cells)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def uniform(cls, n, length=1.0, dim=2):
        return cls((n,) * dim, (length,) * dim)

    @property
    def dim(self):
        return len(self.n_cells)

    @property
    def shape(self):
        return self.n_cells

    @property
    def size(self):
        return int(np.prod(self.n_cells))

    @cached_property
    def h(self):
        return tuple(L / n for L, n in zip(self.lengths, self.n_cells))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    def centers(self):
        """Cell-centre coordinate arrays, one per axis, each of shape ``shape``."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.n_cells, self.h)]
        return np.meshgrid(*axes, indexing="ij")

    def refined(self, factor=2):
        return Grid(tuple(n * factor for n in self.n_cells), self.lengths)

    def integrate(self, f):
        """Midpoint (cell-sum) quadrature."""
        return float(np.sum(f) * self.cell_volume)
