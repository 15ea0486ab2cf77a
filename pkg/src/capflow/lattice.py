"""Uniform-lattice machinery shared by the condenser and diffusion solvers.

The discrete p-energy is sum_cells h**N * |grad u|_cell**p with per-cell
forward differences anchored at the cell's low corner.  At fixed weights the
reweighted quadratic form is a weighted graph Laplacian, so the step matrices
(plus any positive diagonal) are M-matrices; the maximum-principle guarantees
elsewhere in the package lean on exactly this structure.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class LatticeSystem:
    """Edge/cell bookkeeping for the discrete p-Dirichlet form on a lattice."""

    def __init__(self, shape: tuple[int, ...], h: float):
        self.shape = tuple(int(n) for n in shape)
        self.h = float(h)
        self.ndim = len(self.shape)
        if self.ndim not in (1, 2):
            raise ValueError(f"lattice dimension must be 1 or 2, got {self.ndim}")
        if any(n < 3 for n in self.shape):
            raise ValueError(f"need at least 3 nodes per axis, got {self.shape}")
        if self.h <= 0.0:
            raise ValueError(f"spacing must be positive, got {self.h}")
        self.n_nodes = int(np.prod(self.shape))
        if self.ndim == 1:
            corner = np.arange(self.shape[0] - 1)
            self.n_cells = corner.size
            self.edges_a = corner
            self.edges_b = corner + 1
            self.edge_cell = np.arange(self.n_cells)
        else:
            n0, n1 = self.shape
            i0, i1 = np.meshgrid(np.arange(n0 - 1), np.arange(n1 - 1), indexing="ij")
            corner = (i0 * n1 + i1).ravel()
            self.n_cells = corner.size
            cell_ids = np.arange(self.n_cells)
            # forward x-edge (corner -> corner + n1) and y-edge (corner -> corner + 1)
            self.edges_a = np.concatenate([corner, corner])
            self.edges_b = np.concatenate([corner + n1, corner + 1])
            self.edge_cell = np.concatenate([cell_ids, cell_ids])
        self._rows = np.concatenate([self.edges_a, self.edges_b, self.edges_a, self.edges_b])
        self._cols = np.concatenate([self.edges_a, self.edges_b, self.edges_b, self.edges_a])

    def cell_gradient_sq(self, u: np.ndarray) -> np.ndarray:
        """|grad u|^2 per cell (C-ordered over cell corners)."""
        v = np.asarray(u, dtype=float).reshape(self.shape)
        if self.ndim == 1:
            g = np.diff(v) / self.h
            return g * g
        gx = (v[1:, :-1] - v[:-1, :-1]) / self.h
        gy = (v[:-1, 1:] - v[:-1, :-1]) / self.h
        return (gx * gx + gy * gy).ravel()

    def energy(self, u: np.ndarray, p: float) -> float:
        """Discrete p-energy sum_cells h**N |grad u|^p."""
        gsq = self.cell_gradient_sq(u)
        return float(self.h ** self.ndim * np.sum(gsq ** (p / 2.0)))

    def weights(self, u: np.ndarray, p: float, floor: float) -> np.ndarray:
        """Per-cell reweighting max(|grad u|, floor)**(p-2)."""
        g = np.sqrt(self.cell_gradient_sq(u))
        return np.maximum(g, floor) ** (p - 2.0)

    def laplacian(self, cell_weights: np.ndarray) -> sp.csr_matrix:
        """Graph Laplacian of the weighted form sum_cells h**N w_c |grad u|^2."""
        w = np.asarray(cell_weights, dtype=float)[self.edge_cell] * self.h ** (self.ndim - 2)
        data = np.concatenate([w, w, -w, -w])
        lap = sp.csr_matrix((data, (self._rows, self._cols)),
                            shape=(self.n_nodes, self.n_nodes))
        lap.sum_duplicates()
        return lap

    def solve_dirichlet(self, cell_weights: np.ndarray, fixed: np.ndarray,
                        boundary_values: np.ndarray, mass: float = 0.0,
                        previous: np.ndarray | None = None) -> np.ndarray:
        """Minimize 1/2 u^T L(w) u + mass/2 * sum_free (u - previous)^2 with u = g on `fixed`.

        `fixed` and `boundary_values` are full-length (flat) arrays; returns the
        full flat solution with the fixed values imposed exactly.
        """
        fixed = np.asarray(fixed, dtype=bool).ravel()
        g = np.asarray(boundary_values, dtype=float).ravel()
        free = ~fixed
        out = g.copy()
        n_free = int(free.sum())
        if n_free == 0:
            return out
        lap = self.laplacian(cell_weights)
        a_mat = lap[free][:, free]
        rhs = -lap[free][:, fixed] @ g[fixed]
        if mass > 0.0:
            if previous is None:
                raise ValueError("mass term requires the previous field")
            a_mat = a_mat + mass * sp.identity(n_free, format="csr")
            rhs = rhs + mass * np.asarray(previous, dtype=float).ravel()[free]
        out[free] = spla.spsolve(a_mat.tocsc(), rhs)
        return out
