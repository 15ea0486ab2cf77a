"""Elliptic condenser p-capacities on lattices, relative capacity, and the
parabolic (sliced) capacity.

The condenser value is the minimum of the discrete functional
sum_cells h**N |grad psi|^p over node fields with psi = 1 on the obstacle and
psi = 0 on and outside the boundary of the outer cube.  Minimization runs by
iterated reweighted linear solves (Picard on the weighted 2-form with weights
max(|grad psi|, weight_floor)**(p-2)), safeguarded by a backtracking step so
the recorded energy history never increases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .geometry import Cube, DomainSpec, IndicatorField, contains, rasterize_obstacle
from .lattice import LatticeSystem
from .params import StructureParams


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for the condenser minimization and the delta() lattice size."""

    max_iter: int = 500
    tol_rel_energy: float = 1e-8
    weight_floor: float = 1e-10
    nodes_across: int = 33   # lattice nodes spanning the inner cube in delta()

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be positive, got {self.max_iter}")
        if not 0.0 < self.tol_rel_energy < 1.0:
            raise ValueError(f"tol_rel_energy must lie in (0, 1), got {self.tol_rel_energy}")
        if not self.weight_floor > 0.0:
            raise ValueError(f"weight_floor must be positive, got {self.weight_floor}")


@dataclass(frozen=True)
class CondenserProblem:
    """Obstacle marked on an inner lattice, grounded at the outer cube boundary."""

    obstacle: IndicatorField
    outer: Cube
    p: float
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.p < 2.0:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if self.obstacle.cube.ndim != self.outer.ndim:
            raise ValueError("obstacle and outer cube dimensions differ")


@dataclass(frozen=True)
class CapacityValue:
    """Condenser capacity with its solve diagnostics; value has units length**(N-p)."""

    value: float
    energy_history: tuple[float, ...]
    grid_h: float

    def __post_init__(self):
        if self.value < 0.0:
            raise ValueError(f"capacity must be nonnegative, got {self.value}")
        hist = tuple(float(e) for e in self.energy_history)
        object.__setattr__(self, "energy_history", hist)
        if any(b > a for a, b in zip(hist, hist[1:])):
            raise ValueError("energy history must be nonincreasing")

    @property
    def iterations(self) -> int:
        return len(self.energy_history) - 1


def _embed_obstacle(problem: CondenserProblem) -> tuple[LatticeSystem, np.ndarray, np.ndarray]:
    """Place the obstacle lattice inside the outer lattice; return (system, fixed, values)."""
    obs = problem.obstacle
    h = obs.h
    ndim = obs.cube.ndim
    big_m = round(problem.outer.half_edge / h)
    if big_m < 1 or abs(big_m * h - problem.outer.half_edge) > 1e-9 * problem.outer.half_edge:
        raise ValueError(f"grid spacing {h} does not divide the outer half-edge "
                         f"{problem.outer.half_edge}")
    n = 2 * big_m + 1
    small_m = (obs.nodes_per_axis - 1) // 2
    offsets = []
    for k in range(ndim):
        shift = (obs.cube.center[k] - problem.outer.center[k]) / h
        o = round(shift)
        if abs(o - shift) > 1e-9 * max(1.0, abs(shift)):
            raise ValueError("obstacle lattice is not aligned with the outer lattice")
        offsets.append(big_m - small_m + o)
    lo = min(offsets)
    hi = max(o + 2 * small_m for o in offsets)
    if lo < 0 or hi > 2 * big_m:
        raise ValueError("obstacle grid is not contained in the outer cube")

    fixed = np.zeros((n,) * ndim, dtype=bool)
    values = np.zeros((n,) * ndim, dtype=float)
    # ground the outer boundary
    for k in range(ndim):
        idx_lo = [slice(None)] * ndim
        idx_lo[k] = 0
        idx_hi = [slice(None)] * ndim
        idx_hi[k] = n - 1
        fixed[tuple(idx_lo)] = True
        fixed[tuple(idx_hi)] = True
    # plate at 1 on the obstacle nodes
    sub = tuple(slice(o, o + 2 * small_m + 1) for o in offsets)
    plate = np.zeros((n,) * ndim, dtype=bool)
    plate[sub] = obs.values
    on_rim = plate & fixed
    if on_rim.any():
        raise ValueError("obstacle touches the outer boundary; condenser plates "
                         "must be disjoint")
    fixed |= plate
    values[plate] = 1.0
    return LatticeSystem((n,) * ndim, h), fixed, values


def minimize_condenser(problem: CondenserProblem) -> tuple[np.ndarray, list[float]]:
    """Run the reweighted minimization; return (minimizer, energy history)."""
    system, fixed, bvals = _embed_obstacle(problem)
    cfg = problem.solver
    p = problem.p
    ones = np.ones(system.n_cells)
    psi = system.solve_dirichlet(ones, fixed, bvals)   # p = 2 start
    history = [system.energy(psi, p)]
    for _ in range(cfg.max_iter):
        w = system.weights(psi, p, cfg.weight_floor)
        psi_hat = system.solve_dirichlet(w, fixed, bvals)
        e_prev = history[-1]
        cand = psi_hat
        e_cand = system.energy(cand, p)
        alpha = 1.0
        while e_cand > e_prev and alpha > 1e-12:
            alpha *= 0.5
            cand = psi + alpha * (psi_hat - psi)
            e_cand = system.energy(cand, p)
        if e_cand > e_prev:
            # no descent at floor scale: the iterate is converged
            return psi.reshape(system.shape), history
        psi = cand
        history.append(e_cand)
        if e_prev - e_cand <= cfg.tol_rel_energy * max(abs(e_prev), 1e-300):
            return psi.reshape(system.shape), history
    raise ConvergenceError(
        f"condenser minimization did not converge in {cfg.max_iter} iterations",
        last_energy=history[-1])


def solve_condenser(problem: CondenserProblem) -> CapacityValue:
    """Discrete condenser p-capacity of the marked obstacle in the outer cube."""
    if not problem.obstacle.values.any():
        return CapacityValue(0.0, (0.0,), problem.obstacle.h)
    _, history = minimize_condenser(problem)
    return CapacityValue(history[-1], tuple(history), problem.obstacle.h)


def delta(domain: DomainSpec, x_o, rho: float, params: StructureParams,
          cfg: SolverConfig = SolverConfig()) -> float:
    """Relative capacity of K_rho(x_o) \\ E against the full cube K_rho(x_o).

    Both condensers are grounded at the boundary of K_{3 rho / 2}(x_o) on a
    shared lattice, so the ratio lies in [0, 1] up to solver noise.
    """
    return delta_detailed(domain, x_o, rho, params, cfg)[0]


def delta_detailed(domain: DomainSpec, x_o, rho: float, params: StructureParams,
                   cfg: SolverConfig = SolverConfig()
                   ) -> tuple[float, CapacityValue, CapacityValue]:
    """delta() together with the numerator and denominator capacities."""
    if not rho > 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    na = cfg.nodes_across
    if na < 17 or (na - 1) % 4 != 0:
        raise ValueError(f"nodes_across must be >= 17 and congruent to 1 mod 4, got {na}")
    h = 2.0 * rho / (na - 1)
    inner = Cube(tuple(x_o), rho)
    outer = Cube(tuple(x_o), 1.5 * rho)
    obstacle = rasterize_obstacle(domain, inner, h)
    cap_full = solve_condenser(CondenserProblem(IndicatorField.all_true(inner, h),
                                                outer, params.p, cfg))
    if not obstacle.values.any():
        return 0.0, CapacityValue(0.0, (0.0,), h), cap_full
    cap_obs = solve_condenser(CondenserProblem(obstacle, outer, params.p, cfg))
    if cap_full.value <= 0.0:
        raise ValueError("degenerate denominator capacity")
    val = cap_obs.value / cap_full.value
    if val > 1.0:
        if val > 1.0 + 1e-8:
            raise ValueError(f"relative capacity {val} exceeds 1 beyond discretization noise")
        val = 1.0
    return val, cap_obs, cap_full


def parabolic_capacity(time_slices, outer: Cube, p: float,
                       cfg: SolverConfig = SolverConfig()) -> float:
    """Sliced parabolic capacity: trapezoid in time of per-slice condenser values.

    `time_slices` is a sequence of (tau, IndicatorField) with uniformly spaced,
    strictly increasing tau.
    """
    slices = list(time_slices)
    if not slices:
        raise ValueError("empty slice list")
    taus = np.array([float(t) for t, _ in slices])
    if len(taus) == 1:
        return 0.0
    dts = np.diff(taus)
    if np.any(dts <= 0.0):
        raise ValueError("slice times must be strictly increasing")
    if np.max(dts) - np.min(dts) > 1e-9 * np.max(dts):
        raise ValueError("slice times must be uniformly spaced")
    caps = np.array([solve_condenser(CondenserProblem(fld, outer, p, cfg)).value
                     for _, fld in slices])
    dt = float(dts[0])
    return float(dt * (0.5 * caps[0] + caps[1:-1].sum() + 0.5 * caps[-1]))
