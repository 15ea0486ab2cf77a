"""Backward-Euler solver for u_t = div(|Du|^{p-2} Du) on a box with a removed
obstacle, plus the oscillation measurements used to compare solutions against
capacity-based decay envelopes.

Each time step solves the proximal problem

    min_u  (1/p) sum_cells h^N |grad u|^p  +  (h^N / 2 tau) sum_free (u - v)^2

with Dirichlet values imposed on every node outside the domain (obstacle
nodes and box faces).  The inner iteration reweights the quadratic form and
backtracks on the objective, so the per-step energy never increases across
iterates.  A spatially constant state with unchanged boundary values is
returned bitwise, without entering the iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceError
from .geometry import Cube, DomainSpec, domain_inside_mask, lattice_nodes_per_axis
from .lattice import LatticeSystem


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Spatial lattice on a box with an inside mask, plus the time axis."""

    box: Cube
    h: float
    inside: np.ndarray          # bool, flat; True on free interior nodes
    times: np.ndarray           # strictly increasing, times[0] == 0
    shape: tuple[int, ...]

    def axes(self) -> tuple[np.ndarray, ...]:
        n = self.shape[0]
        return tuple(
            c - self.box.half_edge + self.h * np.arange(n) for c in self.box.center)

    def node_points(self) -> np.ndarray:
        axs = self.axes()
        if len(axs) == 1:
            return axs[0][:, None]
        mesh = np.meshgrid(*axs, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


def uniform_times(T: float, steps: int) -> np.ndarray:
    if not T > 0.0:
        raise ValueError(f"final time must be positive, got {T}")
    if steps < 1:
        raise ValueError(f"need at least one step, got {steps}")
    return np.linspace(0.0, T, steps + 1)


def intrinsic_times(T: float, h: float, p: float, omega: float = 1.0) -> np.ndarray:
    """Uniform steps with dt close to omega**(2-p) * h**p, the intrinsic time
    scale at which the degenerate diffusion of data with oscillation omega
    stays resolved."""
    if not T > 0.0:
        raise ValueError(f"final time must be positive, got {T}")
    if not h > 0.0 or not omega > 0.0:
        raise ValueError("h and omega must be positive")
    dt = omega ** (2.0 - p) * h ** p
    steps = max(1, math.ceil(T / dt))
    return np.linspace(0.0, T, steps + 1)


def make_grid(domain: DomainSpec, box: Cube, grid_h: float, times) -> SpaceTimeGrid:
    """Lattice on `box` with domain nodes marked inside; box faces are Dirichlet.

    Rejects isolated interior nodes: a free node with no free axis neighbor
    cannot exchange mass with the rest of the domain and the discrete problem
    degenerates there.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2:
        raise ValueError("times must be a 1-d array with at least two entries")
    if times[0] != 0.0:
        raise ValueError(f"times must start at 0, got {times[0]}")
    if not np.all(np.diff(times) > 0.0):
        raise ValueError("times must be strictly increasing")

    n = lattice_nodes_per_axis(box.half_edge, grid_h)
    shape = (n,) * domain.ndim
    grid_idx = domain_inside_mask(domain, box, grid_h).reshape(shape).copy()
    if domain.ndim == 1:
        grid_idx[0] = False
        grid_idx[-1] = False
    else:
        grid_idx[0, :] = False
        grid_idx[-1, :] = False
        grid_idx[:, 0] = False
        grid_idx[:, -1] = False
    inside = grid_idx.ravel()

    if np.any(inside):
        m = grid_idx
        has_free_neighbor = np.zeros_like(m)
        if domain.ndim == 1:
            has_free_neighbor[:-1] |= m[1:]
            has_free_neighbor[1:] |= m[:-1]
        else:
            has_free_neighbor[:-1, :] |= m[1:, :]
            has_free_neighbor[1:, :] |= m[:-1, :]
            has_free_neighbor[:, :-1] |= m[:, 1:]
            has_free_neighbor[:, 1:] |= m[:, :-1]
        isolated = m & ~has_free_neighbor
        if np.any(isolated):
            flat = int(np.argmax(isolated.ravel()))
            grid = SpaceTimeGrid(box, grid_h, inside, times, shape)
            pt = grid.node_points()[flat]
            raise ValueError(f"isolated interior node at {tuple(float(c) for c in pt)}; "
                             "refine the grid or adjust the obstacle")

    return SpaceTimeGrid(box, grid_h, inside, times, shape)


@dataclass(frozen=True)
class BoundaryDatum:
    """Time-dependent Dirichlet datum g(x, t), evaluated on point batches.

    `modulus` is a free-text descriptor of the datum's modulus of continuity;
    it is echoed into reports and never used in computation.
    """

    name: str
    fn: Callable[[np.ndarray, float], np.ndarray]
    modulus: str = ""

    def __call__(self, points: np.ndarray, t: float) -> np.ndarray:
        out = np.asarray(self.fn(points, t), dtype=float)
        if out.shape != (len(points),):
            raise ValueError(f"datum '{self.name}' returned shape {out.shape} "
                             f"for {len(points)} points")
        return out


@dataclass(frozen=True)
class SchemeConfig:
    max_iter: int = 500
    tol_rel_energy: float = 1e-8
    weight_floor: float = 1e-10
    store_stride: int = 1

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be positive, got {self.max_iter}")
        if not self.tol_rel_energy > 0.0:
            raise ValueError(f"tol_rel_energy must be positive, got {self.tol_rel_energy}")
        if not self.weight_floor > 0.0:
            raise ValueError(f"weight_floor must be positive, got {self.weight_floor}")
        if self.store_stride < 1:
            raise ValueError(f"store_stride must be positive, got {self.store_stride}")


@dataclass(frozen=True)
class SpaceTimeField:
    """Stored time slices of a discrete solution."""

    grid: SpaceTimeGrid
    p: float
    stored_steps: tuple[int, ...]
    values: np.ndarray          # (n_stored, n_nodes)

    @property
    def stored_times(self) -> np.ndarray:
        return self.grid.times[list(self.stored_steps)]

    def slice_at_step(self, step: int) -> np.ndarray:
        try:
            row = self.stored_steps.index(step)
        except ValueError:
            raise ValueError(f"step {step} was not stored (stride dropped it)") from None
        return self.values[row]


def _step_objective(system: LatticeSystem, u: np.ndarray, p: float, mass: float,
                    anchor_free: np.ndarray, free: np.ndarray) -> float:
    grad_part = system.energy(u, p) / p
    diff = u[free] - anchor_free
    return grad_part + 0.5 * mass * float(diff @ diff)


def solve(grid: SpaceTimeGrid, datum: BoundaryDatum, p: float,
          scheme: SchemeConfig = SchemeConfig()) -> SpaceTimeField:
    """March the implicit scheme over grid.times, starting from g(., 0).

    Raises ConvergenceError with the offending step index when an inner
    iteration fails to settle within scheme.max_iter.
    """
    if p < 2.0:
        raise ValueError(f"p must be at least 2, got {p}")
    system = LatticeSystem(grid.shape, grid.h)
    pts = grid.node_points()
    free = grid.inside
    fixed = ~free
    mass_scale = grid.h ** len(grid.shape)

    u = datum(pts, 0.0)
    n_steps = grid.n_steps
    keep = sorted({0, n_steps} | {k for k in range(1, n_steps)
                                  if k % scheme.store_stride == 0})
    stored_rows = [u.copy()] if 0 in keep else []
    stored_steps = [0] if 0 in keep else []

    for k in range(1, n_steps + 1):
        tau = float(grid.times[k] - grid.times[k - 1])
        bvals = datum(pts[fixed], float(grid.times[k]))
        start = u.copy()
        start[fixed] = bvals

        if np.array_equal(start, u) and not np.any(system.cell_gradient_sq(u) > 0.0):
            # constant-in-space state with unchanged boundary: already the
            # exact minimizer, keep it bitwise
            pass
        else:
            mass = mass_scale / tau
            anchor_free = u[free]
            cur = start
            e_prev = _step_objective(system, cur, p, mass, anchor_free, free)
            converged = False
            for _ in range(scheme.max_iter):
                w = system.weights(cur, p, scheme.weight_floor)
                u_hat = system.solve_dirichlet(w, fixed, start, mass=mass,
                                               previous=u)
                alpha = 1.0
                cand = cur + alpha * (u_hat - cur)
                e_cand = _step_objective(system, cand, p, mass, anchor_free, free)
                while e_cand > e_prev and alpha > 1e-12:
                    alpha *= 0.5
                    cand = cur + alpha * (u_hat - cur)
                    e_cand = _step_objective(system, cand, p, mass, anchor_free, free)
                if e_cand > e_prev:
                    converged = True     # no descent direction left: stationary
                    break
                if e_prev - e_cand <= scheme.tol_rel_energy * max(abs(e_prev), 1e-300):
                    cur = cand
                    converged = True
                    break
                cur = cand
                e_prev = e_cand
            if not converged:
                raise ConvergenceError(
                    f"time step {k} did not converge within {scheme.max_iter} "
                    "reweighting iterations", last_energy=e_prev, step_index=k)
            u = cur

        if k in keep:
            stored_rows.append(u.copy())
            stored_steps.append(k)

    return SpaceTimeField(grid, float(p), tuple(stored_steps),
                          np.array(stored_rows))


def oscillation_over(field: SpaceTimeField, region: Cube, t_lo: float,
                     t_hi: float) -> float:
    """sup - inf of the stored solution over interior nodes of `region` and
    stored times in [max(t_lo, 0), t_hi]."""
    t_lo = max(t_lo, 0.0)
    times = field.stored_times
    span = max(abs(t_hi), 1.0)
    rows = (times >= t_lo - 1e-12 * span) & (times <= t_hi + 1e-12 * span)
    if not np.any(rows):
        raise ValueError(f"no stored time slices in [{t_lo}, {t_hi}]; "
                         "lower the store stride or widen the window")
    pts = field.grid.node_points()
    mask = field.grid.inside & region.contains_points(pts, tol=1e-9 * field.grid.h)
    if not np.any(mask):
        raise ValueError("region contains no interior nodes")
    sub = field.values[rows][:, mask]
    return float(sub.max() - sub.min())


def oscillation(field: SpaceTimeField, x_o, t_o: float, rho: float, omega_o: float,
                p: float | None = None) -> float:
    """Oscillation over the backward intrinsic cylinder
    K_{2 rho}(x_o) x [t_o - omega_o**(2-p) rho**p, t_o], window clipped at 0.
    `p` defaults to the exponent the field was solved with."""
    if not rho > 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    if not omega_o > 0.0:
        raise ValueError(f"omega_o must be positive, got {omega_o}")
    pp = field.p if p is None else float(p)
    t_lo = t_o - omega_o ** (2.0 - pp) * rho ** pp
    return oscillation_over(field, Cube(x_o, 2.0 * rho), t_lo, t_o)


def lateral_mask(grid: SpaceTimeGrid, region: Cube) -> np.ndarray:
    """Obstacle-boundary nodes inside `region`: non-interior nodes off the box
    faces with at least one interior axis neighbor."""
    m = grid.inside.reshape(grid.shape)
    ndim = len(grid.shape)
    near = np.zeros_like(m)
    if ndim == 1:
        near[:-1] |= m[1:]
        near[1:] |= m[:-1]
    else:
        near[:-1, :] |= m[1:, :]
        near[1:, :] |= m[:-1, :]
        near[:, :-1] |= m[:, 1:]
        near[:, 1:] |= m[:, :-1]
    lateral = near & ~m
    on_face = np.zeros_like(m)
    if ndim == 1:
        on_face[0] = True
        on_face[-1] = True
    else:
        on_face[0, :] = True
        on_face[-1, :] = True
        on_face[:, 0] = True
        on_face[:, -1] = True
    lateral &= ~on_face
    flat = lateral.ravel()
    pts = grid.node_points()
    flat &= region.contains_points(pts, tol=1e-9 * grid.h)
    return flat


def osc_g_on_lateral(grid: SpaceTimeGrid, datum: BoundaryDatum, x_o, t_o: float,
                     R_o: float, params, epsilon: float, delta_Ro: float) -> float:
    """Oscillation of the boundary datum over obstacle nodes in K_{2 R_o}(x_o)
    and the backward window of depth
    3 gamma_star delta(R_o)**((2-p)/(p-1)) R_o**(p-epsilon), clipped at [0, T].

    Samples the grid times inside the window plus its clipped endpoints, so a
    datum linear in time oscillates by exactly the window length.
    delta_Ro = 0 is read as an unbounded depth (window [0, t_o]).
    """
    if not 0.0 <= delta_Ro <= 1.0:
        raise ValueError(f"delta(R_o) must lie in [0, 1], got {delta_Ro}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    p = params.p
    if delta_Ro == 0.0:
        t_lo = 0.0
    else:
        depth = (3.0 * params.constants.gamma_star
                 * delta_Ro ** ((2.0 - p) / (p - 1.0)) * R_o ** (p - epsilon))
        t_lo = max(t_o - depth, 0.0)
    t_hi = min(t_o, float(grid.times[-1]))
    if t_hi < t_lo:
        raise ValueError(f"window [{t_lo}, {t_o}] lies outside the grid times")
    region = Cube(x_o, 2.0 * R_o)
    mask = lateral_mask(grid, region)
    if not np.any(mask):
        raise ValueError("region contains no lateral boundary nodes")
    span = max(abs(t_hi), 1.0)
    sel = {float(t) for t in grid.times
           if t >= t_lo - 1e-12 * span and t <= t_hi + 1e-12 * span}
    sel.update((t_lo, t_hi))
    pts = grid.node_points()[mask]
    lo = math.inf
    hi = -math.inf
    for t in sorted(sel):
        vals = datum(pts, t)
        lo = min(lo, float(vals.min()))
        hi = max(hi, float(vals.max()))
    return hi - lo


def spatial_energy(field: SpaceTimeField) -> np.ndarray:
    """sum_cells h^N |grad u|^p for each stored slice, in storage order."""
    system = LatticeSystem(field.grid.shape, field.grid.h)
    return np.array([system.energy(row, field.p) for row in field.values])


def barenblatt(x, t: float, p: float, mass_scale: float = 1.0) -> np.ndarray:
    """Source-type self-similar solution on the line.

    B(x, t) = t**-a * (C - kappa * (|x| t**-a)**(p/(p-1)))_+**((p-1)/(p-2))
    with a = 1/(2(p-1)) and kappa = (p-2)/p * a**(1/(p-1)).  The support edge
    moves as (C/kappa)**((p-1)/p) * t**a.
    """
    if p <= 2.0:
        raise ValueError(f"p must exceed 2, got {p}")
    if not t > 0.0:
        raise ValueError(f"t must be positive, got {t}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError("closed form is one-dimensional; got points with "
                             f"{x.shape[1]} coordinates")
        x = x[:, 0]
    a = 1.0 / (2.0 * (p - 1.0))
    kappa = (p - 2.0) / p * a ** (1.0 / (p - 1.0))
    xi = np.abs(x) * t ** -a
    core = mass_scale - kappa * xi ** (p / (p - 1.0))
    return t ** -a * np.clip(core, 0.0, None) ** ((p - 1.0) / (p - 2.0))


def save_snapshot(field: SpaceTimeField, step: int, path: str) -> None:
    """Write one stored slice as CSV: '#'-prefixed metadata lines, a column
    header, then one row per node with coordinates, inside flag, and value
    at full float64 precision."""
    row = field.slice_at_step(step)
    grid = field.grid
    pts = grid.node_points()
    ndim = len(grid.shape)
    cols = [f"x{i}" for i in range(ndim)] + ["inside", "value"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# capflow field snapshot\n")
        center = ",".join("%.17g" % c for c in grid.box.center)
        fh.write(f"# h={grid.h:.17g} p={field.p:.17g} step={step} "
                 f"time={float(grid.times[step]):.17g}\n")
        fh.write(f"# box_center={center} box_half_edge={grid.box.half_edge:.17g}\n")
        fh.write(",".join(cols) + "\n")
        for i in range(len(pts)):
            coords = ",".join("%.17g" % c for c in pts[i])
            fh.write(f"{coords},{int(grid.inside[i])},{row[i]:.17g}\n")


def load_snapshot(path: str) -> dict:
    """Read a snapshot written by save_snapshot.

    Returns {"points", "inside", "values", "meta"}; meta holds the floats
    parsed from the '#' lines (h, p, step, time, box geometry).
    """
    meta: dict[str, float] = {}
    rows = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, _, raw = token.partition("=")
                        if key == "box_center":
                            meta[key] = tuple(float(v) for v in raw.split(","))
                        elif key == "step":
                            meta[key] = int(raw)
                        else:
                            meta[key] = float(raw)
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append([float(v) for v in line.split(",")])
    if header is None or not rows:
        raise ValueError(f"{path} holds no snapshot data")
    arr = np.array(rows)
    ndim = len(header) - 2
    return {
        "points": arr[:, :ndim],
        "inside": arr[:, ndim].astype(bool),
        "values": arr[:, ndim + 1],
        "meta": meta,
    }
