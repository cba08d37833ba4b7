"""Explicit Milstein finite differences for the common-factor drift-diffusion SPDE.

The density v(t, x) of surviving mass evolves under

    dv = -mu v_x dt + 1/2 v_xx dt - sqrt(rho) v_x dM_t,

with M a standard Brownian motion.  One timestep of the explicit scheme is a
three-point (or five-point) stencil whose coefficients depend on the market
draw Z of that step.  Boundary values v_0 = v_J = 0 are implicit and never
stored; states hold the J-1 interior nodal values only.
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridSpec",
    "ModelParams",
    "SolverState",
    "InitialCondition",
    "PathSolution",
    "hat_weight",
    "project_initial",
    "milstein_step_tridiagonal",
    "milstein_step_pentadiagonal",
    "step_values_tridiagonal",
    "step_values_pentadiagonal",
    "apply_monitoring",
    "monitoring_split_index",
    "exact_density",
    "discrete_mass",
    "solve_path",
    "steps_for_dates",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time grid on [x_min, x_max] with J intervals and timestep k.

    Nodes are x_j = x_min + j*h for j = 0..J, with h = (x_max - x_min)/J held
    exact by construction.  Interior (stored) nodes are j = 1..J-1.
    """

    x_min: float
    x_max: float
    J: int
    k: float

    def __post_init__(self):
        if self.J < 2:
            raise ValueError(f"need at least 2 grid intervals, got J={self.J}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if not self.k > 0:
            raise ValueError("timestep k must be positive")

    @property
    def h(self):
        return (self.x_max - self.x_min) / self.J

    @property
    def n_interior(self):
        return self.J - 1

    @property
    def nodes(self):
        return self.x_min + self.h * np.arange(self.J + 1)

    @property
    def interior_nodes(self):
        return self.x_min + self.h * np.arange(1, self.J)

    def refined(self, level, space_ratio=2, time_ratio=4):
        """Grid `level` steps down the refinement ladder (h/2^l, k/4^l by default)."""
        if level < 0:
            raise ValueError("refinement level must be non-negative")
        return GridSpec(self.x_min, self.x_max, self.J * space_ratio**level,
                        self.k / time_ratio**level)


@dataclass(frozen=True)
class ModelParams:
    """SPDE/SDE coefficients.

    mu is the drift of the distance-to-default coordinate, rho the common-factor
    correlation, sigma and r the firm-value volatility and risk-free rate they
    were derived from.  The solver only uses mu and rho; sigma and r feed the
    credit mapping and discounting.
    """

    mu: float
    rho: float
    sigma: float = 1.0
    r: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def from_credit(cls, sigma, rho, r):
        """Distance-to-default parameters: mu = (r - sigma^2/2)/sigma."""
        return cls(mu=(r - 0.5 * sigma**2) / sigma, rho=rho, sigma=sigma, r=r)


#: Market-data parameter set used throughout the pricing experiments
#: (sigma = 0.22, rho = 0.2, r = 0.042).
CREDIT_PARAMS = ModelParams.from_credit(sigma=0.22, rho=0.2, r=0.042)


@dataclass
class SolverState:
    """Interior nodal values v_1..v_{J-1} at one timestep (boundaries are 0)."""

    values: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("state values must be one-dimensional")


@dataclass(frozen=True)
class InitialCondition:
    """Initial measure: a point mass at x0 or a density tabulated on the nodes."""

    kind: str
    x0: float = 0.0
    values: np.ndarray | None = None

    @classmethod
    def point_mass(cls, x0):
        return cls(kind="point_mass", x0=float(x0))

    @classmethod
    def tabulated(cls, values):
        return cls(kind="tabulated", values=np.asarray(values, dtype=float))


def hat_weight(x, x_j, h):
    """Nodal hat function max(h - |x - x_j|, 0)/h; partition of unity on the grid."""
    return np.maximum(h - np.abs(np.asarray(x, dtype=float) - x_j), 0.0) / h


def project_initial(ic, grid):
    """Project an initial measure onto interior hat functions.

    Point mass at x0: v_j = hat_j(x0)/h, so discrete mass h*sum(v) is exactly 1
    whenever x0 is at least one cell away from the boundary.  Tabulated density
    f given at all J+1 nodes: v_j = <hat_j, f>/h with exact piecewise-linear
    quadrature, i.e. v_j = f_{j-1}/6 + 2 f_j/3 + f_{j+1}/6.
    """
    h = grid.h
    if ic.kind == "point_mass":
        if not grid.x_min < ic.x0 < grid.x_max:
            raise ValueError(
                f"point mass at {ic.x0} outside open domain ({grid.x_min}, {grid.x_max})")
        v = hat_weight(ic.x0, grid.interior_nodes, h) / h
        return SolverState(values=v, time_index=0)
    if ic.kind == "tabulated":
        f = ic.values
        if f is None or f.shape != (grid.J + 1,):
            raise ValueError(f"tabulated density must have {grid.J + 1} nodal values")
        v = f[:-2] / 6.0 + 2.0 * f[1:-1] / 3.0 + f[2:] / 6.0
        return SolverState(values=v, time_index=0)
    raise ValueError(f"unknown initial condition kind {ic.kind!r}")


def _step_coefficients(z, params, grid):
    """Per-step stencil ingredients; z may be a scalar or an array of draws."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite market draw")
    k, h = grid.k, grid.h
    drift = (params.mu * k + math.sqrt(params.rho * k) * z) / (2.0 * h)
    diffuse = ((1.0 - params.rho) * k + params.rho * k * z * z) / (2.0 * h * h)
    return drift, diffuse


def step_values_tridiagonal(values, z, params, grid):
    """One explicit Milstein step, three-point stencil, on raw value arrays.

    `values` has shape (..., J-1) and `z` broadcasts over the leading axes
    (one draw per row), so whole Monte Carlo batches advance in one call.
    """
    v = np.asarray(values, dtype=float)
    drift, diffuse = _step_coefficients(z, params, grid)
    if v.ndim > 1:
        drift = np.expand_dims(drift, -1)
        diffuse = np.expand_dims(diffuse, -1)
    out = (1.0 - 2.0 * diffuse) * v
    out[..., 1:] += (drift + diffuse) * v[..., :-1]
    out[..., :-1] += (diffuse - drift) * v[..., 1:]
    return out


def step_values_pentadiagonal(values, z, params, grid):
    """One step of the method-of-lines Milstein variant (five-point stencil).

    The Ito correction uses the doubled-span second difference D1^2 with zero
    ghost values beyond the boundaries, scaled so that it approximates
    1/2 rho k (Z^2 - 1) v_xx exactly like the three-point variant.
    """
    v = np.asarray(values, dtype=float)
    z = np.asarray(z, dtype=float)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(v))):
        raise ValueError("non-finite input to pentadiagonal step")
    k, h = grid.k, grid.h
    drift = (params.mu * k + np.sqrt(params.rho * k) * z) / (2.0 * h)
    ito = params.rho * k * (z * z - 1.0) / (8.0 * h * h)
    if v.ndim > 1:
        drift = np.expand_dims(drift, -1)
        ito = np.expand_dims(np.asarray(ito), -1)
    d1 = np.zeros_like(v)
    d1[..., :-1] += v[..., 1:]
    d1[..., 1:] -= v[..., :-1]
    d2 = -2.0 * v
    d2[..., :-1] += v[..., 1:]
    d2[..., 1:] += v[..., :-1]
    dd = -2.0 * v
    dd[..., :-2] += v[..., 2:]
    dd[..., 2:] += v[..., :-2]
    return v - drift * d1 + k / (2.0 * h * h) * d2 + ito * dd


def milstein_step_tridiagonal(state, z, params, grid):
    """Advance a SolverState one step with the three-point scheme."""
    if not np.all(np.isfinite(state.values)):
        raise ValueError("non-finite state")
    if state.values.shape != (grid.n_interior,):
        raise ValueError(
            f"state has {state.values.shape[0]} values, grid expects {grid.n_interior}")
    return SolverState(values=step_values_tridiagonal(state.values, z, params, grid),
                       time_index=state.time_index + 1)


def milstein_step_pentadiagonal(state, z, params, grid):
    """Advance a SolverState one step with the five-point scheme."""
    if state.values.shape != (grid.n_interior,):
        raise ValueError(
            f"state has {state.values.shape[0]} values, grid expects {grid.n_interior}")
    return SolverState(values=step_values_pentadiagonal(state.values, z, params, grid),
                       time_index=state.time_index + 1)


def monitoring_split_index(grid):
    """Stored-array index of the node at x = 0, or raise if no node sits there."""
    pos = -grid.x_min / grid.h
    j0 = int(round(pos))
    if abs(pos - j0) > 1e-9:
        raise ValueError(
            f"monitoring requires a grid node at x=0; x_min={grid.x_min}, h={grid.h}")
    if not 0 <= j0 <= grid.J:
        raise ValueError("x=0 lies outside the grid")
    return j0


def apply_monitoring_values(values, grid):
    """Default-monitoring interface condition on raw arrays (batched ok)."""
    j0 = monitoring_split_index(grid)
    out = np.array(values, dtype=float, copy=True)
    # stored index i holds node j = i+1
    if j0 >= 2:
        out[..., :j0 - 1] = 0.0
    if 1 <= j0 <= grid.J - 1:
        out[..., j0 - 1] *= 0.5
    return out


def apply_monitoring(state, grid):
    """Zero the density below the default boundary and halve it at x = 0."""
    return SolverState(values=apply_monitoring_values(state.values, grid),
                       time_index=state.time_index)


def exact_density(x, T, m_t, x0, params):
    """Closed-form no-boundary solution: a Gaussian displaced by the market path.

    v(T, x) = exp(-(x - x0 - mu T - sqrt(rho) M_T)^2 / (2 (1-rho) T))
              / sqrt(2 pi (1-rho) T).

    Vectorised over x and m_t (broadcast together).
    """
    if not 0.0 <= params.rho < 1.0:
        raise ValueError("exact density requires 0 <= rho < 1")
    if not T > 0:
        raise ValueError("T must be positive")
    var = (1.0 - params.rho) * T
    arg = np.asarray(x, dtype=float) - x0 - params.mu * T \
        - math.sqrt(params.rho) * np.asarray(m_t, dtype=float)
    return np.exp(-arg * arg / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def discrete_mass(state, grid):
    """Trapezoid mass h*sum(v_j) of the stored interior values (batched ok)."""
    values = state.values if isinstance(state, SolverState) else np.asarray(state)
    return grid.h * np.sum(values, axis=-1)


def steps_for_dates(dates, k, n_steps):
    """Map dates to step indices, rejecting any date off the time grid."""
    steps = []
    for t in dates:
        n = int(round(t / k))
        if abs(t - n * k) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"date {t} is not an integer multiple of k={k}")
        if not 0 <= n <= n_steps:
            raise ValueError(f"date {t} outside the simulated horizon")
        steps.append(n)
    return steps


@dataclass
class PathSolution:
    """States recorded along one path, post-monitoring at monitored dates."""

    times: np.ndarray
    states: list = field(default_factory=list)

    @property
    def terminal(self):
        return self.states[-1]


def solve_path(grid, params, ic, path, monitoring=None, observe_at=None,
               record_all=False, scheme="tridiagonal"):
    """Evolve the projected initial condition along one Brownian path.

    Args:
        monitoring: iterable of default-monitoring dates (each a positive
            multiple of k), or None for plain Dirichlet evolution (continuous
            absorption when x_min = 0).
        observe_at: dates at which to record states; defaults to the terminal
            time.  record_all=True records every step instead.
        scheme: "tridiagonal" or "pentadiagonal".

    Returns:
        PathSolution with states at the requested dates (terminal always last).
    """
    if abs(path.k - grid.k) > 1e-12 * max(path.k, grid.k):
        raise ValueError(f"path timestep {path.k} does not match grid timestep {grid.k}")
    n_steps = path.n_steps
    horizon = n_steps * grid.k
    step = {"tridiagonal": step_values_tridiagonal,
            "pentadiagonal": step_values_pentadiagonal}[scheme]

    monitor_steps = set()
    if monitoring is not None:
        monitor_steps = set(steps_for_dates(monitoring, grid.k, n_steps))
        if 0 in monitor_steps:
            raise ValueError("monitoring dates must be positive")
        monitoring_split_index(grid)  # validate configuration up front

    if record_all:
        observe_steps = list(range(n_steps + 1))
    else:
        dates = observe_at if observe_at is not None else (horizon,)
        observe_steps = sorted(set(steps_for_dates(dates, grid.k, n_steps)))
    wanted = set(observe_steps)

    v = project_initial(ic, grid).values
    recorded = {}
    if 0 in wanted:
        recorded[0] = SolverState(values=v.copy(), time_index=0)
    for n in range(n_steps):
        v = step(v, path.z[n], params, grid)
        if (n + 1) in monitor_steps:
            v = apply_monitoring_values(v, grid)
        if (n + 1) in wanted:
            recorded[n + 1] = SolverState(values=v.copy(), time_index=n + 1)
    if n_steps not in recorded:
        recorded[n_steps] = SolverState(values=v, time_index=n_steps)
        observe_steps = observe_steps + [n_steps]
    times = np.array([s * grid.k for s in observe_steps])
    return PathSolution(times=times, states=[recorded[s] for s in observe_steps])
