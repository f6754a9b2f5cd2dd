"""Mean-field limit of the particle system.

Two independent solvers for the limiting barrier:

* `solve_limit_mc` runs a Picard iteration on the sampled fixed point

      v(t) = v0 - K * mean_j sup_{u<=t} max(-(xi_j + B_j(u) - y(u)), 0),
      y(t) = integral_0^t v,

  with common random numbers (paths regenerated from the seed each sweep,
  so memory stays bounded).  The map contracts on windows shorter than
  sqrt(2/K); windows of length 0.9*sqrt(2/K) are chained by restart.

* `solve_limit_pde` evolves the density in the frame attached to the
  barrier, u(t, x) = p(t, x + y(t)) for x >= 0:

      u_t = (1/2) u_xx + y'(t) u_x,      u_x(t,0) = -2 y'(t) u(t,0),
      y'' = -(K/2) u(t, 0),              y(0) = 0, y'(0) = v0.

  Crank-Nicolson in time; space is discretized in flux form, where the
  boundary condition is exactly a zero-flux wall, so the trapezoidal mass
  is conserved to rounding.  Dirac initial data is mollified by the exact
  reflected heat kernel run to t = 10*dt_pde.

`density_fixed_barrier` is the same stepper with a prescribed barrier and
no feedback; `consistency_check` measures how well a density field solves
the coupled law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConvergenceError, InvalidInputError, MassDriftError
from .particles import InitialDistribution, _brownian_chunk, _initial_chunk
from .paths import SampledPath, uniform_grid
from .wasserstein import GridDensity

__all__ = [
    "DensityField",
    "LimitBarrier",
    "ConsistencyReport",
    "reflected_heat_kernel",
    "solve_limit_mc",
    "solve_limit_pde",
    "density_fixed_barrier",
    "consistency_check",
]

# Fraction of the contraction window sqrt(2/K) used per Picard window.
WINDOW_SAFETY = 0.9

# Abort when the trapezoidal mass drifts further than this from 1.
MASS_DRIFT_LIMIT = 1e-3

# An undershoot of u below this is reported (values are clipped either way).
CLIP_REPORT_LEVEL = -1e-10


def reflected_heat_kernel(t: float, x, x0: float):
    """Density at time t of a Brownian particle from x0 >= 0 reflected at 0."""
    x = np.asarray(x, dtype=np.float64)
    c = 1.0 / math.sqrt(2.0 * math.pi * t)
    return c * (np.exp(-((x - x0) ** 2) / (2 * t)) + np.exp(-((x + x0) ** 2) / (2 * t)))


@dataclass(frozen=True)
class LimitBarrier:
    """Limiting barrier: position, velocity, and the mean regulator estimate."""

    y: SampledPath
    v: SampledPath
    m_mean: SampledPath
    iterations: int
    residual: float


@dataclass(frozen=True)
class DensityField:
    """Moving-frame density u(t, x) with the barrier that generated it.

    u[k, j] is the density at times[k], frame offset x_grid[j] (absolute
    position x_grid[j] + y(times[k])).  y and yprime are sampled on the
    same output time grid as u.
    """

    times: np.ndarray = field(repr=False)
    x_grid: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    y: SampledPath
    yprime: SampledPath
    impulse_K: float
    mass_drift: float = 0.0
    clip_events: int = 0

    def density_at(self, t: float) -> GridDensity:
        """Absolute-frame density slice at output time t."""
        k = self.y.index_of(t)
        return GridDensity(
            x0=float(self.y.values[k]), dx=float(self.x_grid[1] - self.x_grid[0]),
            weights=self.u[k],
        )

    def boundary_values(self) -> np.ndarray:
        return self.u[:, 0]


@dataclass(frozen=True)
class ConsistencyReport:
    """Residual of the coupled velocity law for a density field."""

    max_residual: float
    threshold: float

    @property
    def free_boundary(self) -> bool:
        return self.max_residual <= self.threshold


# ---------------------------------------------------------------------------
# Monte Carlo fixed point
# ---------------------------------------------------------------------------


def _mean_regulator_sweep(
    y: np.ndarray, init: InitialDistribution, M: int, nsteps: int, dt: float, seed, chunk: int
) -> np.ndarray:
    """mean_j over M paths of the running regulator against barrier y."""
    total = np.zeros(nsteps + 1)
    for lo in range(0, M, chunk):
        hi = min(M, lo + chunk)
        f = _brownian_chunk(seed, lo, hi, nsteps, dt)
        f += _initial_chunk(init, seed, lo, hi)[:, None]
        np.subtract(y[None, :], f, out=f)
        np.maximum(f, 0.0, out=f)
        np.maximum.accumulate(f, axis=1, out=f)
        total += np.add.reduce(f, axis=0)
    return total / M


def _window_bounds(nsteps: int, dt: float, K: float) -> list[tuple[int, int]]:
    if K == 0.0:
        return [(0, nsteps)]
    w = WINDOW_SAFETY * math.sqrt(2.0 / K)
    steps = max(1, min(nsteps, int(math.floor(w / dt))))
    bounds = []
    k0 = 0
    while k0 < nsteps:
        k1 = min(nsteps, k0 + steps)
        bounds.append((k0, k1))
        k0 = k1
    return bounds


def solve_limit_mc(
    init: InitialDistribution,
    v0: float,
    K: float,
    T: float,
    dt: float,
    M: int,
    seed,
    tol: float = 1e-3,
    max_iter: int = 60,
    y_init=None,
    chunk: int = 4096,
) -> LimitBarrier:
    """Fixed point of the sampled mean-field barrier map.

    Parameters
    ----------
    init : InitialDistribution
        Law of the initial positions (support in [0, inf)).
    v0, K, T, dt : float
        Barrier parameters and grid.
    M : int
        Number of Monte Carlo paths (common random numbers across sweeps).
    seed
        Path j's stream depends only on (seed, j).
    tol : float
        Convergence threshold on the sup-change of y per Picard sweep.
    max_iter : int
        Sweep budget per window.
    y_init : optional
        Starting guess: SampledPath on the run grid, a callable t -> y, or
        None for the free line v0*t (the no-feedback solution, so K = 0
        converges in a single sweep).

    Returns
    -------
    LimitBarrier
        With v = v0 - K * m_mean recomputed against the final barrier by one
        uncounted closing sweep; iterations counts the Picard updates and
        residual is the sup-change of the last one.
    """
    if not (np.isfinite(K) and K >= 0):
        raise InvalidInputError(f"K must be >= 0, got {K}")
    if M < 1:
        raise InvalidInputError("M must be >= 1")
    if tol <= 0 or max_iter < 1:
        raise InvalidInputError("need tol > 0 and max_iter >= 1")
    nsteps = uniform_grid(T, dt)
    times = dt * np.arange(nsteps + 1)

    if y_init is None:
        y = v0 * times
    elif callable(y_init):
        y = np.asarray([y_init(t) for t in times], dtype=np.float64)
    elif isinstance(y_init, SampledPath):
        if y_init.n_steps != nsteps or abs(y_init.dt - dt) > 1e-9 * dt or y_init.t0 != 0.0:
            raise InvalidInputError("y_init grid must match the run grid")
        y = y_init.values.copy()
    else:
        raise InvalidInputError("y_init must be None, callable, or a SampledPath")
    if abs(y[0]) > 0:
        raise InvalidInputError("initial guess must start at y(0) = 0")

    iterations = 0
    residual = 0.0
    for k0, k1 in _window_bounds(nsteps, dt, K):
        prev_resid = math.inf
        for _ in range(max_iter):
            m_mean = _mean_regulator_sweep(y, init, M, nsteps, dt, seed, chunk)
            iterations += 1
            v = v0 - K * m_mean
            y_new = y.copy()
            y_new[k0 + 1 : k1 + 1] = y[k0] + np.cumsum(
                0.5 * dt * (v[k0:k1] + v[k0 + 1 : k1 + 1])
            )
            residual = float(np.max(np.abs(y_new[k0 : k1 + 1] - y[k0 : k1 + 1])))
            if residual > prev_resid:
                y = 0.5 * (y + y_new)  # damp oscillating updates
            else:
                y = y_new
            prev_resid = residual
            if residual <= tol:
                break
        else:
            raise ConvergenceError(
                f"Picard window [{times[k0]:.6g}, {times[k1]:.6g}] stalled at "
                f"residual {residual:.3e} > tol {tol:.3e} after {max_iter} sweeps",
                residual=residual,
            )

    # Close the loop: report m_mean and v coupled to the final barrier.
    m_mean = _mean_regulator_sweep(y, init, M, nsteps, dt, seed, chunk)
    v = v0 - K * m_mean
    return LimitBarrier(
        y=SampledPath(0.0, dt, y),
        v=SampledPath(0.0, dt, v),
        m_mean=SampledPath(0.0, dt, m_mean),
        iterations=iterations,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# Crank-Nicolson moving-frame solver
# ---------------------------------------------------------------------------


def _operator_diagonals(c: float, J: int, dx: float):
    """Tridiagonal generator A(c) of the frame equation in flux form.

    Row j of A is (F_{j+1/2} - F_{j-1/2}) / cell_volume with flux
    F = u_x/2 + c*u; the wall flux F(0) vanishes by the boundary condition,
    and node J is pinned to zero (far Dirichlet).  The advection part is
    centered unless the cell Peclet number 2*|c|*dx exceeds 2.
    """
    lower = np.empty(J + 1)  # A[j, j-1], entry 0 unused
    diag = np.empty(J + 1)
    upper = np.empty(J + 1)  # A[j, j+1], entry J unused
    inv2 = 1.0 / (2.0 * dx * dx)
    invd = 1.0 / (dx * dx)

    if abs(c) * dx <= 1.0:  # centered advection
        adv = c / (2.0 * dx)
        lower[:] = inv2 - adv
        diag[:] = -invd
        upper[:] = inv2 + adv
        diag[0] = -invd + c / dx
        upper[0] = invd + c / dx
    elif c > 0.0:  # upwind, advected state from the right
        lower[:] = inv2
        diag[:] = -invd - c / dx
        upper[:] = inv2 + c / dx
        diag[0] = -invd
        upper[0] = invd + 2.0 * c / dx
    else:
        lower[:] = inv2 - c / dx
        diag[:] = -invd + c / dx
        upper[:] = inv2
        diag[0] = -invd + 2.0 * c / dx
        upper[0] = invd
    lower[0] = 0.0
    # Far boundary: leave u_J untouched (it starts and stays at 0).
    lower[J] = 0.0
    diag[J] = 0.0
    upper[J] = 0.0
    return lower, diag, upper


def _cn_step(u: np.ndarray, c: float, dt: float, dx: float, ab: np.ndarray) -> np.ndarray:
    J = u.size - 1
    lower, diag, upper = _operator_diagonals(c, J, dx)
    rhs = u + 0.5 * dt * (diag * u)
    rhs[:-1] += 0.5 * dt * upper[:-1] * u[1:]
    rhs[1:] += 0.5 * dt * lower[1:] * u[:-1]
    # banded layout for (I - dt/2 A)
    ab[0, 1:] = -0.5 * dt * upper[:-1]
    ab[1, :] = 1.0 - 0.5 * dt * diag
    ab[2, :-1] = -0.5 * dt * lower[1:]
    return solve_banded((1, 1), ab, rhs, overwrite_ab=True, overwrite_b=True)


def _pick_stride(nsteps: int, target: int = 1000) -> int:
    s = max(1, nsteps // target)
    while nsteps % s:
        s -= 1
    return s


def _trapezoid_weights(J: int, dx: float) -> np.ndarray:
    w = np.full(J + 1, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


class _FrameStepper:
    """Shared machinery of the free and prescribed barrier solvers."""

    def __init__(self, T: float, dt_pde: float, dx: float, x_max: float, store_target: int):
        if not (dx > 0 and np.isfinite(dx)):
            raise InvalidInputError("dx must be positive")
        if not (0 < dt_pde <= dx * dx * (1 + 1e-9)):
            raise InvalidInputError(
                f"dt_pde={dt_pde} must satisfy dt_pde <= dx^2 = {dx*dx:.3e}"
            )
        if not (x_max > dx):
            raise InvalidInputError("x_max must exceed dx")
        self.nsteps = uniform_grid(T, dt_pde)
        self.dt = dt_pde
        self.dx = dx
        self.J = int(round(x_max / dx))
        self.x = dx * np.arange(self.J + 1)
        self.weights = _trapezoid_weights(self.J, dx)
        self.stride = _pick_stride(self.nsteps, store_target)
        self.ab = np.empty((3, self.J + 1))
        self.min_u = 0.0
        self.clip_events = 0
        self.mass_drift = 0.0

    def monitor(self, u: np.ndarray) -> np.ndarray:
        low = float(np.min(u))
        if low < 0.0:
            if low < CLIP_REPORT_LEVEL:
                self.clip_events += 1
            self.min_u = min(self.min_u, low)
            u = np.maximum(u, 0.0)
        drift = abs(float(self.weights @ u) - 1.0)
        if drift > MASS_DRIFT_LIMIT:
            raise MassDriftError(
                f"density mass drifted by {drift:.3e} (limit {MASS_DRIFT_LIMIT})", drift=drift
            )
        self.mass_drift = max(self.mass_drift, drift)
        return u

    def normalize(self, u: np.ndarray) -> np.ndarray:
        mass = float(self.weights @ u)
        if mass <= 0:
            raise InvalidInputError("initial density has nonpositive mass on the grid")
        return u / mass


def _initial_frame_density(init, stepper: _FrameStepper) -> np.ndarray:
    """Sample a non-Dirac initial law on the frame grid (normalized)."""
    if isinstance(init, GridDensity):
        u0 = np.interp(stepper.x, init.x_grid, init.weights, left=0.0, right=0.0)
        return stepper.normalize(np.maximum(u0, 0.0))
    vals = init.density_on_grid(stepper.x)
    if vals is None:
        raise InvalidInputError(
            f"initial kind {init.kind!r} has no density; the density solvers accept "
            "delta, uniform, exponential, half_normal, or an explicit GridDensity"
        )
    return stepper.normalize(vals)


def _delta_mollified(c: float, t_mol: float, stepper: _FrameStepper) -> np.ndarray:
    u = reflected_heat_kernel(t_mol, stepper.x, c)
    u[-1] = 0.0
    return stepper.normalize(u)


def _delta_boundary_integral(c: float, t: float, substeps: int, dt: float) -> tuple[float, float]:
    """(integral_0^t u(s,0) ds, integral_0^t (t-s) u(s,0) ds) for kernel data.

    u(s, 0) = 2*phi_s(c).  For c = 0 the first integral is 2*sqrt(2t/pi)
    (closed form, integrable singularity at s = 0); otherwise the integrand
    vanishes at 0 and the trapezoid rule on the step grid is used.
    """
    if c == 0.0:
        i0 = 2.0 * math.sqrt(2.0 * t / math.pi)
        # integral of 2*sqrt(2s/pi) ds = (4/3)*sqrt(2/pi)*t^(3/2)
        i1 = t * i0 - (4.0 / 3.0) * math.sqrt(2.0 / math.pi) * t**1.5
        return i0, i1
    s = dt * np.arange(substeps + 1)
    vals = np.zeros(substeps + 1)
    vals[1:] = 2.0 * np.exp(-(c * c) / (2.0 * s[1:])) / np.sqrt(2.0 * math.pi * s[1:])
    i0 = float(np.trapezoid(vals, dx=dt))
    i1 = float(np.trapezoid((t - s) * vals, dx=dt))
    return i0, i1


def solve_limit_pde(
    init,
    v0: float,
    K: float,
    T: float,
    dt_pde: float,
    dx: float,
    x_max: float | None = None,
    store_target: int = 1000,
) -> DensityField:
    """Free-boundary density solver in the barrier frame.

    Parameters
    ----------
    init : InitialDistribution or GridDensity
        Initial law.  A Dirac is mollified with the exact reflected kernel
        run to t = 10*dt_pde; laws with a density start at t = 0.
    v0, K, T : float
        Initial barrier velocity, impulse constant, horizon.
    dt_pde, dx : float
        Time step (requires dt_pde <= dx^2) and space step.
    x_max : float, optional
        Frame-domain width; defaults to initial extent + 6*sqrt(T) + |v0|*T.
    store_target : int
        Approximate number of stored time slices.

    Returns
    -------
    DensityField
    """
    if not (np.isfinite(K) and K >= 0):
        raise InvalidInputError(f"K must be >= 0, got {K}")
    if x_max is None:
        extent = init.upper_extent() if isinstance(init, InitialDistribution) else (
            float(init.x_grid[-1])
        )
        x_max = extent + 6.0 * math.sqrt(T) + abs(v0) * T
    stepper = _FrameStepper(T, dt_pde, dx, x_max, store_target)
    dt = stepper.dt
    nsteps = stepper.nsteps

    is_delta = isinstance(init, InitialDistribution) and init.kind == "delta"
    k_start = 0
    y = np.zeros(nsteps + 1)
    yp = np.zeros(nsteps + 1)
    yp[0] = v0

    if is_delta:
        c = init.params[0]
        k_start = min(10, nsteps)
        t_mol = k_start * dt
        u = _delta_mollified(c, t_mol, stepper)
        # Advance the barrier across the mollified span with the exact
        # kernel boundary values (the frame shift during [0, t_mol] is
        # O(t_mol) and ignored by the kernel).
        for k in range(1, k_start + 1):
            i0_k, i1_k = _delta_boundary_integral(c, k * dt, k, dt)
            yp[k] = v0 - 0.5 * K * i0_k
            y[k] = v0 * (k * dt) - 0.5 * K * i1_k
    else:
        u = _initial_frame_density(init, stepper)

    u = stepper.monitor(u)
    u_rows = _seed_stored_rows(u, init if is_delta else None, k_start, stepper)

    ypp_old = -0.5 * K * u[0]
    for k in range(k_start, nsteps):
        yp_half = yp[k] + 0.5 * dt * ypp_old
        u = _cn_step(u, yp_half, dt, stepper.dx, stepper.ab)
        u = stepper.monitor(u)
        ypp_new = -0.5 * K * u[0]
        yp[k + 1] = yp[k] + 0.5 * dt * (ypp_old + ypp_new)
        y[k + 1] = y[k] + 0.5 * dt * (yp[k] + yp[k + 1])
        ypp_old = ypp_new
        if (k + 1) % stepper.stride == 0:
            u_rows[k + 1] = u.copy()

    return _assemble_field(stepper, u_rows, y, yp, K)


def _seed_stored_rows(u, delta_init, k_start, stepper) -> dict[int, np.ndarray]:
    """Stored slices covering the mollified span [0, k_start] plus row 0.

    Rows strictly inside the span hold the exact kernel at their own time;
    row 0 stands in for the Dirac with the profile that starts the scheme.
    """
    u_rows = {0: u.copy()}
    if delta_init is not None:
        c = delta_init.params[0]
        for r in range(stepper.stride, k_start + 1, stepper.stride):
            prof = reflected_heat_kernel(r * stepper.dt, stepper.x, c)
            prof[-1] = 0.0
            u_rows[r] = stepper.normalize(prof)
    return u_rows


def _assemble_field(stepper, u_rows, y, yp, K):
    dt_out = stepper.stride * stepper.dt
    rows = list(range(0, stepper.nsteps + 1, stepper.stride))
    out = np.stack([u_rows[r] for r in rows])
    times = stepper.dt * np.asarray(rows, dtype=np.float64)
    return DensityField(
        times=times,
        x_grid=stepper.x,
        u=out,
        y=SampledPath(0.0, dt_out, y[rows]),
        yprime=SampledPath(0.0, dt_out, yp[rows]),
        impulse_K=float(K),
        mass_drift=stepper.mass_drift,
        clip_events=stepper.clip_events,
    )


def density_fixed_barrier(
    g: SampledPath,
    init,
    T: float,
    dt_pde: float,
    dx: float,
    x_max: float | None = None,
    store_target: int = 1000,
) -> DensityField:
    """Density of independent particles reflected above a prescribed barrier.

    Same frame stepper as `solve_limit_pde` but the barrier path g is given
    (no feedback; the stored impulse constant is 0).  g must start at 0 at
    time 0 and cover [0, T]; its grid need not match dt_pde.
    """
    if g.t0 != 0.0 or g.values[0] != 0.0:
        raise InvalidInputError("prescribed barrier must start at g(0) = 0")
    if g.t_end < T * (1 - 1e-12):
        raise InvalidInputError(f"prescribed barrier ends at {g.t_end}, need {T}")
    if x_max is None:
        extent = init.upper_extent() if isinstance(init, InitialDistribution) else (
            float(init.x_grid[-1])
        )
        x_max = extent + 6.0 * math.sqrt(T) + float(np.max(g.values) - np.min(g.values))
    stepper = _FrameStepper(T, dt_pde, dx, x_max, store_target)
    dt = stepper.dt
    nsteps = stepper.nsteps

    tnodes = dt * np.arange(nsteps + 1)
    gv = np.interp(tnodes, g.times, g.values)
    slopes = np.diff(gv) / dt

    is_delta = isinstance(init, InitialDistribution) and init.kind == "delta"
    k_start = 0
    if is_delta:
        c = init.params[0]
        k_start = min(10, nsteps)
        # Mollification assumes the barrier stays near 0 over [0, t_mol].
        u = _delta_mollified(c, k_start * dt, stepper)
    else:
        u = _initial_frame_density(init, stepper)
    u = stepper.monitor(u)

    u_rows = _seed_stored_rows(u, init if is_delta else None, k_start, stepper)
    for k in range(k_start, nsteps):
        u = _cn_step(u, slopes[k], dt, stepper.dx, stepper.ab)
        u = stepper.monitor(u)
        if (k + 1) % stepper.stride == 0:
            u_rows[k + 1] = u.copy()

    yp = np.gradient(gv, dt)
    return _assemble_field(stepper, u_rows, gv, yp, 0.0)


def consistency_check(field: DensityField, K: float | None = None, threshold: float = 0.02) -> ConsistencyReport:
    """Residual of the coupled law y'(t) = v0 - (K/2) * integral_0^t u(s, 0) ds.

    y' is recomputed from the stored barrier by second-order differences
    (so the check does not reuse the solver's own velocity bookkeeping) and
    the boundary integral by the trapezoid rule on the output grid.  Free
    boundary solutions give residuals of scheme order; a prescribed barrier
    that does not solve the law is flagged via `free_boundary`.
    """
    if K is None:
        K = field.impulse_K
    y = field.y.values
    dt = field.y.dt
    if y.size < 3:
        raise InvalidInputError("need at least three output times")
    dy = np.empty_like(y)
    dy[1:-1] = (y[2:] - y[:-2]) / (2 * dt)
    dy[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * dt)
    dy[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * dt)

    u0 = field.boundary_values()
    integ = np.concatenate(([0.0], np.cumsum(0.5 * dt * (u0[1:] + u0[:-1]))))
    v0 = field.yprime.values[0]
    residual = float(np.max(np.abs(dy - (v0 - 0.5 * K * integ))))
    return ConsistencyReport(max_residual=residual, threshold=threshold)
