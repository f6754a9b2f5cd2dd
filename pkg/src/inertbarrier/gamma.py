"""Coupled barrier map for n driver paths.

Given drivers f_1..f_n on a common grid, an initial barrier velocity v0 and
an impulse constant K >= 0, the barrier y and per-driver regulators m_i
solve the coupled system

    y(0) = 0,        y'(t) = v(t),
    v(t) = v0 - (K/n) * sum_i m_i(t),
    m_i(t) = sup_{u <= t} max(-(f_i(u) - y(u)), 0),

i.e. each driver is reflected above y while the barrier loses velocity in
proportion to the accumulated reflection.  `solve_gamma` computes the
explicit lattice construction: the velocity is frozen on windows of length
eps and refreshed from the regulators at each lattice point, using the
supremum up to and including the lattice point.  With eps equal to the grid
step the returned v satisfies v(k) = v0 - (K/n)*sum_i m_i(k) exactly at
every grid point and y is the exact integral of the piecewise-constant
velocity; for coarser eps the same identities hold up to the refinement
bound (see `refinement_bound`).

K = 0 decouples the system: y(t) = v0*t and each m_i is the regulator of
f_i against that line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .paths import SampledPath, require_same_grid

__all__ = [
    "BarrierTrajectory",
    "GammaResult",
    "solve_gamma",
    "solve_gamma_refined",
    "lipschitz_envelope",
    "refinement_bound",
    "velocity_envelope",
]


@dataclass(frozen=True)
class BarrierTrajectory:
    """Barrier position y and velocity v on one grid.

    v(k) is the velocity in effect on [t_k, t_{k+1}); v is nonincreasing and
    y is the exact integral of that step function, hence concave.
    """

    y: SampledPath
    v: SampledPath
    impulse_K: float
    v0: float

    def __post_init__(self):
        require_same_grid(self.y, self.v)
        if self.y.values[0] != 0.0:
            raise InvalidInputError("barrier must start at y(0) = 0")
        if self.v.values[0] != self.v0:
            raise InvalidInputError("v(0) must equal v0")
        scale = 1.0 + abs(self.v0)
        if np.any(np.diff(self.v.values) > 1e-12 * scale):
            raise InvalidInputError("barrier velocity must be nonincreasing")


@dataclass(frozen=True)
class GammaResult:
    """Output of the coupled barrier map.

    m[i] and x[i] are the regulator and reflected path of driver i against
    the returned barrier; eps_used is the lattice width of the velocity
    updates.  refine_gap and tol_reached are populated by
    `solve_gamma_refined`.
    """

    barrier: BarrierTrajectory
    m: tuple[SampledPath, ...]
    x: tuple[SampledPath, ...]
    eps_used: float
    refine_gap: float | None = None
    tol_reached: bool = True


def _validate_drivers(f: Sequence[SampledPath]) -> tuple[np.ndarray, float, float]:
    if len(f) == 0:
        raise InvalidInputError("need at least one driver path")
    require_same_grid(*f)
    mat = np.stack([p.values for p in f])  # (n, N+1)
    if np.any(mat[:, 0] < 0.0):
        raise InvalidInputError("drivers must start at or above the barrier: f_i(0) >= 0")
    return mat, f[0].t0, f[0].dt


def solve_gamma(
    f: Sequence[SampledPath],
    v0: float,
    K: float,
    eps: float | None = None,
) -> GammaResult:
    """Run the lattice construction of the coupled barrier map.

    Parameters
    ----------
    f : sequence of SampledPath
        Drivers on one common grid with f_i(0) >= 0.
    v0 : float
        Initial barrier velocity.
    K : float
        Impulse constant, >= 0.
    eps : float, optional
        Velocity-update lattice width; must be an integer multiple of the
        grid step.  Defaults to the grid step itself (the finest choice).
    """
    if not (np.isfinite(K) and K >= 0.0):
        raise InvalidInputError(f"impulse constant K must be >= 0, got {K}")
    if not np.isfinite(v0):
        raise InvalidInputError("v0 must be finite")
    fmat, t0, dt = _validate_drivers(f)
    n, npts = fmat.shape
    nsteps = npts - 1

    if eps is None:
        eps = dt
    stride = round(eps / dt)
    if stride < 1 or abs(eps / dt - stride) > 1e-9 * stride:
        raise InvalidInputError(f"eps={eps} must be a positive integer multiple of dt={dt}")
    eps = stride * dt

    # Time-major layout keeps the per-step row operations contiguous.
    ft = np.ascontiguousarray(fmat.T)  # (N+1, n)
    m = np.empty_like(ft)
    y = np.empty(npts)
    y[0] = 0.0
    np.maximum(y[0] - ft[0], 0.0, out=m[0])

    scale = K / n
    slope = v0
    for k in range(nsteps):
        if k > 0 and k % stride == 0:
            slope = v0 - scale * float(np.add.reduce(m[k]))
        y[k + 1] = y[k] + slope * dt
        np.maximum(m[k], y[k + 1] - ft[k + 1], out=m[k + 1])

    v = v0 - scale * np.add.reduce(m, axis=1)
    x = ft + m

    y_path = SampledPath(t0, dt, y)
    barrier = BarrierTrajectory(
        y=y_path, v=SampledPath(t0, dt, v), impulse_K=float(K), v0=float(v0)
    )
    mt = m.T
    xt = x.T
    m_paths = tuple(SampledPath(t0, dt, mt[i]) for i in range(n))
    x_paths = tuple(SampledPath(t0, dt, xt[i]) for i in range(n))
    return GammaResult(barrier=barrier, m=m_paths, x=x_paths, eps_used=eps)


def solve_gamma_refined(
    f: Sequence[SampledPath],
    v0: float,
    K: float,
    tol: float = 1e-3,
) -> GammaResult:
    """Refine the lattice width until the barrier stops moving.

    Runs `solve_gamma` at eps = dt*2^j for decreasing j and stops once the
    sup-distance between consecutive barriers is <= tol, returning the finer
    of the two.  If even eps = dt leaves a gap above tol the finest result
    is returned with tol_reached = False.
    """
    if not (tol > 0):
        raise InvalidInputError(f"tol must be positive, got {tol}")
    _, _, dt = _validate_drivers(f)
    nsteps = f[0].n_steps
    j = int(math.floor(math.log2(nsteps)))  # coarsest level: eps covers the horizon

    prev = solve_gamma(f, v0, K, eps=dt * 2**j)
    gap = None
    while j > 0:
        j -= 1
        cur = solve_gamma(f, v0, K, eps=dt * 2**j)
        gap = float(np.max(np.abs(cur.barrier.y.values - prev.barrier.y.values)))
        if gap <= tol:
            return GammaResult(
                barrier=cur.barrier, m=cur.m, x=cur.x,
                eps_used=cur.eps_used, refine_gap=gap, tol_reached=True,
            )
        prev = cur
    # eps is down to dt and the last gap (if any) still exceeds tol.
    return GammaResult(
        barrier=prev.barrier, m=prev.m, x=prev.x,
        eps_used=prev.eps_used, refine_gap=gap, tol_reached=False,
    )


def lipschitz_envelope(eta: float, n: int, K: float, T: float) -> tuple[float, float]:
    """Stability envelopes of the coupled map under driver perturbations.

    For two driver families whose summed sup-distances total eta, the
    velocity and barrier responses differ by at most

        vbound = (K * eta / n) * exp(K * T)
        ibound = (K * eta / n) * T * exp(K * T)

    respectively.  Returns (vbound, ibound).
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if K < 0 or eta < 0 or T <= 0:
        raise InvalidInputError("need K >= 0, eta >= 0, T > 0")
    base = K * eta / n * math.exp(K * T)
    return base, base * T


def refinement_bound(norm_f_sum: float, n: int, K: float, T: float, eps: float) -> float:
    """Upper bound on the barrier change when halving the lattice width.

    For drivers with summed sup-norms norm_f_sum, barriers computed at
    lattice widths eps and eps/2 (or any finer) differ by at most

        ((2 + K) * norm_f_sum / n) * eps * exp(K * T).

    Valid for v0 <= 0.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    return (2.0 + K) * norm_f_sum / n * eps * math.exp(K * T)


def velocity_envelope(barrier: BarrierTrajectory, m, x) -> tuple[float, float]:
    """Measured and guaranteed bounds on the velocity excursion.

    `m` and `x` are the regulator and reflected paths (as in a GammaResult,
    or a particle-system trajectory).  Returns (measured, bound) where
    measured = sup_k |v(k) - v0| and

        bound = (K/n) * sum_i sup_k max(-(f_i(k) - v0*t_k), 0) + K*max(v0,0)*T.

    The bound uses only the drivers and the initial velocity: the barrier
    never exceeds the line v0*t, so each regulator is dominated by the
    deficit against that line.
    """
    K, v0 = barrier.impulse_K, barrier.v0
    v = barrier.v.values
    y = barrier.y
    t = y.times - y.t0
    n = len(x)
    total = 0.0
    for xi, mi in zip(x, m):
        f_vals = xi.values - mi.values
        total += float(np.max(np.maximum(-(f_vals - v0 * t), 0.0)))
    T = y.t_end - y.t0
    bound = K / n * total + K * max(v0, 0.0) * T
    measured = float(np.max(np.abs(v - v0)))
    return measured, bound
