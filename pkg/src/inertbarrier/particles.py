"""Finite particle system: n reflecting Brownian particles above one barrier.

Randomness contract: the stream for particle i is derived deterministically
from (seed, i) via `numpy.random.SeedSequence` spawn keys, so a particle's
driver path does not depend on n, on the other particles, or on how work is
scheduled.  Identical configs produce bitwise-identical trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .gamma import BarrierTrajectory, solve_gamma
from .paths import SampledPath, uniform_grid
from .wasserstein import EmpiricalMeasure

__all__ = [
    "InitialDistribution",
    "SimConfig",
    "ParticleSystemTrajectory",
    "sample_brownian",
    "sample_initial",
    "simulate",
    "snapshot",
    "mean_regulator_uncoupled",
    "uncoupled_positions",
]

# Spawn-key branches: one namespace per purpose so streams never collide.
_BROWNIAN_BRANCH = 0
_INITIAL_BRANCH = 1

_INIT_KINDS = ("delta", "uniform", "exponential", "half_normal", "sample_file")


def particle_stream(seed, i: int, branch: int = _BROWNIAN_BRANCH) -> np.random.Generator:
    """Independent generator for particle i, a pure function of (seed, i)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(branch, i)))


@dataclass(frozen=True)
class InitialDistribution:
    """Distribution of initial particle positions, supported on [0, inf).

    kinds: delta(c), uniform(a, b), exponential(rate), half_normal(scale),
    sample_file(path) with one position per line.
    """

    kind: str
    params: tuple[float, ...] = ()
    path: str | None = None

    def __post_init__(self):
        if self.kind not in _INIT_KINDS:
            raise InvalidInputError(f"unknown initial distribution kind {self.kind!r}")
        p = self.params
        if self.kind == "delta":
            if len(p) != 1 or not np.isfinite(p[0]) or p[0] < 0:
                raise InvalidInputError("delta needs one location c >= 0")
        elif self.kind == "uniform":
            if len(p) != 2 or not all(np.isfinite(v) for v in p) or not 0 <= p[0] < p[1]:
                raise InvalidInputError("uniform needs 0 <= a < b")
        elif self.kind == "exponential":
            if len(p) != 1 or not np.isfinite(p[0]) or p[0] <= 0:
                raise InvalidInputError("exponential needs rate > 0")
        elif self.kind == "half_normal":
            if len(p) != 1 or not np.isfinite(p[0]) or p[0] <= 0:
                raise InvalidInputError("half_normal needs scale > 0")
        elif self.kind == "sample_file":
            if not self.path:
                raise InvalidInputError("sample_file needs a path")

    @classmethod
    def delta(cls, c: float) -> "InitialDistribution":
        return cls("delta", (float(c),))

    @classmethod
    def uniform(cls, a: float, b: float) -> "InitialDistribution":
        return cls("uniform", (float(a), float(b)))

    @classmethod
    def exponential(cls, rate: float) -> "InitialDistribution":
        return cls("exponential", (float(rate),))

    @classmethod
    def half_normal(cls, scale: float) -> "InitialDistribution":
        return cls("half_normal", (float(scale),))

    @classmethod
    def from_file(cls, path: str) -> "InitialDistribution":
        return cls("sample_file", (), str(path))

    def _file_values(self) -> np.ndarray:
        try:
            vals = np.loadtxt(self.path, dtype=np.float64, ndmin=1)
        except OSError as exc:
            raise InvalidInputError(f"cannot read sample file {self.path!r}: {exc}") from exc
        except ValueError as exc:
            raise InvalidInputError(f"malformed sample file {self.path!r}: {exc}") from exc
        if vals.ndim != 1:
            raise InvalidInputError("sample file must hold one position per line")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise InvalidInputError("sample file positions must be finite and >= 0")
        return vals

    def upper_extent(self) -> float:
        """Finite bound on where the initial mass effectively ends."""
        if self.kind == "delta":
            return self.params[0]
        if self.kind == "uniform":
            return self.params[1]
        if self.kind == "exponential":
            return -np.log(1e-9) / self.params[0]
        if self.kind == "half_normal":
            return 6.2 * self.params[0]
        return float(np.max(self._file_values()))

    def density_on_grid(self, x: np.ndarray) -> np.ndarray | None:
        """Density values at grid points, or None when no density exists."""
        if self.kind == "uniform":
            a, b = self.params
            return ((x >= a) & (x <= b)) / (b - a)
        if self.kind == "exponential":
            rate = self.params[0]
            return rate * np.exp(-rate * np.maximum(x, 0.0))
        if self.kind == "half_normal":
            s = self.params[0]
            return np.sqrt(2.0 / np.pi) / s * np.exp(-(x**2) / (2 * s**2))
        return None


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one particle-system run."""

    n: int
    T: float
    dt: float
    K: float
    v0: float
    init: InitialDistribution
    seed: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n!r}")
        uniform_grid(self.T, self.dt)
        if not (np.isfinite(self.K) and self.K >= 0):
            raise InvalidInputError(f"K must be >= 0, got {self.K}")
        if not np.isfinite(self.v0):
            raise InvalidInputError("v0 must be finite")

    @property
    def n_steps(self) -> int:
        return uniform_grid(self.T, self.dt)


@dataclass(frozen=True)
class ParticleSystemTrajectory:
    """Coupled trajectories: particles, their regulators, and the barrier."""

    config: SimConfig
    barrier: BarrierTrajectory
    particles: tuple[SampledPath, ...]
    m: tuple[SampledPath, ...]


def _brownian_chunk(seed, lo: int, hi: int, nsteps: int, dt: float) -> np.ndarray:
    """Brownian paths for particles lo..hi-1: shape (hi-lo, nsteps+1), B(0) = 0."""
    out = np.empty((hi - lo, nsteps + 1))
    out[:, 0] = 0.0
    sq = np.sqrt(dt)
    for row, i in enumerate(range(lo, hi)):
        z = particle_stream(seed, i).standard_normal(nsteps)
        np.cumsum(z * sq, out=out[row, 1:])
    return out


def _initial_chunk(init: InitialDistribution, seed, lo: int, hi: int) -> np.ndarray:
    if init.kind == "delta":
        return np.full(hi - lo, init.params[0])
    if init.kind == "sample_file":
        vals = init._file_values()
        if vals.size < hi:
            raise InvalidInputError(
                f"sample file {init.path!r} has {vals.size} positions, need {hi}"
            )
        return vals[lo:hi].copy()
    out = np.empty(hi - lo)
    for row, i in enumerate(range(lo, hi)):
        g = particle_stream(seed, i, branch=_INITIAL_BRANCH)
        if init.kind == "uniform":
            a, b = init.params
            out[row] = a + (b - a) * g.random()
        elif init.kind == "exponential":
            out[row] = g.exponential(1.0 / init.params[0])
        else:  # half_normal
            out[row] = abs(init.params[0] * g.standard_normal())
    return out


def sample_brownian(n: int, T: float, dt: float, seed) -> list[SampledPath]:
    """n independent Brownian paths from 0 on the uniform grid.

    Increments are N(0, dt); particle i's stream depends only on (seed, i).
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    nsteps = uniform_grid(T, dt)
    mat = _brownian_chunk(seed, 0, n, nsteps, dt)
    mat.flags.writeable = False
    return [SampledPath(0.0, dt, mat[i]) for i in range(n)]


def sample_initial(init: InitialDistribution, n: int, seed) -> np.ndarray:
    """n initial positions, one independent stream per particle."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    return _initial_chunk(init, seed, 0, n)


def simulate(config: SimConfig) -> ParticleSystemTrajectory:
    """Run the coupled system on the config grid.

    Drivers are f_i = xi_i + B_i; the barrier map is run at its finest
    lattice (eps = dt).

    Parameters
    ----------
    config : SimConfig

    Returns
    -------
    ParticleSystemTrajectory
        particles[i] = reflected path of driver i, m[i] its regulator,
        barrier the shared barrier trajectory.
    """
    nsteps = config.n_steps
    xi = sample_initial(config.init, config.n, config.seed)
    fmat = _brownian_chunk(config.seed, 0, config.n, nsteps, config.dt)
    fmat += xi[:, None]
    drivers = [SampledPath(0.0, config.dt, fmat[i]) for i in range(config.n)]
    res = solve_gamma(drivers, config.v0, config.K, eps=config.dt)
    return ParticleSystemTrajectory(
        config=config, barrier=res.barrier, particles=res.x, m=res.m
    )


def snapshot(traj: ParticleSystemTrajectory, t: float) -> EmpiricalMeasure:
    """Empirical measure of particle positions at grid time t."""
    k = traj.barrier.y.index_of(t)
    return EmpiricalMeasure.from_samples([p.values[k] for p in traj.particles])


def mean_regulator_uncoupled(
    n: int,
    T: float,
    dt: float,
    seed,
    v0: float = 0.0,
    init: InitialDistribution | None = None,
    chunk: int = 2048,
) -> float:
    """Mean final regulator of n independent particles above the line v0*t.

    This is the zero-impulse (K = 0) system evaluated without storing all
    trajectories, so n can be large.  Matches simulate() up to float
    accumulation order in the barrier line.
    """
    if init is None:
        init = InitialDistribution.delta(0.0)
    nsteps = uniform_grid(T, dt)
    line = v0 * (dt * np.arange(nsteps + 1))
    total = 0.0
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        f = _brownian_chunk(seed, lo, hi, nsteps, dt)
        f += _initial_chunk(init, seed, lo, hi)[:, None]
        deficit = np.max(line[None, :] - f, axis=1)
        total += float(np.add.reduce(np.maximum(deficit, 0.0)))
    return total / n


def uncoupled_positions(
    g: SampledPath,
    init: InitialDistribution,
    n: int,
    seed,
    chunk: int = 2048,
) -> np.ndarray:
    """Final positions of n independent particles reflected above barrier g.

    Zero-impulse dynamics with a prescribed barrier path; memory use is
    bounded by the chunk size.  g must start at the particles' time origin.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    nsteps = g.n_steps
    out = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        f = _brownian_chunk(seed, lo, hi, nsteps, g.dt)
        f += _initial_chunk(init, seed, lo, hi)[:, None]
        m = np.maximum(np.max(g.values[None, :] - f, axis=1), 0.0)
        out[lo:hi] = f[:, -1] + m
    return out
