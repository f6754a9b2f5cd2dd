"""CSV artifact writers and the flat key = value config format.

Floats are written with repr (shortest round-trip form), so rerunning a
deterministic computation reproduces every file byte for byte.
"""
from __future__ import annotations

import os

from .errors import InvalidInputError
from .particles import InitialDistribution, SimConfig

__all__ = [
    "write_trajectory",
    "write_snapshot",
    "write_density_field",
    "write_field_barrier",
    "write_limit_barrier",
    "write_hydro_table",
    "write_chaos_table",
    "write_rate_table",
    "parse_config",
    "load_config",
    "config_float",
    "config_int",
    "config_int_list",
    "init_from_dict",
    "sim_config_from_dict",
]

MAX_EXPORT_PARTICLES = 32


def _fmt(v) -> str:
    return repr(float(v))


def _write_rows(path, header: str, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def write_trajectory(path, traj) -> None:
    """Header t,Y,V,X1..Xk with the first k <= 32 particle paths."""
    k = min(len(traj.particles), MAX_EXPORT_PARTICLES)
    header = "t,Y,V," + ",".join(f"X{i}" for i in range(1, k + 1))
    times = traj.barrier.y.times
    cols = [traj.barrier.y.values, traj.barrier.v.values]
    cols += [traj.particles[i].values for i in range(k)]

    def rows():
        for idx, t in enumerate(times):
            yield [_fmt(t)] + [_fmt(c[idx]) for c in cols]

    _write_rows(path, header, rows())


def write_snapshot(path, t: float, measure) -> None:
    """Header t,atom_index,position; atom_index is 1-based over sorted atoms."""

    def rows():
        for idx, pos in enumerate(measure.atoms, start=1):
            yield [_fmt(t), str(idx), _fmt(pos)]

    _write_rows(path, "t,atom_index,position", rows())


def write_density_field(path, field) -> None:
    """Long-format header t,x,u; x is the barrier-frame offset grid."""

    def rows():
        for ti, t in enumerate(field.times):
            row_u = field.u[ti]
            for xi, x in enumerate(field.x_grid):
                yield [_fmt(t), _fmt(x), _fmt(row_u[xi])]

    _write_rows(path, "t,x,u", rows())


def write_field_barrier(path, field) -> None:
    """Header t,y,yprime for the free boundary of a density field."""

    def rows():
        for t, y, yp in zip(field.y.times, field.y.values, field.yprime.values):
            yield [_fmt(t), _fmt(y), _fmt(yp)]

    _write_rows(path, "t,y,yprime", rows())


def write_limit_barrier(path, barrier) -> None:
    """Header t,y,v for a Monte Carlo limit barrier."""

    def rows():
        for t, y, v in zip(barrier.y.times, barrier.y.values, barrier.v.values):
            yield [_fmt(t), _fmt(y), _fmt(v)]

    _write_rows(path, "t,y,v", rows())


def write_hydro_table(path, rows) -> None:
    _write_rows(
        path,
        "n,mean_w1,sd_w1,mean_sup_gap,sd_sup_gap",
        (
            [str(r.n), _fmt(r.mean_w1), _fmt(r.sd_w1), _fmt(r.mean_sup_gap), _fmt(r.sd_sup_gap)]
            for r in rows
        ),
    )


def write_chaos_table(path, rows) -> None:
    _write_rows(
        path,
        "n,corr,ci_halfwidth",
        ([str(r.n), _fmt(r.corr), _fmt(r.ci_halfwidth)] for r in rows),
    )


def write_rate_table(path, rows) -> None:
    _write_rows(
        path,
        "level,eps,gap,bound",
        ([str(r.level), _fmt(r.eps), _fmt(r.gap), _fmt(r.bound)] for r in rows),
    )


# ---------------------------------------------------------------------------
# Config files: one `key = value` per line, `#` starts a comment
# ---------------------------------------------------------------------------

CONFIG_KEYS = frozenset(
    {
        "n", "T", "dt", "K", "v0", "init.kind", "init.params",
        "M", "dt_pde", "dx", "x_max", "tol", "max_iter",
        "n_list", "reps", "pair",
    }
)


def parse_config(text: str) -> dict[str, str]:
    """Parse config text into a raw string map; validates key names only."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in CONFIG_KEYS:
            raise InvalidInputError(f"config line {lineno}: unknown key {key!r}")
        if key in out:
            raise InvalidInputError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    if not os.path.isfile(path):
        raise InvalidInputError(f"config file not found: {path}")
    with open(path) as fh:
        return parse_config(fh.read())


def _convert(cfg: dict[str, str], key: str, conv, default=None):
    if key not in cfg:
        if default is not None:
            return default
        raise InvalidInputError(f"missing config key {key!r}")
    try:
        return conv(cfg[key])
    except InvalidInputError:
        raise
    except ValueError as exc:
        raise InvalidInputError(f"config key {key!r}: {exc}") from exc


def config_float(cfg, key, default=None) -> float:
    return _convert(cfg, key, float, default)


def config_int(cfg, key, default=None) -> int:
    return _convert(cfg, key, int, default)


def config_int_list(cfg, key, default=None) -> list[int]:
    return _convert(cfg, key, lambda s: [int(p) for p in s.split(",")], default)


def init_from_dict(cfg: dict[str, str]) -> InitialDistribution:
    kind = cfg.get("init.kind")
    if kind is None:
        raise InvalidInputError("missing config key 'init.kind'")
    params = cfg.get("init.params", "")
    if kind == "sample_file":
        if not params:
            raise InvalidInputError("init.kind sample_file needs init.params = <path>")
        return InitialDistribution.from_file(params)
    try:
        values = [float(p) for p in params.split(",")] if params else []
    except ValueError as exc:
        raise InvalidInputError(f"init.params: {exc}") from exc
    want = {"delta": 1, "uniform": 2, "exponential": 1, "half_normal": 1}
    if kind not in want:
        raise InvalidInputError(f"unknown init.kind {kind!r}")
    if len(values) != want[kind]:
        raise InvalidInputError(
            f"init.kind {kind} needs {want[kind]} value(s) in init.params, got {len(values)}"
        )
    if kind == "delta":
        return InitialDistribution.delta(values[0])
    if kind == "uniform":
        return InitialDistribution.uniform(values[0], values[1])
    if kind == "exponential":
        return InitialDistribution.exponential(values[0])
    return InitialDistribution.half_normal(values[0])


def sim_config_from_dict(cfg: dict[str, str], seed) -> SimConfig:
    """Build a SimConfig from parsed config text plus an external seed."""
    return SimConfig(
        n=config_int(cfg, "n"),
        T=config_float(cfg, "T"),
        dt=config_float(cfg, "dt"),
        K=config_float(cfg, "K"),
        v0=config_float(cfg, "v0"),
        init=init_from_dict(cfg),
        seed=seed,
    )
