"""One-sided reflection of sampled paths.

`reflect_path` applies the classical one-sided reflection at zero: given a
driver f it returns x = f + m with

    m(t) = max(0, sup_{t0 <= s <= t} -f(s)),

so x >= 0, m is nondecreasing, and m grows only while x sits at zero.  The
supremum includes the left endpoint, so a driver that starts negative is
lifted immediately: m(t0) = max(-f(t0), 0).

`reflect_against_barrier` reflects f above an arbitrary barrier path y on
the same grid by applying the same construction to f - y.

On a uniform grid with piecewise-linear paths both maps are exact: the
supremum of a piecewise-linear function over a grid-aligned window is
attained at a grid point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .paths import SampledPath, require_same_grid

# Slack used when checking "m flat off contact": x is deemed in contact when
# within flat_tol of the barrier.
FLAT_TOL = 1e-9


@dataclass(frozen=True)
class ReflectionResult:
    """Reflected path x and its regulator m (same grid as the driver)."""

    x: SampledPath
    m: SampledPath


def regulator_values(deficit: np.ndarray) -> np.ndarray:
    """Running max of deficit clipped below at 0, along the last axis.

    `deficit` holds barrier-minus-driver samples; the result is the
    regulator evaluated at every grid point.
    """
    return np.maximum.accumulate(np.maximum(deficit, 0.0), axis=-1)


def reflect_path(f: SampledPath) -> ReflectionResult:
    """Reflect f at the fixed barrier 0.

    Returns
    -------
    ReflectionResult
        x = f + m with x >= 0; m nondecreasing, m(t0) = max(-f(t0), 0).
    """
    m = regulator_values(-f.values)
    x = f.values + m
    return ReflectionResult(x=f.with_values(x), m=f.with_values(m))


def reflect_against_barrier(f: SampledPath, y: SampledPath) -> ReflectionResult:
    """Reflect f above the barrier path y (same grid required).

    Returns x = f + m >= y where m is the regulator of f - y.
    """
    require_same_grid(f, y)
    m = regulator_values(y.values - f.values)
    x = f.values + m
    return ReflectionResult(x=f.with_values(x), m=f.with_values(m))
