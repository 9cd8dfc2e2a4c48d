"""Canonical scenarios used by the acceptance suite, tests, and examples."""

from __future__ import annotations

import math

import numpy as np

from .rng import Stream, stream_key
from .scenario import AtomlessMeasure, FieldSpec, Flavor, Piece, SemigroupSpec


def two_speed() -> SemigroupSpec:
    """Speed 1 below the origin, 2 above; smooth sailing everywhere."""
    fld = FieldSpec.piecewise_constant([0.0], [1.0, 2.0])
    return SemigroupSpec(fld, AtomlessMeasure.zero())


def cantor_scenario(measure_scale: float = 1.0) -> SemigroupSpec:
    """Quarter-power distance to the Cantor set, with the singular measure.

    The speed vanishes exactly on the set, which carries the waiting mass;
    outside [0, 1] the field ramps up like |x|^(1/4) capped at 1.
    """
    pieces = (
        Piece.power(0.0, 0.25, 1.0, -math.inf, 0.0, cap=1.0),
        Piece.cantor_distance(0.25, (0.0, 1.0), cap=1.0),
        Piece.power(1.0, 0.25, 1.0, 1.0, math.inf, cap=1.0),
    )
    fld = FieldSpec((0.0, 1.0), pieces, (0.0, 0.0), 1.0, Flavor.GENERAL)
    return SemigroupSpec(fld, AtomlessMeasure.cantor_measure(measure_scale, (0.0, 1.0)))


def stop_case(a: float = 1.0, b: float = 1.0) -> SemigroupSpec:
    """Both sides push into the origin's stop point."""
    fld = FieldSpec.piecewise_constant([0.0], [a, b], at_values=[0.0])
    return SemigroupSpec(fld, AtomlessMeasure.zero(), stops=(0.0,))


def branch_case(theta: float, a: float = -1.0, b: float = 1.0) -> SemigroupSpec:
    """Repelling origin; a start there goes up with probability theta."""
    fld = FieldSpec.piecewise_constant([0.0], [a, b])
    return SemigroupSpec(fld, AtomlessMeasure.zero(), branch_theta=((0.0, theta),))


def branch_case_phi(phi: int, a: float = -1.0, b: float = 1.0) -> SemigroupSpec:
    fld = FieldSpec.piecewise_constant([0.0], [a, b])
    return SemigroupSpec(fld, AtomlessMeasure.zero(), branch_phi=((0.0, phi),))


def wait_case(lam: float = 1.0, a: float = 1.0, b: float = 1.0) -> SemigroupSpec:
    """Trajectories reaching the origin hold for an exponential time."""
    fld = FieldSpec.piecewise_constant([0.0], [a, b], at_values=[0.0])
    return SemigroupSpec(fld, AtomlessMeasure.zero(), waits=((0.0, lam),))


def three_gap_wait(lam: float = 1.5) -> SemigroupSpec:
    """Monotone chain with three speed cells and one wait in the middle."""
    fld = FieldSpec.piecewise_constant([0.0, 1.0, 2.0], [1.0, 2.0, 1.0, 2.0],
                                       at_values=[2.0, 0.0, 2.0])
    return SemigroupSpec(fld, AtomlessMeasure.zero(), waits=((1.0, lam),))


def random_deterministic_scenario(seed: int, index: int) -> SemigroupSpec:
    """Seeded piecewise-constant scenario with stops and branch signs.

    Built to satisfy the structural conditions: point values follow the
    no-jam rule, inward-pointing jumps become stops, and outward-pointing
    jumps get a deterministic branch sign.
    """
    st = Stream(stream_key(seed, index))
    n_jumps = 2 + int(st.uniform() * 4)
    breaks = np.sort(np.array([st.uniform() * 8.0 - 4.0 for _ in range(n_jumps)]))
    while np.any(np.diff(breaks) < 0.3):
        breaks = np.sort(breaks + np.array([0.3 * k for k in range(n_jumps)]))
    values = []
    for _ in range(n_jumps + 1):
        u = st.uniform()
        if u < 0.15:
            values.append(0.0)
        else:
            mag = 0.2 + 1.8 * st.uniform()
            values.append(mag if st.uniform() < 0.6 else -mag)
    fld = FieldSpec.piecewise_constant(breaks, values)
    stops = []
    phis = []
    for k, x in enumerate(fld.breakpoints):
        fm, f0, fp = fld.limits(x)
        if fm > 0 > fp and st.uniform() < 0.7:
            stops.append(x)
        if fm < 0 < fp:
            phis.append((x, 1 if st.uniform() < 0.5 else -1))
    return SemigroupSpec(fld, AtomlessMeasure.zero(), stops=tuple(stops),
                         branch_phi=tuple(phis))
