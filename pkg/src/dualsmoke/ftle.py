"""Flow maps and finite-time Lyapunov exponent fields from a stored velocity
sequence.

Particles are traced with RK4 through velocity that is linear in time between
stored frames and bilinear in space; positions clamp to the domain after
every substep. The exponent at a grid point is ln(sqrt(lambda_max)) / |T|
where lambda_max is the largest eigenvalue of the Cauchy-Green tensor of the
central-difference flow-map Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import (
    GridSpec,
    Jacobian2x2,
    ScalarField,
    VelocityField,
    clamp_to_domain,
    sample_staggered,
    sample_velocity,
)

LAMBDA_FLOOR = 1e-12  # keeps the log finite in stagnant regions


class FtleRangeError(ValueError):
    """Requested integration interval leaves the stored sequence."""


@dataclass
class VelocitySequence:
    """Ordered velocity frames spaced dt_frame apart, sharing one grid."""

    frames: list[VelocityField]
    dt_frame: float = 0.1

    def __post_init__(self):
        if len(self.frames) < 2:
            raise ValueError("a velocity sequence needs at least 2 frames")
        if not (self.dt_frame > 0):
            raise ValueError("dt_frame must be positive")
        spec = self.frames[0].spec
        if any(f.spec != spec for f in self.frames):
            raise ValueError("all frames must share one grid")

    @property
    def spec(self) -> GridSpec:
        return self.frames[0].spec

    @property
    def span(self) -> float:
        return (len(self.frames) - 1) * self.dt_frame

    def velocity_at(self, t: float, pos: np.ndarray) -> np.ndarray:
        """Sample velocity at time t (linear between frames) and positions (..., 2)."""
        s = t / self.dt_frame
        k = int(np.clip(math.floor(s), 0, len(self.frames) - 2))
        w = s - k
        w = min(max(w, 0.0), 1.0)
        a = self.frames[k]
        if w == 0.0 or a is self.frames[k + 1]:
            return sample_velocity(a, pos)
        # blending the (small) staggered arrays once is equivalent to blending
        # the two samples and costs far less for large position batches
        b = self.frames[k + 1]
        u = (1.0 - w) * a.u + w * b.u
        v = (1.0 - w) * a.v + w * b.v
        return sample_staggered(a.spec, u, v, pos)


@dataclass(frozen=True)
class FtleParams:
    T: float = -2.5  # signed interval; negative traces backward
    tau: float = 0.1  # finite-difference offset in grid units
    substep_dt: float | None = None  # defaults to the frame interval

    def __post_init__(self):
        if self.T == 0:
            raise ValueError("integration interval must be non-zero")
        if not (0 < self.tau < 1):
            raise ValueError("tau must lie in (0, 1) grid units")
        if self.substep_dt is not None and not (self.substep_dt > 0):
            raise ValueError("substep_dt must be positive")


def _check_interval(seq: VelocitySequence, t0: float, T: float) -> None:
    lo, hi = min(t0, t0 + T), max(t0, t0 + T)
    eps = 1e-9 * seq.dt_frame
    if lo < -eps or hi > seq.span + eps:
        raise FtleRangeError(
            f"interval [{lo:.4g}, {hi:.4g}] outside stored span [0, {seq.span:.4g}]"
        )


def trace_particles(
    seq: VelocitySequence,
    start: np.ndarray,
    t0: float,
    T: float,
    substep_dt: float | None = None,
) -> np.ndarray:
    """RK4-trace positions (..., 2) from t0 over a signed interval T."""
    _check_interval(seq, t0, T)
    h_max = substep_dt if substep_dt is not None else seq.dt_frame
    n = max(1, math.ceil(abs(T) / h_max - 1e-12))
    h = T / n
    spec = seq.spec
    pos = clamp_to_domain(spec, np.asarray(start, dtype=np.float64))
    t = t0
    for _ in range(n):
        k1 = seq.velocity_at(t, pos)
        k2 = seq.velocity_at(t + 0.5 * h, pos + (0.5 * h) * k1)
        k3 = seq.velocity_at(t + 0.5 * h, pos + (0.5 * h) * k2)
        k4 = seq.velocity_at(t + h, pos + h * k3)
        pos = clamp_to_domain(spec, pos + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
        t += h
    return pos


def trace_particle(
    seq: VelocitySequence, start_pos, t0: float, T: float, substep_dt: float | None = None
) -> np.ndarray:
    """Single-particle convenience wrapper around trace_particles."""
    return trace_particles(seq, np.asarray(start_pos, dtype=np.float64), t0, T, substep_dt)


def _offset_starts(spec: GridSpec, points: np.ndarray, tau: float) -> np.ndarray:
    """Stack the 4 offset particles (left, right, down, up) for each point."""
    d = tau * spec.dx
    starts = np.empty((4,) + points.shape)
    starts[0] = points + np.array([-d, 0.0])
    starts[1] = points + np.array([d, 0.0])
    starts[2] = points + np.array([0.0, -d])
    starts[3] = points + np.array([0.0, d])
    return starts


def _jacobians(ends: np.ndarray, tau: float, dx: float) -> np.ndarray:
    """Central-difference Jacobians (..., 2, 2) from traced offset particles
    (4, ..., 2) ordered left, right, down, up."""
    inv = 1.0 / (2.0 * tau * dx)
    left, right, down, up = ends
    j = np.empty(left.shape[:-1] + (2, 2))
    j[..., 0, 0] = (right[..., 0] - left[..., 0]) * inv
    j[..., 0, 1] = (up[..., 0] - down[..., 0]) * inv
    j[..., 1, 0] = (right[..., 1] - left[..., 1]) * inv
    j[..., 1, 1] = (up[..., 1] - down[..., 1]) * inv
    return j


def flow_map_jacobian(
    seq: VelocitySequence,
    grid_point,
    t0: float,
    T: float,
    tau: float = 0.1,
    substep_dt: float | None = None,
) -> Jacobian2x2:
    """Flow-map Jacobian at one world-space point via 4 offset particles."""
    point = np.asarray(grid_point, dtype=np.float64)
    starts = _offset_starts(seq.spec, point, tau)
    ends = trace_particles(seq, starts, t0, T, substep_dt)
    j = _jacobians(ends, tau, seq.spec.dx)
    return Jacobian2x2(j[0, 0], j[0, 1], j[1, 0], j[1, 1])


def _sigma_from_jacobians(j: np.ndarray, T: float) -> np.ndarray:
    """FTLE values from Jacobians (..., 2, 2): largest Cauchy-Green eigenvalue
    by the closed-form symmetric 2x2 formula."""
    d11 = j[..., 0, 0] ** 2 + j[..., 1, 0] ** 2
    d22 = j[..., 0, 1] ** 2 + j[..., 1, 1] ** 2
    d12 = j[..., 0, 0] * j[..., 0, 1] + j[..., 1, 0] * j[..., 1, 1]
    half_tr = 0.5 * (d11 + d22)
    disc = np.sqrt((0.5 * (d11 - d22)) ** 2 + d12**2)
    lam = np.maximum(half_tr + disc, LAMBDA_FLOOR)
    return np.log(lam) / (2.0 * abs(T))


def ftle_field(seq: VelocitySequence, t0: float, params: FtleParams) -> ScalarField:
    """FTLE over every cell center, traced from t0 over params.T."""
    spec = seq.spec
    xs, ys = spec.cell_centers()
    points = np.stack([xs, ys], axis=-1)
    starts = _offset_starts(spec, points, params.tau)
    ends = trace_particles(seq, starts, t0, params.T, params.substep_dt)
    j = _jacobians(ends, params.tau, spec.dx)
    return ScalarField(spec, _sigma_from_jacobians(j, params.T))


def backward_ftle(seq: VelocitySequence, params: FtleParams | None = None) -> ScalarField:
    """Backward FTLE anchored at the last stored frame (convergence regions)."""
    if params is None:
        params = FtleParams()
    T = -abs(params.T)
    p = FtleParams(T=T, tau=params.tau, substep_dt=params.substep_dt)
    return ftle_field(seq, seq.span, p)
