"""Incompressible smoke solver on a MAC grid.

Scheme per step: add sources, apply forces (buoyancy + external), project,
advect velocity (MacCormack), project again, advect density. Domain walls
are closed free-slip on the left/right/bottom; the top is an open
zero-gradient outflow by default so buoyant smoke can leave.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .fields import (
    FieldValidationError,
    GridSpec,
    MaskField,
    ScalarField,
    VelocityField,
    _bilinear,
    clamp_to_domain,
    sample_velocity,
)


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.1
    alpha: float = 0.025  # buoyancy coefficient
    z_dir: tuple[float, float] = (0.0, 1.0)
    rho: float = 1.0
    nu: float = 0.0
    pressure_tol: float = 1e-5
    pressure_max_iter: int = 2000
    source_rate: float = 1.0  # density emitted per second per source cell
    open_top: bool = True

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        if self.alpha < 0 or self.nu < 0:
            raise ValueError("alpha and nu must be non-negative")
        if not (0 < self.pressure_tol < 1):
            raise ValueError("pressure_tol must be in (0, 1)")
        if not (self.rho > 0):
            raise ValueError("rho must be positive")


@dataclass
class SimState:
    vel: VelocityField
    density: ScalarField
    obstacles: MaskField
    sources: MaskField
    time: float = 0.0
    frame: int = 0
    pressure: ScalarField | None = None  # kept as warm start for the solve
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def new(cls, spec: GridSpec) -> "SimState":
        return cls(
            vel=VelocityField.zeros(spec),
            density=ScalarField.zeros(spec),
            obstacles=MaskField.empty(spec),
            sources=MaskField.empty(spec),
        )

    @property
    def spec(self) -> GridSpec:
        return self.vel.spec

    def kinetic_energy(self) -> float:
        return 0.5 * float((self.vel.u**2).sum() + (self.vel.v**2).sum())


@dataclass(frozen=True)
class ProjectionReport:
    iterations: int
    max_divergence: float
    target: float
    converged: bool


def _lattice_positions(spec: GridSpec, kind: str) -> np.ndarray:
    dx = spec.dx
    if kind == "cell":
        xs = (np.arange(spec.nx) + 0.5) * dx
        ys = (np.arange(spec.ny) + 0.5) * dx
    elif kind == "u":
        xs = np.arange(spec.nx + 1) * dx
        ys = (np.arange(spec.ny) + 0.5) * dx
    elif kind == "v":
        xs = (np.arange(spec.nx) + 0.5) * dx
        ys = np.arange(spec.ny + 1) * dx
    else:
        raise ValueError(kind)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1)


def _lattice_lookup(values, spec, kind, pos, with_extrema=False):
    """Convex bilinear lookup of one lattice at world positions."""
    p = clamp_to_domain(spec, pos)
    dx = spec.dx
    if kind == "cell":
        gx, gy = p[..., 0] / dx - 0.5, p[..., 1] / dx - 0.5
    elif kind == "u":
        gx, gy = p[..., 0] / dx, p[..., 1] / dx - 0.5
    else:
        gx, gy = p[..., 0] / dx - 0.5, p[..., 1] / dx
    return _bilinear(values, gx, gy, convex=True, with_extrema=with_extrema)


def _backtrace(vel: VelocityField, pos: np.ndarray, dt: float) -> np.ndarray:
    """RK2 midpoint backtrace of sample positions through vel."""
    k1 = sample_velocity(vel, pos)
    mid = clamp_to_domain(vel.spec, pos - 0.5 * dt * k1)
    k2 = sample_velocity(vel, mid)
    return clamp_to_domain(vel.spec, pos - dt * k2)


def _advect_lattice(values, spec, kind, vel, dt, with_extrema=False):
    pos = _backtrace(vel, _lattice_positions(spec, kind), dt)
    return _lattice_lookup(values, spec, kind, pos, with_extrema=with_extrema)


def advect_semi_lagrangian(fld, vel: VelocityField, dt: float):
    """Semi-Lagrangian advection; output samples stay within input extrema."""
    if dt == 0:
        raise ValueError("dt must be non-zero")
    spec = vel.spec
    if isinstance(fld, ScalarField):
        out = ScalarField(spec, _advect_lattice(fld.values, spec, "cell", vel, dt))
        assert out.values.max() <= fld.values.max() + 1e-12
        assert out.values.min() >= fld.values.min() - 1e-12
        return out
    u = _advect_lattice(fld.u, spec, "u", vel, dt)
    v = _advect_lattice(fld.v, spec, "v", vel, dt)
    return VelocityField(spec, u, v)


def _maccormack_lattice(values, spec, kind, vel, dt):
    pos = _backtrace(vel, _lattice_positions(spec, kind), dt)
    phi1, lo, hi = _lattice_lookup(values, spec, kind, pos, with_extrema=True)
    phi2 = _advect_lattice(phi1, spec, kind, vel, -dt)
    # forward-backward error correction, clamped to the pass-1 stencil extrema
    out = phi1 + 0.5 * (values - phi2)
    return np.clip(out, lo, hi)


def advect_maccormack(fld, vel: VelocityField, dt: float):
    """MacCormack advection: semi-Lagrangian with first-order error correction,
    per-sample clamped to the backtrace stencil extrema for stability."""
    if dt == 0:
        raise ValueError("dt must be non-zero")
    spec = vel.spec
    if isinstance(fld, ScalarField):
        return ScalarField(spec, _maccormack_lattice(fld.values, spec, "cell", vel, dt))
    u = _maccormack_lattice(fld.u, spec, "u", vel, dt)
    v = _maccormack_lattice(fld.v, spec, "v", vel, dt)
    return VelocityField(spec, u, v)


def _force_to_faces(spec: GridSpec, force: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distribute a per-cell force (ny, nx, 2) onto faces (edge faces copy the
    nearest cell)."""
    fx, fy = force[..., 0], force[..., 1]
    fu = np.empty((spec.ny, spec.nx + 1))
    fu[:, 1:-1] = 0.5 * (fx[:, :-1] + fx[:, 1:])
    fu[:, 0] = fx[:, 0]
    fu[:, -1] = fx[:, -1]
    fv = np.empty((spec.ny + 1, spec.nx))
    fv[1:-1, :] = 0.5 * (fy[:-1, :] + fy[1:, :])
    fv[0, :] = fy[0, :]
    fv[-1, :] = fy[-1, :]
    return fu, fv


def apply_forces(state: SimState, params: SimParams, extra_force: np.ndarray | None = None) -> SimState:
    """vel += dt * (alpha * z * local density + extra_force).

    Buoyancy is weighted by the local smoke density so empty cells do not
    rise; extra_force is a per-cell (ny, nx, 2) field.
    """
    spec = state.spec
    dt = params.dt
    dens = state.density.values
    zx, zy = params.z_dir
    if params.alpha != 0.0:
        if zy != 0.0:
            dv = np.empty((spec.ny + 1, spec.nx))
            dv[1:-1, :] = 0.5 * (dens[:-1, :] + dens[1:, :])
            dv[0, :] = dens[0, :]
            dv[-1, :] = dens[-1, :]
            state.vel.v += dt * params.alpha * zy * dv
        if zx != 0.0:
            du = np.empty((spec.ny, spec.nx + 1))
            du[:, 1:-1] = 0.5 * (dens[:, :-1] + dens[:, 1:])
            du[:, 0] = dens[:, 0]
            du[:, -1] = dens[:, -1]
            state.vel.u += dt * params.alpha * zx * du
    if extra_force is not None:
        extra_force = np.asarray(extra_force, dtype=np.float64)
        if extra_force.shape != (spec.ny, spec.nx, 2):
            raise FieldValidationError(
                f"extra_force shape {extra_force.shape} != {(spec.ny, spec.nx, 2)}"
            )
        fu, fv = _force_to_faces(spec, extra_force)
        state.vel.u += dt * fu
        state.vel.v += dt * fv
    if params.nu > 0.0:
        _diffuse(state.vel, params.nu * dt)
    return state


def _diffuse(vel: VelocityField, k: float) -> None:
    """One explicit diffusion step with zero-gradient edges; k = nu*dt/dx^2 capped
    at the 0.25 explicit stability limit."""
    k = min(k / vel.spec.dx**2, 0.25)
    for arr in (vel.u, vel.v):
        p = np.pad(arr, 1, mode="edge")
        arr += k * (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4 * arr)


def enforce_boundaries(state: SimState, params: SimParams) -> None:
    """Zero normal velocity on walls and every obstacle face.

    An open top is a pressure outlet: its faces stay free and the projection
    (p=0 ghost above the top row) sets the outflow, so nothing is forced here.
    """
    u, v = state.vel.u, state.vel.v
    solid = state.obstacles.cells
    u[:, 0] = 0.0
    u[:, -1] = 0.0
    v[0, :] = 0.0
    if not params.open_top:
        v[-1, :] = 0.0
    u[:, 1:-1][solid[:, :-1] | solid[:, 1:]] = 0.0
    v[1:-1, :][solid[:-1, :] | solid[1:, :]] = 0.0
    v[-1, solid[-1, :]] = 0.0
    v[0, solid[0, :]] = 0.0
    u[:, 0][solid[:, 0]] = 0.0
    u[:, -1][solid[:, -1]] = 0.0


def divergence(state: SimState) -> np.ndarray:
    u, v = state.vel.u, state.vel.v
    return (u[:, 1:] - u[:, :-1] + v[1:, :] - v[:-1, :]) / state.spec.dx


def project(state: SimState, params: SimParams) -> ProjectionReport:
    """Pressure projection: make the velocity discretely divergence-free on
    fluid cells and zero the normal component on obstacle faces.

    Solves the variable-coefficient Poisson system with conjugate gradients
    (warm-started from the previous pressure). Walls are Neumann, the open
    top is Dirichlet p=0. Non-convergence emits a warning and returns the
    achieved residual.
    """
    spec = state.spec
    solid = state.obstacles.cells
    fluid = ~solid
    if not fluid.any():
        raise FieldValidationError("projection needs at least one fluid cell")
    enforce_boundaries(state, params)
    u, v = state.vel.u, state.vel.v
    dx = spec.dx
    dt = params.dt

    speed = max(1.0, state.vel.max_speed())
    target_div = params.pressure_tol * speed
    scale = params.rho * dx * dx / dt  # residual -> divergence conversion
    target_res = target_div * scale

    div = divergence(state)
    b = -scale * div
    b[solid] = 0.0

    fx = fluid[:, :-1] & fluid[:, 1:]  # interior vertical faces
    fy = fluid[:-1, :] & fluid[1:, :]  # interior horizontal faces
    diag = np.zeros(spec.shape)
    diag[:, :-1] += fx
    diag[:, 1:] += fx
    diag[:-1, :] += fy
    diag[1:, :] += fy
    if params.open_top:
        diag[-1, :] += fluid[-1, :]

    def matvec(p):
        ap = diag * p
        ap[:, :-1] -= fx * p[:, 1:]
        ap[:, 1:] -= fx * p[:, :-1]
        ap[:-1, :] -= fy * p[1:, :]
        ap[1:, :] -= fy * p[:-1, :]
        return ap

    if state.pressure is not None and state.pressure.spec == spec:
        p = state.pressure.values.copy()
        p[solid] = 0.0
    else:
        p = np.zeros(spec.shape)

    r = b - matvec(p)
    iterations = 0
    res = float(np.abs(r).max())
    if res > target_res:
        d = r.copy()
        rs = float((r * r).sum())
        for iterations in range(1, params.pressure_max_iter + 1):
            ad = matvec(d)
            dad = float((d * ad).sum())
            if dad <= 0.0:
                break  # singular subspace (sealed region); accept current iterate
            a = rs / dad
            p += a * d
            r -= a * ad
            res = float(np.abs(r).max())
            if res <= target_res:
                break
            rs_new = float((r * r).sum())
            d = r + (rs_new / rs) * d
            rs = rs_new

    grad = dt / (params.rho * dx)
    u[:, 1:-1] -= grad * fx * (p[:, 1:] - p[:, :-1])
    v[1:-1, :] -= grad * fy * (p[1:, :] - p[:-1, :])
    if params.open_top:
        v[-1, fluid[-1, :]] += grad * p[-1, fluid[-1, :]]
    enforce_boundaries(state, params)

    state.pressure = ScalarField(spec, p)
    achieved = float(np.abs(divergence(state)[fluid]).max())
    converged = achieved <= target_div or res <= target_res
    if not converged:
        warnings.warn(
            f"pressure solve hit max_iter={params.pressure_max_iter} "
            f"with divergence {achieved:.3e} (target {target_div:.3e})",
            RuntimeWarning,
            stacklevel=2,
        )
    return ProjectionReport(iterations, achieved, target_div, converged)


def step(state: SimState, params: SimParams, extra_force: np.ndarray | None = None) -> SimState:
    """Advance one timestep; mutates and returns the state."""
    if state.sources.cells.any():
        state.density.values[state.sources.cells] += params.source_rate * params.dt
    apply_forces(state, params, extra_force)
    rep1 = project(state, params)
    carrier = state.vel.copy()
    state.vel = advect_maccormack(carrier, carrier, params.dt)
    enforce_boundaries(state, params)
    rep2 = project(state, params)
    state.density = advect_maccormack(state.density, state.vel, params.dt)
    np.maximum(state.density.values, 0.0, out=state.density.values)
    state.density.values[state.obstacles.cells] = 0.0
    state.time += params.dt
    state.frame += 1
    state.diagnostics["projections"] = (rep1, rep2)
    return state
