"""Radially symmetric finite-volume solver for inviscid compressible flow.

The solver exists to cross-validate the exact-solution machinery, so it
stays deliberately simple: first-order Godunov-type fluxes (Rusanov or
HLL) on a uniform cell-centered grid, with the radial geometry carried
by exact interface areas A = r^(n-1) and cell volumes V = (r+^n - r-^n)/n
per unit solid angle. The momentum source uses the discrete well-balanced
grouping p_i (A+ - A-) / V_i, which is the (n-1) p / r_src form with
r_src = (n-1)(r+^n - r-^n) / (n (r+^(n-1) - r-^(n-1))); grouped this way
a uniform state is preserved bitwise.

Interior updates telescope, so total mass changes only by the outer
boundary flux; `run` tracks that flux so conservation can be audited to
roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    FlowSnapshot,
    GasParameters,
    InvalidInputError,
    ParameterError,
    RadialGrid,
    _as_readonly,
    sphere_area,
)

__all__ = [
    "PositivityError",
    "ConservedState",
    "SolverConfig",
    "RunResult",
    "ResidualReport",
    "cell_centered_grid",
    "state_from_snapshot",
    "state_to_snapshot",
    "step",
    "run",
    "pde_residual",
]

FLUX_CHOICES = ("rusanov", "hll")
BOUNDARY_CHOICE = "reflective-origin+outflow-outer"


class PositivityError(RuntimeError):
    """Density or internal energy lost positivity; carries the cell index."""

    def __init__(self, message: str, cell: int):
        super().__init__(message)
        self.cell = cell


def _check_positive(rho: np.ndarray, e_int: np.ndarray, t: float) -> None:
    bad = np.flatnonzero(~(rho > 0.0))
    if bad.size:
        raise PositivityError(f"density nonpositive in cell {bad[0]} at t={t}", int(bad[0]))
    bad = np.flatnonzero(~(e_int > 0.0))
    if bad.size:
        raise PositivityError(f"internal energy nonpositive in cell {bad[0]} at t={t}", int(bad[0]))


def cell_centered_grid(r_max: float, cells: int) -> RadialGrid:
    """Uniform finite-volume grid: centers (i + 1/2) h, interfaces at i h."""
    if cells < 2:
        raise ParameterError(f"need at least 2 cells, got {cells}")
    h = r_max / cells
    return RadialGrid((np.arange(cells) + 0.5) * h, r_max=r_max)


def _require_cell_centered(grid: RadialGrid) -> float:
    r = grid.r
    h = r[1] - r[0]
    if np.max(np.abs(np.diff(r) - h)) > 1e-9 * h or abs(r[0] - 0.5 * h) > 1e-9 * h:
        raise InvalidInputError(
            "solver needs a uniform cell-centered grid; build one with cell_centered_grid"
        )
    return h


@dataclass(frozen=True)
class ConservedState:
    """Cell averages of (rho, rho v, E) with E = rho v^2/2 + p/(gamma-1)."""

    grid: RadialGrid
    rho: np.ndarray
    mom: np.ndarray
    energy: np.ndarray
    gamma: float
    t: float = 0.0

    def __post_init__(self):
        n = len(self.grid)
        for name in ("rho", "mom", "energy"):
            arr = _as_readonly(np.asarray(getattr(self, name), dtype=float))
            if arr.shape != (n,):
                raise InvalidInputError(f"{name} must match the grid, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        _check_positive(self.rho, self.e_internal_density(), self.t)

    def velocity(self) -> np.ndarray:
        return self.mom / self.rho

    def e_internal_density(self) -> np.ndarray:
        return self.energy - 0.5 * self.mom**2 / self.rho

    def pressure(self) -> np.ndarray:
        return (self.gamma - 1.0) * self.e_internal_density()


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.45
    flux: str = "rusanov"
    boundary: str = BOUNDARY_CHOICE

    def __post_init__(self):
        if not 0.0 < self.cfl < 1.0:
            raise ParameterError(f"cfl must be in (0, 1), got {self.cfl}")
        if self.flux not in FLUX_CHOICES:
            raise ParameterError(f"flux must be one of {FLUX_CHOICES}, got {self.flux!r}")
        if self.boundary != BOUNDARY_CHOICE:
            raise ParameterError(f"only {BOUNDARY_CHOICE!r} boundaries are supported")


def state_from_snapshot(snapshot: FlowSnapshot, params: GasParameters) -> ConservedState:
    _require_cell_centered(snapshot.grid)
    energy = 0.5 * snapshot.rho * snapshot.v**2 + snapshot.p / (params.gamma - 1.0)
    return ConservedState(
        grid=snapshot.grid,
        rho=snapshot.rho,
        mom=snapshot.rho * snapshot.v,
        energy=energy,
        gamma=params.gamma,
        t=snapshot.t,
    )


def state_to_snapshot(state: ConservedState) -> FlowSnapshot:
    return FlowSnapshot(state.grid, state.rho, state.velocity(), state.pressure(), t=state.t)


def _geometry(grid: RadialGrid, n: int):
    """Interface areas and cell volumes per unit solid angle."""
    h = _require_cell_centered(grid)
    edges = np.arange(len(grid) + 1) * h
    areas = edges ** (n - 1)
    volumes = (edges[1:] ** n - edges[:-1] ** n) / n
    return h, edges, areas, volumes


def _physical_flux(rho, v, p, energy):
    return rho * v, rho * v**2 + p, (energy + p) * v


def _interface_flux(config, gamma, rhoL, vL, pL, eL, rhoR, vR, pR, eR):
    cL = np.sqrt(gamma * pL / rhoL)
    cR = np.sqrt(gamma * pR / rhoR)
    fL = _physical_flux(rhoL, vL, pL, eL)
    fR = _physical_flux(rhoR, vR, pR, eR)
    uL = (rhoL, rhoL * vL, eL)
    uR = (rhoR, rhoR * vR, eR)
    if config.flux == "rusanov":
        s = np.maximum(np.abs(vL) + cL, np.abs(vR) + cR)
        return tuple(0.5 * (a + b) - 0.5 * s * (ub - ua) for a, b, ua, ub in zip(fL, fR, uL, uR))
    # HLL with simple two-wave speed estimates
    sL = np.minimum(vL - cL, vR - cR)
    sR = np.maximum(vL + cL, vR + cR)
    width = sR - sL
    out = []
    for a, b, ua, ub in zip(fL, fR, uL, uR):
        middle = (sR * a - sL * b + sL * sR * (ub - ua)) / width
        out.append(np.where(sL >= 0.0, a, np.where(sR <= 0.0, b, middle)))
    return tuple(out)


def _cfl_dt(state: ConservedState, config: SolverConfig, h: float) -> float:
    speed = np.abs(state.velocity()) + np.sqrt(state.gamma * state.pressure() / state.rho)
    return config.cfl * h / float(np.max(speed))


def step(
    state: ConservedState,
    config: SolverConfig,
    params: GasParameters,
    *,
    dt_max: Optional[float] = None,
) -> ConservedState:
    """One explicit finite-volume update with CFL-limited dt.

    Ghost cells: mirrored state with antisymmetric velocity at the origin
    (the r = 0 interface carries zero area anyway), zeroth-order
    extrapolation at the outer edge.
    """
    if abs(state.gamma - params.gamma) > 1e-12:
        raise ParameterError("state and params disagree on gamma")
    h, _, areas, volumes = _geometry(state.grid, params.n)
    dt = _cfl_dt(state, config, h)
    if dt_max is not None:
        dt = min(dt, dt_max)

    rho, v, p, en = state.rho, state.velocity(), state.pressure(), state.energy
    ext = lambda a, first, last: np.concatenate([[first], a, [last]])
    rho_e = ext(rho, rho[0], rho[-1])
    v_e = ext(v, -v[0], v[-1])
    p_e = ext(p, p[0], p[-1])
    en_e = ext(en, en[0], en[-1])

    f_mass, f_mom, f_en = _interface_flux(
        config,
        state.gamma,
        rho_e[:-1], v_e[:-1], p_e[:-1], en_e[:-1],
        rho_e[1:], v_e[1:], p_e[1:], en_e[1:],
    )

    new_rho = rho - (dt / volumes) * (areas[1:] * f_mass[1:] - areas[:-1] * f_mass[:-1])
    # pressure part of the momentum divergence is not geometric; folding
    # p_i into each interface term makes uniform states cancel bitwise
    new_mom = state.mom - (dt / volumes) * (
        areas[1:] * (f_mom[1:] - p) - areas[:-1] * (f_mom[:-1] - p)
    )
    new_en = en - (dt / volumes) * (areas[1:] * f_en[1:] - areas[:-1] * f_en[:-1])

    return ConservedState(
        grid=state.grid, rho=new_rho, mom=new_mom, energy=new_en, gamma=state.gamma, t=state.t + dt
    )


@dataclass
class RunResult:
    """Snapshot series plus the conservation audit trail.

    log holds per-output-time columns; mass_out is the cumulative mass
    carried through the outer boundary (same normalization as log mass).
    """

    snapshots: list
    log: dict
    final_state: ConservedState


def _cell_moments(state: ConservedState, params: GasParameters, volumes: np.ndarray) -> dict:
    omega = sphere_area(params.n)
    rho, mom, en = state.rho, state.mom, state.energy
    e_k = 0.5 * mom**2 / rho
    r = state.grid.r
    return {
        "mass": omega * float(np.sum(volumes * rho)),
        "e_kinetic": omega * float(np.sum(volumes * e_k)),
        "e_internal": omega * float(np.sum(volumes * (en - e_k))),
        "G": omega * float(np.sum(volumes * rho * 0.5 * r**2)),
    }


def run(
    initial: FlowSnapshot,
    t_end: float,
    config: SolverConfig,
    params: GasParameters,
    *,
    out_every: Optional[float] = None,
    max_steps: int = 2_000_000,
) -> RunResult:
    """March to t_end, emitting snapshots and a conservation log.

    Output falls at multiples of out_every plus t_end (just t_end when
    out_every is None); dt is clipped so outputs are hit exactly. The
    initial state is always emitted.
    """
    if t_end < initial.t:
        raise ParameterError(f"t_end={t_end} precedes the initial time {initial.t}")
    state = state_from_snapshot(initial, params)
    h, _, areas, volumes = _geometry(state.grid, params.n)
    omega = sphere_area(params.n)

    targets = [t_end]
    if out_every is not None:
        if out_every <= 0.0:
            raise ParameterError(f"out_every must be positive, got {out_every}")
        k = np.arange(1, int((t_end - initial.t) / out_every) + 1)
        targets = sorted(set(np.round(initial.t + k * out_every, 12)) | {t_end})

    snapshots = [state_to_snapshot(state)]
    log_rows = []
    mass_out = 0.0

    def emit(s):
        row = {"t": s.t, **_cell_moments(s, params, volumes), "mass_out": mass_out}
        log_rows.append(row)

    emit(state)
    steps = 0
    for target in targets:
        while state.t < target - 1e-13 * max(1.0, target):
            if steps >= max_steps:
                raise RuntimeError(f"step budget {max_steps} exhausted at t={state.t}")
            before = state
            state = step(state, config, params, dt_max=target - state.t)
            dt = state.t - before.t
            # outer-boundary mass flux, for the conservation audit
            rho_b, v_b = before.rho[-1], before.velocity()[-1]
            p_b, en_b = before.pressure()[-1], before.energy[-1]
            f_mass, _, _ = _interface_flux(
                config, state.gamma,
                np.array([rho_b]), np.array([v_b]), np.array([p_b]), np.array([en_b]),
                np.array([rho_b]), np.array([v_b]), np.array([p_b]), np.array([en_b]),
            )
            mass_out += omega * areas[-1] * float(f_mass[0]) * dt
            steps += 1
        snapshots.append(state_to_snapshot(state))
        emit(state)

    if t_end == initial.t:
        snapshots = snapshots[:1]
        log_rows = log_rows[:1]
    log = {key: np.array([row[key] for row in log_rows]) for key in log_rows[0]}
    return RunResult(snapshots=snapshots, log=log, final_state=state)


@dataclass(frozen=True)
class ResidualReport:
    """Max-norm interior residuals of the two transport identities."""

    continuity: float
    pressure: float
    continuity_profile: np.ndarray
    pressure_profile: np.ndarray
    h: float
    dt: float


def pde_residual(series, params: GasParameters) -> ResidualReport:
    """Centered-difference residuals of continuity and pressure transport.

    The series must share one uniform grid and a uniform output dt; the
    report takes max norms over interior nodes and interior time levels.
    Profiles are full grid length with zeros at the excluded boundary
    nodes, so spikes can be located.
    """
    if len(series) < 3:
        raise InvalidInputError(f"need at least 3 time levels, got {len(series)}")
    r = series[0].grid.r
    for s in series[1:]:
        if not np.array_equal(s.grid.r, r):
            raise InvalidInputError("all snapshots must share one grid")
    times = np.array([s.t for s in series])
    dts = np.diff(times)
    dt = dts[0]
    if dt <= 0 or np.max(np.abs(dts - dt)) > 1e-9 * dt:
        raise InvalidInputError("snapshot times must be uniformly spaced and increasing")
    h = r[1] - r[0]
    if np.max(np.abs(np.diff(r) - h)) > 1e-9 * h:
        raise InvalidInputError("pde_residual needs a uniform grid")

    rho = np.stack([s.rho for s in series])
    v = np.stack([s.v for s in series])
    p = np.stack([s.p for s in series])
    n = params.n
    inner = slice(1, -1)

    def ddr(f):
        return (f[:, 2:] - f[:, :-2]) / (2.0 * h)

    def ddt(f):
        return (f[2:, inner] - f[:-2, inner]) / (2.0 * dt)

    mid = slice(1, len(series) - 1)
    rv = rho * v
    cont = ddt(rho) + ddr(rv)[mid] + (n - 1) * rv[mid, inner] / r[inner]
    div_v = ddr(v)[mid] + (n - 1) * v[mid, inner] / r[inner]
    ptrans = ddt(p) + v[mid, inner] * ddr(p)[mid] + params.gamma * p[mid, inner] * div_v

    cont_profile = np.zeros_like(r)
    p_profile = np.zeros_like(r)
    cont_profile[inner] = np.max(np.abs(cont), axis=0)
    p_profile[inner] = np.max(np.abs(ptrans), axis=0)
    return ResidualReport(
        continuity=float(np.max(cont_profile)),
        pressure=float(np.max(p_profile)),
        continuity_profile=cont_profile,
        pressure_profile=p_profile,
        h=float(h),
        dt=float(dt),
    )
