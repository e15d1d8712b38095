"""Domain types and radial quadrature for radially symmetric gas flow.

Fields are sampled on a radial grid and every functional of the flow is
an integral over R^n reduced to one dimension,

    int_{R^n} f(|x|) dx = omega_{n-1} * int_0^rmax f(r) r^(n-1) dr,

with omega_{n-1} the surface area of the unit sphere. The quadrature is
composite trapezoid on the given (possibly nonuniform) grid, accumulated
with pairwise summation so the result does not depend on any data-parallel
execution schedule.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ParameterError",
    "InvalidInputError",
    "SingularIntegrandError",
    "DegenerateDataError",
    "TailTruncationWarning",
    "GasParameters",
    "RadialGrid",
    "FlowSnapshot",
    "ConservedReport",
    "sphere_area",
    "trapezoid_weights",
    "integrate_radial",
    "conserved",
    "save_snapshot",
    "load_snapshot",
]

TAIL_FRACTION = 1e-12


class ParameterError(ValueError):
    """A physical or numerical parameter violates its contract."""


class InvalidInputError(ValueError):
    """Sampled data is malformed (wrong length, non-finite, negative where forbidden)."""


class SingularIntegrandError(ValueError):
    """An integrand is singular (or non-finite) on the active grid."""


class DegenerateDataError(ValueError):
    """Data is degenerate for the requested operation (e.g. zero normalization)."""


class TailTruncationWarning(UserWarning):
    """The integrand has not decayed below TAIL_FRACTION of its peak at r_max."""


@dataclass(frozen=True)
class GasParameters:
    """Equation-regime constants: dimension, heat ratio, viscosities, conduction.

    mu = lambda_visc = k_heat = 0 selects the inviscid (gas dynamics) regime;
    the viscous constants only enter decay-class bookkeeping, never time
    integration.
    """

    n: int
    gamma: float
    R_gas: float = 1.0
    mu: float = 0.0
    lambda_visc: float = 0.0
    k_heat: float = 0.0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ParameterError(f"space dimension must be an integer >= 1, got {self.n!r}")
        if not self.gamma > 1.0:
            raise ParameterError(f"gamma must exceed 1, got {self.gamma}")
        if not self.R_gas > 0.0:
            raise ParameterError(f"gas constant must be positive, got {self.R_gas}")
        if self.mu < 0.0:
            raise ParameterError(f"shear viscosity must be nonnegative, got {self.mu}")
        if self.lambda_visc + (2.0 / self.n) * self.mu < 0.0:
            raise ParameterError(
                "second viscosity violates lambda + (2/n) mu >= 0: "
                f"lambda={self.lambda_visc}, mu={self.mu}, n={self.n}"
            )
        if self.k_heat < 0.0:
            raise ParameterError(f"heat conduction must be nonnegative, got {self.k_heat}")

    @property
    def is_inviscid(self) -> bool:
        return self.mu == 0.0 and self.lambda_visc == 0.0 and self.k_heat == 0.0


def _as_readonly(a) -> np.ndarray:
    # own copy so freezing never mutates caller state
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class RadialGrid:
    """Strictly increasing radii r[0] >= 0; r_max is the truncation radius."""

    r: np.ndarray
    r_max: float = None  # defaults to r[-1]

    def __post_init__(self):
        r = _as_readonly(self.r)
        if r.ndim != 1 or r.size < 2:
            raise InvalidInputError("grid needs a 1-D radius array of length >= 2")
        if not np.all(np.isfinite(r)):
            raise InvalidInputError("grid radii must be finite")
        if r[0] < 0.0:
            raise InvalidInputError(f"grid must start at r >= 0, got {r[0]}")
        if np.any(np.diff(r) <= 0.0):
            raise InvalidInputError("grid radii must be strictly increasing")
        object.__setattr__(self, "r", r)
        if self.r_max is None:
            object.__setattr__(self, "r_max", float(r[-1]))
        elif self.r_max < r[-1]:
            raise InvalidInputError("r_max cannot be smaller than the last grid node")

    @classmethod
    def uniform(cls, r_max: float, num: int, r_min: float = 0.0) -> "RadialGrid":
        return cls(np.linspace(r_min, r_max, num))

    def __len__(self) -> int:
        return self.r.size


@dataclass(frozen=True)
class FlowSnapshot:
    """Radial samples of (rho, v, p) at one instant."""

    grid: RadialGrid
    rho: np.ndarray
    v: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("rho", "v", "p"):
            a = _as_readonly(getattr(self, name))
            if a.shape != self.grid.r.shape:
                raise InvalidInputError(
                    f"{name} has shape {a.shape}, grid has {self.grid.r.shape}"
                )
            if not np.all(np.isfinite(a)):
                raise InvalidInputError(f"{name} contains non-finite samples")
            object.__setattr__(self, name, a)
        if np.any(self.rho < 0.0):
            raise InvalidInputError("density must be nonnegative")
        if np.any(self.p < 0.0):
            raise InvalidInputError("pressure must be nonnegative")

    def specific_internal_energy(self, params: GasParameters) -> np.ndarray:
        """e = p / ((gamma-1) rho) where rho > 0, zero on vacuum nodes."""
        with np.errstate(divide="ignore", invalid="ignore"):
            e = self.p / ((params.gamma - 1.0) * self.rho)
        return np.where(self.rho > 0.0, e, 0.0)

    def temperature(self, params: GasParameters) -> np.ndarray:
        """theta = p / (R rho) where rho > 0, zero on vacuum nodes."""
        with np.errstate(divide="ignore", invalid="ignore"):
            th = self.p / (params.R_gas * self.rho)
        return np.where(self.rho > 0.0, th, 0.0)


@dataclass(frozen=True)
class ConservedReport:
    mass: float
    momentum: float
    e_kinetic: float
    e_internal: float
    e_total: float


def sphere_area(n: int) -> float:
    """Surface area omega_{n-1} = 2 pi^{n/2} / Gamma(n/2) of the unit sphere in R^n.

    Gamma at integer and half-integer arguments is exact (recurrence from
    Gamma(1/2) = sqrt(pi)) for n <= 12; beyond that the library Gamma
    approximation is accurate to machine precision anyway.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError(f"dimension must be an integer >= 1, got {n!r}")
    if n <= 12:
        if n % 2 == 0:
            g = float(math.factorial(n // 2 - 1))
        else:
            g = math.sqrt(math.pi)
            z = 0.5
            while z < n / 2.0:
                g *= z
                z += 1.0
        return 2.0 * math.pi ** (n / 2.0) / g
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def trapezoid_weights(r: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights for a strictly increasing node array."""
    dr = np.diff(r)
    w = np.empty_like(r)
    w[0] = 0.5 * dr[0]
    w[-1] = 0.5 * dr[-1]
    w[1:-1] = 0.5 * (dr[:-1] + dr[1:])
    return w


def integrate_radial(f, grid: RadialGrid, params: GasParameters, *, warn_tail: bool = True) -> float:
    """Integrate a radial profile over R^n.

    Parameters
    ----------
    f : array_like
        Samples of the profile on ``grid``.
    grid : RadialGrid
    params : GasParameters
        Only the dimension ``n`` is used.
    warn_tail : bool
        Emit TailTruncationWarning when the integrand f*r^(n-1) at r_max
        still exceeds 1e-12 of its peak. Pass False for deliberate
        finite-ball integrals where the integrand ends at its edge value.

    Returns
    -------
    float
        omega_{n-1} * trapezoid of f(r) r^(n-1) on the grid.
    """
    fs = np.asarray(f, dtype=float)
    if fs.shape != grid.r.shape:
        raise InvalidInputError(f"sample shape {fs.shape} does not match grid {grid.r.shape}")
    if not np.all(np.isfinite(fs)):
        bad = int(np.flatnonzero(~np.isfinite(fs))[0])
        raise InvalidInputError(f"non-finite sample at node {bad} (r={grid.r[bad]})")
    integrand = fs * grid.r ** (params.n - 1)
    if warn_tail:
        peak = np.max(np.abs(integrand))
        if peak > 0.0 and abs(integrand[-1]) > TAIL_FRACTION * peak:
            import warnings

            warnings.warn(
                f"integrand at r_max={grid.r_max} is {abs(integrand[-1]) / peak:.2e} "
                "of its peak; increase r_max or pass warn_tail=False for ball integrals",
                TailTruncationWarning,
                stacklevel=2,
            )
    # np.sum is pairwise over contiguous float input: deterministic, schedule-free
    return sphere_area(params.n) * float(np.sum(trapezoid_weights(grid.r) * integrand))


def conserved(snapshot: FlowSnapshot, params: GasParameters, *, warn_tail: bool = True) -> ConservedReport:
    """Mass, radial momentum, kinetic and internal energy of a snapshot.

    E_total is the exact float sum e_kinetic + e_internal, bit-reproducible.
    """
    if params.gamma <= 1.0:
        raise ParameterError("gamma must exceed 1 for the internal-energy integral")
    g = snapshot.grid
    mass = integrate_radial(snapshot.rho, g, params, warn_tail=warn_tail)
    momentum = integrate_radial(snapshot.rho * snapshot.v, g, params, warn_tail=warn_tail)
    e_k = integrate_radial(0.5 * snapshot.rho * snapshot.v**2, g, params, warn_tail=warn_tail)
    e_i = integrate_radial(snapshot.p / (params.gamma - 1.0), g, params, warn_tail=warn_tail)
    return ConservedReport(mass, momentum, e_k, e_i, e_k + e_i)


# --- snapshot file format: CSV `r,rho,v,p` plus JSON sidecar {"t", "n", "gamma"} ---


def _sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def save_snapshot(snapshot: FlowSnapshot, params: GasParameters, csv_path) -> Path:
    """Write snapshot CSV and its JSON sidecar; returns the sidecar path."""
    csv_path = Path(csv_path)
    data = np.column_stack([snapshot.grid.r, snapshot.rho, snapshot.v, snapshot.p])
    np.savetxt(csv_path, data, delimiter=",", header="r,rho,v,p", comments="", fmt="%.17g")
    side = _sidecar_path(csv_path)
    with open(side, "w") as fh:
        json.dump({"t": snapshot.t, "n": int(params.n), "gamma": params.gamma}, fh)
        fh.write("\n")
    return side


def load_snapshot(csv_path) -> tuple[FlowSnapshot, GasParameters]:
    """Read a snapshot CSV plus sidecar; returns the snapshot and minimal parameters."""
    csv_path = Path(csv_path)
    with open(csv_path) as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise InvalidInputError(f"{csv_path} holds no data")
    if [c.strip() for c in lines[0].strip().split(",")] != ["r", "rho", "v", "p"]:
        raise InvalidInputError(
            f"expected header 'r,rho,v,p' in {csv_path}, got {lines[0].strip()!r}"
        )
    data = np.loadtxt(io.StringIO("".join(lines[1:])), delimiter=",", ndmin=2)
    if data.shape[1] != 4:
        raise InvalidInputError(f"expected 4 columns in {csv_path}, got {data.shape[1]}")
    side = _sidecar_path(csv_path)
    if not side.exists():
        raise InvalidInputError(f"missing sidecar {side}")
    with open(side) as fh:
        meta = json.load(fh)
    params = GasParameters(n=int(meta["n"]), gamma=float(meta["gamma"]))
    snap = FlowSnapshot(
        grid=RadialGrid(data[:, 0]),
        rho=data[:, 1],
        v=data[:, 2],
        p=data[:, 3],
        t=float(meta["t"]),
    )
    return snap, params
