"""Weight functions and generalized momenta of mass.

The generalized momentum is G_phi = int rho(t,x) phi(|x|) dx. Its second
time derivative decomposes into four curvature integrals (kinetic,
rotational, pressure-Laplacian, boundary). For purely radial flow the
rotational term vanishes identically, and the quadratic weight
phi = r^2/2 recovers the classical momentum of mass together with the
virial identity G'' = 2 E_k + n (gamma - 1) E_i.

Weights singular at the origin (Power, ShiftedPower) refuse to guess a
regularization: they demand an explicit inner radius and a grid that
stays outside it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import (
    ConservedReport,
    DegenerateDataError,
    FlowSnapshot,
    GasParameters,
    InvalidInputError,
    ParameterError,
    RadialGrid,
    SingularIntegrandError,
    conserved,
    integrate_radial,
    sphere_area,
)

__all__ = [
    "WeightFunction",
    "Quadratic",
    "Power",
    "ShiftedPower",
    "LemmaOneTerms",
    "SigmaVector",
    "g_phi",
    "g_phi_rate",
    "lemma1_terms",
    "sigma_norm_sq",
    "virial_residual",
    "lambda_constants",
]

Region = Literal["all-space", "ball"]


class WeightFunction:
    """Evaluators phi(r), dphi(r), d2phi(r); inner_radius > 0 marks an origin singularity."""

    # annotation only: a base-class default here would leak into the dataclass
    # subclasses and silently waive their required inner_radius argument
    inner_radius: float

    def phi(self, r):
        raise NotImplementedError

    def dphi(self, r):
        raise NotImplementedError

    def d2phi(self, r):
        raise NotImplementedError

    def dphi_over_r(self, r):
        """phi'(r)/r, written so r = 0 never divides by zero for regular weights."""
        return self.dphi(r) / np.asarray(r, dtype=float)


@dataclass(frozen=True)
class Quadratic(WeightFunction):
    """phi = r^2 / 2; the classical momentum of mass."""

    inner_radius = 0.0  # regular at the origin

    def phi(self, r):
        return 0.5 * np.asarray(r, dtype=float) ** 2

    def dphi(self, r):
        return np.asarray(r, dtype=float)

    def d2phi(self, r):
        return np.ones_like(np.asarray(r, dtype=float))

    def dphi_over_r(self, r):
        return np.ones_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class Power(WeightFunction):
    """phi = r^(2-n), n >= 3: proportional to the fundamental Laplace solution.

    Harmonic away from the origin, so the pressure-Laplacian curvature term
    vanishes nodewise. n = 2 (logarithmic weight) is deliberately rejected;
    the curvature constant is singular there.
    """

    n: int
    inner_radius: float

    def __post_init__(self):
        if self.n < 3:
            raise ParameterError(f"power weight requires n >= 3, got n={self.n}")
        if not self.inner_radius > 0.0:
            raise ParameterError("power weight needs an explicit inner_radius > 0")

    def phi(self, r):
        return np.asarray(r, dtype=float) ** (2 - self.n)

    def dphi(self, r):
        return (2 - self.n) * np.asarray(r, dtype=float) ** (1 - self.n)

    def d2phi(self, r):
        return ((2 - self.n) * (1 - self.n)) * np.asarray(r, dtype=float) ** (-self.n)

    def dphi_over_r(self, r):
        return (2 - self.n) * np.asarray(r, dtype=float) ** (-self.n)


@dataclass(frozen=True)
class ShiftedPower(WeightFunction):
    """phi = r^q with q < 0, r the distance from a shifted center.

    The radial coordinate fed to this weight must already be the distance
    from the shift point; tracking that point through a flow is the material
    volume machinery's job, not this evaluator's.
    """

    q: float
    inner_radius: float

    def __post_init__(self):
        if not self.q < 0.0:
            raise ParameterError(f"shifted power weight requires q < 0, got q={self.q}")
        if not self.inner_radius > 0.0:
            raise ParameterError("shifted power weight needs an explicit inner_radius > 0")

    def phi(self, r):
        return np.asarray(r, dtype=float) ** self.q

    def dphi(self, r):
        return self.q * np.asarray(r, dtype=float) ** (self.q - 1)

    def d2phi(self, r):
        return (self.q * (self.q - 1)) * np.asarray(r, dtype=float) ** (self.q - 2)

    def dphi_over_r(self, r):
        return self.q * np.asarray(r, dtype=float) ** (self.q - 2)


@dataclass(frozen=True)
class LemmaOneTerms:
    """Curvature decomposition of G_phi'' plus the first-derivative integral."""

    I1: float
    I2: float
    I3: float
    I4: float
    G_rate: float


@dataclass(frozen=True)
class SigmaVector:
    """Rotation components sigma_k = v_i x_j - v_j x_i for i > j, lexicographic in (i, j)."""

    components: np.ndarray

    @classmethod
    def from_vectors(cls, v_vec, x_vec) -> "SigmaVector":
        v = np.asarray(v_vec, dtype=float)
        x = np.asarray(x_vec, dtype=float)
        if v.shape != x.shape or v.ndim != 1:
            raise InvalidInputError(f"vector shapes differ: {v.shape} vs {x.shape}")
        comps = [v[i] * x[j] - v[j] * x[i] for i in range(1, v.size) for j in range(i)]
        return cls(np.array(comps))

    def norm_sq(self) -> float:
        return float(np.sum(self.components**2))


def _check_grid_against_weight(grid: RadialGrid, w: WeightFunction) -> None:
    if w.inner_radius > 0.0 and grid.r[0] < w.inner_radius:
        raise SingularIntegrandError(
            f"grid node 0 at r={grid.r[0]} lies inside the weight's "
            f"inner radius {w.inner_radius}; singular integrand"
        )


def _weighted_integral(samples, grid, w_values, params, warn_tail):
    integrand = np.asarray(samples, dtype=float) * w_values
    if not np.all(np.isfinite(integrand)):
        bad = int(np.flatnonzero(~np.isfinite(integrand))[0])
        raise SingularIntegrandError(f"weighted integrand non-finite at node {bad} (r={grid.r[bad]})")
    return integrate_radial(integrand, grid, params, warn_tail=warn_tail)


def g_phi(snapshot: FlowSnapshot, w: WeightFunction, params: GasParameters, *, warn_tail: bool = True) -> float:
    """Generalized momentum int rho phi(|x|) dx by weighted quadrature."""
    _check_grid_against_weight(snapshot.grid, w)
    return _weighted_integral(snapshot.rho, snapshot.grid, w.phi(snapshot.grid.r), params, warn_tail)


def g_phi_rate(snapshot: FlowSnapshot, w: WeightFunction, params: GasParameters, *, warn_tail: bool = True) -> float:
    """First derivative integral int (phi'(|x|)/|x|) (v, x) rho dx = int phi' v rho dx radially."""
    _check_grid_against_weight(snapshot.grid, w)
    return _weighted_integral(
        snapshot.rho * snapshot.v, snapshot.grid, w.dphi(snapshot.grid.r), params, warn_tail
    )


def lemma1_terms(
    snapshot: FlowSnapshot,
    w: WeightFunction,
    region: Region,
    params: GasParameters,
    *,
    warn_tail: bool = True,
) -> LemmaOneTerms:
    """The four curvature integrals whose sum is G_phi''.

    I1 kinetic    int phi'' v^2 rho dx          (radial flow: (v,x)^2/r^2 = v^2)
    I2 rotation   int (phi'/r^3) |sigma|^2 rho  (identically zero here: sigma = 0 radially)
    I3 pressure   int (phi'' + (n-1) phi'/r) p dx
    I4 boundary   -oint (phi'/r) (x,nu) p dS over the truncating sphere, 0 for all-space

    For the quadratic weight over all space, I1 + I2 = 2 E_k and
    I3 = n (gamma-1) E_i by the same quadrature.
    """
    if region not in ("all-space", "ball"):
        raise ParameterError(f"region must be 'all-space' or 'ball', got {region!r}")
    _check_grid_against_weight(snapshot.grid, w)
    r = snapshot.grid.r
    d2 = w.d2phi(r)
    dor = w.dphi_over_r(r)
    i1 = _weighted_integral(snapshot.rho * snapshot.v**2, snapshot.grid, d2, params, warn_tail)
    i2 = 0.0
    i3 = _weighted_integral(snapshot.p, snapshot.grid, d2 + (params.n - 1) * dor, params, warn_tail)
    if region == "ball":
        # surface term on the sphere r = R: (x, nu) = R, area = omega R^(n-1)
        R = float(r[-1])
        i4 = -float(w.dphi(R)) * float(snapshot.p[-1]) * sphere_area(params.n) * R ** (params.n - 1)
    else:
        i4 = 0.0
    rate = _weighted_integral(snapshot.rho * snapshot.v, snapshot.grid, w.dphi(r), params, warn_tail)
    return LemmaOneTerms(I1=i1, I2=i2, I3=i3, I4=i4, G_rate=rate)


def sigma_norm_sq(v_vec, x_vec) -> float:
    """|sigma|^2 = |v|^2 |x|^2 - (v,x)^2; zero iff v is radial through x."""
    return SigmaVector.from_vectors(v_vec, x_vec).norm_sq()


def virial_residual(snapshot: FlowSnapshot, params: GasParameters, *, warn_tail: bool = True) -> float:
    """Normalized defect of the identity I1 + I2 + I3 = 2 E_k + n (gamma-1) E_i.

    Quadratic weight, all-space region. Both sides are assembled from the
    same quadrature, so the residual measures internal consistency only;
    the normalization floor 1e-30 keeps the zero-field case defined.
    """
    rep: ConservedReport = conserved(snapshot, params, warn_tail=warn_tail)
    if rep.e_total == 0.0 and (np.any(snapshot.v != 0.0) or np.any(snapshot.p != 0.0)):
        raise DegenerateDataError("zero total energy with nonzero fields: residual normalization degenerate")
    terms = lemma1_terms(snapshot, Quadratic(), "all-space", params, warn_tail=warn_tail)
    rhs = 2.0 * rep.e_kinetic + params.n * (params.gamma - 1.0) * rep.e_internal
    return abs((terms.I1 + terms.I2 + terms.I3) - rhs) / max(rep.e_total, 1e-30)


def lambda_constants(n: int) -> tuple[float, float, float]:
    """Curvature coefficients (2-n, (1-n)(2-n), 2-n) of the fundamental-solution weight, n >= 3."""
    if not isinstance(n, (int, np.integer)) or n < 3:
        raise ParameterError(f"fundamental-solution constants need integer n >= 3, got {n!r}")
    return (float(2 - n), float((1 - n) * (2 - n)), float(2 - n))
