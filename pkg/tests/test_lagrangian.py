"""Boundary advection, pressure-flux quadrature, and volume functionals."""

import math

import numpy as np
import pytest

from gasmoments.core import GasParameters, InvalidInputError, ParameterError
from gasmoments.exact import DeformationODE, integrate_deformation
from gasmoments.lagrangian import (
    GeometryError,
    MaterialVolume,
    RegularityReport,
    advect,
    boundary_pressure_flux,
    interior_integral,
    min_distance,
    theorem3_functional,
    track_boundary,
)


def unit_pressure(x):
    return np.ones(x.shape[:-1])


@pytest.fixture(scope="module")
def offset_sphere():
    return MaterialVolume.sphere_surface([3.0, 0.0, 0.0], 1.0, 48, 96)


class TestMaterialVolume:
    def test_interval_normals_and_weights(self):
        vol = MaterialVolume.interval(-1.0, 2.0)
        normals, weights = vol.surface_elements()
        assert np.array_equal(normals, [[-1.0], [1.0]])
        assert np.array_equal(weights, [1.0, 1.0])
        assert vol.dim == 1

    def test_interval_requires_order(self):
        with pytest.raises(InvalidInputError, match="a < b"):
            MaterialVolume.interval(2.0, 2.0)

    def test_sphere_area(self, offset_sphere):
        assert offset_sphere.surface_area() == pytest.approx(4.0 * math.pi, rel=0.01)

    def test_area_stable_under_refinement(self, offset_sphere):
        fine = MaterialVolume.sphere_surface([3.0, 0.0, 0.0], 1.0, 96, 192)
        assert offset_sphere.surface_area() == pytest.approx(fine.surface_area(), rel=0.01)

    def test_normals_point_outward(self, offset_sphere):
        normals, _ = offset_sphere.surface_elements()
        outward = offset_sphere.points - np.array([3.0, 0.0, 0.0])
        assert np.all(np.sum(normals * outward, axis=-1) > 0.99)

    def test_too_coarse_rejected(self):
        with pytest.raises(InvalidInputError, match="coarse"):
            MaterialVolume.sphere_surface([0.0, 0.0, 0.0], 1.0, 3, 6)

    def test_unsupported_shape_rejected(self):
        with pytest.raises(ParameterError, match="dimensions 1 and 3"):
            MaterialVolume(np.zeros((5, 2)))

    def test_bad_radius(self):
        with pytest.raises(ParameterError, match="radius"):
            MaterialVolume.sphere_surface([0.0, 0.0, 0.0], 0.0)

    def test_contains(self, offset_sphere):
        assert offset_sphere.contains([3.0, 0.1, -0.2])
        assert not offset_sphere.contains([0.0, 0.0, 0.0])
        assert not offset_sphere.contains([3.0, 0.0, 5.0])
        iv = MaterialVolume.interval(0.0, 1.0)
        assert iv.contains([0.5])
        assert not iv.contains([-0.5])


class TestAdvect:
    def test_zero_field_is_identity(self, offset_sphere):
        moved = advect(offset_sphere, lambda t, x: np.zeros_like(x), 0.1)
        assert np.array_equal(moved.points, offset_sphere.points)
        assert moved.t == pytest.approx(0.1)

    def test_uniform_deformation_matches_exponential_stretch(self):
        # under v = a(t) x every particle follows x(0) e^{b(t)}
        sol = integrate_deformation(DeformationODE(K=1.0, m_exp=4.0), 1.0, 1e-12)
        field = sol.velocity_field()
        vol = MaterialVolume.sphere_surface([0.0, 0.0, 0.0], 1.0, 8, 16)
        x0 = vol.points.copy()
        dt = 1e-3
        for _ in range(1000):
            vol = advect(vol, field, dt)
        target = x0 * math.exp(sol.b_at(1.0))
        assert np.max(np.abs(vol.points - target)) <= 1e-6 * np.max(np.abs(target))

    def test_rigid_rotation_preserves_radii(self):
        def spin(t, x):
            v = np.empty_like(x)
            v[..., 0] = -x[..., 1]
            v[..., 1] = x[..., 0]
            v[..., 2] = 0.0
            return v

        vol = MaterialVolume.sphere_surface([0.0, 0.0, 0.0], 1.0, 16, 32)
        r0 = np.linalg.norm(vol.points, axis=-1)
        steps = 2000
        dt = 2.0 * math.pi / steps
        for _ in range(steps):
            vol = advect(vol, spin, dt)
        r1 = np.linalg.norm(vol.points, axis=-1)
        assert np.max(np.abs(r1 - r0)) < 1e-8

    def test_reversible_to_high_order(self, offset_sphere):
        frozen = lambda t, x: np.sin(x)
        dt = 0.01
        there = advect(offset_sphere, frozen, dt)
        back = advect(there, frozen, -dt)
        assert np.max(np.abs(back.points - offset_sphere.points)) < 1e-9

    def test_nonfinite_velocity_reported(self, offset_sphere):
        def bad(t, x):
            v = np.zeros_like(x)
            v[0, 0, 0] = np.inf
            return v

        with pytest.raises(GeometryError, match="domain"):
            advect(offset_sphere, bad, 0.1)

    def test_interval_advection(self):
        vol = MaterialVolume.interval(1.0, 2.0)
        moved = advect(vol, lambda t, x: x, 0.001)
        assert moved.points[:, 0] == pytest.approx(
            [math.exp(0.001), 2.0 * math.exp(0.001)], rel=1e-12
        )


class TestBoundaryPressureFlux:
    def test_zero_pressure(self, offset_sphere):
        val = boundary_pressure_flux(offset_sphere, lambda x: np.zeros(x.shape[:-1]), [0.0, 0.0, 0.0])
        assert val == 0.0

    def test_interval_constant_pressure_cancels(self):
        vol = MaterialVolume.interval(1.0, 2.0)
        assert boundary_pressure_flux(vol, lambda x: np.full(x.shape[:-1], 7.0), [0.0]) == 0.0

    def test_offset_sphere_oracle(self, offset_sphere):
        # divergence theorem turns the surface integral into
        # (n-1) int_V |x|^(-1) dV; the mean-value property of the harmonic
        # kernel evaluates that at the center: 2 * (4 pi / 3) / 3
        val = boundary_pressure_flux(offset_sphere, unit_pressure, [0.0, 0.0, 0.0])
        assert val == pytest.approx(8.0 * math.pi / 9.0, rel=0.02)

    def test_rotation_invariance(self, offset_sphere):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((3, 3))
        Q, _ = np.linalg.qr(A)
        rotated = MaterialVolume(offset_sphere.points @ Q.T)
        ref = boundary_pressure_flux(offset_sphere, unit_pressure, [0.0, 0.0, 0.0])
        rot = boundary_pressure_flux(rotated, unit_pressure, [0.0, 0.0, 0.0])
        assert rot == pytest.approx(ref, rel=1e-3)

    def test_probe_inside_rejected(self, offset_sphere):
        with pytest.raises(GeometryError, match="inside"):
            boundary_pressure_flux(offset_sphere, unit_pressure, [3.0, 0.0, 0.0])

    def test_probe_too_close_rejected(self, offset_sphere):
        # 0.02 outside the surface, well under the ~0.05 particle spacing
        with pytest.raises(GeometryError, match="spacing"):
            boundary_pressure_flux(offset_sphere, unit_pressure, [3.0, 0.0, 1.02])

    def test_interval_probe_checks(self):
        vol = MaterialVolume.interval(1.0, 2.0)
        with pytest.raises(GeometryError, match="inside"):
            boundary_pressure_flux(vol, unit_pressure, [1.5])
        with pytest.raises(GeometryError, match="spacing"):
            boundary_pressure_flux(vol, unit_pressure, [1.0])


class TestInteriorIntegral:
    def test_unit_sphere_volume(self, offset_sphere):
        vol = interior_integral(offset_sphere, lambda x: np.ones(x.shape[:-1]))
        assert vol == pytest.approx(4.0 * math.pi / 3.0, rel=2e-3)

    def test_interval_length(self):
        vol = MaterialVolume.interval(-1.0, 3.0)
        assert interior_integral(vol, lambda x: np.ones(x.shape[:-1])) == pytest.approx(4.0, rel=1e-12)

    def test_interval_polynomial(self):
        vol = MaterialVolume.interval(0.0, 2.0)
        val = interior_integral(vol, lambda x: x[..., 0] ** 3)
        assert val == pytest.approx(4.0, rel=1e-12)


class TestTheorem3Functional:
    PARAMS = GasParameters(n=3, gamma=5.0 / 3.0)
    X0 = np.array([0.0, 0.0, 0.0])

    def test_exponent_gate(self, offset_sphere):
        # admissible range sits below -n - 2/(gamma-1) = -6
        with pytest.raises(ParameterError, match="exponent"):
            theorem3_functional(
                offset_sphere, lambda x: np.ones(x.shape[:-1]), lambda x: x, self.X0, -5.0, self.PARAMS
            )

    def test_zero_velocity(self, offset_sphere):
        val = theorem3_functional(
            offset_sphere,
            lambda x: np.ones(x.shape[:-1]),
            lambda x: np.zeros_like(x),
            self.X0,
            -7.0,
            self.PARAMS,
        )
        assert val == 0.0

    def test_converging_flow_is_negative(self, offset_sphere):
        val = theorem3_functional(
            offset_sphere, lambda x: np.ones(x.shape[:-1]), lambda x: -x, self.X0, -7.0, self.PARAMS
        )
        assert val < 0.0

    def test_diverging_flow_is_positive(self, offset_sphere):
        val = theorem3_functional(
            offset_sphere, lambda x: np.ones(x.shape[:-1]), lambda x: x, self.X0, -7.0, self.PARAMS
        )
        assert val > 0.0

    def test_homogeneous_in_density_and_velocity(self, offset_sphere):
        rho = lambda x: 1.0 + 0.5 * np.cos(x[..., 0])
        vel = lambda x: -x
        base = theorem3_functional(offset_sphere, rho, vel, self.X0, -7.0, self.PARAMS)
        rho2 = lambda x: 2.0 * (1.0 + 0.5 * np.cos(x[..., 0]))
        vel2 = lambda x: -2.0 * x
        assert theorem3_functional(offset_sphere, rho2, vel, self.X0, -7.0, self.PARAMS) == pytest.approx(
            2.0 * base, rel=1e-14
        )
        assert theorem3_functional(offset_sphere, rho, vel2, self.X0, -7.0, self.PARAMS) == pytest.approx(
            2.0 * base, rel=1e-14
        )

    def test_one_dimensional_case(self):
        vol = MaterialVolume.interval(1.0, 2.0)
        params = GasParameters(n=1, gamma=5.0 / 3.0)
        val = theorem3_functional(
            vol, lambda x: np.ones(x.shape[:-1]), lambda x: -x, [0.0], -5.0, params
        )
        assert val < 0.0


class TestMinDistance:
    def test_offset_sphere(self, offset_sphere):
        assert min_distance(offset_sphere, [0.0, 0.0, 0.0]) == pytest.approx(2.0, abs=5e-3)

    def test_point_on_boundary(self, offset_sphere):
        on = offset_sphere.points[0, 0]
        assert min_distance(offset_sphere, on) == 0.0

    def test_monotone_under_converging_field(self, offset_sphere):
        field = lambda t, x: -x
        vol = offset_sphere
        dists = [min_distance(vol, [0.0, 0.0, 0.0])]
        for _ in range(5):
            vol = advect(vol, field, 0.05)
            dists.append(min_distance(vol, [0.0, 0.0, 0.0]))
        assert np.all(np.diff(dists) < 0.0)


class TestTracking:
    def test_report_invariant(self):
        rep = RegularityReport(times=[0.0, 1.0, 2.0], fluxes=[0.5, -3.0, 1.0])
        assert rep.M_observed == 3.0

    def test_report_shape_check(self):
        with pytest.raises(InvalidInputError):
            RegularityReport(times=[0.0, 1.0], fluxes=[1.0])

    def test_track_boundary_series(self, offset_sphere):
        field = lambda t, x: 0.1 * x
        pressure = lambda t, x: np.exp(-t) * np.ones(x.shape[:-1])
        report, dists, final = track_boundary(
            offset_sphere, field, pressure, [0.0, 0.0, 0.0], 0.5, 10
        )
        assert report.times.shape == (11,)
        assert report.times[-1] == pytest.approx(0.5)
        assert report.M_observed == np.max(np.abs(report.fluxes))
        # expanding flow pushes the boundary away from the probe point
        assert dists[-1] > dists[0]
        assert final.t == pytest.approx(0.5)
