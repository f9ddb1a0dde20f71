import math

import numpy as np
import pytest

from aolcorr.aolmap import (
    AolCorrection,
    correction_vector_eci,
    jacobian_lambda,
    map_error_to_rsw,
    map_var_to_eci,
    map_var_to_rsw,
)
from aolcorr.astro import OsculatingElements, eci_to_rsw, elements_to_cart
from aolcorr.constants import MU_EARTH
from aolcorr.errors import AolMapError

from conftest import random_leo_elements


def corr(du, elements, var=0.0):
    return AolCorrection(delta_u=du, var_u=var, elements=elements)


def phase_shift_oracle(elements, du):
    """Propagation-free geometric construction: two states on the same
    ellipse at u and u + du; their difference (reference minus propagated)
    expressed in the reference state's RSW frame."""
    from dataclasses import replace

    prop = elements_to_cart(elements)
    ref_el = replace(elements, true_anomaly=elements.true_anomaly + du)
    ref = elements_to_cart(ref_el)
    rot = eci_to_rsw(ref)
    return rot.to_rsw(ref.position - prop.position), rot.to_rsw(ref.velocity - prop.velocity)


class TestMapErrorToRsw:
    def test_zero_error_maps_to_zero(self, rng):
        for _ in range(20):
            dx, dv = map_error_to_rsw(corr(0.0, random_leo_elements(rng)))
            assert np.array_equal(dx, np.zeros(3))
            assert np.array_equal(dv, np.zeros(3))

    def test_circular_case_values(self):
        el = OsculatingElements(a=7000.0, e=0.0, i=0.6, raan=0.2, argp=0.0, true_anomaly=1.0)
        du = 1e-3
        dx, dv = map_error_to_rsw(corr(du, el))
        mu_over_h = MU_EARTH / el.angular_momentum
        assert mu_over_h == pytest.approx(7.5460, abs=2e-4)
        assert dx[0] == pytest.approx(7000.0 * (1.0 - math.cos(du)), rel=1e-12)
        assert dx[0] == pytest.approx(0.0035, abs=2e-6)
        assert dx[1] == pytest.approx(7000.0 * math.sin(du), rel=1e-12)
        assert dx[2] == 0.0
        assert dv[0] == pytest.approx(-mu_over_h * math.sin(du), rel=1e-12)
        assert dv[0] == pytest.approx(-7.546e-3, rel=1e-3)
        assert dv[1] == pytest.approx(3.77e-6, rel=2e-3)
        assert dv[2] == 0.0

    def test_circular_matches_phase_shift_exactly(self, rng):
        """At e = 0 the mapping equals the same-ellipse phase shift
        construction (reference-frame differencing) to machine precision."""
        for _ in range(20):
            el = random_leo_elements(rng, e_max=0.0)
            du = rng.uniform(-0.05, 0.05)
            dx, dv = map_error_to_rsw(corr(du, el))
            ox, ov = phase_shift_oracle(el, du)
            assert np.allclose(dx, ox, atol=1e-9)
            assert np.allclose(dv, ov, atol=1e-12)

    def test_eccentric_phase_shift_first_order(self, rng):
        """For e > 0 the printed formulas deviate from the same-ellipse
        construction only at O(e*du) in the small components; the dominant
        along-track position and radial velocity still agree tightly."""
        el = OsculatingElements(a=7000.0, e=0.01, i=0.9, raan=0.3, argp=1.2, true_anomaly=0.8)
        du = 1e-4
        dx, dv = map_error_to_rsw(corr(du, el))
        ox, ov = phase_shift_oracle(el, du)
        r = el.radius
        # dominant components: relative agreement
        assert dx[1] == pytest.approx(ox[1], rel=5e-6)
        assert dv[0] == pytest.approx(ov[0], rel=1e-9)
        # full vectors: bounded by the first-order e*du gap
        assert np.linalg.norm(dx - ox) < 2.0 * r * el.e * abs(du)
        assert np.linalg.norm(dv - ov) < 2.0 * (MU_EARTH / el.angular_momentum) * el.e * abs(du)

    def test_small_angle_limit(self):
        el = OsculatingElements(a=7000.0, e=0.0, i=0.4, raan=0.0, argp=0.0, true_anomaly=2.0)
        du = 1e-8
        dx, dv = map_error_to_rsw(corr(du, el))
        assert dx[1] == pytest.approx(el.radius * du, rel=1e-8)
        assert abs(dx[0]) < 1e-12
        assert dv[0] == pytest.approx(-(MU_EARTH / el.angular_momentum) * du, rel=1e-8)
        assert abs(dv[1]) < 1e-12

    def test_domain_guard(self, rng):
        el = random_leo_elements(rng)
        with pytest.raises(AolMapError):
            map_error_to_rsw(corr(math.pi / 2, el))


class TestJacobian:
    def test_values_at_zero(self, rng):
        for _ in range(20):
            el = random_leo_elements(rng)
            lam = jacobian_lambda(corr(0.0, el))
            assert lam[0] == 0.0
            assert lam[1] == pytest.approx(el.radius, rel=1e-12)
            assert lam[2] == 0.0
            assert lam[3] == pytest.approx(-MU_EARTH / el.angular_momentum, rel=1e-12)
            assert lam[4] == pytest.approx(0.0, abs=1e-12)
            assert lam[5] == 0.0

    def test_matches_finite_differences(self, rng):
        """Standing property: Lambda is the exact derivative of the mapping
        (central differences, step 1e-7 rad)."""
        step = 1e-7
        for _ in range(1000):
            el = random_leo_elements(rng)
            du = rng.uniform(-0.01, 0.01)
            lam = jacobian_lambda(corr(du, el))
            hi = np.concatenate(map_error_to_rsw(corr(du + step, el)))
            lo = np.concatenate(map_error_to_rsw(corr(du - step, el)))
            fd = (hi - lo) / (2.0 * step)
            scale = np.max(np.abs(fd))
            assert np.max(np.abs(lam - fd)) <= 1e-6 * scale

    def test_continuity_in_du(self, rng):
        el = random_leo_elements(rng)
        du = 3e-3
        a = jacobian_lambda(corr(du, el))
        b = jacobian_lambda(corr(du + 1e-9, el))
        assert np.linalg.norm(b - a) < 1e-6 * np.linalg.norm(a)


class TestVarianceMapping:
    def test_zero_variance_zero_matrix(self, rng):
        el = random_leo_elements(rng)
        rot = eci_to_rsw(elements_to_cart(el))
        p = map_var_to_eci(corr(1e-3, el, var=0.0), rot)
        assert np.array_equal(p.matrix, np.zeros((6, 6)))

    def test_rank_one(self, rng):
        el = random_leo_elements(rng)
        rot = eci_to_rsw(elements_to_cart(el))
        p = map_var_to_eci(corr(2e-3, el, var=1e-6), rot).matrix
        eig = np.linalg.eigvalsh(p)
        assert eig[-1] > 0.0
        assert np.all(np.abs(eig[:-1]) <= 1e-10 * eig[-1])

    def test_trace_invariant_under_rotation(self, rng):
        el = random_leo_elements(rng)
        rot = eci_to_rsw(elements_to_cart(el))
        c = corr(1e-3, el, var=4e-7)
        assert np.trace(map_var_to_rsw(c)) == pytest.approx(
            np.trace(map_var_to_eci(c, rot).matrix), rel=1e-12
        )

    def test_cross_track_always_zero(self, rng):
        for _ in range(50):
            el = random_leo_elements(rng)
            dx, dv = map_error_to_rsw(corr(rng.uniform(-0.3, 0.3), el))
            assert dx[2] == 0.0 and dv[2] == 0.0
            lam = jacobian_lambda(corr(rng.uniform(-0.3, 0.3), el))
            assert lam[2] == 0.0 and lam[5] == 0.0

    def test_correction_vector_rotates_back(self, rng):
        el = random_leo_elements(rng)
        s = elements_to_cart(el)
        rot = eci_to_rsw(s)
        c = corr(1e-3, el)
        vec = correction_vector_eci(c, rot)
        dx, dv = map_error_to_rsw(c)
        assert np.allclose(rot.six() @ vec, np.concatenate([dx, dv]), atol=1e-15)
