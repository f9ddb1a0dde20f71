import json
import math

import numpy as np
import pytest

from aolcorr.astro import OsculatingElements, cart_to_elements
from aolcorr.errors import VcmFormatError
from aolcorr.propagator import ForceConfig, PropagatorSettings
from aolcorr.vcmio import (
    CatalogRow,
    VcmRecord,
    filter_catalog,
    floor_velocity_sigmas,
    parse_vcm,
    quantize_velocity_sigma,
    read_catalog,
    rsw_sigmas_to_eci_cov,
    synthesize_vcm_series,
    write_catalog,
    write_vcm,
)

from conftest import circular_state


def make_record(**overrides):
    base = dict(
        norad_id=47,
        epoch=0.0,
        position=[6878.0, 0.0, 0.0],
        velocity=[0.0, 7.6127, 0.0],
        ballistic_coefficient=0.02,
        srp_coefficient=0.01,
        geopotential_degree=4,
        drag_model="EXP-TABLE",
        f10=150.0,
        f10a=150.0,
        sigma_rsw=[0.015, 0.015, 0.015, 3e-5, 3e-5, 3e-5],
    )
    base.update(overrides)
    return VcmRecord(**base)


class TestFileFormat:
    def test_minimal_round_trip(self, tmp_path):
        rec = make_record(sigma_rsw=[0.015, 0.02, 0.01, 2e-4, 3e-4, 0.0])
        path = tmp_path / "one.jsonl"
        write_vcm([rec], path)
        back = parse_vcm(path)
        assert len(back) == 1
        b = back[0]
        assert b.norad_id == rec.norad_id
        assert np.array_equal(b.position, rec.position)
        assert np.array_equal(b.velocity, rec.velocity)
        assert b.drag_model == rec.drag_model
        # position sigmas survive at full precision
        assert np.array_equal(b.sigma_rsw[:3], rec.sigma_rsw[:3])
        # velocity sigmas land on the 0.1 m/s grid
        for got, put in zip(b.sigma_rsw[3:], rec.sigma_rsw[3:]):
            assert got == quantize_velocity_sigma(put)
            assert got == pytest.approx(put, abs=5.001e-5)

    def test_velocity_sigma_quantization(self, tmp_path):
        # 0.04 m/s is below half the 0.1 m/s quantum: parses back as zero
        rec = make_record(sigma_rsw=[0.015, 0.015, 0.015, 4e-5, 2e-4, 0.0])
        path = tmp_path / "q.jsonl"
        write_vcm([rec], path)
        b = parse_vcm(path)[0]
        assert b.sigma_rsw[3] == 0.0
        assert b.sigma_rsw[4] == pytest.approx(2e-4, rel=1e-12)  # 0.2 m/s unchanged
        assert b.sigma_rsw[5] == 0.0

    def test_write_parse_write_is_byte_stable(self, tmp_path):
        rec = make_record(sigma_rsw=[0.0151, 0.02, 0.01, 1.04e-4, 2.71e-4, 0.0])
        p1 = tmp_path / "a.jsonl"
        p2 = tmp_path / "b.jsonl"
        write_vcm([rec], p1)
        write_vcm(parse_vcm(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_all_fields_serialized(self, tmp_path):
        path = tmp_path / "fields.jsonl"
        write_vcm([make_record()], path)
        obj = json.loads(path.read_text().strip())
        assert sorted(obj) == sorted(
            [
                "norad_id",
                "epoch_s",
                "r_eci_km",
                "v_eci_km_s",
                "bc_m2_kg",
                "srp_m2_kg",
                "geopot_degree",
                "drag_model",
                "f10",
                "f10a",
                "sigma_rsw",
            ]
        )

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        obj = json.loads(json.dumps({"norad_id": 1}))
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(VcmFormatError, match="missing mandatory field"):
            parse_vcm(path)

    def test_non_monotone_epochs_rejected(self, tmp_path):
        path = tmp_path / "mono.jsonl"
        write_vcm([make_record(epoch=100.0), make_record(epoch=50.0)], path)
        with pytest.raises(VcmFormatError, match="non-monotone"):
            parse_vcm(path)

    def test_malformed_numeric_rejected(self, tmp_path):
        path = tmp_path / "num.jsonl"
        write_vcm([make_record()], path)
        text = path.read_text().replace("0.02", '"not-a-number"')
        path.write_text(text)
        with pytest.raises(VcmFormatError, match="malformed numeric"):
            parse_vcm(path)


class TestSigmaHandling:
    def test_floor_replaces_zeros(self):
        rec = make_record(sigma_rsw=[0.015, 0.015, 0.015, 0.0, 2e-4, 0.0])
        out = floor_velocity_sigmas(rec)
        assert out.sigma_rsw[3] == 5e-5
        assert out.sigma_rsw[4] == 2e-4
        assert out.sigma_rsw[5] == 5e-5
        # position sigmas untouched
        assert np.array_equal(out.sigma_rsw[:3], rec.sigma_rsw[:3])

    def test_floor_all_zero(self):
        rec = make_record(sigma_rsw=[0.015, 0.015, 0.015, 0.0, 0.0, 0.0])
        assert np.array_equal(floor_velocity_sigmas(rec).sigma_rsw[3:], [5e-5] * 3)

    def test_quantum_values(self):
        assert quantize_velocity_sigma(4e-5) == 0.0
        assert quantize_velocity_sigma(6e-5) == pytest.approx(1e-4)

    def test_isotropic_sigmas_give_isotropic_covariance(self):
        rec = make_record(sigma_rsw=[0.02] * 3 + [1e-4] * 3)
        p = rsw_sigmas_to_eci_cov(rec).matrix
        assert np.allclose(p[:3, :3], 0.02**2 * np.eye(3), atol=1e-18)
        assert np.allclose(p[3:, 3:], 1e-8 * np.eye(3), atol=1e-20)

    def test_zero_sigmas_give_zero_matrix(self):
        rec = make_record(sigma_rsw=[0.0] * 6)
        assert np.array_equal(rsw_sigmas_to_eci_cov(rec).matrix, np.zeros((6, 6)))

    def test_along_track_sigma_aligns_with_velocity(self):
        s = circular_state(a=6878.0, inclination=0.9)
        rec = make_record(
            position=s.position, velocity=s.velocity, sigma_rsw=[0.0, 0.05, 0.0, 0.0, 0.0, 0.0]
        )
        p = rsw_sigmas_to_eci_cov(rec).matrix
        vals, vecs = np.linalg.eigh(p[:3, :3])
        v_hat = s.velocity / np.linalg.norm(s.velocity)
        # circular orbit: along-track == velocity direction
        assert abs(abs(np.dot(vecs[:, -1], v_hat)) - 1.0) < 1e-9

    def test_cov_psd_random(self, rng):
        for _ in range(20):
            sig = rng.uniform(0.0, 0.1, size=6)
            rec = make_record(sigma_rsw=sig)
            p = rsw_sigmas_to_eci_cov(rec).matrix
            assert np.linalg.eigvalsh(p)[0] >= -1e-15


class TestCatalog:
    def rows(self):
        return [
            CatalogRow(1, "ISS (ZARYA)", "PAYLOAD", "LARGE", 550.0),
            CatalogRow(2, "STARLINK-1234", "PAYLOAD", "LARGE", 550.0),
            CatalogRow(3, "CUBESAT-X", "PAYLOAD", "SMALL", 550.0),
            CatalogRow(4, "ONEWEB-0042", "PAYLOAD", "LARGE", 1100.0),
            CatalogRow(5, "SL-16 DEB", "DEBRIS", "LARGE", 700.0),
            CatalogRow(6, "HIGH BIRD", "PAYLOAD", "LARGE", 1400.0),
            CatalogRow(7, "OLD STAGE", "ROCKET BODY", "LARGE", 800.0),
        ]

    def test_filter_criteria(self):
        assert filter_catalog(self.rows()) == [1, 7]

    def test_filter_idempotent_order_preserving(self):
        rows = self.rows()
        ids = filter_catalog(rows)
        kept_rows = [r for r in rows if r.norad_id in ids]
        assert filter_catalog(kept_rows) == ids

    def test_csv_round_trip_and_skip_count(self, tmp_path):
        path = tmp_path / "cat.csv"
        write_catalog(self.rows(), path)
        # append a malformed row
        with open(path, "a") as fh:
            fh.write("notanid,BROKEN,PAYLOAD,LARGE,xyz\n")
        rows, skipped = read_catalog(path)
        assert len(rows) == 7
        assert skipped == 1
        assert filter_catalog(rows) == [1, 7]

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("A,B\n1,2\n")
        with pytest.raises(VcmFormatError, match="catalog must have columns"):
            read_catalog(path)


class TestSynthesize:
    ELEMENTS = OsculatingElements(
        a=6928.0, e=0.002, i=math.radians(53.0), raan=0.4, argp=1.0, true_anomaly=0.0
    )

    def test_zero_noise_zero_bias_counts_and_exactness(self):
        cfg = ForceConfig(zonal_degree=4, drag_enabled=True, ballistic_coefficient=0.02)
        recs = synthesize_vcm_series(
            101,
            self.ELEMENTS,
            cfg,
            PropagatorSettings(),
            span=7 * 86400.0,
            cadence=8 * 3600.0,
            jitter_frac=0.0,
            sigma_pos=0.0,
            sigma_vel=0.0,
            rng=np.random.default_rng(0),
        )
        assert len(recs) == 22
        assert all(r.ballistic_coefficient == 0.02 for r in recs)
        # exactly on the truth trajectory: re-propagating from record 0 to
        # record k reproduces record k's state
        from aolcorr.propagator import propagate_to_epochs

        states = propagate_to_epochs(
            recs[0].state(), cfg, PropagatorSettings(), [r.epoch for r in recs[1:]]
        )
        for row, rec in zip(states, recs[1:]):
            assert np.linalg.norm(row[:3] - rec.position) < 1e-7

    def test_injected_noise_statistics(self):
        cfg = ForceConfig(zonal_degree=0, drag_enabled=False)
        recs = synthesize_vcm_series(
            102,
            self.ELEMENTS,
            cfg,
            PropagatorSettings(),
            span=1000.0 * 60.0,
            cadence=60.0,
            jitter_frac=0.0,
            sigma_pos=0.015,
            sigma_vel=0.0,
            rng=np.random.default_rng(3),
        )
        assert len(recs) >= 1000
        from aolcorr.propagator import propagate_to_epochs

        # measure deviation of noisy records from a clean truth re-run
        clean = synthesize_vcm_series(
            102,
            self.ELEMENTS,
            cfg,
            PropagatorSettings(),
            span=1000.0 * 60.0,
            cadence=60.0,
            jitter_frac=0.0,
            sigma_pos=0.0,
            sigma_vel=0.0,
            rng=np.random.default_rng(3),
        )
        devs = np.array(
            [np.linalg.norm(r.position - c.position) for r, c in zip(recs, clean)]
        )
        # |N(0, sigma I3)| has mean sigma sqrt(8/pi); check the per-axis std
        per_axis = np.concatenate(
            [r.position - c.position for r, c in zip(recs, clean)]
        )
        assert abs(np.std(per_axis) - 0.015) < 0.2 * 0.015
        assert devs.max() < 0.015 * 6

    def test_epochs_strictly_increasing_with_jitter(self):
        cfg = ForceConfig(zonal_degree=2, drag_enabled=True, ballistic_coefficient=0.02)
        recs = synthesize_vcm_series(
            103,
            self.ELEMENTS,
            cfg,
            PropagatorSettings(),
            span=5 * 86400.0,
            cadence=6 * 3600.0,
            jitter_frac=0.25,
            rng=np.random.default_rng(11),
        )
        epochs = np.array([r.epoch for r in recs])
        assert np.all(np.diff(epochs) > 0)
        spacing = np.diff(epochs)
        assert abs(np.mean(spacing) - 6 * 3600.0) < 0.3 * 6 * 3600.0

    def test_bc_bias_gives_consistent_error_sign(self):
        """Reported Bc above truth makes the prediction drag harder than
        truth, so the predicted satellite runs ahead: aol error (reference
        minus propagated) is negative at every horizon."""
        truth = ForceConfig(zonal_degree=2, drag_enabled=True, ballistic_coefficient=0.05)
        recs = synthesize_vcm_series(
            104,
            OsculatingElements(a=6878.0, e=0.001, i=0.9, raan=0.0, argp=0.0, true_anomaly=0.0),
            truth,
            PropagatorSettings(),
            span=5 * 86400.0,
            cadence=12 * 3600.0,
            jitter_frac=0.0,
            sigma_pos=0.0,
            sigma_vel=0.0,
            bc_report_bias=1.2,
            rng=np.random.default_rng(5),
        )
        from aolcorr.astro import wrap_angle_diff
        from aolcorr.propagator import propagate_to_epochs

        pred_cfg = ForceConfig(
            zonal_degree=2,
            drag_enabled=True,
            ballistic_coefficient=recs[0].ballistic_coefficient,
        )
        states = propagate_to_epochs(
            recs[0].state(), pred_cfg, PropagatorSettings(), [r.epoch for r in recs[1:]]
        )
        for row, rec in zip(states, recs[1:]):
            u_prop = cart_to_elements(
                type(recs[0].state())(rec.epoch, row[:3], row[3:])
            ).aol
            u_ref = cart_to_elements(rec.state()).aol
            du = wrap_angle_diff(u_ref, u_prop)
            assert du < 0.0
