import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monopmbm.models import (BehindCameraError, CameraModel, Detection, MeasurementRegion, MeasurementVector,
                             ModelError, ModelParams, ObjectState, backproject, cv_matrix, cv_process_noise,
                             cv_transition, default_birth_intensity, detection_to_measurement, project_array,
                             project_to_measurement)

CAM = CameraModel(f_u=700.0, f_v=700.0, c_u=600.0, c_v=180.0)


def state(x=0.0, y=0.0, z=10.0, vx=0.0, vy=0.0, vz=0.0, w=50.0, h=40.0):
    return ObjectState(x, y, z, vx, vy, vz, w, h)


class TestMotion:
    def test_linear_motion(self):
        s = cv_transition(state(0, 0, 0, 1, 0, 0), 0.1)
        assert (s.x, s.y, s.z, s.vx) == (0.1, 0.0, 0.0, 1.0)

    @pytest.mark.parametrize("dt", [0.01, 0.1, 3.0])
    def test_stationary_fixed_point(self, dt):
        s = state(1, 2, 3)
        assert cv_transition(s, dt) == s

    def test_hand_arithmetic(self):
        s = cv_transition(state(2, -1, 10, -1, 0, 3), 0.5)
        assert s.position.tolist() == [1.5, -1.0, 11.5]
        assert s.velocity.tolist() == [-1.0, 0.0, 3.0]

    @pytest.mark.parametrize("dt", [0.0, -0.1, math.nan, math.inf])
    def test_bad_dt(self, dt):
        with pytest.raises(ModelError):
            cv_transition(state(), dt)

    @given(st.integers(1, 20), st.floats(1e-3, 1.0))
    def test_composition(self, n, dt):
        s = state(1.0, -2.0, 15.0, 0.3, -0.1, 2.0)
        x = s
        for _ in range(n):
            x = cv_transition(x, dt)
        np.testing.assert_allclose(x.to_array(), cv_transition(s, n * dt).to_array(), rtol=1e-12, atol=1e-12)

    def test_matrix_matches_function(self):
        x = np.arange(8.0) + 1
        np.testing.assert_array_equal(cv_matrix(0.1) @ x, cv_transition(ObjectState.from_array(x), 0.1).to_array())

    def test_process_noise_is_psd(self):
        Q = cv_process_noise(0.1)
        np.testing.assert_array_equal(Q, Q.T)
        assert np.linalg.eigvalsh(Q).min() > 0
        # white-noise acceleration block for x with unit std
        np.testing.assert_allclose(Q[np.ix_([0, 3], [0, 3])], [[1e-3 / 3, 5e-3], [5e-3, 0.1]])


class TestProjection:
    def test_optical_axis(self):
        z = project_to_measurement(state(0, 0, 10), CAM)
        assert (z.u_c, z.v_c, z.d) == (600.0, 180.0, 10.0)
        assert (z.w, z.h) == (50.0, 40.0)

    def test_lateral_offset(self):
        assert project_to_measurement(state(1, 0, 10), CAM).u_c == 670.0

    @pytest.mark.parametrize("z", [0.0, -5.0])
    def test_behind_camera(self, z):
        with pytest.raises(BehindCameraError):
            project_to_measurement(state(3, 4, z), CAM)

    @given(st.floats(-50, 50), st.floats(-10, 10), st.floats(0.5, 200))
    @settings(max_examples=200)
    def test_backprojection_inverts(self, x, y, z):
        p = backproject(project_to_measurement(state(x, y, z), CAM), CAM)
        np.testing.assert_allclose(p, [x, y, z], rtol=1e-9, atol=1e-9 * z)

    def test_array_projection_floors_depth(self):
        out = project_array(np.array([[1.0, 0, -1, 0, 0, 0, 5, 5]]), CAM)
        assert np.all(np.isfinite(out))
        assert out[0, 0] == 600.0 + 700.0 * 1.0 / 0.1


class TestDetections:
    def test_midpoints(self):
        z = detection_to_measurement(Detection(100, 100, 200, 200, 15))
        assert z.to_array().tolist() == [150, 150, 15, 100, 100]
        z = detection_to_measurement(Detection(0, 0, 2, 4, 1))
        assert z.to_array().tolist() == [1, 2, 1, 2, 4]

    def test_zero_width_box(self):
        with pytest.raises(ModelError):
            detection_to_measurement(Detection(10, 10, 10, 20, 5))

    @pytest.mark.parametrize("bad", [dict(d=0.0), dict(d=-1.0), dict(x_max=math.nan), dict(score=math.inf)])
    def test_invalid_detection(self, bad):
        kw = dict(x_min=0.0, y_min=0.0, x_max=10.0, y_max=10.0, d=5.0) | bad
        with pytest.raises(ModelError):
            Detection(**kw)

    @given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(1e-2, 1e3), st.floats(1e-2, 1e3))
    def test_corner_round_trip(self, x0, y0, w, h):
        det = Detection(x0, y0, x0 + w, y0 + h, 10.0)
        back = detection_to_measurement(det).corners()
        np.testing.assert_allclose(back, det.box, rtol=1e-12, atol=1e-9)

    def test_measurement_round_trip(self):
        m = MeasurementVector(1, 2, 3, 4, 5)
        assert MeasurementVector.from_array(m.to_array()) == m
        assert detection_to_measurement(m.to_detection()) == m


class TestStateValidation:
    @pytest.mark.parametrize("bad", [dict(w=0.0), dict(h=-1.0), dict(x=math.nan), dict(vz=math.inf)])
    def test_rejects(self, bad):
        kw = dict(x=0.0, y=0.0, z=10.0, vx=0.0, vy=0.0, vz=0.0, w=1.0, h=1.0) | bad
        with pytest.raises(ModelError):
            ObjectState(**kw)

    def test_wrong_length(self):
        with pytest.raises(ModelError):
            ObjectState.from_array(np.zeros(7))


class TestParams:
    def test_defaults_validate(self):
        p = ModelParams()
        p.validate()
        assert p.Q.shape == (8, 8) and p.R.shape == (5, 5)
        assert p.clutter_intensity == pytest.approx(p.lambda_clutter / p.clutter_region.volume)

    @pytest.mark.parametrize("bad", [dict(p_D=1.5), dict(p_S=-0.1), dict(lambda_clutter=-1.0), dict(dt=0.0)])
    def test_rejects_bad_scalars(self, bad):
        with pytest.raises(ModelError):
            ModelParams(**bad).validate()

    def test_rejects_indefinite_noise(self):
        with pytest.raises(ModelError):
            ModelParams(R=-np.eye(5)).validate()

    def test_region_volume(self):
        r = MeasurementRegion(u=(0, 2), v=(0, 3), d=(1, 2), w=(0, 1), h=(0, 5))
        assert r.volume == 30.0
        with pytest.raises(ModelError):
            MeasurementRegion(u=(1, 1))

    def test_birth_grid(self):
        b = default_birth_intensity(CameraModel(), total_rate=0.2)
        assert b.mass == pytest.approx(0.2)
        # every component projects inside the image at positive depth
        proj = project_array(b.means, CameraModel(), min_depth=0.0)
        assert np.all(b.means[:, 2] > 0)
        assert np.all((proj[:, 0] >= 0) & (proj[:, 0] <= 1242))
