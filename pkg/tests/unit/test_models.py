import pytest
import numpy as np

from app.models.models import (
    AnisotropyModel, StabilizingFunction, OpenCurve, SimulationState, SchemeConfig,
    DiagnosticsRecord, DIAGNOSTICS_COLUMNS, ConvergenceRow, PinchEvent, SimulationResult,
)
from app.models.exceptions import ConfigError, GeometryError


def _record(t, energy, **overrides):
    values = dict(t=t, energy=energy, energy_ratio=energy / 2.0, area=1.0, area_drift=0.0, mesh_ratio=1.0,
                  x_left=-1.0, x_right=1.0, theta_left=1.0, theta_right=1.0, young_left=0.0, young_right=0.0)
    values.update(overrides)
    return DiagnosticsRecord(**values)


class TestAnisotropyModel:
    """AnisotropyModelのテスト"""

    def test_valid_model(self):
        model = AnisotropyModel(k=4, beta=0.1)
        assert model.k == 4
        assert model.beta == 0.1
        assert not model.is_isotropic
        assert model.weak_threshold == pytest.approx(1.0 / 15)

    def test_beta_at_least_one_rejected(self):
        """β ≥ 1 ではγが正にならないため拒否されるかテスト"""
        with pytest.raises(ConfigError):
            AnisotropyModel(k=2, beta=1.5)
        with pytest.raises(ConfigError):
            AnisotropyModel(k=2, beta=1.0)

    def test_invalid_k_rejected(self):
        with pytest.raises(ConfigError):
            AnisotropyModel(k=0, beta=0.1)
        with pytest.raises(ConfigError):
            AnisotropyModel(k=2, beta=-0.1)

    def test_from_dict(self):
        """辞書からの変換（kfold の別名を含む）をテスト"""
        assert AnisotropyModel.from_dict({'k': 2, 'beta': '0.5'}) == AnisotropyModel(k=2, beta=0.5)
        assert AnisotropyModel.from_dict({'kfold': 4, 'beta': 0.1}) == AnisotropyModel(k=4, beta=0.1)

    def test_from_dict_invalid(self):
        with pytest.raises(ConfigError):
            AnisotropyModel.from_dict({'k': 'abc', 'beta': 0.1})


class TestStabilizingFunction:
    """StabilizingFunctionのテスト"""

    def test_constant(self):
        S = StabilizingFunction.constant(0.7, grid_size=32)
        assert S.grid_size == 32
        assert S.max_value == 0.7
        np.testing.assert_allclose(S(np.array([-3.0, 0.0, 2.5])), 0.7)

    def test_negative_values_rejected(self):
        with pytest.raises(ConfigError):
            StabilizingFunction([1.0, -0.5, 1.0])

    def test_periodic_interpolation(self):
        """区分線形補間が周期2πで評価されるかテスト"""
        thetas = np.linspace(-np.pi, np.pi, 65)
        S = StabilizingFunction(1.0 + np.cos(thetas))
        assert S(0.0) == pytest.approx(2.0)
        assert S(2 * np.pi) == pytest.approx(2.0)
        assert S(np.pi + 0.1) == pytest.approx(S(-np.pi + 0.1))

    def test_mismatched_endpoints_averaged(self):
        S = StabilizingFunction([1.0, 2.0, 3.0])
        assert S.values[0] == S.values[-1] == 2.0

    def test_values_are_read_only(self):
        S = StabilizingFunction.constant(1.0, 8)
        with pytest.raises(ValueError):
            S.values[0] = 5.0


class TestOpenCurve:
    """OpenCurveのテスト"""

    def test_valid_curve(self):
        curve = OpenCurve([[0, 0], [0, 1], [1, 1], [1, 0]])
        assert curve.J == 3
        assert curve.perimeter == pytest.approx(3.0)
        assert curve.contact_points == (0.0, 1.0)
        np.testing.assert_allclose(curve.edge_lengths, [1, 1, 1])

    def test_endpoints_off_substrate(self):
        with pytest.raises(GeometryError):
            OpenCurve([[0, 0.1], [0, 1], [1, 1], [1, 0]])

    def test_endpoint_rounding_snapped(self):
        curve = OpenCurve([[0, 1e-16], [0, 1], [1, 1], [1, -1e-16]])
        assert curve.y[0] == 0.0
        assert curve.y[-1] == 0.0

    def test_contact_point_order(self):
        with pytest.raises(GeometryError):
            OpenCurve([[1, 0], [1, 1], [0, 1], [0, 0]])

    def test_too_few_nodes(self):
        with pytest.raises(GeometryError):
            OpenCurve([[0, 0], [0.5, 1], [1, 0]])

    def test_zero_length_edge(self):
        with pytest.raises(GeometryError):
            OpenCurve([[0, 0], [0, 1], [0, 1], [1, 0]])

    def test_non_finite(self):
        with pytest.raises(GeometryError):
            OpenCurve([[0, 0], [0, np.nan], [1, 1], [1, 0]])

    def test_translated(self):
        curve = OpenCurve([[0, 0], [0, 1], [1, 1], [1, 0]]).translated(2.0)
        assert curve.contact_points == (2.0, 3.0)
        np.testing.assert_allclose(curve.y, [0, 1, 1, 0])


class TestSimulationState:
    """SimulationStateのテスト"""

    @pytest.fixture
    def curve(self):
        return OpenCurve([[0, 0], [0, 1], [1, 1], [1, 0]])

    def test_valid_state(self, curve):
        state = SimulationState(t=0, curve=curve, kappa=[0, 1, 1, 0], mu=np.zeros(4))
        assert state.J == 3
        assert state.t == 0.0

    def test_nonzero_endpoint_curvature(self, curve):
        with pytest.raises(GeometryError):
            SimulationState(t=0, curve=curve, kappa=[0.5, 1, 1, 0], mu=np.zeros(4))

    def test_length_mismatch(self, curve):
        with pytest.raises(GeometryError):
            SimulationState(t=0, curve=curve, kappa=[0, 1, 0], mu=np.zeros(4))


class TestSchemeConfig:
    """SchemeConfigのテスト"""

    @pytest.fixture
    def stabilizer(self):
        return StabilizingFunction.constant(0.0, 8)

    def test_defaults(self, stabilizer):
        cfg = SchemeConfig(stabilizer=stabilizer)
        assert cfg.scheme == 'es'
        assert cfg.q == 1
        assert cfg.dt == 5.0 / 128
        assert cfg.eta == 100.0
        assert cfg.sigma == -0.6
        assert cfg.newton_tol == 1e-8
        assert cfg.newton_max == 50

    def test_scheme_normalized(self, stabilizer):
        assert SchemeConfig(stabilizer=stabilizer, scheme='AC').scheme == 'ac'

    @pytest.mark.parametrize('overrides', [
        {'scheme': 'bgn'},
        {'q': 2},
        {'dt': 0.0},
        {'eta': -1.0},
        {'eps': -0.01},
        {'newton_tol': 0.0},
        {'newton_max': 0},
        {'step_scale': 1.5},
    ])
    def test_invalid_values(self, stabilizer, overrides):
        with pytest.raises(ConfigError):
            SchemeConfig(stabilizer=stabilizer, **overrides)


class TestRecords:
    """DiagnosticsRecord・ConvergenceRow・PinchEventのテスト"""

    def test_diagnostics_to_dict_column_order(self):
        record = _record(0.5, 2.0, newton_iters=3)
        assert list(record.to_dict().keys()) == DIAGNOSTICS_COLUMNS

    def test_diagnostics_from_dict(self):
        data = {name: '1.5' for name in DIAGNOSTICS_COLUMNS}
        data['newton_iters'] = '4'
        record = DiagnosticsRecord.from_dict(data)
        assert record.t == 1.5
        assert record.newton_iters == 4

    def test_diagnostics_from_dict_missing_field(self):
        with pytest.raises(KeyError):
            DiagnosticsRecord.from_dict({'t': 0.0})

    def test_convergence_row_without_order(self):
        row = ConvergenceRow(J=32, dt=0.01, error=1e-3)
        assert np.isnan(row.to_dict()['order'])

    def test_pinch_event_to_dict(self):
        assert PinchEvent(node_index=5, t=1.25, y_value=1e-4).to_dict() == {
            't': 1.25, 'node_index': 5, 'y_value': 1e-4, 'refused': False}


class TestSimulationResult:
    """SimulationResultのテスト"""

    @pytest.fixture
    def state(self):
        curve = OpenCurve([[0, 0], [0, 1], [1, 1], [1, 0]])
        return SimulationState(t=0, curve=curve, kappa=np.zeros(4), mu=np.zeros(4))

    def test_monotone_energy(self, state):
        result = SimulationResult(final_state=state, records=[_record(0, 2.0), _record(1, 1.9), _record(2, 1.9)])
        assert result.is_energy_monotone
        np.testing.assert_allclose(result.energy_history, [2.0, 1.9, 1.9])

    def test_energy_increase_detected(self, state):
        result = SimulationResult(final_state=state, records=[_record(0, 2.0), _record(1, 2.0 + 1e-6)])
        assert not result.is_energy_monotone

    def test_increase_within_tolerance(self, state):
        result = SimulationResult(final_state=state, records=[_record(0, 2.0), _record(1, 2.0 + 1e-11)])
        assert result.is_energy_monotone
