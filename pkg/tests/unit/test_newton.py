import pytest
import numpy as np
import scipy.sparse as sp
from dataclasses import replace

from app.analysis.diagnostics import discrete_energy
from app.geometry.anisotropy import compute_S0
from app.geometry.curve import init_semi_ellipse
from app.models.models import AnisotropyModel, NewtonSystem
from app.models.exceptions import NonConvergenceError
from app.scheme.assembly import active_dofs
from app.scheme.newton import initial_state, newton_step, run


def _identity_assembler(state, iterate, cfg, model):
    """現在の反復値をそのまま解とする線形系"""
    active = active_dofs(state.J)
    return NewtonSystem(matrix=sp.identity(active.size, format='csr'), rhs=iterate.stacked()[active],
                        active=active, J=state.J)


class TestNewtonStep:
    """Newton 内部反復のテスト"""

    def test_fixed_point_converges_in_one_iteration(self, small_state, isotropic_config, isotropic_model):
        state, iterations = newton_step(small_state, isotropic_config, isotropic_model, _identity_assembler)
        assert iterations == 1
        assert state.t == pytest.approx(isotropic_config.dt)
        np.testing.assert_array_equal(state.curve.nodes, small_state.curve.nodes)

    def test_converges(self, small_state, isotropic_config, isotropic_model):
        state, iterations = newton_step(small_state, isotropic_config, isotropic_model)
        assert 1 <= iterations <= isotropic_config.newton_max
        assert state.J == small_state.J

    def test_boundary_values_are_exact(self, small_state, isotropic_config, isotropic_model):
        """y_0, y_J, κ_0, κ_J は厳密に0のまま"""
        state, _ = newton_step(small_state, isotropic_config, isotropic_model)
        assert state.curve.y[0] == 0.0
        assert state.curve.y[-1] == 0.0
        assert state.kappa[0] == 0.0
        assert state.kappa[-1] == 0.0

    def test_non_convergence(self, small_state, isotropic_config, isotropic_model):
        cfg = replace(isotropic_config, newton_max=1, newton_tol=1e-30)
        with pytest.raises(NonConvergenceError) as exc_info:
            newton_step(small_state, cfg, isotropic_model)
        assert exc_info.value.iterations == 1
        assert exc_info.value.last_update > 0

    def test_initial_state(self, small_ellipse):
        state = initial_state(small_ellipse)
        assert state.t == 0.0
        np.testing.assert_array_equal(state.mu, 0.0)
        assert state.kappa[0] == state.kappa[-1] == 0.0

        given = np.zeros(small_ellipse.J + 1)
        np.testing.assert_array_equal(initial_state(small_ellipse, given).kappa, given)


class TestRun:
    """時間発展ループのテスト"""

    def test_zero_end_time_returns_initial(self, small_state, isotropic_config, isotropic_model):
        result = run(isotropic_config, isotropic_model, small_state, 0.0)
        assert result.final_state is small_state
        assert result.steps == 0
        assert len(result.records) == 1
        assert result.records[0].energy_ratio == 1.0
        assert result.snapshots == [(0, small_state)]
        assert result.previous_state is None

    def test_negative_end_time(self, small_state, isotropic_config, isotropic_model):
        with pytest.raises(ValueError):
            run(isotropic_config, isotropic_model, small_state, -1.0)

    def test_accepts_curve(self, small_ellipse, isotropic_config, isotropic_model):
        result = run(isotropic_config, isotropic_model, small_ellipse, 2 * isotropic_config.dt)
        assert result.steps == 2
        assert result.final_state.t == pytest.approx(0.02)

    def test_observers_and_snapshots(self, small_state, isotropic_config, isotropic_model):
        seen = []
        result = run(isotropic_config, isotropic_model, small_state, 5 * isotropic_config.dt,
                     observers=[lambda state, record: seen.append(record.t)], snapshot_stride=2)
        assert result.steps == 5
        assert len(seen) == 6
        assert [step for step, _ in result.snapshots] == [0, 2, 4, 5]
        assert result.previous_state.t == pytest.approx(0.04)

    def test_isotropic_energy_decreases(self, small_state, isotropic_config, isotropic_model):
        result = run(isotropic_config, isotropic_model, small_state, 10 * isotropic_config.dt)
        assert result.is_energy_monotone
        assert result.records[-1].energy < result.records[0].energy

    def test_weak_anisotropy_energy_decreases(self, small_state, isotropic_config):
        """S_0 を使えば弱い異方性でもエネルギーが増えない"""
        model = AnisotropyModel(k=4, beta=0.05)
        cfg = replace(isotropic_config, stabilizer=compute_S0(model, 1, 256, 256))
        result = run(cfg, model, small_state, 10 * cfg.dt)
        assert result.is_energy_monotone
        assert result.records[-1].energy == pytest.approx(discrete_energy(result.final_state, model, cfg))

    def test_area_conserving_scheme(self, small_state, isotropic_config, isotropic_model):
        cfg = replace(isotropic_config, scheme='ac')
        result = run(cfg, isotropic_model, small_state, 10 * cfg.dt)
        area0 = result.records[0].area
        drift = max(abs(r.area_drift) for r in result.records)
        assert drift <= 1e-6 * area0

    def test_pinch_stops_run(self, small_state, isotropic_config, isotropic_model):
        """閾値が大きければ最初のステップでピンチオフとして停止する"""
        result = run(isotropic_config, isotropic_model, small_state, 1.0, pinch_delta=10.0)
        assert result.pinch_event is not None
        assert result.steps == 1
        assert result.pinch_event.t == pytest.approx(isotropic_config.dt)
        assert result.snapshots[-1][0] == 1

    def test_initial_kappa(self, isotropic_config, isotropic_model):
        curve = init_semi_ellipse(1.0, 0.5, 0.0, 16)
        result = run(isotropic_config, isotropic_model, curve, 0.0, initial_kappa=np.zeros(17))
        np.testing.assert_array_equal(result.final_state.kappa, 0.0)
