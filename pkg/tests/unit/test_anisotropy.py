import pytest
import numpy as np

from app.geometry.anisotropy import (
    gamma, classify, build_energy_matrix, split_B1, rotation_block, compute_S0, stability_margins,
    verify_stability, check_key_inequality, young_residual, interpolation_envelope, ISOTROPIC, WEAK, STRONG,
)
from app.models.models import AnisotropyModel, StabilizingFunction
from app.models.exceptions import GeometryError, StabilizerError

GRID = 256


@pytest.fixture(scope='module')
def strong_model():
    return AnisotropyModel(k=2, beta=0.5)


@pytest.fixture(scope='module')
def strong_s0(strong_model):
    """k=2, β=1/2, q=1 の S_0（256 格子）"""
    return compute_S0(strong_model, 1, GRID, GRID)


@pytest.fixture(scope='module')
def strong_s0_q0(strong_model):
    """k=2, β=1/2, q=0 の S_0（256 格子）"""
    return compute_S0(strong_model, 0, GRID, GRID)


class TestGamma:
    """γ(θ) とその導関数のテスト"""

    def test_values(self):
        model = AnisotropyModel(k=2, beta=0.5)
        assert gamma(model, 0.0) == pytest.approx(1.5)
        assert gamma(model, np.pi / 2) == pytest.approx(0.5)
        assert gamma(model, np.pi / 4, 1) == pytest.approx(-1.0)
        assert gamma(model, 0.0, 2) == pytest.approx(-2.0)

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            gamma(AnisotropyModel(), 0.0, 3)

    @pytest.mark.parametrize('k, beta, expected', [
        (2, 0.0, ISOTROPIC),
        (2, 1.0 / 3, WEAK),
        (2, 0.5, STRONG),
        (4, 0.05, WEAK),
        (4, 0.1, STRONG),
    ])
    def test_classify(self, k, beta, expected):
        assert classify(AnisotropyModel(k=k, beta=beta)) == expected


class TestEnergyMatrix:
    """エネルギー行列 B_q(θ) のテスト"""

    def test_isotropic_q1_is_identity(self, isotropic_model):
        B = build_energy_matrix(isotropic_model, 0.0, np.linspace(-3, 3, 7), 1)
        np.testing.assert_allclose(B, np.broadcast_to(np.eye(2), (7, 2, 2)), atol=1e-15)

    def test_isotropic_q0_is_reflection(self, isotropic_model):
        theta = np.array([0.0, 0.3, -1.2])
        B = build_energy_matrix(isotropic_model, 0.0, theta, 0)
        np.testing.assert_allclose(B, rotation_block(theta), atol=1e-15)
        np.testing.assert_allclose(B[0], [[1, 0], [0, -1]], atol=1e-15)

    def test_tangent_image(self, strong_model):
        """B_1(θ)τ = γτ + γ'n（安定化項は接線に作用しない）"""
        theta = np.linspace(-np.pi, np.pi, 13)
        tau = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        normal = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
        B = build_energy_matrix(strong_model, 3.0, theta, 1)
        image = np.einsum('eij,ej->ei', B, tau)
        expected = gamma(strong_model, theta)[:, None] * tau + gamma(strong_model, theta, 1)[:, None] * normal
        np.testing.assert_allclose(image, expected, atol=1e-14)

    def test_stabilizer_acts_on_normal(self, strong_model):
        theta = np.array([0.4])
        normal = np.array([[-np.sin(0.4), np.cos(0.4)]])
        B_without = build_energy_matrix(strong_model, 0.0, theta, 1)
        B_with = build_energy_matrix(strong_model, 2.0, theta, 1)
        diff = np.einsum('eij,ej->ei', B_with - B_without, normal)
        np.testing.assert_allclose(diff, 2.0 * normal, atol=1e-14)

    def test_split_B1(self, strong_model):
        theta = np.linspace(-2, 2, 5)
        S = StabilizingFunction.constant(0.8, 64)
        symmetric, antisymmetric = split_B1(strong_model, S, theta)
        np.testing.assert_allclose(symmetric + antisymmetric, build_energy_matrix(strong_model, S, theta, 1), atol=1e-14)
        np.testing.assert_allclose(symmetric, np.swapaxes(symmetric, -1, -2))
        np.testing.assert_allclose(antisymmetric, -np.swapaxes(antisymmetric, -1, -2))

    def test_q0_matrix_is_symmetric(self):
        """異方性があっても B_0(θ) は対称"""
        model = AnisotropyModel(k=4, beta=0.1)
        theta = np.linspace(-np.pi, np.pi, 101)
        B = build_energy_matrix(model, 0.7, theta, 0)
        np.testing.assert_allclose(B, np.swapaxes(B, -1, -2), atol=1e-15)

    def test_q0_matrix_positive_with_minimal_stabilizer(self, strong_model, strong_s0_q0):
        """S ≥ S_0 なら格子点の間の θ でも B_0(θ) の固有値は非負"""
        theta = np.random.default_rng(3).uniform(-np.pi, np.pi, 2000)
        B = build_energy_matrix(strong_model, strong_s0_q0, theta, 0)
        assert np.linalg.eigvalsh(B).min() >= 0.0

    def test_invalid_q(self, strong_model):
        with pytest.raises(ValueError):
            build_energy_matrix(strong_model, 0.0, 0.0, 2)


class TestMinimalStabilizer:
    """最小安定化関数 S_0 のテスト"""

    def test_isotropic_q1_is_zero(self, isotropic_model):
        S0 = compute_S0(isotropic_model, 1, GRID, GRID)
        assert S0.grid_size == GRID
        np.testing.assert_allclose(S0.values, 0.0, atol=1e-12)

    def test_isotropic_q0_is_two(self, isotropic_model):
        S0 = compute_S0(isotropic_model, 0, GRID, GRID)
        np.testing.assert_allclose(S0.values, 2.0, atol=1e-6)

    @pytest.mark.parametrize('k, beta', [(2, 0.5), (4, 0.1)])
    def test_q0_table(self, k, beta):
        """q=0 の S_0 も計算でき、格子上で不等式を満たす"""
        model = AnisotropyModel(k=k, beta=beta)
        S0 = compute_S0(model, 0, GRID, GRID)
        assert S0.grid_size == GRID
        assert np.all(np.isfinite(S0.values))
        assert verify_stability(model, S0, 0, GRID).holds

    def test_odd_k_rejected_for_q0(self):
        with pytest.raises(StabilizerError):
            compute_S0(AnisotropyModel(k=3, beta=0.1), 0, GRID, GRID)

    def test_small_grid_rejected(self, isotropic_model):
        with pytest.raises(StabilizerError):
            compute_S0(isotropic_model, 1, 64, 64)

    def test_deterministic(self, strong_model, strong_s0):
        again = compute_S0(strong_model, 1, GRID, GRID)
        np.testing.assert_array_equal(again.values, strong_s0.values)

    def test_symmetry(self, strong_s0):
        """γ が偶関数なので S_0(θ) = S_0(−θ)"""
        np.testing.assert_allclose(strong_s0.values, strong_s0.values[::-1], atol=1e-8)

    def test_stability_holds(self, strong_model, strong_s0):
        check = verify_stability(strong_model, strong_s0, 1, GRID)
        assert check.holds
        assert check.worst_margin >= -1e-9

    def test_stability_holds_on_sublattice(self, strong_model, strong_s0):
        assert verify_stability(strong_model, strong_s0, 1, GRID // 2).holds

    def test_reduced_stabilizer_fails(self, strong_model, strong_s0):
        """0.95·S_0 は S_0 が十分大きい θ で不等式を破る（表は格子点でほぼ最小）"""
        assert not verify_stability(strong_model, strong_s0.scaled(0.95), 1, GRID).holds

        lattice, margins = stability_margins(strong_model, strong_s0.scaled(0.95), 1, GRID, refine=True)
        positive = strong_s0(lattice) > 0.05 * strong_s0.max_value
        assert positive.any()
        assert np.all(margins[positive] < 0)

    def test_zero_stabilizer_fails_for_strong(self, strong_model):
        assert not verify_stability(strong_model, 0.0, 1, 128).holds

    def test_isotropic_q0_examples(self, isotropic_model):
        """等方的な q=0 では S≡2 で成立し S≡1.9 で破れる"""
        assert verify_stability(isotropic_model, 2.0, 0, 128).holds
        check = verify_stability(isotropic_model, 1.9, 0, 128)
        assert not check.holds
        assert check.worst_margin == pytest.approx(-0.1, abs=1e-3)


class TestTableBetweenGridAngles:
    """表の格子点の間の θ での安定化不等式のテスト"""

    @pytest.mark.parametrize('grid_size', [250, 384, 500])
    def test_strong_q1_on_other_grids(self, strong_model, strong_s0, grid_size):
        assert verify_stability(strong_model, strong_s0, 1, grid_size).holds

    @pytest.mark.parametrize('grid_size', [250, 500])
    def test_strong_q0_on_other_grids(self, strong_model, strong_s0_q0, grid_size):
        assert verify_stability(strong_model, strong_s0_q0, 0, grid_size).holds

    @pytest.mark.parametrize('q', [0, 1])
    def test_four_fold_on_other_grid(self, q):
        model = AnisotropyModel(k=4, beta=0.1)
        S0 = compute_S0(model, q, GRID, GRID)
        assert verify_stability(model, S0, q, 500).holds

    def test_envelope_keeps_convex_values(self):
        """線形補間が下回らない凸な標本では節点値を変えない"""
        theta = np.linspace(-np.pi, np.pi, 4 * 64 + 1)[:-1]
        samples = np.maximum(np.abs(theta) - 1.0, 0.0)
        nodes = interpolation_envelope(samples)
        np.testing.assert_allclose(nodes, samples[::4], atol=1e-13)

    def test_envelope_covers_concave_cells(self):
        """凹な標本では節点値の線形補間が区間内の全標本以上になる"""
        theta = np.linspace(-np.pi, np.pi, 4 * 32 + 1)[:-1]
        samples = 2.0 + np.cos(2 * theta)
        nodes = interpolation_envelope(samples)
        fine = np.linspace(-np.pi, np.pi, 4001)
        table = StabilizingFunction(np.append(nodes, nodes[0]))
        assert np.all(table(fine) >= 2.0 + np.cos(2 * fine))
        assert np.all(nodes >= samples[::4])
        assert np.max(nodes - samples[::4]) < 0.05


class TestKeyInequality:
    """エネルギー安定性の鍵となる不等式のテスト"""

    def test_random_pairs(self, strong_model, strong_s0):
        """格子点に限らない一様乱数の角度の組で余裕が非負"""
        rng = np.random.default_rng(20240601)
        n = 5000
        theta_v = rng.uniform(-np.pi, np.pi, n)
        theta_w = rng.uniform(-np.pi, np.pi, n)
        len_v = rng.uniform(0.01, 2.0, n)
        len_w = rng.uniform(0.01, 2.0, n)
        v = len_v[:, None] * np.stack([np.cos(theta_v), np.sin(theta_v)], axis=-1)
        w = len_w[:, None] * np.stack([np.cos(theta_w), np.sin(theta_w)], axis=-1)

        margin = check_key_inequality(strong_model, strong_s0, v, w)
        assert np.all(margin >= -1e-9 * (len_v + len_w))

    def test_random_pairs_q0_table(self, strong_model, strong_s0_q0):
        """q=0 の S_0 でも格子点の間の角度の組で安定化条件を満たす"""
        theta = np.random.default_rng(11).uniform(-np.pi, np.pi, 5000)
        tau_hat = np.random.default_rng(12).uniform(-np.pi, np.pi, 5000)
        B = build_energy_matrix(strong_model, strong_s0_q0, theta, 0)
        w = np.stack([np.cos(tau_hat), np.sin(tau_hat)], axis=-1)
        form = np.einsum('ei,eij,ej->e', w, B, w)
        assert np.all(gamma(strong_model, theta) * form >= gamma(strong_model, tau_hat) ** 2 - 1e-9)

    def test_equal_vectors(self, strong_model, strong_s0):
        v = np.array([0.3, 0.4])
        assert check_key_inequality(strong_model, strong_s0, v, v) == pytest.approx(0.0, abs=1e-14)

    def test_zero_vector(self, strong_model, strong_s0):
        with pytest.raises(GeometryError):
            check_key_inequality(strong_model, strong_s0, [0.0, 0.0], [1.0, 0.0])


class TestYoungResidual:
    """Young 方程式の残差のテスト"""

    def test_isotropic_equilibrium_angle(self, isotropic_model):
        theta = np.arccos(-0.6)
        assert young_residual(isotropic_model, theta, -0.6) == pytest.approx(0.0, abs=1e-15)

    def test_regularization_term(self, isotropic_model):
        residual = young_residual(isotropic_model, np.pi / 2, 0.0, eps=0.1, ds_kappa=2.0)
        assert residual == pytest.approx(-0.02)
