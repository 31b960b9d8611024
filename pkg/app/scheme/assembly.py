"""
ES / AC スキームの Newton 線形系の組み立て

節点 j の未知数を (x_j, y_j, μ_j, κ_j) の順に並べ、方程式も節点ごとに
(ω = (φ_j, 0) の式, ω = (0, φ_j) の式, 移動度の式, 曲率の式) の順に並べる。
Dirichlet 条件で固定される y_0, y_J, κ_0, κ_J の未知数と方程式は取り除く。
"""
import logging
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np
import scipy.sparse as sp

from app.geometry.anisotropy import build_energy_matrix
from app.geometry.curve import edge_frames, rotate_ccw
from app.models.models import AnisotropyModel, NewtonSystem, SchemeConfig, SimulationState
from app.models.exceptions import DegenerateMeshError, LinearSolveError

logger = logging.getLogger(__name__)

# 節点ブロック内の位置（未知数・方程式共通）
X, Y, MU, KAPPA = 0, 1, 2, 3
BLOCK = 4

# 辺の長さが平均のこの割合を下回ったら退化とみなす
DEGENERATE_RATIO = 1e-12

# 反時計回り90°回転 Rot v = (−v_y, v_x)
_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class NewtonIterate:
    """Newton 反復の途中の値（曲線として妥当とは限らない）"""
    nodes: np.ndarray
    mu: np.ndarray
    kappa: np.ndarray

    @classmethod
    def from_state(cls, state: SimulationState) -> 'NewtonIterate':
        return cls(np.array(state.curve.nodes), np.array(state.mu), np.array(state.kappa))

    def stacked(self) -> np.ndarray:
        """節点ごとに (x, y, μ, κ) を並べた全未知数ベクトル"""
        return np.column_stack([self.nodes, self.mu, self.kappa]).ravel()

    @classmethod
    def from_stacked(cls, full: np.ndarray) -> 'NewtonIterate':
        block = np.asarray(full, dtype=float).reshape(-1, BLOCK)
        return cls(block[:, :2].copy(), block[:, MU].copy(), block[:, KAPPA].copy())


IterateLike = Union[SimulationState, NewtonIterate]


def _as_iterate(iterate: IterateLike) -> NewtonIterate:
    if isinstance(iterate, SimulationState):
        return NewtonIterate.from_state(iterate)
    return iterate


def active_dofs(J: int) -> np.ndarray:
    """Dirichlet 条件で固定されない全体番号"""
    fixed = [Y, KAPPA, BLOCK * J + Y, BLOCK * J + KAPPA]
    mask = np.ones(BLOCK * (J + 1), dtype=bool)
    mask[fixed] = False
    return np.flatnonzero(mask)


def check_mesh(lengths: np.ndarray):
    """最小辺長が平均辺長の 1e−12 倍未満なら DegenerateMeshError"""
    if lengths.min() < DEGENERATE_RATIO * lengths.mean():
        raise DegenerateMeshError(
            f"メッシュが退化しました: 最小辺長 {lengths.min():.3e}, 平均辺長 {lengths.mean():.3e}")


class _Triplets:
    """COO 形式の (行, 列, 値) を蓄積する"""

    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, node_row, eq, node_col, var, values):
        rows = BLOCK * np.asarray(node_row) + eq
        cols = BLOCK * np.asarray(node_col) + var
        rows, cols, values = np.broadcast_arrays(rows, cols, np.asarray(values, dtype=float))
        self.rows.append(rows.ravel())
        self.cols.append(cols.ravel())
        self.vals.append(values.ravel())

    def to_csr(self, n: int) -> sp.csr_matrix:
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        vals = np.concatenate(self.vals)
        return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _linearize(state: SimulationState, iterate: IterateLike, cfg: SchemeConfig,
               model: AnisotropyModel, area_conserving: bool) -> Tuple[np.ndarray, sp.csr_matrix]:
    """
    スキームの残差 F(U^i) とヤコビ行列 J(U^i) を全自由度で求める
    内積と弧長微分はすべて Γ^m で取る
    """
    it = _as_iterate(iterate)
    J = state.J
    if it.nodes.shape != (J + 1, 2) or it.mu.shape != (J + 1,) or it.kappa.shape != (J + 1,):
        raise ValueError(f"反復値の節点数が状態と一致しません: J={J}")

    frames = edge_frames(state.curve)
    L = frames.lengths
    check_mesh(L)
    n_old = frames.normals
    Dm = frames.tangents
    B = build_energy_matrix(model, cfg.stabilizer, frames.thetas, cfg.q)

    dt, eta, sigma = cfg.dt, cfg.eta, cfg.sigma
    eps2 = cfg.eps ** 2
    Xm = state.curve.nodes
    kappa_m = state.kappa
    Xi, mu, kappa = it.nodes, it.mu, it.kappa

    a = np.arange(J)
    b = a + 1
    D = (Xi[b] - Xi[a]) / L[:, None]
    dX = Xi - Xm
    if area_conserving:
        n_mix = 0.5 * (n_old + rotate_ccw(Xi[b] - Xi[a]) / L[:, None])
    else:
        n_mix = n_old

    F = np.zeros((J + 1, BLOCK))
    T = _Triplets()
    half_L = 0.5 * L

    # 移動度の式: ((X − X^m)/Δt·n, φ) + (∂_sμ, ∂_sφ)
    np.add.at(F[:, MU], a, half_L * np.sum(dX[a] * n_mix, axis=1) / dt)
    np.add.at(F[:, MU], b, half_L * np.sum(dX[b] * n_mix, axis=1) / dt)
    dmu = (mu[b] - mu[a]) / L
    np.add.at(F[:, MU], a, -dmu)
    np.add.at(F[:, MU], b, dmu)
    for d in (X, Y):
        T.add(a, MU, a, d, half_L * n_mix[:, d] / dt)
        T.add(b, MU, b, d, half_L * n_mix[:, d] / dt)
    T.add(a, MU, a, MU, 1.0 / L)
    T.add(a, MU, b, MU, -1.0 / L)
    T.add(b, MU, b, MU, 1.0 / L)
    T.add(b, MU, a, MU, -1.0 / L)
    if area_conserving:
        # ∂n^{m+1/2}/∂X_b = Rot/(2L)
        rot_t_a = dX[a] @ _ROT
        rot_t_b = dX[b] @ _ROT
        for d in (X, Y):
            T.add(a, MU, b, d, 0.25 * rot_t_a[:, d] / dt)
            T.add(a, MU, a, d, -0.25 * rot_t_a[:, d] / dt)
            T.add(b, MU, b, d, 0.25 * rot_t_b[:, d] / dt)
            T.add(b, MU, a, d, -0.25 * rot_t_b[:, d] / dt)

    # 化学ポテンシャルの式: (μ, n·ω) − (B∂_sX, ∂_sω) − ε²(∂_sκ n^m − ½κ²∂_sX, ∂_sω) + 接触線項
    BD = np.einsum('eij,ej->ei', B, D)
    dkappa = (kappa[b] - kappa[a]) / L
    ksq = 0.5 * (kappa[a] ** 2 + kappa[b] ** 2)
    flux = BD + eps2 * dkappa[:, None] * n_old - 0.5 * eps2 * ksq[:, None] * D
    for c in (X, Y):
        np.add.at(F[:, c], a, half_L * mu[a] * n_mix[:, c] + flux[:, c])
        np.add.at(F[:, c], b, half_L * mu[b] * n_mix[:, c] - flux[:, c])

        T.add(a, c, a, MU, half_L * n_mix[:, c])
        T.add(b, c, b, MU, half_L * n_mix[:, c])
        if area_conserving:
            for d in (X, Y):
                T.add(a, c, b, d, 0.25 * mu[a] * _ROT[c, d])
                T.add(a, c, a, d, -0.25 * mu[a] * _ROT[c, d])
                T.add(b, c, b, d, 0.25 * mu[b] * _ROT[c, d])
                T.add(b, c, a, d, -0.25 * mu[b] * _ROT[c, d])

        for d in (X, Y):
            dflux = B[:, c, d] / L - 0.5 * eps2 * ksq * (c == d) / L
            T.add(a, c, b, d, dflux)
            T.add(a, c, a, d, -dflux)
            T.add(b, c, b, d, -dflux)
            T.add(b, c, a, d, dflux)

        dflux_kb = eps2 * n_old[:, c] / L - 0.5 * eps2 * kappa[b] * D[:, c]
        dflux_ka = -eps2 * n_old[:, c] / L - 0.5 * eps2 * kappa[a] * D[:, c]
        T.add(a, c, b, KAPPA, dflux_kb)
        T.add(a, c, a, KAPPA, dflux_ka)
        T.add(b, c, b, KAPPA, -dflux_kb)
        T.add(b, c, a, KAPPA, -dflux_ka)

    F[0, X] += -dX[0, 0] / (eta * dt) - sigma
    F[J, X] += -dX[J, 0] / (eta * dt) + sigma
    T.add(0, X, 0, X, -1.0 / (eta * dt))
    T.add(J, X, J, X, -1.0 / (eta * dt))

    # 曲率の式: ((κ − κ^m)/Δt, φ) − (n^m·∂_s(X − X^m)/Δt, ∂_sφ) + ((∂_sX·∂_s(X − X^m))κ/Δt, φ)
    np.add.at(F[:, KAPPA], a, half_L * (kappa[a] - kappa_m[a]) / dt)
    np.add.at(F[:, KAPPA], b, half_L * (kappa[b] - kappa_m[b]) / dt)
    T.add(a, KAPPA, a, KAPPA, half_L / dt)
    T.add(b, KAPPA, b, KAPPA, half_L / dt)

    E = np.sum(n_old * (D - Dm), axis=1)
    np.add.at(F[:, KAPPA], a, E / dt)
    np.add.at(F[:, KAPPA], b, -E / dt)
    for d in (X, Y):
        dE = n_old[:, d] / (L * dt)
        T.add(a, KAPPA, b, d, dE)
        T.add(a, KAPPA, a, d, -dE)
        T.add(b, KAPPA, b, d, -dE)
        T.add(b, KAPPA, a, d, dE)

    g = np.sum(D * (D - Dm), axis=1)
    np.add.at(F[:, KAPPA], a, half_L * g * kappa[a] / dt)
    np.add.at(F[:, KAPPA], b, half_L * g * kappa[b] / dt)
    T.add(a, KAPPA, a, KAPPA, half_L * g / dt)
    T.add(b, KAPPA, b, KAPPA, half_L * g / dt)
    dg = 2.0 * D - Dm
    for d in (X, Y):
        T.add(a, KAPPA, b, d, 0.5 * kappa[a] * dg[:, d] / dt)
        T.add(a, KAPPA, a, d, -0.5 * kappa[a] * dg[:, d] / dt)
        T.add(b, KAPPA, b, d, 0.5 * kappa[b] * dg[:, d] / dt)
        T.add(b, KAPPA, a, d, -0.5 * kappa[b] * dg[:, d] / dt)

    return F.ravel(), T.to_csr(BLOCK * (J + 1))


def scheme_residual(state: SimulationState, iterate: IterateLike, cfg: SchemeConfig,
                    model: AnisotropyModel, area_conserving: bool = False) -> np.ndarray:
    """Dirichlet 行を除いたスキームの残差"""
    F, _ = _linearize(state, iterate, cfg, model, area_conserving)
    return F[active_dofs(state.J)]


def _assemble(state: SimulationState, iterate: IterateLike, cfg: SchemeConfig,
              model: AnisotropyModel, area_conserving: bool) -> NewtonSystem:
    F, jac = _linearize(state, iterate, cfg, model, area_conserving)
    U = _as_iterate(iterate).stacked()
    rhs_full = jac @ U - F
    active = active_dofs(state.J)
    matrix = jac[active][:, active].tocsr()
    rhs = rhs_full[active]
    if not (np.all(np.isfinite(matrix.data)) and np.all(np.isfinite(rhs))):
        raise LinearSolveError("Newton 系に有限でない値が含まれています")
    return NewtonSystem(matrix=matrix, rhs=rhs, active=active, J=state.J)


def assemble_es_newton(state: SimulationState, iterate: IterateLike, cfg: SchemeConfig,
                       model: AnisotropyModel) -> NewtonSystem:
    """
    ES スキームの Newton 線形系（解が次の反復値になる）

    Args:
        state: 前の時刻の状態（Γ^m, κ^m）
        iterate: 現在の反復値
        cfg: スキームの設定
        model: 異方性モデル

    Returns:
        NewtonSystem: 4J × 4J の疎行列と右辺
    """
    return _assemble(state, iterate, cfg, model, area_conserving=False)


def assemble_ac_newton(state: SimulationState, iterate: IterateLike, cfg: SchemeConfig,
                       model: AnisotropyModel) -> NewtonSystem:
    """AC スキームの Newton 線形系（速度・μ と法線の対に n^{m+1/2} を使う）"""
    return _assemble(state, iterate, cfg, model, area_conserving=True)


Assembler = Callable[[SimulationState, IterateLike, SchemeConfig, AnisotropyModel], NewtonSystem]


def assembler_for(cfg: SchemeConfig) -> Assembler:
    """設定されたスキームの組み立て関数"""
    return assemble_ac_newton if cfg.scheme == 'ac' else assemble_es_newton
