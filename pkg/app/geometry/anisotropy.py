"""
表面エネルギー密度 γ(θ)、エネルギー行列 B_q(θ)、安定化関数 S(θ) と Young 方程式の評価
"""
import logging
from typing import Callable, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy import optimize

from app.models.models import AnisotropyModel, StabilizingFunction
from app.models.exceptions import GeometryError, StabilizerError

logger = logging.getLogger(__name__)

ISOTROPIC = 'isotropic'
WEAK = 'weak'
STRONG = 'strong'

# 二分法で実行可能とみなす余裕（θ̂ = θ の格子点では余裕が丸め誤差の範囲で0になる）
FEASIBILITY_TOL = 1e-13
# verify_stability の判定しきい値
STABILITY_TOL = 1e-9
# 必要αの比を評価する最小の sin²(θ−θ̂)
_MIN_SIN2 = 1e-8
# S_0 の表の1区間あたりの標本数
SUBSAMPLES = 4
# θ ごとに連続的に詰め直す θ̂ の局所最大の数
REFINED_CANDIDATES = 3

StabilizerLike = Union[StabilizingFunction, Callable, float, np.ndarray]


class StabilityCheck(NamedTuple):
    """安定性不等式の格子検証結果"""
    holds: bool
    worst_margin: float
    worst_pair: Tuple[float, float]


def gamma(model: AnisotropyModel, theta, order: int = 0):
    """
    k回対称の表面エネルギー密度とその導関数

    Args:
        model: 異方性モデル
        theta: 角度（スカラーまたは配列）
        order: 0 で γ、1 で γ'、2 で γ''

    Returns:
        θ と同じ形状の値
    """
    theta = np.asarray(theta, dtype=float)
    k, beta = model.k, model.beta
    if order == 0:
        return 1.0 + beta * np.cos(k * theta)
    if order == 1:
        return -k * beta * np.sin(k * theta)
    if order == 2:
        return -k * k * beta * np.cos(k * theta)
    raise ValueError(f"orderは0, 1, 2のいずれかです: {order}")


def classify(model: AnisotropyModel) -> str:
    """等方・弱い異方性・強い異方性の分類（境界 β = 1/(k²−1) は弱い異方性）"""
    if model.beta == 0:
        return ISOTROPIC
    if model.beta <= model.weak_threshold:
        return WEAK
    return STRONG


def _stabilizer_values(S: StabilizerLike, theta) -> np.ndarray:
    if isinstance(S, StabilizingFunction) or callable(S):
        return np.asarray(S(theta), dtype=float)
    return np.broadcast_to(np.asarray(S, dtype=float), np.shape(theta)).astype(float)


def rotation_block(theta) -> np.ndarray:
    """R(θ) = [[cos2θ, sin2θ], [sin2θ, −cos2θ]]（形状 (..., 2, 2)）"""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return np.stack([np.stack([c, s], axis=-1), np.stack([s, -c], axis=-1)], axis=-2)


def _gamma_block(model: AnisotropyModel, theta) -> np.ndarray:
    g, gp = gamma(model, theta), gamma(model, theta, 1)
    return np.stack([np.stack([g, -gp], axis=-1), np.stack([gp, g], axis=-1)], axis=-2)


def _normal_projector(theta) -> np.ndarray:
    """(I − R(θ))/2 = n nᵀ"""
    return 0.5 * (np.eye(2) - rotation_block(theta))


def build_energy_matrix(model: AnisotropyModel, S: StabilizerLike, theta, q: int) -> np.ndarray:
    """
    エネルギー行列 B_q(θ) = G(θ)R(θ)^{1−q} + S(θ)(I − R(θ))/2

    Args:
        model: 異方性モデル
        S: 安定化関数（StabilizingFunction、呼び出し可能オブジェクト、または定数）
        theta: 角度（スカラーまたは配列）
        q: 0 または 1

    Returns:
        np.ndarray: 形状 (..., 2, 2)
    """
    if q not in (0, 1):
        raise ValueError(f"qは0または1です: {q}")
    G = _gamma_block(model, theta)
    if q == 0:
        G = G @ rotation_block(theta)
    s = _stabilizer_values(S, theta)
    return G + s[..., None, None] * _normal_projector(theta)


def split_B1(model: AnisotropyModel, S: StabilizerLike, theta) -> Tuple[np.ndarray, np.ndarray]:
    """B_1(θ) を対称正定値部分と反対称部分に分ける"""
    theta = np.asarray(theta, dtype=float)
    g, gp = gamma(model, theta), gamma(model, theta, 1)
    s = _stabilizer_values(S, theta)
    symmetric = g[..., None, None] * np.eye(2) + s[..., None, None] * _normal_projector(theta)
    zero = np.zeros_like(gp)
    antisymmetric = np.stack([np.stack([zero, -gp], axis=-1), np.stack([gp, zero], axis=-1)], axis=-2)
    return symmetric, antisymmetric


def _check_preconditions(model: AnisotropyModel, q: int, thetas: np.ndarray):
    g = gamma(model, thetas)
    g_opposite = gamma(model, thetas + np.pi)
    if q == 0:
        gap = float(np.max(np.abs(g - g_opposite)))
        if gap > 1e-12:
            raise StabilizerError(f"q=0 では γ(θ) = γ(π+θ) が必要です（k={model.k}, 最大差 {gap:.3e}）")
    elif np.any(3.0 * g <= g_opposite):
        raise StabilizerError(f"q=1 では 3γ(θ) > γ(π+θ) が必要です（k={model.k}, β={model.beta}）")


def _pair_margin(model: AnisotropyModel, q: int, theta, theta_hat, alpha) -> np.ndarray:
    """
    (θ, θ̂) ごとの安定化不等式の余裕
    q=0: γ(θ)(B_0(θ;α)τ̂)·τ̂ − γ(θ̂)²
    q=1: P_α(θ, θ̂) − Q(θ, θ̂)
    """
    theta = np.asarray(theta, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    g = gamma(model, theta)
    g_hat = gamma(model, theta_hat)
    if q == 0:
        B = build_energy_matrix(model, alpha, theta, 0)
        tau_hat = np.stack([np.cos(theta_hat), np.sin(theta_hat)], axis=-1)
        form = np.einsum('...i,...ij,...j->...', tau_hat, B, tau_hat)
        return g * form - g_hat ** 2
    sin_d = np.sin(theta - theta_hat)
    P = 2.0 * np.sqrt((g + alpha * sin_d ** 2) * g)
    Q = g_hat + g * np.cos(theta - theta_hat) + gamma(model, theta, 1) * sin_d
    return P - Q


def _required_alpha(model: AnisotropyModel, q: int, theta, theta_hat) -> np.ndarray:
    """(θ, θ̂) の組で不等式を満たす最小のα（θ̂ ≈ θ では −inf）"""
    theta = np.asarray(theta, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    sin2 = np.sin(theta - theta_hat) ** 2
    base = _pair_margin(model, q, theta, theta_hat, 0.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        if q == 0:
            ratio = -base / (gamma(model, theta) * sin2)
        else:
            g = gamma(model, theta)
            sin_d = np.sin(theta - theta_hat)
            Q = gamma(model, theta_hat) + g * np.cos(theta - theta_hat) + gamma(model, theta, 1) * sin_d
            ratio = np.where(Q > 0, (Q ** 2 / (4.0 * g) - g) / sin2, -np.inf)
    return np.where(sin2 > _MIN_SIN2, ratio, -np.inf)


def _refined_worst_hats(model: AnisotropyModel, q: int, rows: np.ndarray, hats: np.ndarray,
                        candidates: int = REFINED_CANDIDATES) -> np.ndarray:
    """
    格子上で厳しい θ̂ の局所最大を上位 candidates 個まで連続的に詰め直す

    Returns:
        np.ndarray: 形状 (len(rows), candidates)。詰め直さなかった欄は θ̂ = θ（余裕0）
    """
    ratios = _required_alpha(model, q, rows[:, None], hats[None, :])
    peaks = (ratios >= np.roll(ratios, 1, axis=1)) & (ratios >= np.roll(ratios, -1, axis=1)) & (ratios > 0)
    step = hats[1] - hats[0]
    refined = np.repeat(rows[:, None], candidates, axis=1)
    for i, theta in enumerate(rows):
        found = np.flatnonzero(peaks[i])
        if not found.size:
            continue
        top = found[np.argsort(ratios[i, found])[::-1][:candidates]]
        for c, j in enumerate(top):
            result = optimize.minimize_scalar(
                lambda th: -float(_required_alpha(model, q, theta, th)),
                bounds=(hats[j] - step, hats[j] + step),
                method='bounded',
                options={'xatol': 1e-12},
            )
            if np.sin(theta - result.x) ** 2 > _MIN_SIN2 and -result.fun > ratios[i, j]:
                refined[i, c] = result.x
    return refined


def _minimal_alpha(model: AnisotropyModel, q: int, rows: np.ndarray, hats: np.ndarray,
                   tol: float, alpha_cap: float) -> np.ndarray:
    """各 θ（rows）で θ̂ 格子と詰め直した最悪の θ̂ に対して不等式を満たす最小のαを二分法で求める"""
    extra = _refined_worst_hats(model, q, rows, hats)

    def feasible(idx: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        theta = rows[idx][:, None]
        hat = np.concatenate([np.broadcast_to(hats, (idx.size, hats.size)), extra[idx]], axis=1)
        margin = _pair_margin(model, q, theta, hat, alpha[:, None])
        return margin.min(axis=1) >= -FEASIBILITY_TOL

    n = rows.size
    all_rows = np.arange(n)
    lo = np.zeros(n)
    hi = np.ones(n)
    done = feasible(all_rows, lo)
    hi[done] = 0.0

    pending = all_rows[~done]
    while pending.size:
        ok = feasible(pending, hi[pending])
        stuck = pending[~ok]
        lo[stuck] = hi[stuck]
        hi[stuck] *= 2.0
        if np.any(hi[stuck] > alpha_cap):
            worst = rows[stuck[np.argmax(hi[stuck])]]
            raise StabilizerError(f"α ≤ {alpha_cap:g} の範囲で安定化条件を満たせません（θ={worst:.6f}）")
        pending = stuck

    active = all_rows[hi - lo > tol]
    while active.size:
        mid = 0.5 * (lo[active] + hi[active])
        ok = feasible(active, mid)
        hi[active[ok]] = mid[ok]
        lo[active[~ok]] = mid[~ok]
        active = active[hi[active] - lo[active] > tol]
    return hi


def interpolation_envelope(required: np.ndarray, per_cell: int = SUBSAMPLES) -> np.ndarray:
    """
    区間内で線形補間が必要値を下回らないように節点値を持ち上げる

    区間ごとに補間値が標本を下回る量の最大値を求め、その2倍だけ区間の両端を持ち上げる。
    補間が下回らない区間（凸な部分や S_0 = 0 との境目）の節点値は変えない

    Args:
        required: 周期的な標本値（長さ N·per_cell、per_cell 個ごとの先頭が節点）
        per_cell: 1区間あたりの標本数

    Returns:
        np.ndarray: 長さ N の節点値
    """
    cells = np.asarray(required, dtype=float).reshape(-1, per_cell)
    nodes = cells[:, 0]
    s = np.arange(per_cell) / per_cell
    linear = nodes[:, None] * (1.0 - s) + np.roll(nodes, -1)[:, None] * s
    deficit = np.max(cells - linear, axis=1).clip(min=0.0)
    return nodes + 2.0 * np.maximum(deficit, np.roll(deficit, 1))


def compute_S0(model: AnisotropyModel, q: int, theta_grid_size: int = 1024,
               theta_hat_grid_size: int = 1024, tol: float = 1e-10,
               alpha_cap: float = 1e8) -> StabilizingFunction:
    """
    最小安定化関数 S_0 を θ 格子ごとの二分法で求める

    θ 格子の各区間を SUBSAMPLES 等分した点で最小のαを求め、表の線形補間が
    格子点の間でも必要値を下回らないように interpolation_envelope で節点値を直す

    Args:
        model: 異方性モデル
        q: 0 または 1
        theta_grid_size: θ 格子の区間数
        theta_hat_grid_size: θ̂ 格子の点数
        tol: α の二分法の許容幅
        alpha_cap: α の探索上限

    Returns:
        StabilizingFunction: θ 格子上に表にした S_0
    """
    if theta_grid_size < 256 or theta_hat_grid_size < 256:
        raise StabilizerError("θ・θ̂ 格子にはそれぞれ256点以上が必要です")
    if q not in (0, 1):
        raise StabilizerError(f"qは0または1です: {q}")

    samples = np.linspace(-np.pi, np.pi, SUBSAMPLES * theta_grid_size + 1)[:-1]
    hats = np.linspace(-np.pi, np.pi, theta_hat_grid_size + 1)[:-1]
    _check_preconditions(model, q, samples)

    logger.info(f"S_0 を計算します: k={model.k}, β={model.beta}, q={q}, 格子 {theta_grid_size}×{theta_hat_grid_size}")
    required = _minimal_alpha(model, q, samples, hats, tol, alpha_cap)
    nodes = interpolation_envelope(required)
    lift = float(np.max(nodes - required[::SUBSAMPLES]))
    values = np.append(nodes, nodes[0])
    logger.info(f"S_0 の計算が完了しました: 最大値 {values.max():.6g}, 補間のための持ち上げ最大 {lift:.3e}")
    return StabilizingFunction(values)


def stability_margins(model: AnisotropyModel, S: StabilizerLike, q: int,
                      grid_size: int = 512, refine: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    grid_size × grid_size 格子上で θ ごとの最小余裕を求める

    Args:
        refine: True なら格子外で最も厳しい θ̂ も調べる

    Returns:
        (θ 格子, 各 θ における最小余裕)
    """
    lattice = np.linspace(-np.pi, np.pi, grid_size + 1)[:-1]
    alpha = _stabilizer_values(S, lattice)
    hats = np.broadcast_to(lattice, (grid_size, grid_size))
    if refine:
        extra = _refined_worst_hats(model, q, lattice, lattice)
        hats = np.concatenate([hats, extra], axis=1)
    margin = _pair_margin(model, q, lattice[:, None], hats, alpha[:, None])
    return lattice, margin.min(axis=1)


def verify_stability(model: AnisotropyModel, S: StabilizerLike, q: int, grid_size: int = 512) -> StabilityCheck:
    """安定化不等式を格子上で検証する（最小余裕 ≥ −1e−9 で成立）"""
    lattice = np.linspace(-np.pi, np.pi, grid_size + 1)[:-1]
    alpha = _stabilizer_values(S, lattice)
    margin = _pair_margin(model, q, lattice[:, None], lattice[None, :], alpha[:, None])
    i, j = np.unravel_index(np.argmin(margin), margin.shape)
    worst = float(margin[i, j])
    holds = worst >= -STABILITY_TOL
    if not holds:
        logger.debug(f"安定化不等式が成立しません: 余裕 {worst:.3e}, θ={lattice[i]:.6f}, θ̂={lattice[j]:.6f}")
    return StabilityCheck(holds, worst, (float(lattice[i]), float(lattice[j])))


def check_key_inequality(model: AnisotropyModel, S: StabilizerLike, v, w,
                         theta_of_v: Optional[float] = None) -> np.ndarray:
    """
    エネルギー安定性の鍵となる不等式の余裕
    (B_1(θ)w)·(w − v)/|v| − (|w|γ(θ̂) − |v|γ(θ))
    θ, θ̂ はそれぞれ v, w の接線角 (cosθ, sinθ) = v/|v|

    Args:
        v, w: 形状 (2,) または (N, 2) のベクトル
        theta_of_v: v の角度（省略時は v から求める）
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    v_len = np.hypot(v[..., 0], v[..., 1])
    w_len = np.hypot(w[..., 0], w[..., 1])
    if np.any(v_len == 0) or np.any(w_len == 0):
        raise GeometryError("長さ0のベクトルでは不等式を評価できません")
    theta = np.arctan2(v[..., 1], v[..., 0]) if theta_of_v is None else np.asarray(theta_of_v, dtype=float)
    theta_hat = np.arctan2(w[..., 1], w[..., 0])
    B = build_energy_matrix(model, S, theta, 1)
    Bw = np.einsum('...ij,...j->...i', B, w)
    lhs = np.einsum('...i,...i->...', Bw, w - v) / v_len
    rhs = w_len * gamma(model, theta_hat) - v_len * gamma(model, theta)
    return lhs - rhs


def young_residual(model: AnisotropyModel, theta, sigma: float, eps: float = 0.0, ds_kappa=0.0):
    """f^ε(θ; σ) = γ(θ)cosθ − γ'(θ)sinθ − σ − ε²∂_sκ sinθ"""
    theta = np.asarray(theta, dtype=float)
    return (gamma(model, theta) * np.cos(theta) - gamma(model, theta, 1) * np.sin(theta)
            - sigma - eps ** 2 * ds_kappa * np.sin(theta))
