"""
開いた折れ線の離散微分幾何と初期形状の生成
"""
import logging
from typing import Tuple

import numpy as np
from scipy import integrate, optimize

from app.models.models import OpenCurve, EdgeFrame
from app.models.exceptions import GeometryError

logger = logging.getLogger(__name__)

_QUAD_TOL = 1e-10


def rotate_ccw(v: np.ndarray) -> np.ndarray:
    """ベクトルを反時計回りに90°回転する"""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def edge_frames(curve: OpenCurve) -> EdgeFrame:
    """各辺の長さ・単位接線・外向き法線 n = (−sinθ, cosθ)・角度 θ ∈ (−π, π]"""
    h = curve.edge_vectors
    lengths = np.hypot(h[:, 0], h[:, 1])
    if np.any(lengths == 0):
        raise GeometryError(f"長さ0の辺があります: 辺 {int(np.argmin(lengths)) + 1}")
    tangents = h / lengths[:, None]
    normals = rotate_ccw(tangents)
    thetas = np.arctan2(tangents[:, 1], tangents[:, 0])
    return EdgeFrame(lengths=lengths, tangents=tangents, normals=normals, thetas=thetas)


def _one_sided_values(field: np.ndarray, J: int) -> Tuple[np.ndarray, np.ndarray]:
    """辺ごとの (左端 ρ_{j−1}⁺, 右端 ρ_j⁻) の値"""
    field = np.asarray(field, dtype=float)
    if field.shape[0] == J + 1:
        return field[:-1], field[1:]
    if field.shape[0] == J:
        return field, field
    raise GeometryError(f"場の長さが曲線と一致しません: {field.shape[0]}（節点数 {J + 1} または辺数 {J}）")


def lumped_inner(curve: OpenCurve, u, v) -> float:
    """
    集中質量内積 ½Σ|h_j|[(u·v)(ρ_j⁻) + (u·v)(ρ_{j−1}⁺)]

    Args:
        curve: 長さの基準となる曲線
        u, v: 節点値（長さ J+1）または辺ごとの定数値（長さ J）、スカラーまたは2次元ベクトル
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[1:] != v.shape[1:]:
        raise GeometryError(f"内積の引数の形状が一致しません: {u.shape}, {v.shape}")
    J = curve.J
    u_left, u_right = _one_sided_values(u, J)
    v_left, v_right = _one_sided_values(v, J)
    axes = tuple(range(1, u.ndim))
    left = np.sum(u_left * v_left, axis=axes) if axes else u_left * v_left
    right = np.sum(u_right * v_right, axis=axes) if axes else u_right * v_right
    return float(0.5 * np.sum(curve.edge_lengths * (left + right)))


def edge_derivative(curve: OpenCurve, u) -> np.ndarray:
    """辺ごとの弧長微分 (u_j − u_{j−1})/|h_j|"""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != curve.J + 1:
        raise GeometryError(f"節点場の長さが曲線と一致しません: {u.shape[0]}")
    lengths = curve.edge_lengths
    if np.any(lengths == 0):
        raise GeometryError("長さ0の辺があります")
    du = np.diff(u, axis=0)
    return du / lengths.reshape((-1,) + (1,) * (u.ndim - 1))


def init_curvature(curve: OpenCurve) -> np.ndarray:
    """内部節点の曲率 κ_j = −Δθ_j / (½(|h_j| + |h_{j+1}|))、端点は0"""
    frames = edge_frames(curve)
    turn = np.diff(frames.thetas)
    # (−π, π] へ巻き戻す
    turn = np.pi - np.mod(np.pi - turn, 2.0 * np.pi)
    kappa = np.zeros(curve.J + 1)
    kappa[1:-1] = -turn / (0.5 * (frames.lengths[:-1] + frames.lengths[1:]))
    return kappa


def trapezoid_area(curve: OpenCurve) -> float:
    """曲線と基板で囲まれた面積 ½Σ(x_j − x_{j−1})(y_j + y_{j−1})"""
    x, y = curve.x, curve.y
    return float(0.5 * np.sum(np.diff(x) * (y[1:] + y[:-1])))


def interpolate_in_time(curve_a: OpenCurve, t_a: float, curve_b: OpenCurve, t_b: float, t: float) -> OpenCurve:
    """時刻 t_a, t_b の曲線を節点ごとに線形補間する"""
    if curve_a.J != curve_b.J:
        raise GeometryError(f"節点数が一致しません: {curve_a.J + 1}, {curve_b.J + 1}")
    if not t_b > t_a:
        raise GeometryError(f"補間区間が不正です: [{t_a}, {t_b}]")
    if t < t_a - 1e-12 * max(1.0, abs(t_a)) or t > t_b + 1e-12 * max(1.0, abs(t_b)):
        raise GeometryError(f"時刻 {t} は補間区間 [{t_a}, {t_b}] の外です")
    if t == t_a:
        return curve_a
    if t == t_b:
        return curve_b
    dt = t_b - t_a
    return OpenCurve((t_b - t) / dt * curve_a.nodes + (t - t_a) / dt * curve_b.nodes)


def init_semi_ellipse(a: float = 1.0, b: float = 0.5, center_x: float = 0.0, J: int = 128) -> OpenCurve:
    """
    基板上の半楕円（弧長について等間隔な節点）

    Args:
        a: x方向の半軸
        b: y方向の半軸
        center_x: 中心のx座標
        J: 辺の数
    """
    if a <= 0 or b <= 0:
        raise GeometryError(f"半軸は正である必要があります: a={a}, b={b}")
    if J < 8:
        raise GeometryError(f"半楕円の分割数は8以上が必要です: J={J}")

    def speed(t):
        return np.hypot(a * np.sin(t), b * np.cos(t))

    total, _ = integrate.quad(speed, 0.0, np.pi, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200)
    params = np.empty(J + 1)
    params[0], params[-1] = 0.0, np.pi
    t_prev, s_prev = 0.0, 0.0
    for j in range(1, J):
        target = total * j / J

        def residual(t):
            arc, _ = integrate.quad(speed, t_prev, t, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL)
            return s_prev + arc - target

        t_j = optimize.brentq(residual, t_prev, np.pi, xtol=1e-14)
        arc, _ = integrate.quad(speed, t_prev, t_j, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL)
        t_prev, s_prev = t_j, s_prev + arc
        params[j] = t_j

    nodes = np.column_stack([center_x - a * np.cos(params), b * np.sin(params)])
    nodes[0] = (center_x - a, 0.0)
    nodes[-1] = (center_x + a, 0.0)
    logger.debug(f"半楕円を生成しました: a={a}, b={b}, J={J}, 周長 {total:.12g}")
    return OpenCurve(nodes)


def init_rectangle(width: float, height: float, J: int, left: float = 0.0) -> OpenCurve:
    """
    長方形の外周（左下から上・横・下へ）を弧長等間隔に分割した曲線

    Args:
        width: 幅
        height: 高さ
        J: 辺の数
        left: 左の接触点のx座標
    """
    if width <= 0 or height <= 0:
        raise GeometryError(f"幅と高さは正である必要があります: width={width}, height={height}")
    corners = np.array([[left, 0.0], [left, height], [left + width, height], [left + width, 0.0]])
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(corners, axis=0).T))])
    s = np.linspace(0.0, arc[-1], J + 1)
    nodes = np.column_stack([np.interp(s, arc, corners[:, 0]), np.interp(s, arc, corners[:, 1])])
    nodes[0] = corners[0]
    nodes[-1] = corners[-1]
    return OpenCurve(nodes)


def init_flat_film(length: float, height: float, J: int) -> OpenCurve:
    """中心が原点の長い平坦な薄膜 (−length/2, 0) → (length/2, 0)"""
    return init_rectangle(length, height, J, left=-0.5 * length)


def analytic_equilibrium_arc(area: float, sigma: float, J: int, center_x: float = 0.0) -> OpenCurve:
    """
    等方的な平衡形状: 接触角 θ_Y = arccos(σ) で面積 area の円弧

    Args:
        area: 囲む面積
        sigma: 基板エネルギー定数（|σ| < 1）
        J: 辺の数
        center_x: 円弧の中心のx座標
    """
    if not -1 < sigma < 1:
        raise GeometryError(f"平衡円弧には |σ| < 1 が必要です: σ={sigma}")
    theta_y = np.arccos(sigma)
    # 接触角 θ_Y の円弧の面積は R²(θ_Y − sinθ_Y cosθ_Y)
    radius = np.sqrt(area / (theta_y - np.sin(theta_y) * np.cos(theta_y)))
    center_y = -radius * np.cos(theta_y)
    phi = np.linspace(-theta_y, theta_y, J + 1)
    nodes = np.column_stack([center_x + radius * np.sin(phi), center_y + radius * np.cos(phi)])
    nodes[0, 1] = nodes[-1, 1] = 0.0
    return OpenCurve(nodes)


def region_centroid_x(curve: OpenCurve) -> float:
    """曲線と基板で囲まれた領域の重心のx座標"""
    x, y = curve.x, curve.y
    dx = np.diff(x)
    # 台形ごとの一次モーメント ∫x y dx
    moment = np.sum(dx * (x[:-1] * (2 * y[:-1] + y[1:]) + x[1:] * (y[:-1] + 2 * y[1:]))) / 6.0
    return float(moment / trapezoid_area(curve))


def align_centroid_x(curve: OpenCurve) -> OpenCurve:
    """領域の重心が x = 0 になるよう平行移動する"""
    return curve.translated(-region_centroid_x(curve))
