"""
観測量: 離散エネルギー・面積・メッシュ比・接触角・多様体距離
"""
import logging
from typing import Optional, Tuple

import numpy as np
import shapely
from shapely.geometry import Polygon
from shapely.validation import explain_validity

from app.geometry.anisotropy import gamma, young_residual
from app.geometry.curve import edge_frames, trapezoid_area
from app.models.models import AnisotropyModel, DiagnosticsRecord, OpenCurve, SchemeConfig, SimulationState
from app.models.exceptions import GeometryError, SelfIntersectionError

logger = logging.getLogger(__name__)

EXACT = 'exact'
RASTER = 'raster'


def discrete_energy(state: SimulationState, model: AnisotropyModel, cfg: SchemeConfig) -> float:
    """
    W_c = Σ|h_j|γ(θ_j) + (ε²/4)Σ|h_j|(κ²_{j−1} + κ²_j) − σ(x_J − x₀)
    """
    frames = edge_frames(state.curve)
    kappa = state.kappa
    interface = np.sum(frames.lengths * gamma(model, frames.thetas))
    willmore = 0.25 * cfg.eps ** 2 * np.sum(frames.lengths * (kappa[:-1] ** 2 + kappa[1:] ** 2))
    x_left, x_right = state.curve.contact_points
    return float(interface + willmore - cfg.sigma * (x_right - x_left))


def mesh_ratio(curve: OpenCurve) -> float:
    """R^h = max_j|h_j| / min_j|h_j|"""
    lengths = curve.edge_lengths
    if lengths.min() <= 0:
        raise GeometryError("長さ0の辺があるためメッシュ比を計算できません")
    return float(lengths.max() / lengths.min())


def contact_angles(state) -> Tuple[float, float]:
    """
    左右の動的接触角 (θ_d^l, θ_d^r)
    左は最初の辺の角度、右は最後の辺の角度の符号を反転したもの

    Args:
        state: SimulationState または OpenCurve
    """
    curve = state.curve if isinstance(state, SimulationState) else state
    h = curve.edge_vectors
    theta_left = np.arctan2(h[0, 1], h[0, 0])
    theta_right = -np.arctan2(h[-1, 1], h[-1, 0])
    return float(theta_left), float(theta_right)


def young_residuals(state: SimulationState, model: AnisotropyModel, cfg: SchemeConfig) -> Tuple[float, float]:
    """左右の接触点での f^ε の値（右は最後の辺そのものの角度で評価）"""
    frames = edge_frames(state.curve)
    kappa = state.kappa
    ds_left = (kappa[1] - kappa[0]) / frames.lengths[0]
    ds_right = (kappa[-1] - kappa[-2]) / frames.lengths[-1]
    left = young_residual(model, frames.thetas[0], cfg.sigma, cfg.eps, ds_left)
    right = young_residual(model, frames.thetas[-1], cfg.sigma, cfg.eps, ds_right)
    return float(left), float(right)


def make_record(state: SimulationState, model: AnisotropyModel, cfg: SchemeConfig,
                reference: Optional[DiagnosticsRecord] = None, newton_iters: int = 0) -> DiagnosticsRecord:
    """
    状態から DiagnosticsRecord を作成する

    Args:
        state: 現在の状態
        model: 異方性モデル
        cfg: スキームの設定
        reference: 初期時刻の記録（省略時は state 自身を基準とする）
        newton_iters: このステップの Newton 反復回数
    """
    energy = discrete_energy(state, model, cfg)
    area = trapezoid_area(state.curve)
    energy0 = energy if reference is None else reference.energy
    area0 = area if reference is None else reference.area
    theta_left, theta_right = contact_angles(state)
    young_left, young_right = young_residuals(state, model, cfg)
    x_left, x_right = state.curve.contact_points
    return DiagnosticsRecord(
        t=state.t,
        energy=energy,
        energy_ratio=energy / energy0 if energy0 != 0 else np.nan,
        area=area,
        area_drift=area - area0,
        mesh_ratio=mesh_ratio(state.curve),
        x_left=x_left,
        x_right=x_right,
        theta_left=theta_left,
        theta_right=theta_right,
        young_left=young_left,
        young_right=young_right,
        newton_iters=newton_iters,
    )


def region_polygon(curve: OpenCurve) -> Polygon:
    """曲線と基板の線分で囲まれた多角形（自己交差していれば SelfIntersectionError）"""
    polygon = Polygon(np.asarray(curve.nodes))
    if not polygon.is_valid:
        raise SelfIntersectionError(f"領域の多角形が不正です: {explain_validity(polygon)}")
    return polygon


def _raster_symmetric_difference(poly_a: Polygon, poly_b: Polygon, resolution: int) -> float:
    """セル中心での包含判定による対称差の面積"""
    xmin, ymin, xmax, ymax = shapely.union(poly_a, poly_b).bounds
    width, height = xmax - xmin, ymax - ymin
    if width <= 0 or height <= 0:
        return 0.0
    dx, dy = width / resolution, height / resolution
    xs = xmin + dx * (np.arange(resolution) + 0.5)
    ys = ymin + dy * (np.arange(resolution) + 0.5)
    gx, gy = np.meshgrid(xs, ys)
    inside_a = shapely.contains_xy(poly_a, gx, gy)
    inside_b = shapely.contains_xy(poly_b, gx, gy)
    return float(np.count_nonzero(inside_a ^ inside_b) * dx * dy)


def manifold_distance(curve_a: OpenCurve, curve_b: OpenCurve, method: str = EXACT,
                      resolution: int = 512) -> float:
    """
    多様体距離 |Ω₁| + |Ω₂| − 2|Ω₁∩Ω₂|

    Args:
        curve_a, curve_b: 比較する曲線
        method: 'exact'（多角形の厳密な交差）または 'raster'（格子近似 + Richardson 外挿）
        resolution: raster の粗い格子の分割数

    Returns:
        float: 0以上の距離
    """
    poly_a = region_polygon(curve_a)
    poly_b = region_polygon(curve_b)
    if method == EXACT:
        distance = poly_a.area + poly_b.area - 2.0 * shapely.intersection(poly_a, poly_b).area
    elif method == RASTER:
        coarse = _raster_symmetric_difference(poly_a, poly_b, resolution)
        fine = _raster_symmetric_difference(poly_a, poly_b, 2 * resolution)
        distance = 2.0 * fine - coarse
    else:
        raise ValueError(f"不明な計算方法です: {method}")
    return max(float(distance), 0.0)
