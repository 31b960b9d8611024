"""
ピンチオフ（内部節点の基板への接触）の検出と曲線の分割
"""
import logging
from typing import Optional, Tuple

import numpy as np

from app.models.models import OpenCurve, PinchEvent, SimulationState
from app.models.exceptions import GeometryError, TopologyError

logger = logging.getLogger(__name__)

MIN_ISLAND_NODES = 4


def detect_pinch(curve: OpenCurve, delta: float, t: float = 0.0) -> Optional[PinchEvent]:
    """
    y が最小の内部節点を調べ、その値が δ 以下ならイベントを返す
    同じ値の節点が複数あれば添字の小さい方を選ぶ

    Args:
        curve: 対象の曲線
        delta: 閾値（正）
        t: イベントに記録する時刻
    """
    if not delta > 0:
        raise ValueError(f"ピンチオフの閾値は正である必要があります: {delta}")
    interior = curve.y[1:-1]
    j = int(np.argmin(interior))
    if interior[j] > delta:
        return None
    return PinchEvent(node_index=j + 1, t=float(t), y_value=float(interior[j]))


def _island(nodes: np.ndarray, kappa: np.ndarray, mu: np.ndarray, t: float) -> SimulationState:
    kappa = kappa.copy()
    kappa[0] = kappa[-1] = 0.0
    return SimulationState(t=t, curve=OpenCurve(nodes), kappa=kappa, mu=mu.copy())


def split_curve(state: SimulationState, event: PinchEvent) -> Tuple[SimulationState, SimulationState]:
    """
    ピンチオフ節点 j* を y = 0 へ射影して複製し、左右2つの島に分ける

    Args:
        state: 分割前の状態
        event: detect_pinch が返したイベント

    Returns:
        Tuple[SimulationState, SimulationState]: 左の島（節点 0..j*）と右の島（節点 j*..J）
    """
    j = event.node_index
    J = state.J
    if not 0 < j < J:
        raise TopologyError(f"ピンチオフ節点が内部節点ではありません: j*={j}, J={J}")
    left_count, right_count = j + 1, J - j + 1
    if min(left_count, right_count) < MIN_ISLAND_NODES:
        raise TopologyError(
            f"節点数 {MIN_ISLAND_NODES} 未満の島ができるため分割できません: 左 {left_count}, 右 {right_count}")

    nodes = np.array(state.curve.nodes)
    nodes[j, 1] = 0.0
    try:
        left = _island(nodes[:j + 1], state.kappa[:j + 1], state.mu[:j + 1], state.t)
        right = _island(nodes[j:], state.kappa[j:], state.mu[j:], state.t)
    except GeometryError as e:
        raise TopologyError(f"分割後の島が曲線として不正です: {str(e)}") from e
    logger.info(f"曲線を分割しました: t={state.t:.6g}, 節点 {j}, 左 {left.J} 辺, 右 {right.J} 辺")
    return left, right
