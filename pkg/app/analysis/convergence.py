"""
多様体距離による収束次数の計測
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Callable, List, Optional, Sequence, Tuple

from app.analysis.diagnostics import manifold_distance
from app.geometry.curve import interpolate_in_time
from app.models.models import AnisotropyModel, ConvergenceRow, OpenCurve, SchemeConfig
from app.scheme.newton import run

logger = logging.getLogger(__name__)

QUARTER = 'quarter'
FIXED = 'fixed'
TIME_REFINEMENTS = (QUARTER, FIXED)

ShapeFactory = Callable[[int], OpenCurve]


def level_parameters(cfg: SchemeConfig, J0: int, levels: int, time_refinement: str = QUARTER) -> List[Tuple[int, float]]:
    """各レベルの (J, Δt)。J は毎回2倍、Δt は quarter なら1/4倍、fixed なら一定"""
    if time_refinement not in TIME_REFINEMENTS:
        raise ValueError(f"不明な時間刻みの細分化方法です: {time_refinement}")
    factor = 0.25 if time_refinement == QUARTER else 1.0
    return [(J0 * 2 ** level, cfg.dt * factor ** level) for level in range(levels)]


def curve_at(cfg: SchemeConfig, model: AnisotropyModel, initial: OpenCurve, t_eval: float) -> OpenCurve:
    """t_eval まで計算し、前後のステップの節点を時間方向に線形補間した曲線"""
    result = run(cfg, model, initial, t_eval)
    final = result.final_state
    if result.previous_state is None:
        return final.curve
    previous = result.previous_state
    return interpolate_in_time(previous.curve, previous.t, final.curve, final.t, t_eval)


def _level_curve(args) -> OpenCurve:
    cfg, model, shape_factory, J, t_eval = args
    return curve_at(cfg, model, shape_factory(J), t_eval)


def convergence_table(parameters: Sequence[Tuple[int, float]], curves: Sequence[OpenCurve]) -> List[ConvergenceRow]:
    """
    隣接レベル間の誤差 e_l = Md(Γ_l, Γ_{l+1}) と次数 log₂(e_{l−1}/e_l) の表

    Args:
        parameters: 各レベルの (J, Δt)
        curves: 各レベルの評価時刻での曲線
    """
    rows: List[ConvergenceRow] = []
    previous_error: Optional[float] = None
    for (J, dt), coarse, fine in zip(parameters, curves[:-1], curves[1:]):
        error = manifold_distance(coarse, fine)
        order = None
        if previous_error is not None and previous_error > 0 and error > 0:
            order = math.log2(previous_error / error)
        rows.append(ConvergenceRow(J=J, dt=dt, error=error, order=order))
        previous_error = error
    return rows


def convergence_study(cfg: SchemeConfig, model: AnisotropyModel, levels: int, t_eval: float,
                      shape_factory: ShapeFactory, J0: int = 32, time_refinement: str = QUARTER,
                      max_workers: int = 1) -> List[ConvergenceRow]:
    """
    レベルごとに J を2倍にして計算し、多様体距離で誤差と収束次数を求める

    Args:
        cfg: 最も粗いレベルのスキーム設定
        model: 異方性モデル
        levels: レベル数（3以上）
        t_eval: 誤差を評価する時刻
        shape_factory: 分割数 J から初期曲線を作る関数
        J0: 最も粗いレベルの分割数
        time_refinement: 'quarter'（Δt/4 ずつ）または 'fixed'（Δt 一定）
        max_workers: 2以上ならレベルをプロセス並列で計算する

    Returns:
        List[ConvergenceRow]: 粗い順の levels−1 行
    """
    if levels < 3:
        raise ValueError(f"レベル数は3以上が必要です: {levels}")
    parameters = level_parameters(cfg, J0, levels, time_refinement)
    jobs = [(replace(cfg, dt=dt), model, shape_factory, J, t_eval) for J, dt in parameters]
    logger.info(f"収束次数の計測を開始します: {levels} レベル, t={t_eval}, 時間刻み {time_refinement}")

    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as executor:
            curves = list(executor.map(_level_curve, jobs))
    else:
        curves = [_level_curve(job) for job in jobs]

    rows = convergence_table(parameters, curves)
    for row in rows:
        logger.info(f"J={row.J}, Δt={row.dt:.6g}: 誤差 {row.error:.6e}, 次数 {row.order}")
    return rows
