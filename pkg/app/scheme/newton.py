"""
Newton–Raphson 内部反復と時間発展ループ
"""
import logging
from typing import Callable, Iterable, Optional, Tuple

import numpy as np

from app.analysis.diagnostics import make_record
from app.geometry.curve import init_curvature
from app.models.models import (
    AnisotropyModel, DiagnosticsRecord, OpenCurve, SchemeConfig, SimulationResult, SimulationState,
)
from app.models.exceptions import NonConvergenceError
from app.scheme.assembly import Assembler, NewtonIterate, assembler_for, check_mesh
from app.scheme.linsolve import solve
from app.topology.topology import detect_pinch

logger = logging.getLogger(__name__)

Observer = Callable[[SimulationState, DiagnosticsRecord], None]


def _update_norm(old: NewtonIterate, new: NewtonIterate) -> float:
    """‖ΔX‖_∞ + ‖Δμ‖_∞ + ‖Δκ‖_∞"""
    return float(np.max(np.abs(new.nodes - old.nodes))
                 + np.max(np.abs(new.mu - old.mu))
                 + np.max(np.abs(new.kappa - old.kappa)))


def _to_state(t: float, iterate: NewtonIterate) -> SimulationState:
    nodes = iterate.nodes.copy()
    nodes[0, 1] = nodes[-1, 1] = 0.0
    kappa = iterate.kappa.copy()
    kappa[0] = kappa[-1] = 0.0
    check_mesh(np.hypot(*np.diff(nodes, axis=0).T))
    return SimulationState(t=t, curve=OpenCurve(nodes), kappa=kappa, mu=iterate.mu.copy())


def newton_step(state: SimulationState, cfg: SchemeConfig, model: AnisotropyModel,
                assembler: Optional[Assembler] = None) -> Tuple[SimulationState, int]:
    """
    1時間ステップ分の Newton 反復

    前の時刻の解を初期反復値とし、更新量のノルムが newton_tol 以下になるまで
    組み立てと求解を繰り返す。

    Args:
        state: 時刻 t_m の状態
        cfg: スキームの設定
        model: 異方性モデル
        assembler: 線形系の組み立て関数（省略時は cfg.scheme から選択）

    Returns:
        Tuple[SimulationState, int]: 時刻 t_m + Δt の状態と反復回数
    """
    assembler = assembler or assembler_for(cfg)
    current = NewtonIterate.from_state(state)
    norm = np.inf
    for iteration in range(1, cfg.newton_max + 1):
        system = assembler(state, current, cfg, model)
        solution = solve(system.matrix, system.rhs)
        full = current.stacked()
        target = full.copy()
        target[system.active] = solution
        candidate = NewtonIterate.from_stacked(full + cfg.step_scale * (target - full))
        norm = _update_norm(current, candidate)
        current = candidate
        logger.debug(f"Newton反復 {iteration}: 更新量 {norm:.3e}")
        if norm <= cfg.newton_tol:
            return _to_state(state.t + cfg.dt, current), iteration
    raise NonConvergenceError(
        f"Newton反復が {cfg.newton_max} 回で収束しませんでした: t={state.t + cfg.dt:.6g}, 最終更新量 {norm:.3e}",
        iterations=cfg.newton_max, last_update=norm)


def initial_state(curve: OpenCurve, kappa: Optional[np.ndarray] = None) -> SimulationState:
    """κ⁰ を init_curvature（または与えられた値）、μ⁰ ≡ 0 とした初期状態"""
    kappa0 = init_curvature(curve) if kappa is None else np.asarray(kappa, dtype=float)
    return SimulationState(t=0.0, curve=curve, kappa=kappa0, mu=np.zeros(curve.J + 1))


def run(cfg: SchemeConfig, model: AnisotropyModel, initial, t_end: float,
        observers: Iterable[Observer] = (), pinch_delta: Optional[float] = None,
        snapshot_stride: int = 0, initial_kappa: Optional[np.ndarray] = None) -> SimulationResult:
    """
    t_end まで時間発展させる

    Args:
        cfg: スキームの設定
        model: 異方性モデル
        initial: 初期曲線（OpenCurve）または初期状態（SimulationState）
        t_end: 終了時刻（0 なら初期状態をそのまま返す）
        observers: 各ステップの (状態, 記録) を受け取るコールバック
        pinch_delta: ピンチオフ判定の閾値（None なら判定しない）
        snapshot_stride: スナップショットを残す間隔（0 なら初期と最終のみ）
        initial_kappa: κ⁰ を明示する場合の値

    Returns:
        SimulationResult: 最終状態・各ステップの記録・スナップショット
    """
    if t_end < 0:
        raise ValueError(f"終了時刻は0以上である必要があります: {t_end}")
    state = initial if isinstance(initial, SimulationState) else initial_state(initial, initial_kappa)
    observers = list(observers)
    assembler = assembler_for(cfg)
    reference = make_record(state, model, cfg)
    result = SimulationResult(final_state=state, records=[reference], snapshots=[(0, state)])
    for observer in observers:
        observer(state, reference)

    logger.info(f"時間発展を開始します: scheme={cfg.scheme}, q={cfg.q}, J={state.J}, Δt={cfg.dt:.6g}, t_end={t_end:.6g}")
    step = 0
    slack = 1e-9 * cfg.dt
    while state.t < t_end - slack:
        previous = state
        state, iterations = newton_step(previous, cfg, model, assembler)
        step += 1
        record = make_record(state, model, cfg, reference=reference, newton_iters=iterations)
        result.records.append(record)
        result.previous_state = previous
        result.final_state = state
        result.steps = step
        for observer in observers:
            observer(state, record)
        if snapshot_stride and step % snapshot_stride == 0:
            result.snapshots.append((step, state))
            logger.info(f"t={state.t:.6g}: エネルギー比 {record.energy_ratio:.10f}, メッシュ比 {record.mesh_ratio:.4f}")

        if pinch_delta is not None:
            event = detect_pinch(state.curve, pinch_delta, t=state.t)
            if event is not None:
                logger.info(f"ピンチオフを検出しました: t={event.t:.6g}, 節点 {event.node_index}, y={event.y_value:.3e}")
                result.pinch_event = event
                break

    if result.snapshots[-1][0] != step:
        result.snapshots.append((step, state))
    logger.info(f"時間発展を終了しました: {step} ステップ, t={state.t:.6g}")
    return result
