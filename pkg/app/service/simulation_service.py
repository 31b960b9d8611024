import logging
import os
from dataclasses import dataclass, field, replace
from functools import partial
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from app.analysis.analysis_service import AnalysisService
from app.analysis.convergence import QUARTER, convergence_study
from app.analysis.diagnostics import manifold_distance
from app.config.run_config import RunConfig, STABILIZER_AUTO
from app.data_source.data_source_factory import ShapeSourceFactory
from app.data_source.data_source_interface import ShapeSourceInterface
from app.data_source.snapshot_file_source import curve_from_snapshot, snapshot_dataframe
from app.geometry.anisotropy import compute_S0
from app.geometry.curve import (
    align_centroid_x, analytic_equilibrium_arc, init_flat_film, init_rectangle, init_semi_ellipse, trapezoid_area,
)
from app.models.models import (
    AnisotropyModel, ConvergenceRow, PinchEvent, SchemeConfig, SimulationResult, SimulationState, StabilizingFunction,
)
from app.models.exceptions import ConfigError, DewettingError, TopologyError
from app.repository.repository_factory import RepositoryFactory
from app.repository.repository_interface import StabilizerRepositoryInterface
from app.scheme.newton import initial_state, run
from app.topology.topology import split_curve

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
PINCH_LOG_COLUMNS = ['t', 'node_index', 'y_value', 'refused']


@dataclass
class IslandRun:
    """1つの島の時間発展（分割されるまで、または終了時刻まで）"""
    label: str
    result: SimulationResult
    step_offset: int = 0
    children: List['IslandRun'] = field(default_factory=list)

    def leaves(self) -> List['IslandRun']:
        """左から順に並べた最終的な島"""
        if not self.children:
            return [self]
        return [leaf for child in self.children for leaf in child.leaves()]

    def walk(self) -> List['IslandRun']:
        """自分自身と子孫すべて"""
        return [self] + [node for child in self.children for node in child.walk()]


@dataclass
class RunOutcome:
    """ピンチオフによる分割を含む実行結果"""
    root: IslandRun
    pinch_events: List[PinchEvent] = field(default_factory=list)

    @property
    def islands(self) -> List[IslandRun]:
        return self.root.leaves()

    @property
    def final_states(self) -> List[SimulationState]:
        return [leaf.result.final_state for leaf in self.islands]


class SimulationService:
    """
    時間発展の実行・安定化関数の準備・ファイル出力のためのサービスクラス
    """

    def __init__(self,
                 repository: Optional[StabilizerRepositoryInterface] = None,
                 analysis_service: Optional[AnalysisService] = None,
                 use_cache: bool = True):
        """
        コンストラクタ

        Args:
            repository: S_0 キャッシュ（指定しない場合はファクトリーから取得）
            analysis_service: 分析サービス
            use_cache: False ならキャッシュを使わない
        """
        if repository is None and use_cache:
            try:
                repository = RepositoryFactory.create_repository()
            except Exception as e:
                logger.warning(f"S_0キャッシュを利用できません: {str(e)}")
                repository = None
        self.repository = repository
        self.analysis_service = analysis_service or AnalysisService()

    def get_minimal_stabilizer(self, model: AnisotropyModel, q: int, grid_size: int = 1024) -> StabilizingFunction:
        """
        最小安定化関数 S_0 をキャッシュから取得し、なければ計算して保存する

        Args:
            model: 異方性モデル
            q: 0 または 1
            grid_size: θ格子の分割数

        Returns:
            StabilizingFunction: S_0
        """
        if self.repository is not None:
            cached = self.repository.get_table(model, q, grid_size, grid_size)
            if cached is not None:
                return cached
        table = compute_S0(model, q, grid_size, grid_size)
        if self.repository is not None:
            self.repository.save_table(model, q, grid_size, table)
        return table

    def resolve_stabilizer(self, config: RunConfig) -> StabilizingFunction:
        """設定の stabilizer（auto・定数・表ファイル）から安定化関数を作る"""
        choice = config.stabilizer_choice()
        if choice == STABILIZER_AUTO:
            return self.get_minimal_stabilizer(config.to_model(), config.q, config.theta_grid)
        if isinstance(choice, float):
            logger.info(f"定数の安定化関数を使用します: S={choice}")
            return StabilizingFunction.constant(choice, config.theta_grid)
        return self.read_stabilizer_table(choice)

    def create_shape_source(self, config: RunConfig) -> ShapeSourceInterface:
        """設定から初期形状のソースを作る"""
        return ShapeSourceFactory.create_shape_source(
            config.shape, a=config.shape_a, b=config.shape_b, length=config.film_length,
            height=config.film_height, path=config.shape_file)

    def prepare(self, config: RunConfig) -> Tuple[SchemeConfig, AnisotropyModel, SimulationState]:
        """スキーム設定・モデル・初期状態を準備する"""
        model = config.to_model()
        cfg = config.to_scheme_config(self.resolve_stabilizer(config))
        source = self.create_shape_source(config)
        logger.info(f"初期形状: {source.description}, J={config.J}")
        curve = source.load_curve(config.J)
        return cfg, model, initial_state(curve, source.load_kappa())

    def run_with_topology(self, cfg: SchemeConfig, model: AnisotropyModel, state: SimulationState,
                          t_end: float, pinch_delta: Optional[float] = None,
                          snapshot_stride: int = 0) -> RunOutcome:
        """
        時間発展を行い、ピンチオフが起きたら曲線を分割してそれぞれの島を t_end まで続ける

        Args:
            cfg: スキームの設定
            model: 異方性モデル
            state: 初期状態
            t_end: 終了時刻
            pinch_delta: ピンチオフ判定の閾値（None なら判定しない）
            snapshot_stride: スナップショット間隔

        Returns:
            RunOutcome: 島の木構造とピンチオフの記録
        """
        events: List[PinchEvent] = []

        def evolve(label: str, start: SimulationState, offset: int) -> IslandRun:
            result = run(cfg, model, start, t_end, pinch_delta=pinch_delta, snapshot_stride=snapshot_stride)
            node = IslandRun(label=label, result=result, step_offset=offset)
            if result.pinch_event is not None:
                try:
                    left, right = split_curve(result.final_state, result.pinch_event)
                except TopologyError as e:
                    result.pinch_event = replace(result.pinch_event, refused=True)
                    events.append(result.pinch_event)
                    name = label or '全体'
                    logger.warning(f"島 {name} の分割を見送り、t={result.final_state.t:.6g} で計算を打ち切ります: {str(e)}")
                    return node
                events.append(result.pinch_event)
                child_offset = offset + result.steps
                node.children = [evolve(label + 'L', left, child_offset), evolve(label + 'R', right, child_offset)]
            return node

        try:
            root = evolve('', state, 0)
        except DewettingError as e:
            logger.error(f"時間発展中にエラーが発生しました: {str(e)}", exc_info=True)
            raise
        outcome = RunOutcome(root=root, pinch_events=events)
        splits = [e for e in events if not e.refused]
        if splits:
            logger.info(f"{len(splits)} 回のピンチオフで {len(outcome.islands)} 個の島に分かれました")
        return outcome

    def run_simulation(self, config: RunConfig) -> RunOutcome:
        """設定に従って実行し、結果を出力ディレクトリに書き出す"""
        cfg, model, state = self.prepare(config)
        delta = config.pinch_threshold(float(state.curve.y.max()))
        outcome = self.run_with_topology(cfg, model, state, config.tmax, delta, config.snapshot_stride)
        self.write_outcome(outcome, config.output_dir)
        for index, island in enumerate(outcome.islands):
            summary = self.analysis_service.summarize_run(island.result.records)
            logger.info(f"島 {index}: エネルギー比 {summary['energy_ratio_final']:.10f}, "
                        f"最大面積変化 {summary['max_area_drift']:.3e}, メッシュ比 {summary['mesh_ratio_final']:.4f}")
        return outcome

    def _to_csv(self, df: pd.DataFrame, output_dir: str, name: str) -> str:
        os.makedirs(output_dir, exist_ok=True)
        path = os.path.join(output_dir, name)
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.debug(f"ファイルを書き出しました: {path}")
        return path

    def write_outcome(self, outcome: RunOutcome, output_dir: str) -> List[str]:
        """
        スナップショット・観測量・ピンチオフ記録を書き出す

        分割がなければ diagnostics.csv と snapshot_<step>.csv、
        分割後の島は diagnostics_island<i>.csv と snapshot_island<i>_<step>.csv（i は左からの番号）

        Returns:
            List[str]: 書き出したファイルのパス
        """
        written = []
        islands = outcome.islands
        leaf_index = {id(leaf): i for i, leaf in enumerate(islands)}
        for node in outcome.root.walk():
            if node is outcome.root:
                diag_name, snap_prefix = 'diagnostics.csv', 'snapshot_'
            elif id(node) in leaf_index:
                i = leaf_index[id(node)]
                diag_name, snap_prefix = f'diagnostics_island{i}.csv', f'snapshot_island{i}_'
            else:
                diag_name, snap_prefix = f'diagnostics_{node.label}.csv', f'snapshot_{node.label}_'
            diagnostics = self.analysis_service.create_diagnostics_dataframe(node.result.records)
            written.append(self._to_csv(diagnostics, output_dir, diag_name))
            for step, state in node.result.snapshots:
                written.append(self._to_csv(snapshot_dataframe(state), output_dir,
                                            f'{snap_prefix}{node.step_offset + step}.csv'))
        if outcome.pinch_events:
            log = pd.DataFrame([e.to_dict() for e in outcome.pinch_events], columns=PINCH_LOG_COLUMNS)
            written.append(self._to_csv(log, output_dir, 'pinch_log.csv'))
        logger.info(f"{len(written)} 個のファイルを書き出しました: {output_dir}")
        return written

    def run_convergence(self, config: RunConfig, levels: int, t_eval: float, J0: int = 32,
                        time_refinement: str = QUARTER, max_workers: int = 1) -> List[ConvergenceRow]:
        """収束次数の計測を行い convergence.csv を書き出す"""
        if config.shape == 'semi_ellipse':
            factory = partial(init_semi_ellipse, config.shape_a, config.shape_b, 0.0)
        elif config.shape == 'flat_film':
            factory = partial(init_flat_film, config.film_length, config.film_height)
        elif config.shape == 'rectangle':
            factory = partial(init_rectangle, config.film_length, config.film_height)
        else:
            raise ConfigError(f"収束次数の計測には解析的な初期形状が必要です: {config.shape}")
        cfg = config.to_scheme_config(self.resolve_stabilizer(config))
        rows = convergence_study(cfg, config.to_model(), levels, t_eval, factory, J0=J0,
                                 time_refinement=time_refinement, max_workers=max_workers)
        self._to_csv(self.analysis_service.create_convergence_dataframe(rows), config.output_dir, 'convergence.csv')
        return rows

    def write_stabilizer_table(self, model: AnisotropyModel, q: int, grid_size: int, output_dir: str) -> str:
        """S_0 の表を s0_k<k>_beta<β>_q<q>.csv に書き出す"""
        table = self.get_minimal_stabilizer(model, q, grid_size)
        df = pd.DataFrame({'theta': table.thetas, 's0': table.values})
        return self._to_csv(df, output_dir, f's0_k{model.k}_beta{model.beta:g}_q{q}.csv')

    def read_stabilizer_table(self, path: str) -> StabilizingFunction:
        """theta,s0 形式の表ファイルを読み込む（θは [−π, π] の一様格子）"""
        if not os.path.exists(path):
            raise ConfigError(f"安定化関数の表ファイルが見つかりません: {path}")
        df = pd.read_csv(path)
        if 'theta' not in df.columns or 's0' not in df.columns:
            raise ConfigError(f"安定化関数の表には theta, s0 列が必要です: {path}")
        thetas = df['theta'].to_numpy(dtype=float)
        expected = np.linspace(-np.pi, np.pi, thetas.size)
        if thetas.size < 2 or not np.allclose(thetas, expected, atol=1e-12):
            raise ConfigError(f"安定化関数の表の θ が [−π, π] の一様格子ではありません: {path}")
        logger.info(f"安定化関数の表を読み込みました: {path}（{thetas.size - 1} 区間）")
        return StabilizingFunction(df['s0'].to_numpy(dtype=float))

    def compare_snapshots(self, path_a: str, path_b: str) -> float:
        """2つのスナップショットの多様体距離"""
        return manifold_distance(curve_from_snapshot(path_a), curve_from_snapshot(path_b))

    def equilibrium_distance(self, path: str, sigma: float, J: int = 512) -> Tuple[float, float]:
        """
        スナップショットと同じ面積の等方的な平衡円弧との多様体距離（重心を x = 0 に揃える）

        Returns:
            Tuple[float, float]: (距離, 面積)
        """
        curve = align_centroid_x(curve_from_snapshot(path))
        area = trapezoid_area(curve)
        arc = align_centroid_x(analytic_equilibrium_arc(area, sigma, J))
        return manifold_distance(curve, arc), area
