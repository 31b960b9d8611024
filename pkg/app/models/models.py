from typing import List, Optional, Dict, Any, Tuple
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.sparse as sp

from app.models.exceptions import ConfigError, GeometryError

logger = logging.getLogger(__name__)

# 端点が基板上にあるとみなす許容誤差
SUBSTRATE_TOL = 1e-14

SCHEME_KINDS = ('es', 'ac')


@dataclass(frozen=True)
class AnisotropyModel:
    """k回対称の表面エネルギー密度 γ(θ) = 1 + β cos(kθ)"""
    k: int = 2
    beta: float = 0.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"対称数kは正の整数である必要があります: {self.k}")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ConfigError(f"異方性の強さβは0以上である必要があります: {self.beta}")
        if self.beta >= 1:
            raise ConfigError(f"β={self.beta} ではγが正になりません（β < 1 が必要）")
        object.__setattr__(self, 'k', int(self.k))
        object.__setattr__(self, 'beta', float(self.beta))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AnisotropyModel':
        """辞書からインスタンスを生成する"""
        try:
            k = int(data.get('k', data.get('kfold', 2)))
            beta = float(data.get('beta', 0.0))
            if beta > 0 and beta > 1.0 / max(k * k - 1, 1):
                logger.info(f"強い異方性のモデルです: k={k}, β={beta}")
            return cls(k=k, beta=beta)
        except (TypeError, ValueError) as e:
            logger.error(f"AnisotropyModelの変換中にエラーが発生しました: {str(e)}, データ: {data}")
            raise ConfigError(f"異方性モデルの値が不正です: {data}") from e

    @property
    def is_isotropic(self) -> bool:
        """等方的かどうか"""
        return self.beta == 0.0

    @property
    def weak_threshold(self) -> float:
        """弱い異方性と強い異方性の境界 1/(k²−1)"""
        if self.k == 1:
            return float('inf')
        return 1.0 / (self.k * self.k - 1)


@dataclass(frozen=True, eq=False)
class StabilizingFunction:
    """
    一様θ格子 [−π, π] 上の安定化関数 S(θ)
    区間内は周期的な区分線形補間で評価する
    """
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ConfigError("安定化関数には2点以上の標本が必要です")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ConfigError("安定化関数は有限かつ非負である必要があります")
        if values[0] != values[-1]:
            logger.warning(f"S(−π) と S(π) が一致しないため平均値に揃えます: {values[0]}, {values[-1]}")
            values[0] = values[-1] = 0.5 * (values[0] + values[-1])
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def constant(cls, value: float, grid_size: int = 1024) -> 'StabilizingFunction':
        """定数の安定化関数を生成する"""
        return cls(np.full(grid_size + 1, float(value)))

    @property
    def grid_size(self) -> int:
        """格子の区間数"""
        return self.values.size - 1

    @property
    def thetas(self) -> np.ndarray:
        """標本点のθ"""
        return np.linspace(-np.pi, np.pi, self.grid_size + 1)

    @property
    def max_value(self) -> float:
        """最大値"""
        return float(self.values.max())

    def __call__(self, theta):
        return np.interp(theta, self.thetas, self.values, period=2.0 * np.pi)

    def scaled(self, factor: float) -> 'StabilizingFunction':
        """定数倍した安定化関数を返す"""
        return StabilizingFunction(self.values * factor)


@dataclass(frozen=True, eq=False)
class EdgeFrame:
    """各辺の長さ・単位接線・単位外向き法線・角度"""
    lengths: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    thetas: np.ndarray

    def __len__(self) -> int:
        return self.lengths.size


@dataclass(frozen=True, eq=False)
class OpenCurve:
    """
    基板に端点を持つ開いた折れ線 Γ
    nodes[j] = (x_j, y_j), j = 0..J
    """
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise GeometryError(f"節点配列の形状が不正です: {nodes.shape}")
        if nodes.shape[0] < 4:
            raise GeometryError(f"節点数が不足しています（J ≥ 3 が必要）: J={nodes.shape[0] - 1}")
        if not np.all(np.isfinite(nodes)):
            raise GeometryError("節点座標に有限でない値が含まれています")
        if abs(nodes[0, 1]) > SUBSTRATE_TOL or abs(nodes[-1, 1]) > SUBSTRATE_TOL:
            raise GeometryError(f"接触点が基板上にありません: y0={nodes[0, 1]}, yJ={nodes[-1, 1]}")
        nodes[0, 1] = 0.0
        nodes[-1, 1] = 0.0
        if not nodes[0, 0] < nodes[-1, 0]:
            raise GeometryError(f"左右の接触点の順序が不正です: x0={nodes[0, 0]}, xJ={nodes[-1, 0]}")
        lengths = np.hypot(*np.diff(nodes, axis=0).T)
        if np.any(lengths <= 0):
            raise GeometryError(f"長さ0の辺があります: 辺 {int(np.argmin(lengths)) + 1}")
        nodes.setflags(write=False)
        object.__setattr__(self, 'nodes', nodes)

    @property
    def J(self) -> int:
        """辺の数"""
        return self.nodes.shape[0] - 1

    @property
    def x(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.nodes[:, 1]

    @property
    def edge_vectors(self) -> np.ndarray:
        """辺ベクトル h_j = X_j − X_{j−1}"""
        return np.diff(self.nodes, axis=0)

    @property
    def edge_lengths(self) -> np.ndarray:
        """辺の長さ |h_j|"""
        return np.hypot(*self.edge_vectors.T)

    @property
    def perimeter(self) -> float:
        """折れ線の全長"""
        return float(self.edge_lengths.sum())

    @property
    def contact_points(self) -> Tuple[float, float]:
        """左右の接触点のx座標"""
        return float(self.nodes[0, 0]), float(self.nodes[-1, 0])

    def translated(self, dx: float) -> 'OpenCurve':
        """x方向に平行移動した曲線を返す"""
        return OpenCurve(self.nodes + np.array([dx, 0.0]))


@dataclass(frozen=True, eq=False)
class SimulationState:
    """時刻 t_m における曲線 X^m・曲率 κ^m・化学ポテンシャル μ^m"""
    t: float
    curve: OpenCurve
    kappa: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        n = self.curve.J + 1
        kappa = np.array(self.kappa, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if kappa.shape != (n,) or mu.shape != (n,):
            raise GeometryError(f"節点場の長さが曲線と一致しません: κ={kappa.shape}, μ={mu.shape}, 節点数={n}")
        if abs(kappa[0]) > SUBSTRATE_TOL or abs(kappa[-1]) > SUBSTRATE_TOL:
            raise GeometryError(f"端点の曲率が0ではありません: κ0={kappa[0]}, κJ={kappa[-1]}")
        kappa[0] = kappa[-1] = 0.0
        kappa.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, 'kappa', kappa)
        object.__setattr__(self, 'mu', mu)
        object.__setattr__(self, 't', float(self.t))

    @property
    def J(self) -> int:
        return self.curve.J


@dataclass(frozen=True)
class SchemeConfig:
    """時間発展スキームのパラメータ"""
    stabilizer: StabilizingFunction
    scheme: str = 'es'
    q: int = 1
    dt: float = 5.0 / 128
    eps: float = 0.0
    eta: float = 100.0
    sigma: float = -0.6
    newton_tol: float = 1e-8
    newton_max: int = 50
    step_scale: float = 1.0

    def __post_init__(self):
        scheme = str(self.scheme).lower()
        if scheme not in SCHEME_KINDS:
            raise ConfigError(f"不明なスキームです: {self.scheme}（es または ac）")
        object.__setattr__(self, 'scheme', scheme)
        if self.q not in (0, 1):
            raise ConfigError(f"qは0または1である必要があります: {self.q}")
        if not self.dt > 0:
            raise ConfigError(f"時間刻みΔtは正である必要があります: {self.dt}")
        if not self.eta > 0:
            raise ConfigError(f"接触線移動度ηは正である必要があります: {self.eta}")
        if not self.eps >= 0:
            raise ConfigError(f"正則化パラメータεは0以上である必要があります: {self.eps}")
        if not self.newton_tol > 0 or self.newton_max < 1:
            raise ConfigError(f"Newton反復の設定が不正です: tol={self.newton_tol}, max={self.newton_max}")
        if not 0 < self.step_scale <= 1:
            raise ConfigError(f"ステップ倍率は (0, 1] の範囲で指定してください: {self.step_scale}")


@dataclass
class NewtonSystem:
    """
    Newton反復1回分の線形系
    未知数は節点ごとに (x_j, y_j, μ_j, κ_j) の順に並べ、
    Dirichlet条件で固定される y_0, y_J, κ_0, κ_J を除いた 4J 自由度
    """
    matrix: sp.csr_matrix
    rhs: np.ndarray
    active: np.ndarray
    J: int

    @property
    def size(self) -> int:
        return self.rhs.size

    @property
    def bandwidth(self) -> int:
        """行列の帯幅"""
        coo = self.matrix.tocoo()
        if coo.nnz == 0:
            return 0
        return int(np.max(np.abs(coo.row - coo.col)))


@dataclass
class DiagnosticsRecord:
    """1ステップごとの観測量"""
    t: float
    energy: float
    energy_ratio: float
    area: float
    area_drift: float
    mesh_ratio: float
    x_left: float
    x_right: float
    theta_left: float
    theta_right: float
    young_left: float
    young_right: float
    newton_iters: int = 0

    def to_dict(self) -> Dict[str, Any]:
        """CSV列順の辞書に変換する"""
        return {
            't': self.t,
            'energy': self.energy,
            'energy_ratio': self.energy_ratio,
            'area': self.area,
            'area_drift': self.area_drift,
            'mesh_ratio': self.mesh_ratio,
            'x_left': self.x_left,
            'x_right': self.x_right,
            'theta_left': self.theta_left,
            'theta_right': self.theta_right,
            'young_left': self.young_left,
            'young_right': self.young_right,
            'newton_iters': self.newton_iters,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DiagnosticsRecord':
        """辞書からインスタンスを生成する"""
        try:
            values = {name: float(data[name]) for name in DIAGNOSTICS_COLUMNS if name != 'newton_iters'}
            record = cls(newton_iters=int(data.get('newton_iters', 0)), **values)
            if record.mesh_ratio < 1:
                logger.warning(f"メッシュ比が1未満です: {record.mesh_ratio}, t={record.t}")
            return record
        except (KeyError, TypeError, ValueError) as e:
            logger.error(f"DiagnosticsRecordの変換中にエラーが発生しました: {str(e)}, データ: {data}")
            raise


DIAGNOSTICS_COLUMNS = [
    't', 'energy', 'energy_ratio', 'area', 'area_drift', 'mesh_ratio',
    'x_left', 'x_right', 'theta_left', 'theta_right', 'young_left', 'young_right',
    'newton_iters',
]


@dataclass
class ConvergenceRow:
    """収束次数表の1行"""
    J: int
    dt: float
    error: float
    order: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'J': self.J, 'dt': self.dt, 'error': self.error,
                'order': np.nan if self.order is None else self.order}


@dataclass(frozen=True)
class PinchEvent:
    """内部節点が基板に接触したイベント"""
    node_index: int
    t: float
    y_value: float
    refused: bool = False  # 島が小さすぎて分割しなかった

    def to_dict(self) -> Dict[str, Any]:
        return {'t': self.t, 'node_index': self.node_index, 'y_value': self.y_value, 'refused': self.refused}


@dataclass
class SimulationResult:
    """1本の曲線の時間発展結果"""
    final_state: SimulationState
    records: List[DiagnosticsRecord] = field(default_factory=list)
    snapshots: List[Tuple[int, SimulationState]] = field(default_factory=list)
    pinch_event: Optional[PinchEvent] = None
    previous_state: Optional[SimulationState] = None
    steps: int = 0

    @property
    def energy_history(self) -> np.ndarray:
        """エネルギーの履歴"""
        return np.array([r.energy for r in self.records])

    @property
    def is_energy_monotone(self) -> bool:
        """エネルギーが単調非増加かどうか（許容誤差 1e−10·max(1, |W0|)）"""
        energies = self.energy_history
        if energies.size < 2:
            return True
        tol = 1e-10 * max(1.0, abs(energies[0]))
        return bool(np.all(np.diff(energies) <= tol))
