"""
実行設定: `key = value` 形式の設定ファイル、コマンドライン引数、環境変数の統合
"""
import logging
import os
from dataclasses import dataclass, fields, replace
from typing import Any, Dict, Optional

import numpy as np
from dotenv import load_dotenv

from app.models.models import AnisotropyModel, SchemeConfig, StabilizingFunction
from app.models.exceptions import ConfigError

logger = logging.getLogger(__name__)

STABILIZER_AUTO = 'auto'

# 設定ファイルで受け付ける別名
KEY_ALIASES = {
    'k': 'kfold',
    't_end': 'tmax',
    'delta': 'pinch_delta',
    'stride': 'snapshot_stride',
}


@dataclass(frozen=True)
class RunConfig:
    """1回の実行に必要なすべての設定"""
    scheme: str = 'es'
    q: int = 1
    kfold: int = 2
    beta: float = 0.5
    eps: float = 0.0
    eta: float = 100.0
    sigma: float = -0.6
    J: int = 128
    dt: float = 5.0 / 128
    tmax: float = 5.0
    shape: str = 'semi_ellipse'
    shape_a: float = 1.0
    shape_b: float = 0.5
    film_length: float = 60.0
    film_height: float = 1.0
    shape_file: Optional[str] = None
    output_dir: str = 'output'
    snapshot_stride: int = 0
    pinch_delta: Optional[float] = None
    stabilizer: str = STABILIZER_AUTO
    theta_grid: int = 1024
    newton_tol: float = 1e-8
    newton_max: int = 50
    step_scale: float = 1.0

    def __post_init__(self):
        if self.J < 3:
            raise ConfigError(f"辺の数 J は3以上が必要です: {self.J}")
        if self.tmax < 0:
            raise ConfigError(f"終了時刻は0以上である必要があります: {self.tmax}")
        if self.snapshot_stride < 0:
            raise ConfigError(f"スナップショット間隔は0以上である必要があります: {self.snapshot_stride}")
        if self.pinch_delta is not None and not self.pinch_delta > 0:
            raise ConfigError(f"ピンチオフの閾値は正である必要があります: {self.pinch_delta}")
        if self.theta_grid < 8:
            raise ConfigError(f"θ格子の分割数が小さすぎます: {self.theta_grid}")
        self.stabilizer_choice()
        # 残りの範囲チェックはモデルとスキーム設定に任せる
        self.to_model()
        SchemeConfig(stabilizer=StabilizingFunction.constant(0.0, 8), scheme=self.scheme, q=self.q,
                     dt=self.dt, eps=self.eps, eta=self.eta, sigma=self.sigma,
                     newton_tol=self.newton_tol, newton_max=self.newton_max, step_scale=self.step_scale)

    def to_model(self) -> AnisotropyModel:
        """異方性モデルに変換する"""
        return AnisotropyModel(k=self.kfold, beta=self.beta)

    def to_scheme_config(self, stabilizer: StabilizingFunction) -> SchemeConfig:
        """安定化関数を与えてスキーム設定に変換する"""
        return SchemeConfig(
            stabilizer=stabilizer,
            scheme=self.scheme,
            q=self.q,
            dt=self.dt,
            eps=self.eps,
            eta=self.eta,
            sigma=self.sigma,
            newton_tol=self.newton_tol,
            newton_max=self.newton_max,
            step_scale=self.step_scale,
        )

    def stabilizer_choice(self):
        """
        安定化関数の指定を解釈する

        Returns:
            'auto'、定数（float）、または表ファイルのパス（str）
        """
        value = str(self.stabilizer).strip()
        if value.lower() == STABILIZER_AUTO:
            return STABILIZER_AUTO
        try:
            constant = float(value)
        except ValueError:
            return value
        if not np.isfinite(constant) or constant < 0:
            raise ConfigError(f"安定化関数の定数は非負である必要があります: {constant}")
        return constant

    def pinch_threshold(self, initial_height: float) -> float:
        """ピンチオフ閾値 δ（未指定なら初期高さの 1e−3 倍）"""
        if self.pinch_delta is not None:
            return self.pinch_delta
        return 1e-3 * initial_height


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: Any) -> Any:
    """文字列の値をフィールドの型に変換する"""
    if raw is None:
        return None
    kind = _FIELD_TYPES[key]
    text = str(raw).strip()
    try:
        if kind is int:
            as_float = float(text)
            if as_float != int(as_float):
                raise ValueError(text)
            return int(as_float)
        if kind is float:
            return float(_fraction(text))
        if kind == Optional[float]:
            return None if text.lower() in ('', 'none') else float(_fraction(text))
        if kind == Optional[str]:
            return None if text.lower() in ('', 'none') else text
        return text
    except ValueError as e:
        raise ConfigError(f"設定値の形式が不正です: {key} = {raw}") from e


def _fraction(text: str) -> float:
    """'5/128' のような分数表記も受け付ける"""
    if '/' in text:
        numerator, denominator = text.split('/', 1)
        return float(numerator) / float(denominator)
    return float(text)


def _canonical_key(key: str) -> str:
    key = key.strip().replace('-', '_')
    key = KEY_ALIASES.get(key, key)
    if key not in _FIELD_TYPES:
        raise ConfigError(f"不明な設定キーです: {key}")
    return key


def read_config_file(path: str) -> Dict[str, Any]:
    """
    `key = value` 形式の設定ファイルを読み込む
    # 以降はコメント、空行は無視する

    Args:
        path: 設定ファイルのパス

    Returns:
        Dict[str, Any]: 型変換済みの値
    """
    if not os.path.exists(path):
        raise ConfigError(f"設定ファイルが見つかりません: {path}")
    values: Dict[str, Any] = {}
    with open(path, encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            content = line.split('#', 1)[0].strip()
            if not content:
                continue
            if '=' not in content:
                raise ConfigError(f"{path}:{number}: 'key = value' の形式ではありません: {content}")
            key, value = content.split('=', 1)
            key = _canonical_key(key)
            values[key] = _coerce(key, value)
    logger.info(f"設定ファイルを読み込みました: {path}（{len(values)} 項目）")
    return values


def parse_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    既定値 < 設定ファイル < コマンドライン引数 < 環境変数 DEWETTING_OUTPUT_DIR の順で設定を決める

    Args:
        path: 設定ファイルのパス（省略可）
        overrides: コマンドライン引数の値（None の項目は無視する）

    Returns:
        RunConfig: 検証済みの設定
    """
    load_dotenv()
    values: Dict[str, Any] = {}
    if path:
        values.update(read_config_file(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        key = _canonical_key(key)
        values[key] = value if not isinstance(value, str) else _coerce(key, value)

    output_dir = os.environ.get('DEWETTING_OUTPUT_DIR')
    if output_dir:
        values['output_dir'] = output_dir

    if values.get('shape') == 'file' and not values.get('shape_file'):
        raise ConfigError("初期形状 'file' には shape_file が必要です")
    config = replace(RunConfig(), **values) if values else RunConfig()
    logger.debug(f"実行設定: {config}")
    return config
