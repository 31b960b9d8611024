import logging
import os
from typing import Optional

import numpy as np
import pandas as pd

from app.data_source.data_source_interface import ShapeSourceInterface
from app.models.models import OpenCurve, SimulationState
from app.models.exceptions import ConfigError, GeometryError

logger = logging.getLogger(__name__)

SNAPSHOT_COLUMNS = ['j', 'x', 'y', 'kappa']


def read_snapshot(path: str) -> pd.DataFrame:
    """
    スナップショットCSV（j,x,y[,kappa]）を読み込む

    Args:
        path: ファイルパス

    Returns:
        pd.DataFrame: j の昇順に並べたデータフレーム
    """
    if not os.path.exists(path):
        raise ConfigError(f"スナップショットファイルが見つかりません: {path}")
    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        logger.error(f"スナップショットファイルの読み込み中にエラーが発生しました: {path}: {str(e)}")
        raise ConfigError(f"スナップショットファイルを読み込めません: {path}") from e
    missing = [c for c in ('x', 'y') if c not in df.columns]
    if missing:
        raise ConfigError(f"スナップショットファイルに列がありません: {missing}")
    if 'j' in df.columns:
        df = df.sort_values('j').reset_index(drop=True)
    return df


def snapshot_dataframe(state: SimulationState) -> pd.DataFrame:
    """状態をスナップショットCSVの形式に変換する"""
    return pd.DataFrame({
        'j': np.arange(state.J + 1),
        'x': state.curve.x,
        'y': state.curve.y,
        'kappa': state.kappa,
    })


def curve_from_snapshot(path: str) -> OpenCurve:
    """スナップショットファイルの節点から曲線を作る"""
    df = read_snapshot(path)
    try:
        return OpenCurve(df[['x', 'y']].to_numpy(dtype=float))
    except GeometryError as e:
        raise ConfigError(f"スナップショットの曲線が不正です: {path}: {str(e)}") from e


class SnapshotFileSource(ShapeSourceInterface):
    """
    スナップショットファイルからの再開
    kappa 列に0でない値があれば κ⁰ として使う
    """

    def __init__(self, path: str):
        self.path = path
        self._frame: Optional[pd.DataFrame] = None

    def _load(self) -> pd.DataFrame:
        if self._frame is None:
            self._frame = read_snapshot(self.path)
        return self._frame

    def load_curve(self, J: int) -> OpenCurve:
        curve = curve_from_snapshot(self.path)
        if J and curve.J != J:
            logger.warning(f"スナップショットの辺数 {curve.J} を使用します（設定値 J={J} は無視されます）")
        return curve

    def load_kappa(self) -> Optional[np.ndarray]:
        df = self._load()
        if 'kappa' not in df.columns:
            return None
        kappa = df['kappa'].to_numpy(dtype=float)
        if not np.any(kappa != 0):
            return None
        logger.info(f"スナップショットの曲率を初期値として使用します: {self.path}")
        return kappa

    @property
    def description(self) -> str:
        return f"スナップショット {self.path}"
