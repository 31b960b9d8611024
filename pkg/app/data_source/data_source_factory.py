from typing import Optional
import os
import logging

from app.data_source.data_source_interface import ShapeSourceInterface
from app.data_source.analytic_shape_source import FlatFilmSource, RectangleSource, SemiEllipseSource
from app.data_source.snapshot_file_source import SnapshotFileSource
from app.models.exceptions import ConfigError

logger = logging.getLogger(__name__)

SHAPE_KINDS = ('semi_ellipse', 'flat_film', 'rectangle', 'file')


class ShapeSourceFactory:
    """
    初期形状のソースを生成するファクトリークラス
    """

    @staticmethod
    def create_shape_source(source_type: Optional[str] = None, a: float = 1.0, b: float = 0.5,
                            length: float = 60.0, height: float = 1.0,
                            path: Optional[str] = None) -> ShapeSourceInterface:
        """
        指定された種類の初期形状ソースを生成する

        Args:
            source_type: 'semi_ellipse', 'flat_film', 'rectangle', 'file'
                        Noneの場合は環境変数 DEWETTING_SHAPE_SOURCE から判断
            a, b: 半楕円の半軸
            length, height: 薄膜・長方形の幅と高さ
            path: スナップショットファイルのパス

        Returns:
            ShapeSourceInterface: 生成されたソース
        """
        if source_type is None:
            source_type = os.environ.get('DEWETTING_SHAPE_SOURCE', 'semi_ellipse')
        source_type = source_type.lower()

        logger.info(f"初期形状 '{source_type}' を使用します")

        if source_type == 'semi_ellipse':
            return SemiEllipseSource(a, b)
        elif source_type == 'flat_film':
            return FlatFilmSource(length, height)
        elif source_type == 'rectangle':
            return RectangleSource(length, height)
        elif source_type == 'file':
            if not path:
                raise ConfigError("初期形状 'file' にはファイルパスが必要です")
            return SnapshotFileSource(path)
        raise ConfigError(f"不明な初期形状です: '{source_type}'（{', '.join(SHAPE_KINDS)}）")
