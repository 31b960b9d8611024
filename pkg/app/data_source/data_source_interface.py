from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from app.models.models import OpenCurve


class ShapeSourceInterface(ABC):
    """
    初期形状の抽象インターフェース
    解析的な形状とスナップショットファイルを同じ手順で扱えるようにする
    """

    @abstractmethod
    def load_curve(self, J: int) -> OpenCurve:
        """
        初期曲線を生成する

        Args:
            J: 辺の数（ファイルから読み込む場合は無視される）

        Returns:
            OpenCurve: 初期曲線
        """
        pass

    def load_kappa(self) -> Optional[np.ndarray]:
        """
        初期曲率が与えられていればその値を返す

        Returns:
            Optional[np.ndarray]: None の場合は init_curvature で求める
        """
        return None

    @property
    @abstractmethod
    def description(self) -> str:
        """ログに出す形状の説明"""
        pass
