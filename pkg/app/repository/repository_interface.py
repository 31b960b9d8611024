from abc import ABC, abstractmethod
from typing import List, Optional, Dict, Any

from app.models.models import AnisotropyModel, StabilizingFunction


class StabilizerRepositoryInterface(ABC):
    """
    最小安定化関数 S_0 の表をキャッシュするための抽象インターフェース
    キーは (k, β, q, θ格子サイズ, θ̂格子サイズ)
    """

    @abstractmethod
    def get_table(self, model: AnisotropyModel, q: int, grid_size: int,
                  hat_grid_size: int) -> Optional[StabilizingFunction]:
        """
        保存済みの表を取得する

        Args:
            model: 異方性モデル
            q: エネルギー行列の種類（0 または 1）
            grid_size: θ格子の分割数
            hat_grid_size: θ̂格子の分割数

        Returns:
            Optional[StabilizingFunction]: 見つからない場合や読み込みに失敗した場合はNone
        """
        pass

    @abstractmethod
    def save_table(self, model: AnisotropyModel, q: int, hat_grid_size: int,
                   table: StabilizingFunction) -> bool:
        """
        表を保存する（同じキーがあれば上書き）

        Returns:
            bool: 保存成功時はTrue
        """
        pass

    @abstractmethod
    def list_tables(self) -> List[Dict[str, Any]]:
        """保存済みの表のキーと作成日時の一覧"""
        pass
