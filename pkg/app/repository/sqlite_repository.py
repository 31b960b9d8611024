import json
import logging
from typing import List, Optional, Dict, Any

from sqlalchemy.orm import sessionmaker

from app.repository.repository_interface import StabilizerRepositoryInterface
from app.models.models import AnisotropyModel, StabilizingFunction
from app.models.database_models import StabilizerRecord, create_cache_engine

logger = logging.getLogger(__name__)


class SQLiteStabilizerRepository(StabilizerRepositoryInterface):
    """
    SQLiteを使用した S_0 キャッシュの実装
    失敗はすべてログに残して「キャッシュなし」として扱う
    """

    def __init__(self, session_factory):
        """
        コンストラクタ

        Args:
            session_factory: SQLAlchemy セッションファクトリ
        """
        self.session_factory = session_factory

    @classmethod
    def from_url(cls, cache_url: str) -> 'SQLiteStabilizerRepository':
        """
        データベースURLからリポジトリを作成する

        読み込んだレコードは値だけを取り出すので、コミット後の再読み込みはしない
        """
        engine = create_cache_engine(cache_url)
        return cls(sessionmaker(bind=engine, expire_on_commit=False))

    @staticmethod
    def _filter(session, model: AnisotropyModel, q: int, grid_size: int, hat_grid_size: int):
        return session.query(StabilizerRecord).filter(
            StabilizerRecord.k == model.k,
            StabilizerRecord.beta == float(model.beta),
            StabilizerRecord.q == q,
            StabilizerRecord.grid_size == grid_size,
            StabilizerRecord.hat_grid_size == hat_grid_size,
        )

    def get_table(self, model: AnisotropyModel, q: int, grid_size: int,
                  hat_grid_size: int) -> Optional[StabilizingFunction]:
        """
        保存済みの表を取得する

        Args:
            model: 異方性モデル
            q: エネルギー行列の種類
            grid_size: θ格子の分割数
            hat_grid_size: θ̂格子の分割数

        Returns:
            Optional[StabilizingFunction]: 見つからない場合はNone
        """
        try:
            with self.session_factory() as session:
                record = self._filter(session, model, q, grid_size, hat_grid_size).first()
                if record is None:
                    logger.info(f"S_0のキャッシュがありません: k={model.k}, β={model.beta}, q={q}, N={grid_size}")
                    return None
                values = json.loads(record.values_json)
            if len(values) != grid_size + 1:
                logger.warning(f"キャッシュされた表の長さが不正です: {len(values)}（期待値 {grid_size + 1}）")
                return None
            logger.info(f"S_0をキャッシュから読み込みました: k={model.k}, β={model.beta}, q={q}, N={grid_size}")
            return StabilizingFunction(values)
        except Exception as e:
            logger.warning(f"S_0キャッシュの読み込み中にエラーが発生しました: {str(e)}", exc_info=True)
            return None

    def save_table(self, model: AnisotropyModel, q: int, hat_grid_size: int,
                   table: StabilizingFunction) -> bool:
        """
        表を保存する（同じキーがあれば上書き）

        Returns:
            bool: 保存成功時はTrue
        """
        try:
            with self.session_factory() as session:
                values_json = json.dumps([float(v) for v in table.values])
                existing = self._filter(session, model, q, table.grid_size, hat_grid_size).first()
                if existing:
                    existing.values_json = values_json
                else:
                    session.add(StabilizerRecord(
                        k=model.k,
                        beta=float(model.beta),
                        q=q,
                        grid_size=table.grid_size,
                        hat_grid_size=hat_grid_size,
                        values_json=values_json,
                    ))
                session.commit()
                logger.info(f"S_0をキャッシュに保存しました: k={model.k}, β={model.beta}, q={q}, N={table.grid_size}")
                return True
        except Exception as e:
            logger.error(f"S_0キャッシュの保存中にエラーが発生しました: {str(e)}", exc_info=True)
            return False

    def list_tables(self) -> List[Dict[str, Any]]:
        """保存済みの表のキーと作成日時の一覧"""
        try:
            with self.session_factory() as session:
                records = session.query(StabilizerRecord).order_by(StabilizerRecord.id).all()
                return [
                    {
                        'k': r.k,
                        'beta': r.beta,
                        'q': r.q,
                        'grid_size': r.grid_size,
                        'hat_grid_size': r.hat_grid_size,
                        'created_at': r.created_at,
                    }
                    for r in records
                ]
        except Exception as e:
            logger.error(f"S_0キャッシュの一覧取得中にエラーが発生しました: {str(e)}", exc_info=True)
            return []
