from pathlib import Path
import logging
from datetime import datetime

from sqlalchemy import Column, Integer, Float, Text, DateTime, UniqueConstraint, create_engine
from sqlalchemy.engine import Engine, make_url
from sqlalchemy.orm import declarative_base
from sqlalchemy.pool import StaticPool

logger = logging.getLogger(__name__)

DEFAULT_CACHE_URL = 'sqlite:///data/stabilizer_cache.db'

# データベースのベースクラス
Base = declarative_base()


class StabilizerRecord(Base):
    """最小安定化関数 S_0 の表のデータベースモデル"""
    __tablename__ = 'stabilizer_tables'
    __table_args__ = (
        UniqueConstraint('k', 'beta', 'q', 'grid_size', 'hat_grid_size', name='uq_stabilizer_key'),
    )

    id = Column(Integer, primary_key=True)
    k = Column(Integer, nullable=False)
    beta = Column(Float, nullable=False)
    q = Column(Integer, nullable=False)
    grid_size = Column(Integer, nullable=False)
    hat_grid_size = Column(Integer, nullable=False)
    values_json = Column(Text, nullable=False)  # θ格子上の N+1 個の値
    created_at = Column(DateTime, default=datetime.now)


def create_cache_engine(cache_url: str = DEFAULT_CACHE_URL) -> Engine:
    """
    S_0 キャッシュ用のエンジンを作り、テーブルを用意する

    ファイルの SQLite なら親ディレクトリを作る。データベース名のない
    SQLite の URL はメモリ上の1接続を全セッションで共有する。

    Args:
        cache_url: SQLAlchemy のデータベースURL

    Returns:
        Engine: stabilizer_tables を作成済みのエンジン
    """
    url = make_url(cache_url)
    options = {}
    if url.get_backend_name() == 'sqlite':
        if url.database and url.database != ':memory:':
            cache_dir = Path(url.database).parent
            if not cache_dir.exists():
                cache_dir.mkdir(parents=True)
                logger.info(f"キャッシュのディレクトリを作成しました: {cache_dir}")
        else:
            options = {'poolclass': StaticPool, 'connect_args': {'check_same_thread': False}}

    engine = create_engine(url, **options)
    Base.metadata.create_all(engine, tables=[StabilizerRecord.__table__])
    logger.info(f"S_0キャッシュのテーブルを用意しました: {url.render_as_string(hide_password=True)}")
    return engine
