import os
import logging
from typing import Optional

from app.repository.repository_interface import StabilizerRepositoryInterface
from app.repository.sqlite_repository import SQLiteStabilizerRepository
from app.models.database_models import DEFAULT_CACHE_URL

logger = logging.getLogger(__name__)


class RepositoryFactory:
    """
    リポジトリを生成するファクトリークラス
    """

    @staticmethod
    def create_repository() -> Optional[StabilizerRepositoryInterface]:
        """
        環境設定に基づいて S_0 キャッシュのリポジトリを作成する

        Returns:
            Optional[StabilizerRepositoryInterface]: DEWETTING_CACHE_URL が none のとき、
            またはキャッシュを開けないときはNone
        """
        cache_url = os.environ.get('DEWETTING_CACHE_URL', DEFAULT_CACHE_URL)
        if cache_url.strip().lower() in ('', 'none'):
            logger.info("S_0のキャッシュは無効です")
            return None

        logger.info(f"リポジトリを作成します: {cache_url}")
        try:
            return SQLiteStabilizerRepository.from_url(cache_url)
        except Exception as e:
            logger.warning(f"S_0のキャッシュを開けないため、キャッシュなしで続行します: {str(e)}", exc_info=True)
            return None
