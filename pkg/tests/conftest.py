import pytest
import sys
import os
from pathlib import Path

# プロジェクトのルートディレクトリをPATHに追加
project_root = str(Path(__file__).parent.parent)
sys.path.insert(0, project_root)

from app.geometry.curve import init_semi_ellipse
from app.models.models import AnisotropyModel, SchemeConfig, StabilizingFunction
from app.scheme.newton import initial_state


# テスト実行時に環境変数を設定
@pytest.fixture(scope="session", autouse=True)
def setup_test_env():
    """テスト環境のセットアップ"""
    # テスト用の環境変数を設定（S_0 のキャッシュはテストごとに明示的に作る）
    saved = {key: os.environ.get(key) for key in ('DEWETTING_CACHE_URL', 'DEWETTING_SHAPE_SOURCE', 'DEWETTING_OUTPUT_DIR')}
    os.environ['DEWETTING_CACHE_URL'] = 'none'
    os.environ['DEWETTING_SHAPE_SOURCE'] = 'semi_ellipse'
    os.environ.pop('DEWETTING_OUTPUT_DIR', None)

    yield

    for key, value in saved.items():
        if value is None:
            os.environ.pop(key, None)
        else:
            os.environ[key] = value


@pytest.fixture
def isotropic_model():
    return AnisotropyModel(k=2, beta=0.0)


@pytest.fixture
def small_ellipse():
    """J=16 の半楕円"""
    return init_semi_ellipse(1.0, 0.5, 0.0, 16)


@pytest.fixture
def small_state(small_ellipse):
    return initial_state(small_ellipse)


@pytest.fixture
def isotropic_config():
    """S ≡ 0、ε = 0 の等方的な ES スキーム"""
    return SchemeConfig(stabilizer=StabilizingFunction.constant(0.0, 64), dt=0.01)
