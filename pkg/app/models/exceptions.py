"""
シミュレータ全体で使用するドメイン例外
"""


class DewettingError(Exception):
    """シミュレータの基底例外"""


class ConfigError(DewettingError):
    """設定ファイル・コマンドライン引数の不正"""


class GeometryError(DewettingError):
    """曲線データの不正（長さ0の辺、端点が基板上にない等）"""


class DegenerateMeshError(GeometryError):
    """計算中にメッシュが退化した"""


class SelfIntersectionError(GeometryError):
    """多角形が自己交差している"""


class StabilizerError(DewettingError):
    """安定化関数の前提条件違反、または探索上限内で実行可能解がない"""


class LinearSolveError(DewettingError):
    """線形ソルバーの失敗"""


class SingularMatrixError(LinearSolveError):
    """係数行列が特異"""


class ResidualTooLargeError(LinearSolveError):
    """直接解法の残差が許容値を超えた"""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class NonConvergenceError(DewettingError):
    """Newton反復が収束しなかった"""

    def __init__(self, message: str, iterations: int, last_update: float):
        super().__init__(message)
        self.iterations = iterations
        self.last_update = last_update


class TopologyError(DewettingError):
    """ピンチオフによる分割を実行できない"""
