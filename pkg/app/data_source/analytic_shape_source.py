import logging

from app.data_source.data_source_interface import ShapeSourceInterface
from app.geometry.curve import init_flat_film, init_rectangle, init_semi_ellipse
from app.models.models import OpenCurve

logger = logging.getLogger(__name__)


class SemiEllipseSource(ShapeSourceInterface):
    """基板上の半楕円"""

    def __init__(self, a: float = 1.0, b: float = 0.5, center_x: float = 0.0):
        self.a = a
        self.b = b
        self.center_x = center_x

    def load_curve(self, J: int) -> OpenCurve:
        return init_semi_ellipse(self.a, self.b, self.center_x, J)

    @property
    def description(self) -> str:
        return f"半楕円 a={self.a}, b={self.b}"


class FlatFilmSource(ShapeSourceInterface):
    """原点中心の長い平坦な薄膜"""

    def __init__(self, length: float = 60.0, height: float = 1.0):
        self.length = length
        self.height = height

    def load_curve(self, J: int) -> OpenCurve:
        return init_flat_film(self.length, self.height, J)

    @property
    def description(self) -> str:
        return f"平坦な薄膜 {self.length}×{self.height}"


class RectangleSource(ShapeSourceInterface):
    """左端を指定した長方形"""

    def __init__(self, width: float, height: float, left: float = 0.0):
        self.width = width
        self.height = height
        self.left = left

    def load_curve(self, J: int) -> OpenCurve:
        return init_rectangle(self.width, self.height, J, self.left)

    @property
    def description(self) -> str:
        return f"長方形 {self.width}×{self.height}"
