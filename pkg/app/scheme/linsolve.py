"""
Newton 線形系の直接解法
"""
import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from app.models.exceptions import ResidualTooLargeError, SingularMatrixError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-300
RESIDUAL_TOL = 1e-10


def solve(matrix, rhs) -> np.ndarray:
    """
    部分ピボット付き LU 分解で Ax = b を解き、相対残差を検証する

    Args:
        matrix: 正方行列（疎行列または ndarray）
        rhs: 右辺ベクトル

    Returns:
        np.ndarray: 解ベクトル
    """
    A = sp.csc_matrix(matrix, dtype=float)
    A.sum_duplicates()
    b = np.asarray(rhs, dtype=float)
    n, m = A.shape
    if n != m or b.shape != (n,):
        raise ValueError(f"線形系の形状が不正です: A={A.shape}, b={b.shape}")

    try:
        lu = splu(A, permc_spec='COLAMD')
    except RuntimeError as e:
        raise SingularMatrixError(f"係数行列が特異です: {str(e)}") from e
    pivots = np.abs(lu.U.diagonal())
    if pivots.size < n or pivots.min() < PIVOT_TOL:
        raise SingularMatrixError(f"係数行列が特異です: 最小ピボット {pivots.min() if pivots.size else 0.0:.3e}")

    x = lu.solve(b)
    scale = abs(A).sum(axis=1).max() * np.max(np.abs(x), initial=0.0) + np.max(np.abs(b), initial=0.0)
    residual = np.max(np.abs(A @ x - b), initial=0.0)
    relative = residual / scale if scale > 0 else residual
    if not np.isfinite(relative) or relative > RESIDUAL_TOL:
        raise ResidualTooLargeError(f"直接解法の相対残差が大きすぎます: {relative:.3e}", float(relative))
    logger.debug(f"線形系を解きました: n={n}, 相対残差 {relative:.3e}")
    return x
