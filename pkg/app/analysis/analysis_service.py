import logging
import numpy as np
import pandas as pd
from typing import List, Dict, Any, Sequence

from app.models.models import ConvergenceRow, DiagnosticsRecord, DIAGNOSTICS_COLUMNS

logger = logging.getLogger(__name__)

CONVERGENCE_COLUMNS = ['J', 'dt', 'error', 'order']

# 時刻を突き合わせるときの丸め桁数
_TIME_DECIMALS = 12


class AnalysisService:
    """
    データ分析サービスクラス
    時間発展の記録から表を作り、エネルギー・面積の振る舞いを要約する
    """

    def create_diagnostics_dataframe(self, records: Sequence[DiagnosticsRecord]) -> pd.DataFrame:
        """
        観測量の記録からデータフレームを作成する

        Args:
            records: DiagnosticsRecord のリスト

        Returns:
            pd.DataFrame: CSV の列順に並べたデータフレーム
        """
        return pd.DataFrame([r.to_dict() for r in records], columns=DIAGNOSTICS_COLUMNS)

    def create_convergence_dataframe(self, rows: Sequence[ConvergenceRow]) -> pd.DataFrame:
        """収束次数表のデータフレーム"""
        return pd.DataFrame([r.to_dict() for r in rows], columns=CONVERGENCE_COLUMNS)

    def summarize_run(self, records: Sequence[DiagnosticsRecord]) -> Dict[str, Any]:
        """
        1回の時間発展の要約を作成する

        Args:
            records: 時刻順の DiagnosticsRecord

        Returns:
            Dict[str, Any]: エネルギーの単調性・面積変化・最終メッシュ比・接触角など
        """
        if not records:
            logger.warning("要約する記録がありません")
            return {}

        df = self.create_diagnostics_dataframe(records)
        energy0 = df['energy'].iloc[0]
        tol = 1e-10 * max(1.0, abs(energy0))
        increments = df['energy'].diff().dropna()
        max_increase = float(increments.max()) if not increments.empty else 0.0
        area0 = df['area'].iloc[0]
        drift = df['area_drift'].abs()

        summary = {
            'steps': len(df) - 1,
            't_final': float(df['t'].iloc[-1]),
            'energy_initial': float(energy0),
            'energy_final': float(df['energy'].iloc[-1]),
            'energy_ratio_final': float(df['energy_ratio'].iloc[-1]),
            'energy_monotone': bool(max_increase <= tol),
            'max_energy_increase': max_increase,
            'max_area_drift': float(drift.max()),
            'max_relative_area_drift': float(drift.max() / abs(area0)) if area0 != 0 else np.nan,
            'mesh_ratio_final': float(df['mesh_ratio'].iloc[-1]),
            'mesh_ratio_max': float(df['mesh_ratio'].max()),
            'theta_left_final': float(df['theta_left'].iloc[-1]),
            'theta_right_final': float(df['theta_right'].iloc[-1]),
            'young_left_final': float(df['young_left'].iloc[-1]),
            'young_right_final': float(df['young_right'].iloc[-1]),
            'max_newton_iters': int(df['newton_iters'].max()),
        }

        if not summary['energy_monotone']:
            logger.warning(f"エネルギーの増加が許容値を超えました: 最大増加 {max_increase:.3e}（許容値 {tol:.3e}）")
        return summary

    def compare_schemes(self, es_records: Sequence[DiagnosticsRecord],
                        ac_records: Sequence[DiagnosticsRecord]) -> pd.DataFrame:
        """
        ES と AC の記録を共通の時刻で並べる

        Args:
            es_records: ES スキームの記録
            ac_records: AC スキームの記録

        Returns:
            pd.DataFrame: t, energy_ratio_es, energy_ratio_ac, relative_area_drift_es, relative_area_drift_ac
        """
        frames = []
        for label, records in (('es', es_records), ('ac', ac_records)):
            df = self.create_diagnostics_dataframe(records)
            area0 = df['area'].iloc[0] if not df.empty else np.nan
            frames.append(pd.DataFrame({
                't': df['t'].round(_TIME_DECIMALS),
                f'energy_ratio_{label}': df['energy_ratio'],
                f'relative_area_drift_{label}': df['area_drift'] / area0,
            }))
        merged = pd.merge(frames[0], frames[1], on='t', how='inner')
        if len(merged) < max(len(es_records), len(ac_records)):
            logger.warning(f"共通の時刻は {len(merged)} 点です（ES {len(es_records)} 点, AC {len(ac_records)} 点）")
        return merged.sort_values('t').reset_index(drop=True)

    def total_energy(self, island_records: List[Sequence[DiagnosticsRecord]]) -> pd.DataFrame:
        """
        分割後の島ごとの記録からエネルギーの合計の履歴を作る

        Args:
            island_records: 島ごとの記録（時刻は共通）

        Returns:
            pd.DataFrame: t, energy（全島の合計）
        """
        frames = [self.create_diagnostics_dataframe(r)[['t', 'energy']].assign(t=lambda d: d['t'].round(_TIME_DECIMALS))
                  for r in island_records]
        if not frames:
            return pd.DataFrame(columns=['t', 'energy'])
        grouped = pd.concat(frames).groupby('t')['energy'].agg(['sum', 'count'])
        # すべての島がそろっている時刻だけを残す
        grouped = grouped[grouped['count'] == len(frames)]
        total = pd.DataFrame({'t': grouped.index.to_numpy(), 'energy': grouped['sum'].to_numpy()})
        return total.sort_values('t').reset_index(drop=True)
