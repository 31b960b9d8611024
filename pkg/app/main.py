import sys
import os
from pathlib import Path

# プロジェクトのルートディレクトリをPATHに追加
project_root = str(Path(__file__).parent.parent)
sys.path.insert(0, project_root)

import argparse
import logging
from typing import List, Optional

from dotenv import load_dotenv

from app.analysis.convergence import TIME_REFINEMENTS, QUARTER
from app.config.run_config import parse_config
from app.models.models import AnisotropyModel
from app.models.exceptions import (
    ConfigError, DegenerateMeshError, DewettingError, NonConvergenceError,
)
from app.service.simulation_service import SimulationService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_DEGENERATE = 4
EXIT_FAILURE = 1

# コマンドライン引数と RunConfig のフィールドの対応
RUN_FLAGS = {
    'scheme': str, 'q': int, 'kfold': int, 'beta': float, 'eps': float, 'eta': float, 'sigma': float,
    'J': int, 'dt': str, 'tmax': float, 'shape': str, 'shape_a': float, 'shape_b': float,
    'film_length': float, 'film_height': float, 'shape_file': str, 'output_dir': str,
    'snapshot_stride': int, 'pinch_delta': float, 'stabilizer': str, 'theta_grid': int,
    'newton_tol': float, 'newton_max': int, 'step_scale': float,
}


def _add_run_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help="key = value 形式の設定ファイル")
    for name, kind in RUN_FLAGS.items():
        flag = '--' + name.replace('_', '-')
        aliases = [flag]
        if '_' in name:
            aliases.append('--' + name)
        parser.add_argument(*aliases, dest=name, type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    """サブコマンド run / convergence / s0 / compare / equilibrium のパーサー"""
    parser = argparse.ArgumentParser(prog='dewetting',
                                     description="異方性表面拡散による固体薄膜デウェッティングのシミュレーション")
    parser.add_argument('--log-level', default=None, help="ログレベル（既定値は DEWETTING_LOG_LEVEL または INFO）")
    subparsers = parser.add_subparsers(dest='command', required=True)

    run_parser = subparsers.add_parser('run', help="時間発展を実行する")
    _add_run_flags(run_parser)

    conv_parser = subparsers.add_parser('convergence', help="収束次数を計測する")
    _add_run_flags(conv_parser)
    conv_parser.add_argument('--levels', type=int, default=3)
    conv_parser.add_argument('--t-eval', type=float, default=1.0)
    conv_parser.add_argument('--J0', type=int, default=32)
    conv_parser.add_argument('--time-refinement', choices=TIME_REFINEMENTS, default=QUARTER)
    conv_parser.add_argument('--workers', type=int, default=1)

    s0_parser = subparsers.add_parser('s0', help="最小安定化関数 S_0 の表を書き出す")
    s0_parser.add_argument('--kfold', type=int, default=2)
    s0_parser.add_argument('--beta', type=float, default=0.5)
    s0_parser.add_argument('--q', type=int, default=1)
    s0_parser.add_argument('--theta-grid', type=int, default=1024)
    s0_parser.add_argument('--output-dir', default=None)

    compare_parser = subparsers.add_parser('compare', help="2つのスナップショットの多様体距離を表示する")
    compare_parser.add_argument('file_a')
    compare_parser.add_argument('file_b')

    eq_parser = subparsers.add_parser('equilibrium', help="スナップショットと等方的な平衡円弧の多様体距離を表示する")
    eq_parser.add_argument('file')
    eq_parser.add_argument('--sigma', type=float, default=-0.6)
    eq_parser.add_argument('--J', type=int, default=512)
    return parser


def _run_overrides(args: argparse.Namespace) -> dict:
    return {name: getattr(args, name) for name in RUN_FLAGS}


def cmd_run(args: argparse.Namespace, service: SimulationService) -> int:
    config = parse_config(args.config, _run_overrides(args))
    outcome = service.run_simulation(config)
    print(f"完了: {len(outcome.islands)} 個の島, ピンチオフ {len(outcome.pinch_events)} 回, 出力 {config.output_dir}")
    return EXIT_OK


def cmd_convergence(args: argparse.Namespace, service: SimulationService) -> int:
    config = parse_config(args.config, _run_overrides(args))
    rows = service.run_convergence(config, args.levels, args.t_eval, J0=args.J0,
                                   time_refinement=args.time_refinement, max_workers=args.workers)
    for row in rows:
        order = '' if row.order is None else f"{row.order:.17g}"
        print(f"{row.J},{row.dt:.17g},{row.error:.17g},{order}")
    return EXIT_OK


def cmd_s0(args: argparse.Namespace, service: SimulationService) -> int:
    output_dir = args.output_dir or os.environ.get('DEWETTING_OUTPUT_DIR', 'output')
    path = service.write_stabilizer_table(AnisotropyModel(k=args.kfold, beta=args.beta), args.q,
                                          args.theta_grid, output_dir)
    print(path)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, service: SimulationService) -> int:
    print(f"{service.compare_snapshots(args.file_a, args.file_b):.17g}")
    return EXIT_OK


def cmd_equilibrium(args: argparse.Namespace, service: SimulationService) -> int:
    distance, area = service.equilibrium_distance(args.file, args.sigma, args.J)
    print(f"{distance:.17g},{distance / area:.17g}")
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'convergence': cmd_convergence,
    's0': cmd_s0,
    'compare': cmd_compare,
    'equilibrium': cmd_equilibrium,
}


def main(argv: Optional[List[str]] = None, service: Optional[SimulationService] = None) -> int:
    """
    メイン関数

    Returns:
        int: 終了コード（0 正常, 2 設定エラー, 3 Newton 反復の非収束, 4 メッシュの退化）
    """
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    level = (args.log_level or os.environ.get('DEWETTING_LOG_LEVEL', 'INFO')).upper()
    # ロギングの設定
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    try:
        needs_cache = args.command in ('run', 'convergence', 's0')
        service = service or SimulationService(use_cache=needs_cache)
        return COMMANDS[args.command](args, service)
    except ConfigError as e:
        logger.error(f"設定エラー: {str(e)}")
        print(f"設定エラー: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as e:
        logger.error(f"Newton反復が収束しませんでした: {str(e)}", exc_info=True)
        print(f"非収束: {str(e)}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except DegenerateMeshError as e:
        logger.error(f"メッシュが退化しました: {str(e)}", exc_info=True)
        print(f"メッシュの退化: {str(e)}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DewettingError as e:
        logger.error(f"実行中にエラーが発生しました: {str(e)}", exc_info=True)
        print(f"エラー: {str(e)}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
