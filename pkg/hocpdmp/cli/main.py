"""
hocpdmp CLI - Command Line Interface
"""

import sys
import argparse
import logging

from ..__version__ import __version__, __app_name__, __description__
from ..core.errors import ConfigError
from ..core.runner import COMMANDS, ExperimentRunner, RunConfig
from ..utils.constants import EXIT_USAGE
from ..utils.io import dumps


def setup_logging(log_file: str = None, verbose: bool = False):
    """Configure logging"""
    level = logging.DEBUG if verbose else logging.INFO
    handlers = [logging.StreamHandler()]

    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers
    )


# flag dest -> run config key, per section
INTEGRATOR_FLAGS = {
    'method': 'method',
    'step': 'step',
    'quad_step': 'quad_step',
    'max_time': 'max_time',
    'trunc_eps': 'trunc_eps',
}

SIMULATION_FLAGS = {
    'horizon': 'horizon',
    'max_jumps': 'max_jumps',
    'burn_in': 'burn_in',
    'stride': 'stride',
    'batches': 'batches',
    'paths': 'paths',
}

PARAM_FLAGS = {
    'x0': 'x0', 'times': 'times', 'indices': 'indices', 'y': 'y',
    'samples': 'samples', 'box': 'box', 'enumerate': 'enumerate', 'threshold_value': 'threshold',
    'd': 'd', 'k': 'k', 'A': 'A', 'ipp_support': 'ipp_support', 'order': 'order',
    'coord': 'coord', 'cells': 'cells', 'provenance': 'provenance',
    'support': 'support', 'points': 'points', 'mass_points': 'mass_points',
    'N': 'N', 'f0': 'f0', 'B': 'B', 'lam': 'lambda', 'v_star': 'v_star', 'schedules': 'schedules',
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', type=str, help='JSON run config (flags override its values)')
    common.add_argument('--model', '-m', type=str, dest='model_path', help='JSON model description file')
    common.add_argument('--seed', type=int, help='Base seed (default: 0)')
    common.add_argument('--workers', type=int, help='Worker processes (default: 1)')
    common.add_argument('--out', '-o', type=str, help='Output directory (default: hocpdmp_out)')

    integ = common.add_argument_group('integrator')
    integ.add_argument('--method', choices=['auto', 'rk4'], help='Exact flows when available, or force RK4')
    integ.add_argument('--step', type=float, help='RK4 step h (default: 1e-3)')
    integ.add_argument('--quad-step', type=float, help='Time-quadrature grid (default: 1e-2)')
    integ.add_argument('--max-time', type=float, help='Cap on truncation and thinning times (default: 1e3)')
    integ.add_argument('--trunc-eps', type=float, help='Survival truncation level (default: 1e-8)')

    sim = common.add_argument_group('simulation')
    sim.add_argument('--horizon', type=float, help='Simulation horizon T')
    sim.add_argument('--max-jumps', type=int, help='Jump cap')
    sim.add_argument('--burn-in', type=float, help='Fraction of leading jumps discarded (default: 0.1)')
    sim.add_argument('--stride', type=float, help='Sampling stride in time (default: 1.0)')
    sim.add_argument('--batches', type=int, help='Batches for batch-means SE (default: 30)')
    sim.add_argument('--paths', type=int, help='Number of paths (default: 1)')

    out = common.add_argument_group('output')
    out.add_argument('--log-file', '-l', type=str, help='Log file path')
    out.add_argument('--verbose', '-v', action='store_true', help='Verbose output')
    out.add_argument('--quiet', '-q', action='store_true', help='Suppress non-essential output')
    out.add_argument('--json', action='store_true', dest='json_output', help='Print the report as JSON')
    return common


def _region_flags(p: argparse.ArgumentParser):
    p.add_argument('--d', type=float, help='Region S_{d,k+2}: minimum |b~|')
    p.add_argument('--k', type=int, help='Region S_{d,k+2}: order k')
    p.add_argument('--A', type=float, help='Shift bound A (default: from the model)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=__app_name__,
        description=f'{__app_name__} - {__description__}',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=get_exit_help()
    )

    parser.add_argument(
        '--version', '-V',
        action='version',
        version=f'{__app_name__} {__version__}'
    )

    common = _common_parser()
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    p = sub.add_parser('simulate', parents=[common], help='Simulate paths (jump and state CSVs)')
    p.add_argument('--x0', type=float, nargs='+', help='Start state')

    p = sub.add_parser('check-good', parents=[common], help='Derivation matrix and goodness certificate')
    p.add_argument('--times', type=float, nargs='+', help='Inter-jump times t_1..t_{n+1}')
    p.add_argument('--indices', type=int, nargs='+', help='Jumping indices i_0..i_n (1-based)')
    p.add_argument('--y', type=float, nargs='+', help='State at which sigma is reported')
    p.add_argument('--samples', type=int, help='Random states in the certificate (default: 1000)')
    p.add_argument('--box', type=float, help='Half-width of the sampling box (default: 5)')
    p.add_argument('--threshold', type=float, dest='threshold_value', help='Absolute singular-value threshold')
    p.add_argument('--enumerate', action='store_true', default=None, help='Sweep every index sequence (N <= 6)')

    p = sub.add_parser('verify-identities', parents=[common], help='Ergodic, representation and IPP identities')
    p.add_argument('--x0', type=float, nargs='+', help='Start state')
    p.add_argument('--samples', type=int, help='Measure samples for the representation checks')
    p.add_argument('--ipp-support', type=float, nargs=2, metavar=('LO', 'HI'), help='Support of the IPP bump g')
    _region_flags(p)

    p = sub.add_parser('estimate-density', parents=[common], help='Invariant density grids and smoothness probe')
    p.add_argument('--x0', type=float, nargs='+', help='Start state')
    p.add_argument('--coord', type=int, help='Coordinate of the marginal (default: 1)')
    p.add_argument('--cells', type=int, help='KDE grid cells (default: 256)')
    p.add_argument('--provenance', choices=['time', 'jump_chain'], help='Time sampling or jump chain')
    p.add_argument('--order', type=int, help='Smoothness probe order (default: k)')
    _region_flags(p)

    p = sub.add_parser('propagate-density', parents=[common], help='One-step coarea propagation of a product density')
    p.add_argument('--support', type=float, nargs=2, metavar=('LO', 'HI'), help='Support of the input bump r')
    p.add_argument('--points', type=int, help='Grid points per coordinate (default: 50)')
    p.add_argument('--mass-points', type=int, help='Tensor grid points for the mass (default: 401)')

    p = sub.add_parser('neuron-demo', parents=[common], help='End-to-end run on the interacting-neuron model')
    p.add_argument('--N', type=int, help='Number of neurons (default: 2)')
    p.add_argument('--lam', type=float, help='Leak rate (default: 1)')
    p.add_argument('--v-star', type=float, help='Resting potential (default: 1)')
    p.add_argument('--schedules', type=int, help='Random schedules for det sigma (default: 100)')
    p.add_argument('--samples', type=int, help='Measure samples for the representation checks')
    p.add_argument('--skip-identities', action='store_true', help='Only the determinant and threshold reports')

    p = sub.add_parser('threshold', parents=[common], help='Regularity threshold k*')
    p.add_argument('--N', type=int, help='Number of particles')
    p.add_argument('--f0', type=float, help='Rate floor')
    p.add_argument('--B', type=float, help='Drift derivative bound')

    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < --config file < explicit flags"""
    d = RunConfig.load(args.config) if args.config else {}
    d['command'] = args.command
    for key in ('model_path', 'seed', 'workers', 'out'):
        if getattr(args, key, None) is not None:
            d[key] = getattr(args, key)
    for section, flags in (('integrator', INTEGRATOR_FLAGS), ('simulation', SIMULATION_FLAGS), ('params', PARAM_FLAGS)):
        values = dict(d.get(section) or {})
        for dest, key in flags.items():
            if getattr(args, dest, None) is not None:
                values[key] = getattr(args, dest)
        d[section] = values
    if getattr(args, 'skip_identities', False):
        d['params']['identities'] = False
    return RunConfig.from_dict(d)


def main(argv=None):
    """CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Setup logging (quiet suppresses console output)
    if args.quiet:
        setup_logging(args.log_file, verbose=False)
        logging.getLogger().setLevel(logging.WARNING)
    else:
        setup_logging(args.log_file, args.verbose)
    logger = logging.getLogger(__name__)

    try:
        config = build_config(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE

    logger.info(f"{__app_name__} v{__version__}")
    runner = ExperimentRunner(config)
    code = runner.run()

    if args.json_output:
        print(dumps(runner.report))
    else:
        logger.info("=" * 60)
        logger.info(f"SUMMARY: {config.command}")
        for check in runner.report.get("checks", []):
            logger.info(f"  {'PASS' if check['passed'] else 'FAIL'}  {check['name']}")
        if "error" in runner.report:
            logger.info(f"  ERROR ({runner.report['error']['module']}): {runner.report['error']['error']}")
        logger.info(f"  Exit code: {code}")
        logger.info("=" * 60)

    return code


def get_exit_help() -> str:
    """Generate exit code help text"""
    lines = ["\nSubcommands: " + ", ".join(COMMANDS), "\nExit codes:"]
    lines.append("  0: all checks pass")
    lines.append("  1: a check failed or an inner invariant was violated (report written)")
    lines.append("  2: usage or configuration error")
    return '\n'.join(lines)


if __name__ == '__main__':
    sys.exit(main())
