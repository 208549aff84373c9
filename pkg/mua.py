#!/usr/bin/env python3
"""
Command-line entry point for multiscale sparse unmixing

Usage:
  python mua.py synth   --dataset dc1 --out-dir data/         - Generate library, truth and noisy cube
  python mua.py segment --cube data/cube --out seg.txt          - Segment a cube (slic | kmeans | grid)
  python mua.py unmix   --cube data/cube --library data/library.csv --preset dc1-20db-slic --out-dir run/
  python mua.py eval    --truth data/truth --estimate run/abundances --out report.csv
  python mua.py bench   --config sweep.txt --out results.csv      - Grid sweep, one CSV row per cell
  python mua.py presets                                          - List the parameter presets

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional

import config
from bench import run_sweep_file
from datamodel import MuaConfig, SpectralLibrary, validate_pair
from errors import FormatError, MuaError, ValidationError
from fileio import (export_abundance_maps, export_band_previews, read_abundances, read_cube, read_key_values,
                    read_library, read_segment_map, write_abundances, write_cube, write_key_values,
                    write_library, write_pgm, write_segment_map, append_results)
from metrics import EvalReport, aggregate_by_material, rmse, sre
from pipeline import mua_unmix, sunsal_unmix
from synth import Dc1Params, Dc2Params, add_noise, generate_dc1, generate_dc2, generate_library
from transform import SlicParams, coarse_preview, grid_segment, kmeans_segment, slic_segment

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors become ValidationError (exit code 1)"""

    def error(self, message):
        raise ValidationError(message)


def _snr(value: str) -> float:
    if value.strip().lower() in ('inf', '+inf', 'none'):
        return math.inf
    return float(value)


def _int_list(value: str) -> List[int]:
    return [int(v) for v in value.split(',') if v.strip()]


def synth_command(args) -> int:
    """Generate a library, a ground-truth abundance cube and a noisy observation"""
    out_dir = Path(args.out_dir)
    library = generate_library(args.bands, args.library_size, args.min_angle, args.seed)
    if args.dataset == 'dc1':
        truth, clean = generate_dc1(library, Dc1Params(size=args.size or 75, endmembers=args.endmembers or 5,
                                                       seed=args.seed + 1))
    else:
        truth, clean = generate_dc2(library, Dc2Params(size=args.size or 100, endmembers=args.endmembers or 9,
                                                       seed=args.seed + 1))
    noisy = add_noise(clean, args.snr, args.seed + 2)

    description = (f"{args.dataset} snr_db={args.snr} library_seed={args.seed} "
                   f"data_seed={args.seed + 1} noise_seed={args.seed + 2}")
    write_library(out_dir / 'library.csv', library)
    write_abundances(out_dir / 'truth', truth, clean.rows, clean.cols, description=f"ground truth, {description}")
    write_cube(out_dir / 'cube', noisy, seed=args.seed, description=description)
    print(f"✅ {args.dataset} scene written to {out_dir} (seed {args.seed})")
    return 0


def segment_command(args) -> int:
    """Segment a cube and write the SegmentMap text file"""
    _, image = read_cube(args.cube)
    if args.method == 'slic':
        seg = slic_segment(image, SlicParams(args.region_size, args.compactness, args.iters or config.SLIC_ITERS, args.seed))
    elif args.method == 'kmeans':
        k = max(1, image.pixels // args.region_size ** 2)
        seg = kmeans_segment(image, k, args.iters or config.KMEANS_ITERS, args.seed)
    else:
        seg = grid_segment(image, args.region_size)
    write_segment_map(args.out, seg)
    if args.preview_dir:
        export_band_previews(coarse_preview(image, seg), _int_list(args.preview_bands), args.preview_dir)
    print(f"✅ {args.method}: {seg.segment_count} segments for {seg.pixels} pixels -> {args.out}")
    return 0


def resolve_unmix_settings(args) -> Dict[str, object]:
    """Merge preset values with explicit flags (flags win)"""
    settings: Dict[str, object] = {}
    if args.preset:
        if args.preset not in config.PRESETS:
            raise ValidationError(f"unknown preset {args.preset!r}; see 'mua.py presets'")
        settings.update(config.PRESETS[args.preset])
    explicit = {
        'method': args.method, 'transform': args.transform, 'lambda_c': args.lambda_c,
        'lambda_': args.lambda_, 'beta': args.beta, 'region_size': args.region_size,
    }
    settings.update({k: v for k, v in explicit.items() if v is not None})
    settings.setdefault('method', 'mua')
    settings.setdefault('transform', 'slic')
    settings.setdefault('region_size', 6)
    if 'lambda_' not in settings:
        raise ValidationError("--lambda is required (or use --preset)")
    if settings['method'] == 'mua':
        missing = [flag for key, flag in (('lambda_c', '--lambda-c'), ('beta', '--beta')) if key not in settings]
        if missing:
            raise ValidationError(f"mua needs {' and '.join(missing)} (or use --preset)")
    else:
        settings['lambda_c'] = settings['lambda_']
        settings['beta'] = 0.0
    return settings


def unmix_command(args) -> int:
    """Unmix a cube with MUA or the unregularized baseline"""
    settings = resolve_unmix_settings(args)
    header, image = read_cube(args.cube)
    library = read_library(args.library)
    validate_pair(image, library)
    cfg = MuaConfig(
        lambda_c=float(settings['lambda_c']), lambda_=float(settings['lambda_']), beta=float(settings['beta']),
        mu=args.mu, transform=settings['transform'], region_size=int(settings['region_size']),
        max_iters=args.max_iters, tol=args.tol, seed=args.seed, compactness=args.compactness,
        adaptive_mu=args.adaptive_mu,
    )
    out_dir = Path(args.out_dir)
    report = {'method': settings['method'], 'cube': args.cube, 'library': args.library,
              'cube_seed': header.seed, 'preset': args.preset or ''}
    report.update(cfg.echo())

    if settings['method'] == 'sunsal':
        solve = sunsal_unmix(image, library, cfg.lambda_, mu=cfg.mu, max_iters=cfg.max_iters, tol=cfg.tol,
                             adaptive_mu=cfg.adaptive_mu)
        abundances, runtime = solve.abundances, solve.wall_time
        report.update({
            'iterations': solve.iterations, 'primal_residual': solve.final_primal_residual,
            'dual_residual': solve.final_dual_residual, 'objective': solve.objective,
            'converged': solve.converged, 'final_mu': solve.final_mu,
        })
    else:
        seg = read_segment_map(args.segment_map) if args.segment_map else None
        result = mua_unmix(image, library, cfg, segment_map=seg)
        abundances, runtime = result.abundances, result.wall_time
        report.update({
            'segments': result.segment_map.segment_count,
            'coarse_iterations': result.coarse_report.iterations,
            'coarse_primal_residual': result.coarse_report.final_primal_residual,
            'coarse_dual_residual': result.coarse_report.final_dual_residual,
            'iterations': result.fine_report.iterations,
            'primal_residual': result.fine_report.final_primal_residual,
            'dual_residual': result.fine_report.final_dual_residual,
            'objective': result.fine_report.objective,
            'converged': result.coarse_report.converged and result.fine_report.converged,
            'final_mu': result.fine_report.final_mu,
        })
    report['runtime_s'] = runtime

    write_abundances(out_dir / 'abundances', abundances, image.rows, image.cols,
                     description=f"{settings['method']} estimate of {args.cube}")
    write_key_values(out_dir / 'report.txt', report)
    if args.maps:
        active = [i for i in range(abundances.count) if abundances.values[i].max() > 0]
        export_abundance_maps(abundances, image.rows, image.cols, out_dir / 'maps', indices=active)
    if args.materials:
        _export_materials(abundances, library, image.rows, image.cols, out_dir / 'materials')
    print(f"✅ {settings['method']} finished in {runtime:.2f}s -> {out_dir}")
    return 0


def _export_materials(abundances, library: SpectralLibrary, rows: int, cols: int, out_dir: Path) -> None:
    if library.material_map is None:
        logger.warning("Library has no material row; skipping material maps")
        return
    materials, aggregated = aggregate_by_material(abundances, library.material_map)
    out_dir.mkdir(parents=True, exist_ok=True)
    for material, plane in zip(materials, aggregated.values):
        write_pgm(out_dir / f"material_{material}.pgm", plane.reshape(rows, cols))
    logger.info(f"Exported {len(materials)} material maps to {out_dir}")


def _config_from_report(values: Dict[str, str]) -> Optional[MuaConfig]:
    try:
        lam = float(values['lambda'])
        sunsal = values.get('method') == 'sunsal'
        return MuaConfig(
            lambda_c=lam if sunsal else float(values['lambda_c']),
            lambda_=lam,
            beta=0.0 if sunsal else float(values['beta']),
            mu=float(values.get('mu', config.ADMM_MU)),
            transform=values.get('transform', 'slic'),
            region_size=int(values.get('region_size', 6)),
            max_iters=int(values.get('max_iters', config.ADMM_MAX_ITERS)),
            tol=float(values.get('tol', config.ADMM_TOL)),
            seed=int(values.get('seed', 0)),
            adaptive_mu=values.get('adaptive_mu', 'False') == 'True',
        )
    except (KeyError, ValueError) as e:
        raise FormatError(f"run report is missing or has a malformed field ({e})") from e


def eval_command(args) -> int:
    """Score an estimate against the truth and append a CSV row"""
    _, truth = read_abundances(args.truth)
    _, estimate = read_abundances(args.estimate)
    run_report = args.run_report
    if run_report is None:
        candidate = Path(args.estimate).parent / 'report.txt'
        run_report = candidate if candidate.exists() else None
    cfg, method, runtime = None, 'mua', float('nan')
    if run_report is not None:
        values = read_key_values(run_report)
        cfg = _config_from_report(values)
        method = values.get('method', 'mua')
        runtime = float(values.get('runtime_s', 'nan'))
    evaluation = EvalReport(sre(truth, estimate), rmse(truth, estimate), runtime, cfg, method, args.snr_db)
    append_results(args.out, [evaluation.as_row()])
    print(f"✅ SRE {evaluation.sre_db:.2f} dB, RMSE {evaluation.rmse:.4g} -> {args.out}")
    return 0


def bench_command(args) -> int:
    """Run a parameter sweep"""
    rows = run_sweep_file(args.config, args.out, workers=args.workers)
    print(f"✅ {len(rows)} sweep cells -> {args.out}")
    return 0


def presets_command(args) -> int:
    for name, values in config.PRESETS.items():
        print(f"{name}: " + ', '.join(f"{k}={v}" for k, v in values.items()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='mua.py', description='Multiscale sparse unmixing')
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help='generate a synthetic scene')
    p.add_argument('--dataset', choices=['dc1', 'dc2'], required=True)
    p.add_argument('--bands', type=int, default=224)
    p.add_argument('--library-size', type=int, default=240)
    p.add_argument('--min-angle', type=float, default=4.44)
    p.add_argument('--snr', type=_snr, default=20.0, help="dB, or 'inf' for no noise")
    p.add_argument('--size', type=int, default=None)
    p.add_argument('--endmembers', type=int, default=None)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out-dir', required=True)
    p.set_defaults(handler=synth_command)

    p = sub.add_parser('segment', help='segment a cube')
    p.add_argument('--cube', required=True)
    p.add_argument('--method', choices=['slic', 'kmeans', 'grid'], default='slic')
    p.add_argument('--region-size', type=int, required=True)
    p.add_argument('--compactness', type=float, default=None)
    p.add_argument('--iters', type=int, default=None)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)
    p.add_argument('--preview-dir', default=None, help='write segment-averaged band previews here')
    p.add_argument('--preview-bands', default='0')
    p.set_defaults(handler=segment_command)

    p = sub.add_parser('unmix', help='estimate abundances')
    p.add_argument('--cube', required=True)
    p.add_argument('--library', required=True)
    p.add_argument('--preset', default=None)
    p.add_argument('--method', choices=['mua', 'sunsal'], default=None)
    p.add_argument('--transform', choices=['slic', 'kmeans', 'grid'], default=None)
    p.add_argument('--lambda-c', dest='lambda_c', type=float, default=None)
    p.add_argument('--lambda', dest='lambda_', type=float, default=None)
    p.add_argument('--beta', type=float, default=None)
    p.add_argument('--mu', type=float, default=config.ADMM_MU)
    p.add_argument('--region-size', type=int, default=None)
    p.add_argument('--compactness', type=float, default=None)
    p.add_argument('--tol', type=float, default=config.ADMM_TOL)
    p.add_argument('--max-iters', type=int, default=config.ADMM_MAX_ITERS)
    p.add_argument('--adaptive-mu', action='store_true', default=config.ADMM_ADAPTIVE_MU,
                   help='rebalance mu from the residuals every few iterations')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--segment-map', default=None, help='replay a saved segmentation')
    p.add_argument('--maps', action='store_true', help='export em_<index>.pgm for active signatures')
    p.add_argument('--materials', action='store_true', help='export per-material maps')
    p.add_argument('--out-dir', required=True)
    p.set_defaults(handler=unmix_command)

    p = sub.add_parser('eval', help='score an estimate')
    p.add_argument('--truth', required=True)
    p.add_argument('--estimate', required=True)
    p.add_argument('--run-report', default=None)
    p.add_argument('--snr-db', type=_snr, default=None)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=eval_command)

    p = sub.add_parser('bench', help='run a parameter sweep')
    p.add_argument('--config', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--workers', type=int, default=config.BENCH_WORKERS)
    p.set_defaults(handler=bench_command)

    p = sub.add_parser('presets', help='list parameter presets')
    p.set_defaults(handler=presets_command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function"""
    logging.basicConfig(format=config.LOG_FORMAT, level=getattr(logging, config.LOG_LEVEL, logging.INFO))
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        return args.handler(args)
    except (FormatError, OSError) as e:
        logger.error(f"I/O error: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return 2
    except MuaError as e:
        logger.error(f"Validation error: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
