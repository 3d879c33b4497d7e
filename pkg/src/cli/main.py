"""
atlascut command line.

    python -m src.cli.main phantom --out data/subject_00
    python -m src.cli.main build-atlas --reference data/ref --subjects data/s1 data/s2 --out atlas
    python -m src.cli.main segment --atlas atlas --input data/test --config run.yaml --out seg
    python -m src.cli.main eval --pred seg --gt data/test --slice-range 0:11 --out seg/report.json
"""
import argparse
import os
import sys
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from src.atlas.atlas import build_atlas, load_atlas, save_atlas
from src.cli.manifest import RunManifest
from src.pipeline.config import PipelineConfig, env_seed, load_pipeline_config
from src.pipeline.debug import DebugRecorder
from src.pipeline.runner import prepare_volume, run_pipeline
from src.utility.errors import AtlasBuildError, AtlasCutError, ConfigError, StageError
from src.utility.logger import get_logger, setup_logging
from src.validation.metrics import per_slice_metrics
from src.validation.phantom import GT_BP, GT_MYO, generate_phantom, load_phantom_spec, save_phantom
from src.validation.report import render_table, stratified_report
from src.volumecore.cvol import load_cine, load_mask, save_mask
from src.volumecore.preprocess import uncrop_mask
from src.volumecore.volume import LabelMask, Volume

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def parse_slice_range(text: str) -> Tuple[int, int]:
    """'a:b' -> (a, b), inclusive."""
    try:
        start, end = (int(part) for part in text.split(':'))
    except ValueError:
        raise argparse.ArgumentTypeError(f"slice range must look like 'start:end', got '{text}'")
    if start < 0 or start > end:
        raise argparse.ArgumentTypeError(f"slice range needs 0 <= start <= end, got '{text}'")
    return start, end


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='atlascut',
        description='Left ventricle blood pool and myocardium segmentation with an atlas prior and graph cuts.',
    )
    parser.add_argument('--log-dir', type=str, default=None, help='Log directory; defaults to $LOCAL_LOGS.')
    commands = parser.add_subparsers(dest='command', required=True)

    atlas = commands.add_parser('build-atlas', help='Build the appearance and myocardial prior atlas.')
    atlas.add_argument('--reference', required=True, help='Reference subject cine directory.')
    atlas.add_argument('--subjects', required=True, nargs='+', help='Subject cine directories with gt_myo masks.')
    atlas.add_argument('--out', required=True, help='Atlas output directory.')
    atlas.add_argument('--config', default=None, help='YAML/JSON pipeline config.')
    atlas.add_argument('--jobs', type=int, default=None, help='Subjects registered in parallel.')

    segment = commands.add_parser('segment', help='Segment blood pool and myocardium of a cine volume.')
    segment.add_argument('--atlas', required=True, help='Atlas directory from build-atlas.')
    segment.add_argument('--input', required=True, help='Cine directory to segment.')
    segment.add_argument('--config', default=None, help='YAML/JSON pipeline config carrying slice_range.')
    segment.add_argument('--out', required=True, help='Output directory for bp and myo masks.')
    segment.add_argument('--slice-range', type=parse_slice_range, default=None, help='LV extent start:end.')
    segment.add_argument('--seed', type=int, default=None)
    segment.add_argument('--jobs', type=int, default=None, help='Myocardium slices processed in parallel.')
    segment.add_argument('--debug-dump', default=None, help='Directory receiving intermediate fields.')

    evaluate = commands.add_parser('eval', help='Score masks against ground truth.')
    evaluate.add_argument('--pred', required=True, help='Directory with bp and myo masks.')
    evaluate.add_argument('--gt', required=True, help='Directory with gt_bp and gt_myo masks.')
    evaluate.add_argument('--slice-range', type=parse_slice_range, required=True, help='LV extent start:end.')
    evaluate.add_argument('--out', required=True, help='Report JSON path; the text table goes next to it.')

    phantom = commands.add_parser('phantom', help='Render a synthetic cine phantom.')
    phantom.add_argument('--spec', default=None, help='Phantom spec YAML/JSON; packaged default if omitted.')
    phantom.add_argument('--out', required=True, help='Output cine directory.')
    phantom.add_argument('--seed', type=int, default=None, help='Noise seed override.')
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values = {
        'slice_range': getattr(args, 'slice_range', None),
        'seed': getattr(args, 'seed', None),
        'jobs': getattr(args, 'jobs', None),
    }
    return {key: value for key, value in values.items() if value is not None}


def _load_subject(directory: str, cfg: PipelineConfig, with_labels: bool) -> Tuple[Volume, Optional[LabelMask]]:
    """End-diastolic frame cropped and normalized, with its myocardium labels cropped alike."""
    name = os.path.basename(os.path.normpath(directory))
    try:
        prepared = prepare_volume(load_cine(directory), cfg)
    except (AtlasCutError, IndexError) as e:
        raise AtlasBuildError(name, str(e)) from e
    if not with_labels:
        return prepared.volume, None
    gt_path = os.path.join(directory, GT_MYO)
    if not os.path.exists(gt_path + '.json'):
        raise AtlasBuildError(name, f"missing ground truth {GT_MYO} in {directory}")
    labels = load_mask(gt_path)
    if labels.labels.shape[::-1] != prepared.full_dims:
        raise AtlasBuildError(name, f"{GT_MYO} dims {labels.dims} differ from volume dims {prepared.full_dims}")
    rows, cols = prepared.roi.index
    return prepared.volume, LabelMask(labels.labels[:, rows, cols], labels.spacing)


def cmd_build_atlas(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    cfg = load_pipeline_config(args.config, _overrides(args))
    manifest.config = cfg.model_dump(mode='json')
    manifest.seed = cfg.seed
    manifest.hash_inputs('reference', args.reference)
    for directory in args.subjects:
        manifest.hash_inputs(os.path.basename(os.path.normpath(directory)), directory)

    reference, _ = _load_subject(args.reference, cfg, with_labels=False)
    subjects = [_load_subject(directory, cfg, with_labels=True) for directory in args.subjects]
    names = [os.path.basename(os.path.normpath(directory)) for directory in args.subjects]
    atlas = build_atlas(
        reference,
        subjects,
        names=names,
        settings=cfg.registration.volume.settings(),
        jobs=cfg.jobs,
        reference_id=os.path.basename(os.path.normpath(args.reference)),
    )
    save_atlas(atlas, args.out)
    manifest.details = {'n_subjects': atlas.n_subjects, 'prior_max': float(atlas.prior.values.max())}
    return [args.out]


def cmd_segment(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    cfg = load_pipeline_config(args.config, _overrides(args))
    manifest.config = cfg.model_dump(mode='json')
    manifest.seed = cfg.seed
    cfg.require_slice_range()
    manifest.hash_inputs('atlas', args.atlas)
    manifest.hash_inputs('input', args.input)

    frames = load_cine(args.input)
    prepared = prepare_volume(frames, cfg)
    atlas = load_atlas(args.atlas)
    result = run_pipeline(atlas, prepared.volume, cfg, DebugRecorder(args.debug_dump))

    os.makedirs(args.out, exist_ok=True)
    spacing = frames[cfg.ed_frame].spacing
    outputs = []
    for name, mask in (('bp', result.bp), ('myo', result.myo)):
        path = os.path.join(args.out, name)
        save_mask(uncrop_mask(mask, prepared.roi, prepared.full_dims), path, spacing)
        outputs.append(path)

    manifest.timings = dict(result.timings)
    manifest.details = {
        'roi': prepared.roi.as_list(),
        'order': result.order,
        'iterations_per_slice': {str(z): n for z, n in result.iterations_per_slice.items()},
        'converged': {str(z): c for z, c in result.converged.items()},
        'unsegmentable': {str(z): reason for z, reason in result.unsegmentable.items()},
        'skipped_normalization': prepared.skipped_slices,
    }
    return outputs


def cmd_eval(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    manifest.hash_inputs('pred', args.pred)
    manifest.hash_inputs('gt', args.gt)
    records = []
    for structure, pred_name, gt_name in (('bp', 'bp', GT_BP), ('myo', 'myo', GT_MYO)):
        pred_path = os.path.join(args.pred, pred_name)
        gt_path = os.path.join(args.gt, gt_name)
        if not os.path.exists(pred_path + '.json') or not os.path.exists(gt_path + '.json'):
            logger.warning(f"skipping {structure}: {pred_path} or {gt_path} missing")
            continue
        pred = load_mask(pred_path)
        gt = load_mask(gt_path)
        if pred.dims != gt.dims:
            raise ValueError(f"{structure}: prediction dims {pred.dims} differ from ground truth dims {gt.dims}")
        records.extend(per_slice_metrics(pred, gt, args.slice_range, structure))
    if not records:
        raise ValueError(f"no masks to evaluate in {args.pred} and {args.gt}")

    report = stratified_report(records, args.slice_range)
    table = render_table(report)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    with open(args.out, 'w', encoding='utf-8') as file:
        file.write(report.model_dump_json(indent=2))
    table_path = os.path.splitext(args.out)[0] + '.txt'
    with open(table_path, 'w', encoding='utf-8') as file:
        file.write(table)
    print(table)
    return [args.out, table_path]


def cmd_phantom(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    spec = load_phantom_spec(args.spec)
    # same precedence as the pipeline config: spec file, --seed, then ATLASCUT_SEED
    seed = env_seed()
    if seed is None:
        seed = args.seed
    if seed is not None:
        spec = spec.model_copy(update={'seed': seed})
    manifest.config = spec.model_dump(mode='json')
    manifest.seed = spec.seed
    if args.spec:
        manifest.hash_inputs('spec', args.spec)
    save_phantom(generate_phantom(spec), args.out)
    return [args.out]


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunManifest], List[str]]] = {
    'build-atlas': cmd_build_atlas,
    'segment': cmd_segment,
    'eval': cmd_eval,
    'phantom': cmd_phantom,
}


def _manifest_dir(args: argparse.Namespace) -> str:
    if args.command == 'eval':
        return os.path.dirname(os.path.abspath(args.out))
    return args.out


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Runs one command and writes its manifest.

    Returns:
        int: 0 on success, 1 on a processing failure, 2 on a configuration error.
    """
    args = build_parser().parse_args(argv)
    setup_logging(log_dir=args.log_dir)
    manifest = RunManifest(command=args.command, arguments=list(argv if argv is not None else sys.argv[1:]))
    start = time.perf_counter()
    exit_code = EXIT_OK
    try:
        manifest.outputs = COMMANDS[args.command](args, manifest)
    except ConfigError as e:
        exit_code = EXIT_USAGE
        manifest.status, manifest.error = 'error', str(e)
        print(f"atlascut {args.command}: configuration error: {e}", file=sys.stderr)
    except StageError as e:
        exit_code = EXIT_FAILURE
        manifest.status, manifest.error = 'error', str(e)
        print(f"atlascut {args.command}: stage '{e.stage}' failed: {e.cause}", file=sys.stderr)
    except (AtlasCutError, ValueError, IndexError, OSError) as e:
        exit_code = EXIT_FAILURE
        manifest.status, manifest.error = 'error', str(e)
        print(f"atlascut {args.command}: {e}", file=sys.stderr)
    finally:
        manifest.wall_time = round(time.perf_counter() - start, 4)
        try:
            manifest.write(_manifest_dir(args))
        except OSError as e:
            logger.error(f"could not write manifest: {e}")
            exit_code = exit_code or EXIT_FAILURE
    logger.info(f"{args.command} finished with exit code {exit_code} in {manifest.wall_time:.2f}s")
    return exit_code


if __name__ == '__main__':
    sys.exit(main())
